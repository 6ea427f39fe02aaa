#include "morphdet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "morphdet/errors.hpp"
#include "morphdet/rng.hpp"

namespace morphdet {

namespace {

// Stream tags for seed derivation.
constexpr std::uint64_t kTagBona = 0xB04AF1DEULL;
constexpr std::uint64_t kTagMorphSrc = 0x305C0ULL;
constexpr std::uint64_t kTagArtefact = 0xA27EFAC7ULL;

// Smooth scalar field: low-order polynomial shading plus a handful of broad
// Gaussian blobs. Values before clamping sit around 0.5.
std::vector<double> smooth_field(std::size_t size, Rng& rng) {
  const double s = static_cast<double>(size);
  std::vector<double> f(size * size, 0.0);
  const double a0 = 0.5 + 0.15 * rng.normal();
  const double ax = 0.3 * (rng.uniform() - 0.5);
  const double ay = 0.3 * (rng.uniform() - 0.5);
  const double axy = 0.2 * (rng.uniform() - 0.5);
  const double ax2 = 0.2 * (rng.uniform() - 0.5);
  const double ay2 = 0.2 * (rng.uniform() - 0.5);
  const int blobs = 3 + static_cast<int>(rng.below(4));
  std::vector<double> bx(blobs), by(blobs), bs(blobs), ba(blobs);
  for (int b = 0; b < blobs; ++b) {
    bx[b] = rng.uniform() * s;
    by[b] = rng.uniform() * s;
    bs[b] = (0.15 + 0.2 * rng.uniform()) * s;
    ba[b] = 0.5 * (rng.uniform() - 0.5);
  }
  for (std::size_t y = 0; y < size; ++y) {
    const double v = static_cast<double>(y) / s;
    for (std::size_t x = 0; x < size; ++x) {
      const double u = static_cast<double>(x) / s;
      double val = a0 + ax * u + ay * v + axy * u * v + ax2 * u * u + ay2 * v * v;
      for (int b = 0; b < blobs; ++b) {
        const double dx = static_cast<double>(x) - bx[b];
        const double dy = static_cast<double>(y) - by[b];
        val += ba[b] * std::exp(-0.5 * (dx * dx + dy * dy) / (bs[b] * bs[b]));
      }
      f[y * size + x] = val;
    }
  }
  return f;
}

Image field_to_image(const std::vector<double>& field, std::size_t size, Rng& rng) {
  Image img(size, size);
  // Constant per-channel tints keep channels correlated without adding any
  // Laplacian energy.
  const double tint[3] = {0.04 * (rng.uniform() - 0.5),
                          0.04 * (rng.uniform() - 0.5),
                          0.04 * (rng.uniform() - 0.5)};
  for (std::size_t i = 0; i < size * size; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      img.data[3 * i + c] = std::clamp(field[i] + tint[c], 0.0, 1.0);
    }
  }
  return img;
}

void add_seam(std::vector<double>& field, std::size_t size, double strength, Rng& rng) {
  // Brightness step across a straight line with a sub-pixel transition.
  const bool vertical = rng.bernoulli(0.5);
  const double pos = (0.3 + 0.4 * rng.uniform()) * static_cast<double>(size) +
                     rng.uniform();  // sub-pixel offset
  const double amp = 0.25 * strength * (rng.bernoulli(0.5) ? 1.0 : -1.0);
  const double width = 0.5 + 0.4 * rng.uniform();
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double t = (vertical ? static_cast<double>(x) : static_cast<double>(y)) - pos;
      field[y * size + x] += amp * std::tanh(t / width);
    }
  }
}

void add_highfreq_patch(std::vector<double>& field, std::size_t size,
                        double strength, Rng& rng) {
  // Windowed oriented sinusoid at a 2-3 px period.
  const double cx = (0.2 + 0.6 * rng.uniform()) * static_cast<double>(size);
  const double cy = (0.2 + 0.6 * rng.uniform()) * static_cast<double>(size);
  const double radius = (0.08 + 0.08 * rng.uniform()) * static_cast<double>(size);
  const double period = 2.0 + rng.uniform();
  const double theta = rng.uniform() * std::numbers::pi;
  const double kx = std::cos(theta) * 2.0 * std::numbers::pi / period;
  const double ky = std::sin(theta) * 2.0 * std::numbers::pi / period;
  const double phase = rng.uniform() * 2.0 * std::numbers::pi;
  const double amp = 0.15 * strength;
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      const double window = std::exp(-0.5 * (dx * dx + dy * dy) / (radius * radius));
      field[y * size + x] +=
          amp * window * std::sin(kx * static_cast<double>(x) +
                                  ky * static_cast<double>(y) + phase);
    }
  }
}

void add_block_ghost(std::vector<double>& field, std::size_t size, double strength,
                     Rng& rng) {
  // Flatten 8x8 blocks toward their mean inside a region: blocking edges.
  const std::size_t half = size / 2;
  const std::size_t ox = rng.below(2) * half;
  const std::size_t oy = rng.below(2) * half;
  const double blend = std::min(1.0, 0.9 * strength + 0.15 * rng.uniform());
  for (std::size_t by = oy; by < oy + half; by += 8) {
    for (std::size_t bx = ox; bx < ox + half; bx += 8) {
      double mean = 0.0;
      std::size_t count = 0;
      for (std::size_t y = by; y < std::min(by + 8, oy + half); ++y)
        for (std::size_t x = bx; x < std::min(bx + 8, ox + half); ++x) {
          mean += field[y * size + x];
          ++count;
        }
      mean /= static_cast<double>(count);
      for (std::size_t y = by; y < std::min(by + 8, oy + half); ++y)
        for (std::size_t x = bx; x < std::min(bx + 8, ox + half); ++x) {
          double& v = field[y * size + x];
          v = (1.0 - blend) * v + blend * mean;
        }
    }
  }
}

}  // namespace

void SynthConfig::validate() const {
  if (image_size < 16) throw InvalidParameterError("synth image size too small");
  if (n_bona < 1 || n_morph < 1) {
    throw InvalidParameterError("synth sample counts must be >= 1");
  }
  if (seam_strength <= 0.0) {
    throw InvalidParameterError("seam strength must be positive");
  }
  if (morph_types.empty()) {
    throw InvalidParameterError("at least one morph type tag is required");
  }
}

LabeledSample gen_bona_fide(const SynthConfig& cfg, std::size_t index) {
  const std::uint64_t s = derive_seed(cfg.seed, kTagBona, index);
  Rng rng(s);
  const auto field = smooth_field(cfg.image_size, rng);
  LabeledSample sample;
  sample.image = field_to_image(field, cfg.image_size, rng);
  sample.label = 0;
  sample.source_seed = s;
  sample.id = "bona_" + std::to_string(index);
  return sample;
}

LabeledSample gen_morph(const SynthConfig& cfg, std::size_t index,
                        const std::string& type_tag) {
  const std::uint64_t sa = derive_seed(cfg.seed, kTagMorphSrc, 2 * index);
  const std::uint64_t sb = derive_seed(cfg.seed, kTagMorphSrc, 2 * index + 1);
  Rng rng_a(sa), rng_b(sb);
  const auto fa = smooth_field(cfg.image_size, rng_a);
  const auto fb = smooth_field(cfg.image_size, rng_b);
  std::vector<double> field(fa.size());
  for (std::size_t i = 0; i < field.size(); ++i) field[i] = 0.5 * (fa[i] + fb[i]);

  // The artefact stream folds the tag in so distinct tags yield distinct
  // masks for the same index.
  std::uint64_t tag_hash = 0xcbf29ce484222325ULL;
  for (char c : type_tag) {
    tag_hash ^= static_cast<unsigned char>(c);
    tag_hash *= 0x100000001b3ULL;
  }
  const std::uint64_t s = derive_seed(cfg.seed ^ tag_hash, kTagArtefact, index);
  Rng rng(s);
  if (type_tag == "seam") {
    add_seam(field, cfg.image_size, cfg.seam_strength, rng);
  } else if (type_tag == "highfreq") {
    add_highfreq_patch(field, cfg.image_size, cfg.seam_strength, rng);
  } else if (type_tag == "ghost") {
    add_block_ghost(field, cfg.image_size, cfg.seam_strength, rng);
  } else {
    throw InvalidParameterError("unknown morph type tag: " + type_tag);
  }

  LabeledSample sample;
  sample.image = field_to_image(field, cfg.image_size, rng);
  sample.label = 1;
  sample.morph_type = type_tag;
  sample.source_seed = s;
  sample.id = "morph_" + type_tag + "_" + std::to_string(index);
  return sample;
}

std::vector<LabeledSample> generate_dataset(const SynthConfig& cfg,
                                            std::size_t first_index,
                                            std::size_t count_bona,
                                            std::size_t count_morph) {
  cfg.validate();
  std::vector<LabeledSample> out;
  out.reserve(count_bona + count_morph);
  for (std::size_t i = 0; i < count_bona; ++i) {
    out.push_back(gen_bona_fide(cfg, first_index + i));
  }
  for (std::size_t i = 0; i < count_morph; ++i) {
    const auto& tag = cfg.morph_types[i % cfg.morph_types.size()];
    out.push_back(gen_morph(cfg, first_index + i, tag));
  }
  return out;
}

void export_dataset(const std::string& dir, const std::vector<LabeledSample>& samples) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / "manifest.tsv");
  if (!manifest) throw IoError("cannot open manifest for writing in " + dir);
  for (const auto& s : samples) {
    const std::string name = s.id + ".ppm";
    write_ppm((fs::path(dir) / name).string(), s.image);
    manifest << name << '\t' << (s.label == 1 ? "morph" : "bonafide") << '\t'
             << (s.morph_type.empty() ? "-" : s.morph_type) << '\t'
             << s.source_seed << '\n';
  }
  if (!manifest) throw IoError("short write on manifest in " + dir);
}

std::vector<LabeledSample> load_manifest(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream is(manifest_path);
  if (!is) throw IoError("cannot open manifest: " + manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<LabeledSample> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string path, label, type;
    std::uint64_t seed = 0;
    if (!(ls >> path >> label >> type >> seed)) {
      throw IoError("malformed manifest line: " + line);
    }
    LabeledSample s;
    s.image = read_ppm((base / path).string());
    s.label = label == "morph" ? 1 : 0;
    s.morph_type = type == "-" ? "" : type;
    s.source_seed = seed;
    s.id = fs::path(path).stem().string();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace morphdet
