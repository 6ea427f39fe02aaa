#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "morphdet/image.hpp"

namespace morphdet {

// Deterministic generator of smooth bona-fide fields and pseudo-morphs with
// injected high-frequency artefacts. Three artefact families stand in for
// real morph generation methods so that per-type aggregation has something
// to aggregate over; no forensic realism is claimed.
struct SynthConfig {
  std::size_t image_size = 56;
  std::uint64_t seed = 7;
  std::size_t n_bona = 1000;
  std::size_t n_morph = 1000;
  double seam_strength = 0.35;
  std::vector<std::string> morph_types = {"seam", "highfreq", "ghost"};

  void validate() const;
};

struct LabeledSample {
  Image image;
  int label = 0;  // 0 bona fide, 1 morph
  std::string morph_type;
  std::uint64_t source_seed = 0;
  std::string id;
};

// Reproducible from (config, index): same arguments, same pixels.
LabeledSample gen_bona_fide(const SynthConfig& cfg, std::size_t index);
// The morph is the average of two fresh bona-fide fields plus a type-tagged
// artefact; unknown tags raise InvalidParameterError.
LabeledSample gen_morph(const SynthConfig& cfg, std::size_t index,
                        const std::string& type_tag);

// count_bona bona fides then count_morph morphs (types round-robin), indices
// starting at first_index. Disjoint splits come from disjoint index ranges.
std::vector<LabeledSample> generate_dataset(const SynthConfig& cfg,
                                            std::size_t first_index,
                                            std::size_t count_bona,
                                            std::size_t count_morph);

// PPM files plus a tab-separated manifest (path, label, type, seed).
void export_dataset(const std::string& dir, const std::vector<LabeledSample>& samples);
std::vector<LabeledSample> load_manifest(const std::string& manifest_path);

}  // namespace morphdet
