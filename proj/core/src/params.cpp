#include "morphdet/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "morphdet/errors.hpp"

namespace morphdet::nn {

namespace {

constexpr char kMagic[4] = {'M', 'D', 'C', 'P'};
constexpr std::uint8_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_f64(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  write_u64(os, bits);
}

double read_f64(std::istream& is) {
  const std::uint64_t bits = read_u64(is);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

void write_record(std::ostream& os, const std::string& name, const Tensor& t) {
  write_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u32(os, static_cast<std::uint32_t>(t.ndim()));
  for (std::size_t d : t.shape()) write_u64(os, d);
  for (std::size_t i = 0; i < t.numel(); ++i) write_f64(os, t[i]);
}

}  // namespace

Parameter& ParameterStore::add(std::string name, Tensor value, bool trainable) {
  if (index_.count(name)) {
    throw ConfigError("duplicate parameter name: " + name);
  }
  index_.emplace(name, params_.size());
  Parameter p;
  p.name = std::move(name);
  p.grad = Tensor::zeros(value.shape());
  p.value = std::move(value);
  p.trainable = trainable;
  params_.push_back(std::move(p));
  return params_.back();
}

bool ParameterStore::contains(std::string_view name) const {
  return index_.count(std::string(name)) > 0;
}

Parameter& ParameterStore::get(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("unknown parameter: " + std::string(name));
  return params_[it->second];
}

const Parameter& ParameterStore::get(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("unknown parameter: " + std::string(name));
  return params_[it->second];
}

std::size_t ParameterStore::total_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

std::size_t ParameterStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.trainable) n += p.value.numel();
  }
  return n;
}

void ParameterStore::zero_grads() {
  for (auto& p : params_) p.grad.fill(0.0);
}

void ParameterStore::adam_step(const AdamConfig& cfg) {
  ++adam_t_;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam_t_));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam_t_));
  for (std::size_t idx = 0; idx < params_.size(); ++idx) {
    Parameter& p = params_[idx];
    if (!p.trainable) continue;
    if (!p.grad.all_finite()) {
      throw NumericError("adam_step: non-finite gradient in " + p.name);
    }
    auto [mit, minserted] = adam_m_.try_emplace(idx, Tensor::zeros(p.value.shape()));
    auto [vit, vinserted] = adam_v_.try_emplace(idx, Tensor::zeros(p.value.shape()));
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    const std::size_t n = p.value.numel();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = p.grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                              cfg.weight_decay * p.value[i]);
    }
  }
}

void ParameterStore::ema_init() {
  ema_.clear();
  for (std::size_t idx = 0; idx < params_.size(); ++idx) {
    if (params_[idx].trainable) ema_.emplace(idx, params_[idx].value);
  }
  ema_ready_ = true;
}

void ParameterStore::ema_update(double tau) {
  if (!ema_ready_) ema_init();
  for (auto& [idx, shadow] : ema_) {
    const Tensor& v = params_[idx].value;
    for (std::size_t i = 0; i < shadow.numel(); ++i)
      shadow[i] = tau * shadow[i] + (1.0 - tau) * v[i];
  }
}

const Tensor& ParameterStore::ema_shadow(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("unknown parameter: " + std::string(name));
  const auto eit = ema_.find(it->second);
  if (eit == ema_.end()) {
    throw ConfigError("no EMA shadow for parameter: " + std::string(name));
  }
  return eit->second;
}

ParameterStore ParameterStore::with_ema_values() const {
  ParameterStore out;
  for (std::size_t idx = 0; idx < params_.size(); ++idx) {
    const Parameter& p = params_[idx];
    const auto eit = ema_.find(idx);
    if (p.trainable && eit != ema_.end()) {
      out.add(p.name, eit->second, p.trainable);
    } else {
      out.add(p.name, p.value, p.trainable);
    }
  }
  return out;
}

std::uint64_t ParameterStore::frozen_checksum() const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 0x100000001B3ULL;
    }
  };
  for (const auto& p : params_) {
    if (p.trainable) continue;
    mix(p.name.data(), p.name.size());
    mix(p.value.data(), p.value.numel() * sizeof(double));
  }
  return h;
}

void ParameterStore::save_checkpoint(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  os.put(static_cast<char>(kVersion));
  const std::uint32_t n_records =
      static_cast<std::uint32_t>(params_.size() + ema_.size());
  write_u32(os, n_records);
  for (const auto& p : params_) write_record(os, p.name, p.value);
  // Shadows in store order for byte stability.
  for (std::size_t idx = 0; idx < params_.size(); ++idx) {
    const auto it = ema_.find(idx);
    if (it != ema_.end()) write_record(os, "ema:" + params_[idx].name, it->second);
  }
  if (!os) throw IoError("short write on checkpoint: " + path);
}

void ParameterStore::load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("bad checkpoint magic in " + path);
  }
  const int version = is.get();
  if (version != kVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t n_records = read_u32(is);
  bool any_ema = false;
  for (std::uint32_t r = 0; r < n_records; ++r) {
    const std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t ndim = read_u32(is);
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = static_cast<std::size_t>(read_u64(is));
    std::size_t numel = 1;
    for (std::size_t d : shape) numel *= d;
    Tensor t(shape);
    for (std::size_t i = 0; i < numel; ++i) t[i] = read_f64(is);
    if (!is) throw IoError("truncated checkpoint: " + path);

    const bool is_ema = name.rfind("ema:", 0) == 0;
    const std::string base = is_ema ? name.substr(4) : name;
    auto it = index_.find(base);
    if (it == index_.end()) {
      throw ConfigError("checkpoint incompatible: unknown parameter '" + base +
                        "' in " + path);
    }
    Parameter& p = params_[it->second];
    if (p.value.shape() != t.shape()) {
      throw ConfigError("checkpoint incompatible: parameter '" + base +
                        "' has shape " + shape_str(t.shape()) + ", expected " +
                        p.value.shape_str());
    }
    if (is_ema) {
      ema_[it->second] = std::move(t);
      any_ema = true;
    } else {
      p.value = std::move(t);
    }
  }
  ema_ready_ = any_ema;
}

VarPtr ParamLeaves::operator[](std::string_view name) {
  auto it = leaves_.find(std::string(name));
  if (it != leaves_.end()) return it->second.first;
  Parameter& p = store_->get(name);
  VarPtr v = leaf(p.value, with_grad_ && p.trainable);
  leaves_.emplace(std::string(name), std::make_pair(v, &p));
  return v;
}

void ParamLeaves::flush_grads() {
  for (auto& [name, entry] : leaves_) {
    auto& [var, param] = entry;
    if (param->trainable && !var->grad.empty()) {
      axpy(param->grad, var->grad);
    }
  }
}

}  // namespace morphdet::nn
