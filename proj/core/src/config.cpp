#include "morphdet/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "morphdet/errors.hpp"
#include "morphdet/rng.hpp"

namespace morphdet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': expected boolean, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto u64 = [](std::uint64_t RunConfig::* field) {
      return [field](RunConfig& c, const std::string& v, const std::string&) {
        c.*field = std::stoull(v);
      };
    };
    auto szt = [](std::size_t RunConfig::* field) {
      return [field](RunConfig& c, const std::string& v, const std::string&) {
        c.*field = std::stoull(v);
      };
    };
    auto dbl = [](double RunConfig::* field) {
      return [field](RunConfig& c, const std::string& v, const std::string&) {
        c.*field = std::stod(v);
      };
    };
    auto bol = [](bool RunConfig::* field) {
      return [field](RunConfig& c, const std::string& v, const std::string& k) {
        c.*field = parse_bool(v, k);
      };
    };

    t["seed"] = u64(&RunConfig::seed);
    t["epochs"] = szt(&RunConfig::epochs);
    t["batch_size"] = szt(&RunConfig::batch_size);
    t["grad_accum"] = szt(&RunConfig::grad_accum);
    t["ema_tau"] = dbl(&RunConfig::ema_tau);
    t["eval_with_ema"] = bol(&RunConfig::eval_with_ema);
    t["cosine_lr"] = bol(&RunConfig::cosine_lr);
    t["early_stop_eer"] = dbl(&RunConfig::early_stop_eer);
    t["train_sigma_g_min"] = dbl(&RunConfig::train_sigma_g_min);
    t["train_sigma_g_max"] = dbl(&RunConfig::train_sigma_g_max);
    t["curriculum_snr_min"] = dbl(&RunConfig::curriculum_snr_min);
    t["curriculum_snr_max"] = dbl(&RunConfig::curriculum_snr_max);

    t["lr"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.adam.lr = std::stod(v);
    };
    t["weight_decay"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.adam.weight_decay = std::stod(v);
    };
    t["adam_beta1"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.adam.beta1 = std::stod(v);
    };
    t["adam_beta2"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.adam.beta2 = std::stod(v);
    };
    t["adam_eps"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.adam.eps = std::stod(v);
    };

    t["vit.image_size"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.model.vit.image_size = std::stoull(v);
      c.synth.image_size = c.model.vit.image_size;
    };
    t["vit.patch_size"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.model.vit.patch_size = std::stoull(v);
    };
    t["vit.embed_dim"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.model.vit.embed_dim = std::stoull(v);
    };
    t["vit.depth"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.model.vit.depth = std::stoull(v);
    };
    t["vit.heads"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.model.vit.heads = std::stoull(v);
    };
    t["vit.mlp_ratio"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.model.vit.mlp_ratio = std::stod(v);
    };
    t["backbone.seed"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.model.backbone_seed = std::stoull(v);
    };
    t["eval.sigma_g"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.model.eval_sigma_g = std::stod(v);
    };

    t["lora.layers"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.model.lora.layers_adapted = std::stoull(v);
    };
    t["lora.rank"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.model.lora.rank = std::stoull(v);
    };
    t["lora.alpha"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.model.lora.alpha = std::stod(v);
    };
    t["lora.proj"] = [](RunConfig& c, const std::string& v, const std::string& k) {
      if (v == "qv" || v == "both") {
        c.model.lora.adapt_q = c.model.lora.adapt_v = true;
      } else if (v == "q") {
        c.model.lora.adapt_q = true;
        c.model.lora.adapt_v = false;
      } else if (v == "v") {
        c.model.lora.adapt_q = false;
        c.model.lora.adapt_v = true;
      } else if (v == "none") {
        c.model.lora.adapt_q = c.model.lora.adapt_v = false;
      } else {
        throw ConfigError("config key '" + k + "': expected qv|q|v|none, got '" + v + "'");
      }
    };

    t["gate.hidden"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.model.gate_hidden = std::stoull(v);
    };
    t["gate.enabled"] = [](RunConfig& c, const std::string& v, const std::string& k) {
      c.model.use_gate = parse_bool(v, k);
    };
    t["film.enabled"] = [](RunConfig& c, const std::string& v, const std::string& k) {
      c.model.use_film = parse_bool(v, k);
    };
    t["rca.enabled"] = [](RunConfig& c, const std::string& v, const std::string& k) {
      c.use_rca = parse_bool(v, k);
    };

    t["pool.queries"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.model.pool.n_queries = std::stoull(v);
    };
    t["pool.heads"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.model.pool.heads = std::stoull(v);
    };
    t["pool.dk"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.model.pool.d_k = std::stoull(v);
    };
    t["pool.dv"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.model.pool.d_v = std::stoull(v);
    };

    t["loss.lambda_mil"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.loss.lambda_mil = std::stod(v);
    };
    t["loss.lambda_tv"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.loss.lambda_tv = std::stod(v);
    };
    t["loss.lambda_rca"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.loss.lambda_rca = std::stod(v);
    };
    t["loss.epsilon"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.loss.epsilon = std::stod(v);
    };
    t["loss.rho"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.loss.rho = std::stod(v);
    };
    t["loss.rca_quantile"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.loss.rca_quantile = std::stod(v);
    };
    t["loss.warmup_epochs"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.loss.warmup_epochs = std::stoull(v);
    };

    t["curriculum.p_noise_max"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.curriculum.p_noise_max = std::stod(v);
    };
    t["curriculum.p_jpeg_max"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.curriculum.p_jpeg_max = std::stod(v);
    };
    t["curriculum.jpeg_min"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.curriculum_jpeg_min = std::stoi(v);
    };
    t["curriculum.jpeg_max"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.curriculum_jpeg_max = std::stoi(v);
    };

    t["synth.seam_strength"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.synth.seam_strength = std::stod(v);
    };
    t["synth.types"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.synth.morph_types = split_list(v);
    };
    t["data.train_bona"] = szt(&RunConfig::train_bona);
    t["data.train_morph"] = szt(&RunConfig::train_morph);
    t["data.test_bona"] = szt(&RunConfig::test_bona);
    t["data.test_morph"] = szt(&RunConfig::test_morph);
    t["data.train_manifest"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.train_manifest = v;
    };
    t["data.eval_manifest"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.eval_manifest = v;
    };
    return t;
  }();
  return table;
}

}  // namespace

void RunConfig::finalize() {
  model.head_seed = derive_seed(seed, 0x6EAD);
  synth.seed = derive_seed(seed, 0xDA7A);
  synth.image_size = model.vit.image_size;
  curriculum.epochs_total = std::max<std::size_t>(epochs, 1);
  if (!model.use_film) use_rca = false;  // RCA compares pre/post fusion tokens
  if (!use_rca) loss.lambda_rca = 0.0;
  if (batch_size == 0 || grad_accum == 0) {
    throw ConfigError("batch size and gradient accumulation must be positive");
  }
  model.validate();
  loss.validate();
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  RunConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) {
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": unknown config key '" + key + "'");
    }
    try {
      it->second(cfg, value, key);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": bad value for '" +
                        key + "': " + e.what());
    }
  }
  return cfg;
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open config for writing: " + path);
  os << "seed = " << cfg.seed << "\n";
  os << "epochs = " << cfg.epochs << "\n";
  os << "batch_size = " << cfg.batch_size << "\n";
  os << "grad_accum = " << cfg.grad_accum << "\n";
  os << "lr = " << cfg.adam.lr << "\n";
  os << "weight_decay = " << cfg.adam.weight_decay << "\n";
  os << "adam_beta1 = " << cfg.adam.beta1 << "\n";
  os << "adam_beta2 = " << cfg.adam.beta2 << "\n";
  os << "ema_tau = " << cfg.ema_tau << "\n";
  os << "eval_with_ema = " << (cfg.eval_with_ema ? "true" : "false") << "\n";
  os << "cosine_lr = " << (cfg.cosine_lr ? "true" : "false") << "\n";
  os << "early_stop_eer = " << cfg.early_stop_eer << "\n";
  os << "vit.image_size = " << cfg.model.vit.image_size << "\n";
  os << "vit.patch_size = " << cfg.model.vit.patch_size << "\n";
  os << "vit.embed_dim = " << cfg.model.vit.embed_dim << "\n";
  os << "vit.depth = " << cfg.model.vit.depth << "\n";
  os << "vit.heads = " << cfg.model.vit.heads << "\n";
  os << "vit.mlp_ratio = " << cfg.model.vit.mlp_ratio << "\n";
  os << "backbone.seed = " << cfg.model.backbone_seed << "\n";
  os << "eval.sigma_g = " << cfg.model.eval_sigma_g << "\n";
  os << "lora.layers = " << cfg.model.lora.layers_adapted << "\n";
  os << "lora.rank = " << cfg.model.lora.rank << "\n";
  os << "lora.alpha = " << cfg.model.lora.alpha << "\n";
  os << "lora.proj = "
     << (cfg.model.lora.adapt_q && cfg.model.lora.adapt_v
             ? "qv"
             : (cfg.model.lora.adapt_q ? "q" : (cfg.model.lora.adapt_v ? "v" : "none")))
     << "\n";
  os << "gate.hidden = " << cfg.model.gate_hidden << "\n";
  os << "gate.enabled = " << (cfg.model.use_gate ? "true" : "false") << "\n";
  os << "film.enabled = " << (cfg.model.use_film ? "true" : "false") << "\n";
  os << "rca.enabled = " << (cfg.use_rca ? "true" : "false") << "\n";
  os << "pool.queries = " << cfg.model.pool.n_queries << "\n";
  os << "pool.heads = " << cfg.model.pool.heads << "\n";
  os << "loss.lambda_mil = " << cfg.loss.lambda_mil << "\n";
  os << "loss.lambda_tv = " << cfg.loss.lambda_tv << "\n";
  os << "loss.lambda_rca = " << cfg.loss.lambda_rca << "\n";
  os << "loss.epsilon = " << cfg.loss.epsilon << "\n";
  os << "loss.rho = " << cfg.loss.rho << "\n";
  os << "loss.rca_quantile = " << cfg.loss.rca_quantile << "\n";
  os << "loss.warmup_epochs = " << cfg.loss.warmup_epochs << "\n";
  os << "curriculum.p_noise_max = " << cfg.curriculum.p_noise_max << "\n";
  os << "curriculum.p_jpeg_max = " << cfg.curriculum.p_jpeg_max << "\n";
  os << "synth.seam_strength = " << cfg.synth.seam_strength << "\n";
  os << "synth.types = ";
  for (std::size_t i = 0; i < cfg.synth.morph_types.size(); ++i) {
    if (i) os << ",";
    os << cfg.synth.morph_types[i];
  }
  os << "\n";
  os << "data.train_bona = " << cfg.train_bona << "\n";
  os << "data.train_morph = " << cfg.train_morph << "\n";
  os << "data.test_bona = " << cfg.test_bona << "\n";
  os << "data.test_morph = " << cfg.test_morph << "\n";
  if (!cfg.train_manifest.empty()) os << "data.train_manifest = " << cfg.train_manifest << "\n";
  if (!cfg.eval_manifest.empty()) os << "data.eval_manifest = " << cfg.eval_manifest << "\n";
  if (!os) throw IoError("short write on config: " + path);
}

}  // namespace morphdet
