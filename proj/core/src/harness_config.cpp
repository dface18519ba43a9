#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <string>

#include "lidadv/error.hpp"
#include "lidadv/harness.hpp"
#include "text_util.hpp"

namespace lidadv {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, std::string_view value) {
  std::filesystem::path p{std::string(value)};
  if (p.is_relative() && !base.empty()) p = base / p;
  return p;
}

std::size_t to_size(std::string_view key, std::string_view v) {
  try {
    return static_cast<std::size_t>(parse_uint(v));
  } catch (const ParseError&) {
    throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" + std::string(v) + "'");
  }
}

double to_real(std::string_view key, std::string_view v) {
  try {
    return parse_double(v);
  } catch (const ParseError&) {
    throw ConfigError(std::string(key) + ": expected a number, got '" + std::string(v) + "'");
  }
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(std::string(key) + ": expected true/false");
}

std::vector<std::size_t> parse_dims(std::string_view v) {
  std::vector<std::size_t> dims;
  for (const auto& cell : split_csv_line(v, '-')) dims.push_back(static_cast<std::size_t>(parse_uint(cell)));
  return dims;
}

/// "A", "B", an architecture like 784-64-10, or a weight file path.
void set_model(ModelSpec& spec, std::string_view v, const std::filesystem::path& base) {
  spec.weights.clear();
  spec.dims.clear();
  if (v == "A") {
    spec.dims = model_a_dims();
  } else if (v == "B") {
    spec.dims = model_b_dims();
  } else if (!v.empty() && v.find_first_not_of("0123456789-") == std::string_view::npos) {
    try {
      spec.dims = parse_dims(v);
    } catch (const ParseError&) {
      throw ConfigError("bad architecture '" + std::string(v) + "'");
    }
    if (spec.dims.size() < 2) throw ConfigError("architecture needs at least two widths");
  } else {
    spec.weights = resolve(base, v);
  }
}

using Setter = std::function<void(ExperimentConfig&, std::string_view, const std::filesystem::path&)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
    auto size_key = [&t](const char* key, std::size_t ExperimentConfig::*field) {
      t[key] = [key, field](ExperimentConfig& c, std::string_view v, const auto&) { c.*field = to_size(key, v); };
    };
    auto path_key = [&t](const char* key, std::filesystem::path ExperimentConfig::*field) {
      t[key] = [field](ExperimentConfig& c, std::string_view v, const std::filesystem::path& b) {
        c.*field = resolve(b, v);
      };
    };
    t["dataset"] = [](ExperimentConfig& c, std::string_view v, const auto&) {
      if (v != "mnist" && v != "blobs") throw ConfigError("dataset must be mnist or blobs");
      c.dataset = std::string(v);
    };
    path_key("train_images", &ExperimentConfig::train_images);
    path_key("train_labels", &ExperimentConfig::train_labels);
    path_key("test_images", &ExperimentConfig::test_images);
    path_key("test_labels", &ExperimentConfig::test_labels);
    path_key("out_dir", &ExperimentConfig::out_dir);
    size_key("train_limit", &ExperimentConfig::train_limit);
    size_key("blob_train", &ExperimentConfig::blob_train);
    size_key("blob_test", &ExperimentConfig::blob_test);
    size_key("blob_classes", &ExperimentConfig::blob_classes);
    size_key("blob_dim", &ExperimentConfig::blob_dim);
    size_key("n_targets", &ExperimentConfig::n_targets);
    size_key("reference_pool", &ExperimentConfig::reference_pool);
    size_key("threads", &ExperimentConfig::threads);
    size_key("image_dumps", &ExperimentConfig::image_dumps);
    t["blob_spread"] = [](ExperimentConfig& c, std::string_view v, const auto&) { c.blob_spread = to_real("blob_spread", v); };

    for (auto [prefix, field] : {std::pair{"target", &ExperimentConfig::target_model},
                                 std::pair{"source", &ExperimentConfig::source_model}}) {
      const std::string p(prefix);
      t[p + "_model"] = [field](ExperimentConfig& c, std::string_view v, const std::filesystem::path& b) {
        set_model(c.*field, v, b);
      };
      t[p + "_seed"] = [field, p](ExperimentConfig& c, std::string_view v, const auto&) {
        (c.*field).seed = to_size(p + "_seed", v);
      };
      t[p + "_epochs"] = [field, p](ExperimentConfig& c, std::string_view v, const auto&) {
        (c.*field).train.epochs = to_size(p + "_epochs", v);
      };
      t[p + "_lr"] = [field, p](ExperimentConfig& c, std::string_view v, const auto&) {
        (c.*field).train.learning_rate = to_real(p + "_lr", v);
      };
      t[p + "_batch"] = [field, p](ExperimentConfig& c, std::string_view v, const auto&) {
        (c.*field).train.batch_size = to_size(p + "_batch", v);
      };
    }

    t["attack"] = [](ExperimentConfig& c, std::string_view v, const auto&) {
      try {
        c.attack = parse_attack_method(v);
      } catch (const InvalidInputError& e) {
        throw ConfigError(e.what());
      }
    };
    t["rule"] = [](ExperimentConfig& c, std::string_view v, const auto&) {
      try {
        c.attack_cfg.rule = parse_decision_rule(v);
      } catch (const InvalidInputError& e) {
        throw ConfigError(e.what());
      }
    };
    t["kappa"] = [](ExperimentConfig& c, std::string_view v, const auto&) { c.kappa_list = parse_kappa_list(v); };
    t["beta"] = [](ExperimentConfig& c, std::string_view v, const auto&) { c.attack_cfg.beta = to_real("beta", v); };
    t["max_iterations"] = [](ExperimentConfig& c, std::string_view v, const auto&) {
      c.attack_cfg.max_iterations = to_size("max_iterations", v);
    };
    t["binary_search_steps"] = [](ExperimentConfig& c, std::string_view v, const auto&) {
      c.attack_cfg.binary_search_steps = to_size("binary_search_steps", v);
    };
    t["c_init"] = [](ExperimentConfig& c, std::string_view v, const auto&) { c.attack_cfg.c_init = to_real("c_init", v); };
    t["c_max"] = [](ExperimentConfig& c, std::string_view v, const auto&) { c.attack_cfg.c_max = to_real("c_max", v); };
    t["learning_rate"] = [](ExperimentConfig& c, std::string_view v, const auto&) {
      c.attack_cfg.learning_rate = to_real("learning_rate", v);
    };
    t["abort_early"] = [](ExperimentConfig& c, std::string_view v, const auto&) {
      c.attack_cfg.abort_early = to_bool("abort_early", v);
    };
    t["k"] = [](ExperimentConfig& c, std::string_view v, const auto&) { c.lid.k = to_size("k", v); };
    t["batch_size"] = [](ExperimentConfig& c, std::string_view v, const auto&) { c.lid.batch_size = to_size("batch_size", v); };
    t["reference"] = [](ExperimentConfig& c, std::string_view v, const auto&) {
      if (v == "train") {
        c.reference = ReferenceSource::train;
      } else if (v == "targets") {
        c.reference = ReferenceSource::targets;
      } else {
        throw ConfigError("reference must be train or targets");
      }
    };
    t["detector_lr"] = [](ExperimentConfig& c, std::string_view v, const auto&) {
      c.detector.learning_rate = to_real("detector_lr", v);
    };
    t["detector_epochs"] = [](ExperimentConfig& c, std::string_view v, const auto&) {
      c.detector.epochs = to_size("detector_epochs", v);
    };
    t["threshold"] = [](ExperimentConfig& c, std::string_view v, const auto&) { c.detector.threshold = to_real("threshold", v); };
    t["train_fraction"] = [](ExperimentConfig& c, std::string_view v, const auto&) {
      c.train_fraction = to_real("train_fraction", v);
    };
    t["seed"] = [](ExperimentConfig& c, std::string_view v, const auto&) { c.seed = to_size("seed", v); };
    return t;
  }();
  return table;
}

}  // namespace

std::vector<std::size_t> model_a_dims() { return {784, 128, 64, 10}; }
std::vector<std::size_t> model_b_dims() { return {784, 256, 128, 64, 10}; }

std::vector<double> parse_kappa_list(std::string_view s) {
  std::vector<double> out;
  for (const auto& cell : split_csv_line(s)) {
    try {
      out.push_back(parse_double(cell));
    } catch (const ParseError&) {
      throw ConfigError("kappa list: bad value '" + cell + "'");
    }
  }
  return out;
}

void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value,
                   const std::filesystem::path& base_dir) {
  const auto& table = setters();
  key = trim(key);
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second(cfg, trim(value), base_dir);
}

ExperimentConfig parse_config(std::istream& in, const ExperimentConfig& defaults,
                              const std::filesystem::path& base_dir) {
  ExperimentConfig cfg = defaults;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string_view body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    }
    try {
      apply_setting(cfg, trim(body.substr(0, eq)), trim(body.substr(eq + 1)), base_dir);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, const ExperimentConfig& defaults) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in, defaults, path.parent_path());
}

void ExperimentConfig::validate() const {
  if (kappa_list.empty()) throw ConfigError("kappa list is empty");
  for (double k : kappa_list) {
    if (!(k >= 0.0)) throw ConfigError("kappa values must be >= 0");
  }
  if (n_targets == 0) throw ConfigError("n_targets must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must be in (0,1)");
  if (dataset == "mnist" &&
      (train_images.empty() || train_labels.empty() || test_images.empty() || test_labels.empty())) {
    throw ConfigError("mnist dataset needs train_images, train_labels, test_images and test_labels");
  }
  if (target_model.weights.empty() && target_model.dims.empty()) throw ConfigError("target_model not set");
  try {
    AttackConfig a = attack_cfg;
    a.kappa = kappa_list.front();
    a.validate();
    lid.validate();
  } catch (const InvalidInputError& e) {
    throw ConfigError(e.what());
  }
  if (!(detector.threshold > 0.0 && detector.threshold < 1.0)) throw ConfigError("threshold must be in (0,1)");
  if (reference_pool < lid.batch_size) throw ConfigError("reference_pool must hold at least batch_size images");
}

}  // namespace lidadv
