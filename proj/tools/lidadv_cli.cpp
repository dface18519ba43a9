#include <CLI11.hpp>

#include <algorithm>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lidadv/error.hpp"
#include "lidadv/harness.hpp"

namespace {

using lidadv::ConfigError;
using lidadv::Experiment;
using lidadv::ExperimentConfig;

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> attack;
  std::optional<std::string> rule;
  std::optional<std::string> kappa;
  std::optional<double> beta;
  std::optional<std::size_t> k;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> threads;
  std::vector<std::string> set;
  std::string role = "target";
  bool shared_targets = false;
  std::vector<std::string> reports;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "key=value config file ('#' starts a comment)");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--out-dir", o.out_dir, "output directory");
  cmd->add_option("--attack", o.attack, "attack method")->check(CLI::IsMember({"cw", "ead"}));
  cmd->add_option("--rule", o.rule, "EAD decision rule")->check(CLI::IsMember({"en", "l1"}));
  cmd->add_option("--kappa", o.kappa, "comma-separated confidence values");
  cmd->add_option("--beta", o.beta, "EAD L1 weight");
  cmd->add_option("--k", o.k, "LID neighborhood size");
  cmd->add_option("--batch-size", o.batch_size, "LID reference batch size");
  cmd->add_option("--threads", o.threads, "attack worker threads");
  cmd->add_option("--set", o.set, "extra key=value setting, repeatable");
}

void add_role(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--role", o.role, "which model to use")->check(CLI::IsMember({"target", "source"}));
  cmd->add_flag("--shared-targets", o.shared_targets,
                "use targets both models classify correctly (as transfer does)");
}

ExperimentConfig build_config(const Overrides& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : lidadv::load_config(o.config);
  auto set = [&cfg](std::string_view key, const std::string& value) { lidadv::apply_setting(cfg, key, value); };
  if (o.seed) set("seed", std::to_string(*o.seed));
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  if (o.attack) set("attack", *o.attack);
  if (o.rule) set("rule", *o.rule);
  if (o.kappa) set("kappa", *o.kappa);
  if (o.beta) cfg.attack_cfg.beta = *o.beta;
  if (o.k) cfg.lid.k = *o.k;
  if (o.batch_size) cfg.lid.batch_size = *o.batch_size;
  if (o.threads) cfg.threads = *o.threads;
  for (const auto& kv : o.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    lidadv::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  if (cfg.n_targets < cfg.lid.batch_size) {
    std::cerr << "warning: n_targets (" << cfg.n_targets << ") is below the LID batch size ("
              << cfg.lid.batch_size << ")\n";
  }
  return cfg;
}

Experiment::Role role_of(const Overrides& o) {
  return o.role == "source" ? Experiment::Role::source : Experiment::Role::target;
}

void print_rows(const std::vector<lidadv::ReportRow>& rows) { lidadv::print_report_table(rows, std::cout); }

int run(const std::string& name, const Overrides& o) {
  if (name == "report") {
    std::vector<lidadv::ReportRow> rows;
    std::vector<std::filesystem::path> files(o.reports.begin(), o.reports.end());
    if (files.empty()) {
      const std::filesystem::path dir = std::filesystem::path(o.out_dir.value_or("out")) / "reports";
      if (!std::filesystem::is_directory(dir)) throw ConfigError("no reports under " + dir.string());
      for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".csv") files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
    }
    for (const auto& f : files) {
      auto part = lidadv::parse_report(f);
      rows.insert(rows.end(), part.begin(), part.end());
    }
    if (rows.empty()) throw ConfigError("no report rows found");
    print_rows(rows);
    return 0;
  }

  const ExperimentConfig cfg = build_config(o);
  Experiment exp(cfg, &std::cerr);
  const auto role = role_of(o);

  if (name == "train-model") {
    exp.model(Experiment::Role::target);
    if (role == Experiment::Role::source || o.shared_targets) exp.model(Experiment::Role::source);
  } else if (name == "attack") {
    for (double kappa : cfg.kappa_list) exp.attacks(role, o.shared_targets, kappa);
  } else if (name == "features") {
    const auto stem = exp.artifact_stem(role, o.shared_targets, cfg.kappa_list.front());
    if (std::filesystem::exists(cfg.out_dir / "adv" / (stem + ".f64.idx"))) {
      exp.load_attack_artifacts(role, o.shared_targets);
    }
    exp.write_feature_artifacts(role, o.shared_targets);
  } else if (name == "detect") {
    exp.load_attack_artifacts(Experiment::Role::target, false);
    print_rows(exp.run_oblivious());
  } else if (name == "oblivious") {
    print_rows(exp.run_oblivious());
  } else if (name == "ensemble") {
    print_rows(exp.run_ensemble());
  } else if (name == "transfer") {
    print_rows(exp.run_transfer());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LID-based adversarial subspace experiments"};
  app.require_subcommand(1);
  Overrides o;

  struct Command {
    const char* name;
    const char* help;
    bool role;
  };
  const Command commands[] = {
      {"train-model", "train the target model (and the source model with --role source)", true},
      {"attack", "craft adversarial examples for every kappa into adv/", true},
      {"features", "extract clean/noisy/adversarial LID features into features/", true},
      {"detect", "train and evaluate detectors from adversarial examples saved by 'attack'", false},
      {"oblivious", "oblivious protocol: detector trained per kappa", false},
      {"ensemble", "detector trained on the union of all kappa values", false},
      {"transfer", "examples crafted on the source model against the target detector", false},
  };
  for (const auto& c : commands) {
    auto* cmd = app.add_subcommand(c.name, c.help);
    add_common(cmd, o);
    if (c.role) add_role(cmd, o);
  }
  auto* report = app.add_subcommand("report", "print report CSVs as tables");
  report->add_option("files", o.reports, "report CSV files (default: <out-dir>/reports/*.csv)");
  report->add_option("--out-dir", o.out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return run(name, o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
