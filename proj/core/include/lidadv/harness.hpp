#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "lidadv/attack.hpp"
#include "lidadv/dataset.hpp"
#include "lidadv/detector.hpp"
#include "lidadv/lid.hpp"
#include "lidadv/network.hpp"

namespace lidadv {

enum class Protocol { oblivious, ensemble, transfer };

std::string_view to_string(Protocol p);
Protocol parse_protocol(std::string_view s);

/// Where the reference minibatch for LID estimation comes from.
///  - train:   batch_size images drawn from a pool of training images.
///  - targets: the clean attack targets of the chunk, topped up from the pool;
///             each query excludes its own clean counterpart.
enum class ReferenceSource { train, targets };

/// A network to load from disk or train from scratch.
struct ModelSpec {
  std::filesystem::path weights;   // load when non-empty
  std::vector<std::size_t> dims;   // otherwise train this architecture
  std::uint64_t seed = 0;
  TrainParams train;
};

/// Model-A = 784-128-64-10, Model-B = 784-256-128-64-10 (relu hidden layers).
std::vector<std::size_t> model_a_dims();
std::vector<std::size_t> model_b_dims();

struct ExperimentConfig {
  // data
  std::string dataset = "mnist";  // "mnist" (IDX files) or "blobs"
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path test_images;
  std::filesystem::path test_labels;
  std::size_t train_limit = 0;  // 0 keeps every training image
  std::size_t blob_train = 600;
  std::size_t blob_test = 300;
  std::size_t blob_classes = 3;
  std::size_t blob_dim = 8;
  double blob_spread = 0.05;

  ModelSpec target_model{{}, model_a_dims(), 1, {0.1, 30, 32, 0}};
  ModelSpec source_model{{}, model_b_dims(), 2, {0.1, 30, 32, 0}};

  AttackMethod attack = AttackMethod::cw;
  AttackConfig attack_cfg;  // kappa is taken from kappa_list
  std::vector<double> kappa_list{0.0};
  std::size_t n_targets = 200;

  LidConfig lid;
  ReferenceSource reference = ReferenceSource::train;
  std::size_t reference_pool = 2000;

  DetectorParams detector;
  double train_fraction = 0.7;

  std::uint64_t seed = 2018;
  std::filesystem::path out_dir = "out";
  std::size_t threads = 1;
  /// Number of per-kappa clean/adversarial PGM pairs written to images/.
  std::size_t image_dumps = 4;

  /// Throws ConfigError on invalid combinations.
  void validate() const;
};

/// Parses `key = value` lines; `#` starts a comment. Relative paths are
/// resolved against `base_dir`. Unknown keys are a ConfigError.
ExperimentConfig parse_config(std::istream& in, const ExperimentConfig& defaults = {},
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path, const ExperimentConfig& defaults = {});

/// Applies one `key=value` setting. Throws ConfigError.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value,
                   const std::filesystem::path& base_dir = {});

std::vector<double> parse_kappa_list(std::string_view s);

struct ReportRow {
  Protocol protocol = Protocol::oblivious;
  AttackMethod attack = AttackMethod::cw;
  std::optional<DecisionRule> rule;  // EAD only
  double kappa = 0.0;
  double auc = 0.0;
  double detection_rate = 0.0;
  double tpr_at_5fpr = 0.0;
  std::optional<double> post_detection_classification_rate;  // transfer only
  std::optional<double> classification_rate_wo_detection;    // transfer only
  std::size_t n = 0;
  std::size_t dropped_degenerate = 0;
};

/// CSV with header
/// protocol,attack,rule,kappa,auc,detection_rate,tpr_at_5fpr,
/// post_detection_classification_rate,classification_rate_wo_detection,n,dropped_degenerate
/// Rates are written as percentages with two decimals; absent optional fields
/// are empty cells.
void emit_report(std::span<const ReportRow> rows, std::ostream& out);
void emit_report(std::span<const ReportRow> rows, const std::filesystem::path& path);
std::vector<ReportRow> parse_report(std::istream& in);
std::vector<ReportRow> parse_report(const std::filesystem::path& path);

/// Human-readable table in the layout of the published result tables.
void print_report_table(std::span<const ReportRow> rows, std::ostream& out);

/// LID features of one attacked sample; absent entries were dropped.
struct SampleFeatures {
  std::size_t target_index = 0;
  std::size_t sample_id = 0;
  std::optional<FeatureRow> clean;
  std::optional<FeatureRow> noisy;
  std::optional<FeatureRow> adversarial;
};

struct FeatureTable {
  double kappa = 0.0;
  std::vector<SampleFeatures> samples;  // successful attacks only
  std::size_t attempted = 0;
  std::size_t dropped = 0;
};

/// Runs the detection protocols for one configuration. Trained models, attack
/// sets and feature tables are cached, so the protocols can share work inside
/// one instance. Artifacts are written under cfg.out_dir.
class Experiment {
 public:
  enum class Role { target, source };

  explicit Experiment(ExperimentConfig cfg, std::ostream* log = nullptr);
  ~Experiment();
  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;

  [[nodiscard]] const ExperimentConfig& config() const { return cfg_; }

  const LabeledDataset& train_data();
  const LabeledDataset& test_data();
  const Network& model(Role role);

  /// Attack targets: correctly classified test samples (by the target model,
  /// or by both models when `both` is set).
  const std::vector<AttackTarget>& targets(bool both);

  /// Attack results for every target, computed on `role`'s model.
  const std::vector<AdversarialResult>& attacks(Role role, bool both_targets, double kappa);

  /// Clean/noisy/adversarial LID features of the successful attacks in
  /// attacks(role, both_targets, kappa), extracted on `role`'s model.
  const FeatureTable& features(Role role, bool both_targets, double kappa);

  /// Target indices assigned to detector training (the rest are test).
  [[nodiscard]] std::vector<bool> train_split(std::size_t n_targets) const;

  std::vector<ReportRow> run_oblivious();
  std::vector<ReportRow> run_ensemble();
  std::vector<ReportRow> run_transfer();

  /// Writes models/, adv/ and features/ artifacts for `role` at every kappa
  /// without training detectors.
  void write_attack_artifacts(Role role, bool both_targets);
  void write_feature_artifacts(Role role, bool both_targets);

  /// Loads adversarial examples previously written by write_attack_artifacts
  /// instead of recomputing them.
  void load_attack_artifacts(Role role, bool both_targets);

  /// Output file stem for an attack set, e.g. "target_ead-en_k10".
  [[nodiscard]] std::string artifact_stem(Role role, bool both_targets, double kappa) const;

 private:
  struct Impl;
  ExperimentConfig cfg_;
  std::ostream* log_;
  std::unique_ptr<Impl> impl_;
};

/// Splits `table` into detector training/testing positives and negatives.
struct DetectorData {
  std::vector<FeatureRow> train_pos, train_neg, test_pos, test_neg;
};
DetectorData split_features(const FeatureTable& table, const std::vector<bool>& is_train);

/// Detector metrics for one feature table (the oblivious protocol at one
/// kappa). Returns a row with n = 0 when either split lacks a class.
ReportRow oblivious_row(const FeatureTable& table, const std::vector<bool>& is_train,
                        const DetectorParams& hp, AttackMethod attack,
                        std::optional<DecisionRule> rule, DetectorModel* trained = nullptr);

std::string format_kappa(double kappa);

}  // namespace lidadv
