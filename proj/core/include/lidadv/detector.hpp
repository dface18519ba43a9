#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace lidadv {

using FeatureRow = std::vector<double>;

struct DetectorParams {
  double learning_rate = 0.1;
  std::size_t epochs = 1000;
  std::uint64_t seed = 0;
  double threshold = 0.5;
};

/// Logistic regression over standardized features.
struct DetectorModel {
  std::vector<double> weights;
  double bias = 0.0;
  std::vector<double> feature_means;
  std::vector<double> feature_stds;
  double threshold = 0.5;
  /// Features whose standard deviation was floored to 1e-12.
  std::vector<std::size_t> floored_features;

  [[nodiscard]] std::size_t dimension() const { return weights.size(); }
};

struct DetectionMetrics {
  double auc = 0.0;
  double detection_rate = 0.0;
  double tpr_at_fpr = 0.0;  // at kFixedFpr
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

inline constexpr double kStdFloor = 1e-12;
inline constexpr double kFixedFpr = 0.05;

/// Full-batch gradient descent on the mean logistic loss, adversarial = 1.
/// Weights start at zero, so the fit is a deterministic function of the data;
/// `hp.seed` is recorded for provenance only.
DetectorModel train_detector(std::span<const FeatureRow> pos, std::span<const FeatureRow> neg,
                             const DetectorParams& hp);

/// sigmoid(w . standardize(f) + b)
double score(const DetectorModel& model, std::span<const double> f);
std::vector<double> score_all(const DetectorModel& model, std::span<const FeatureRow> rows);

/// Mann-Whitney AUC: P(pos > neg) with ties counted one half. Computed from
/// midranks in O((n+m) log(n+m)).
double auc(std::span<const double> pos_scores, std::span<const double> neg_scores);

/// Fraction of rows whose score reaches the model threshold.
double detection_rate(const DetectorModel& model, std::span<const FeatureRow> adversarial);

/// Fraction of positives scoring strictly above a cut that admits at most
/// floor(max_fpr * |neg|) negatives.
double tpr_at_fpr(std::span<const double> pos_scores, std::span<const double> neg_scores,
                  double max_fpr);

DetectionMetrics evaluate_detector(const DetectorModel& model, std::span<const FeatureRow> pos,
                                   std::span<const FeatureRow> neg);

/// Flat CSV: header field,index,value; rows weight/mean/std per feature, then
/// bias and threshold.
void write_detector_csv(const DetectorModel& model, std::ostream& out);
DetectorModel read_detector_csv(std::istream& in);

}  // namespace lidadv
