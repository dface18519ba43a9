#include "lidadv/detector.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "lidadv/error.hpp"
#include "text_util.hpp"

namespace lidadv {

namespace {

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

std::size_t check_rows(std::span<const FeatureRow> rows, std::size_t dim, const char* what) {
  for (const auto& r : rows) {
    if (r.size() != dim) throw InvalidInputError(std::string(what) + ": inconsistent feature dimension");
  }
  return dim;
}

}  // namespace

DetectorModel train_detector(std::span<const FeatureRow> pos, std::span<const FeatureRow> neg,
                             const DetectorParams& hp) {
  if (pos.empty() || neg.empty()) throw InvalidInputError("detector needs both classes");
  const std::size_t dim = pos.front().size();
  if (dim == 0) throw InvalidInputError("detector features are empty");
  check_rows(pos, dim, "positives");
  check_rows(neg, dim, "negatives");
  if (!(hp.threshold > 0.0 && hp.threshold < 1.0)) throw InvalidInputError("threshold must be in (0,1)");

  const std::size_t n = pos.size() + neg.size();
  DetectorModel model;
  model.threshold = hp.threshold;
  model.feature_means.assign(dim, 0.0);
  model.feature_stds.assign(dim, 0.0);
  auto for_each_row = [&](auto&& fn) {
    for (const auto& r : pos) fn(r);
    for (const auto& r : neg) fn(r);
  };
  for_each_row([&](const FeatureRow& r) {
    for (std::size_t j = 0; j < dim; ++j) model.feature_means[j] += r[j];
  });
  for (double& m : model.feature_means) m /= static_cast<double>(n);
  for_each_row([&](const FeatureRow& r) {
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = r[j] - model.feature_means[j];
      model.feature_stds[j] += d * d;
    }
  });
  for (std::size_t j = 0; j < dim; ++j) {
    model.feature_stds[j] = std::sqrt(model.feature_stds[j] / static_cast<double>(n));
    if (!(model.feature_stds[j] > kStdFloor)) {
      model.feature_stds[j] = kStdFloor;
      model.floored_features.push_back(j);
    }
  }

  // standardized design matrix with targets
  std::vector<double> z(n * dim);
  std::vector<double> y(n);
  std::size_t row = 0;
  auto load = [&](std::span<const FeatureRow> rows, double target) {
    for (const auto& r : rows) {
      for (std::size_t j = 0; j < dim; ++j) {
        z[row * dim + j] = (r[j] - model.feature_means[j]) / model.feature_stds[j];
      }
      y[row++] = target;
    }
  };
  load(pos, 1.0);
  load(neg, 0.0);

  model.weights.assign(dim, 0.0);
  std::vector<double> grad_w(dim);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    std::fill(grad_w.begin(), grad_w.end(), 0.0);
    double grad_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* zi = &z[i * dim];
      const double t = std::inner_product(zi, zi + dim, model.weights.begin(), model.bias);
      const double err = sigmoid(t) - y[i];
      for (std::size_t j = 0; j < dim; ++j) grad_w[j] += err * zi[j];
      grad_b += err;
    }
    for (std::size_t j = 0; j < dim; ++j) model.weights[j] -= hp.learning_rate * grad_w[j] * inv_n;
    model.bias -= hp.learning_rate * grad_b * inv_n;
  }
  return model;
}

double score(const DetectorModel& model, std::span<const double> f) {
  if (f.size() != model.dimension()) {
    throw ShapeError("detector expects " + std::to_string(model.dimension()) + " features, got " +
                     std::to_string(f.size()));
  }
  double t = model.bias;
  for (std::size_t j = 0; j < f.size(); ++j) {
    t += model.weights[j] * (f[j] - model.feature_means[j]) / model.feature_stds[j];
  }
  return sigmoid(t);
}

std::vector<double> score_all(const DetectorModel& model, std::span<const FeatureRow> rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(score(model, r));
  return out;
}

double auc(std::span<const double> pos_scores, std::span<const double> neg_scores) {
  if (pos_scores.empty() || neg_scores.empty()) throw InvalidInputError("auc needs both classes");
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(pos_scores.size() + neg_scores.size());
  for (double s : pos_scores) items.push_back({s, true});
  for (double s : neg_scores) items.push_back({s, false});
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

  // Doubled midranks keep the statistic an exact integer: a tie group
  // spanning 1-based ranks [lo, hi] has midrank (lo + hi) / 2.
  long double twice_rank_sum = 0.0L;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) ++j;
    const std::size_t twice_mid = (i + 1) + j;
    for (std::size_t t = i; t < j; ++t) {
      if (items[t].positive) twice_rank_sum += static_cast<long double>(twice_mid);
    }
    i = j;
  }
  const auto n_pos = static_cast<long double>(pos_scores.size());
  const auto n_neg = static_cast<long double>(neg_scores.size());
  const long double twice_u = twice_rank_sum - n_pos * (n_pos + 1.0L);
  return static_cast<double>(twice_u / 2.0L) / static_cast<double>(n_pos * n_neg);
}

double detection_rate(const DetectorModel& model, std::span<const FeatureRow> adversarial) {
  if (adversarial.empty()) throw InvalidInputError("detection_rate of an empty set");
  std::size_t hits = 0;
  for (const auto& r : adversarial) {
    if (score(model, r) >= model.threshold) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(adversarial.size());
}

double tpr_at_fpr(std::span<const double> pos_scores, std::span<const double> neg_scores,
                  double max_fpr) {
  if (pos_scores.empty() || neg_scores.empty()) throw InvalidInputError("tpr_at_fpr needs both classes");
  std::vector<double> neg(neg_scores.begin(), neg_scores.end());
  std::sort(neg.begin(), neg.end(), std::greater<>());
  const auto allowed = static_cast<std::size_t>(std::floor(max_fpr * static_cast<double>(neg.size())));
  std::size_t tp = 0;
  if (allowed >= neg.size()) {
    tp = pos_scores.size();
  } else {
    // Everything strictly above neg[allowed] passes; at most `allowed`
    // negatives lie there even with ties.
    const double cut = neg[allowed];
    for (double s : pos_scores) tp += s > cut ? 1 : 0;
  }
  return static_cast<double>(tp) / static_cast<double>(pos_scores.size());
}

DetectionMetrics evaluate_detector(const DetectorModel& model, std::span<const FeatureRow> pos,
                                   std::span<const FeatureRow> neg) {
  DetectionMetrics m;
  const auto ps = score_all(model, pos);
  const auto ns = score_all(model, neg);
  m.auc = auc(ps, ns);
  m.detection_rate = detection_rate(model, pos);
  m.tpr_at_fpr = tpr_at_fpr(ps, ns, kFixedFpr);
  m.n_pos = pos.size();
  m.n_neg = neg.size();
  return m;
}

void write_detector_csv(const DetectorModel& model, std::ostream& out) {
  out << "field,index,value\n";
  const auto old_precision = out.precision(17);
  for (std::size_t j = 0; j < model.dimension(); ++j) out << "weight," << j << ',' << model.weights[j] << '\n';
  for (std::size_t j = 0; j < model.dimension(); ++j) out << "mean," << j << ',' << model.feature_means[j] << '\n';
  for (std::size_t j = 0; j < model.dimension(); ++j) out << "std," << j << ',' << model.feature_stds[j] << '\n';
  out << "bias,," << model.bias << '\n';
  out << "threshold,," << model.threshold << '\n';
  out.precision(old_precision);
  if (!out) throw IoError("failed writing detector CSV");
}

DetectorModel read_detector_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "field,index,value") throw ParseError("detector CSV: bad header");
  DetectorModel m;
  bool have_bias = false;
  bool have_threshold = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 3) throw ParseError("detector CSV: expected 3 columns");
    const double value = parse_double(cells[2]);
    auto put = [&](std::vector<double>& v) {
      const auto idx = static_cast<std::size_t>(parse_uint(cells[1]));
      if (idx != v.size()) throw ParseError("detector CSV: indices out of order");
      v.push_back(value);
    };
    if (cells[0] == "weight") {
      put(m.weights);
    } else if (cells[0] == "mean") {
      put(m.feature_means);
    } else if (cells[0] == "std") {
      put(m.feature_stds);
    } else if (cells[0] == "bias") {
      m.bias = value;
      have_bias = true;
    } else if (cells[0] == "threshold") {
      m.threshold = value;
      have_threshold = true;
    } else {
      throw ParseError("detector CSV: unknown field '" + cells[0] + "'");
    }
  }
  if (!have_bias || !have_threshold || m.weights.empty() ||
      m.weights.size() != m.feature_means.size() || m.weights.size() != m.feature_stds.size()) {
    throw ParseError("detector CSV: incomplete model");
  }
  for (std::size_t j = 0; j < m.feature_stds.size(); ++j) {
    if (!(m.feature_stds[j] > 0.0)) throw ParseError("detector CSV: non-positive std");
    if (m.feature_stds[j] == kStdFloor) m.floored_features.push_back(j);
  }
  return m;
}

}  // namespace lidadv
