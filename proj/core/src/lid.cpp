#include "lidadv/lid.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <string>

#include "lidadv/error.hpp"
#include "lidadv/rng.hpp"
#include "text_util.hpp"

namespace lidadv {

void LidConfig::validate() const {
  if (k < 2) throw InvalidInputError("LID needs k >= 2");
  if (batch_size < k + 1) throw InvalidInputError("LID batch_size must be at least k + 1");
}

double lid_mle(std::span<const double> d) {
  if (d.empty()) throw InvalidInputError("lid_mle: no distances");
  const double r_k = d.back();
  double sum = 0.0;
  for (double r : d) {
    if (!(r > 0.0)) throw DuplicatePointError("lid_mle: zero neighbor distance");
    if (r > r_k) throw InvalidInputError("lid_mle: distances must be ascending");
    sum += std::log(r / r_k);
  }
  if (sum == 0.0) throw DegenerateNeighborhoodError("lid_mle: all neighbor distances equal");
  return -1.0 / (sum / static_cast<double>(d.size()));
}

std::vector<double> knn_distances(std::span<const double> query,
                                  std::span<const Tensor> references, std::size_t k,
                                  std::optional<std::size_t> exclude_index) {
  const std::size_t available =
      references.size() - (exclude_index && *exclude_index < references.size() ? 1 : 0);
  if (k == 0 || available < k) {
    throw InvalidInputError("knn_distances: " + std::to_string(available) +
                            " references for k=" + std::to_string(k));
  }
  std::vector<double> dist;
  dist.reserve(references.size());
  for (std::size_t i = 0; i < references.size(); ++i) {
    if (exclude_index && *exclude_index == i) continue;
    dist.push_back(l2_distance(query, references[i].values()));
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  dist.resize(k);
  return dist;
}

Tensor make_noisy(const Tensor& x, double target_l2, Box box, std::uint64_t seed) {
  if (!(target_l2 > 0.0)) throw InvalidInputError("make_noisy: target_l2 must be positive");
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> dir(x.size());
  double norm = 0.0;
  while (norm == 0.0) {
    for (double& v : dir) v = gauss(rng);
    norm = l2_norm(dir);
  }
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = box.clamp(x[i] + dir[i] * (target_l2 / norm));
  return out;
}

std::string_view to_string(SampleKind kind) {
  switch (kind) {
    case SampleKind::clean: return "clean";
    case SampleKind::noisy: return "noisy";
    case SampleKind::adversarial: return "adversarial";
  }
  return "?";
}

SampleKind parse_sample_kind(std::string_view s) {
  if (s == "clean") return SampleKind::clean;
  if (s == "noisy") return SampleKind::noisy;
  if (s == "adversarial") return SampleKind::adversarial;
  throw ParseError("unknown sample label '" + std::string(s) + "'");
}

FeatureBatch extract_features(const Network& net, std::span<const Tensor> clean_batch,
                              std::span<const LidQuery> queries, const LidConfig& cfg) {
  cfg.validate();
  if (clean_batch.size() != cfg.batch_size) {
    throw InvalidInputError("reference batch has " + std::to_string(clean_batch.size()) +
                            " samples, config expects " + std::to_string(cfg.batch_size));
  }
  const std::size_t layers = net.num_layers();

  // reference activations, indexed [layer][sample]
  std::vector<std::vector<Tensor>> refs(layers, std::vector<Tensor>(clean_batch.size()));
  for (std::size_t s = 0; s < clean_batch.size(); ++s) {
    ActivationTrace t = forward(net, clean_batch[s]);
    for (std::size_t l = 0; l < layers; ++l) refs[l][s] = std::move(t.per_layer[l]);
  }

  FeatureBatch out;
  out.features.reserve(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto& query = queries[q];
    const ActivationTrace t = forward(net, query.x);
    LidFeatureVector f{query.sample_id, query.kind, std::vector<double>(layers)};
    bool ok = true;
    for (std::size_t l = 0; l < layers && ok; ++l) {
      try {
        const auto d = knn_distances(t.per_layer[l].values(), refs[l], cfg.k, query.counterpart);
        f.values[l] = lid_mle(d);
      } catch (const DegenerateNeighborhoodError&) {
        out.dropped.push_back({q, l});
        ok = false;
      } catch (const DuplicatePointError&) {
        out.dropped.push_back({q, l});
        ok = false;
      }
    }
    if (ok) out.features.push_back(std::move(f));
  }
  return out;
}

void write_features_csv(std::span<const LidFeatureVector> features, std::ostream& out) {
  const std::size_t width = features.empty() ? 0 : features.front().values.size();
  out << "sample_id,label";
  for (std::size_t l = 0; l < width; ++l) out << ",lid_layer_" << l;
  out << '\n';
  const auto old_precision = out.precision(17);
  for (const auto& f : features) {
    if (f.values.size() != width) throw ShapeError("feature vectors differ in length");
    out << f.sample_id << ',' << to_string(f.label);
    for (double v : f.values) out << ',' << v;
    out << '\n';
  }
  out.precision(old_precision);
  if (!out) throw IoError("failed writing feature CSV");
}

std::vector<LidFeatureVector> read_features_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("sample_id,label", 0) != 0) {
    throw ParseError("feature CSV: missing header");
  }
  const auto width = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 1;
  std::vector<LidFeatureVector> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != width + 2) throw ParseError("feature CSV: ragged row");
    LidFeatureVector f;
    f.sample_id = static_cast<std::size_t>(parse_uint(cells[0]));
    f.label = parse_sample_kind(cells[1]);
    for (std::size_t j = 2; j < cells.size(); ++j) f.values.push_back(parse_double(cells[j]));
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace lidadv
