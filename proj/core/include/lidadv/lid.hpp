#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "lidadv/network.hpp"
#include "lidadv/tensor.hpp"

namespace lidadv {

struct LidConfig {
  std::size_t k = 20;
  std::size_t batch_size = 100;
  std::uint64_t seed = 0;

  /// Requires k >= 2 and batch_size >= k + 1.
  void validate() const;
};

/// Maximum-likelihood LID estimate from ascending neighbor distances
/// r_1 <= ... <= r_k:
///
///   LID = -( (1/k) * sum_i log(r_i / r_k) )^-1
///
/// The i = k term contributes log(1) = 0 but still counts in the mean.
/// Throws DuplicatePointError if any r_i is 0 and DegenerateNeighborhoodError
/// if all distances are equal.
double lid_mle(std::span<const double> sorted_distances);

/// Euclidean distances from `query` to `references`, ascending, first k.
/// `exclude_index` removes one reference (the query's own counterpart) before
/// selection. Throws InvalidInputError when fewer than k references remain.
std::vector<double> knn_distances(std::span<const double> query,
                                  std::span<const Tensor> references, std::size_t k,
                                  std::optional<std::size_t> exclude_index = std::nullopt);

/// x plus a Gaussian direction scaled to L2 norm `target_l2`, then clamped to
/// `box`. Clamping may shrink the norm; it is not re-inflated.
Tensor make_noisy(const Tensor& x, double target_l2, Box box, std::uint64_t seed);

enum class SampleKind { clean, noisy, adversarial };

std::string_view to_string(SampleKind kind);
SampleKind parse_sample_kind(std::string_view s);

struct LidQuery {
  std::size_t sample_id = 0;
  SampleKind kind = SampleKind::clean;
  Tensor x;
  /// Index in the reference batch of the query's clean counterpart; excluded
  /// from its neighborhood.
  std::optional<std::size_t> counterpart;
};

struct LidFeatureVector {
  std::size_t sample_id = 0;
  SampleKind label = SampleKind::clean;
  std::vector<double> values;  // one LID estimate per network layer
};

struct DroppedQuery {
  std::size_t query_index = 0;
  std::size_t layer = 0;
};

struct FeatureBatch {
  std::vector<LidFeatureVector> features;  // input order, dropped queries omitted
  std::vector<DroppedQuery> dropped;
};

/// Per-layer LID of every query against `clean_batch`. Reference activations
/// are computed once. A query whose neighborhood is degenerate (or contains a
/// duplicate point) at any layer is dropped and listed in `dropped`.
FeatureBatch extract_features(const Network& net, std::span<const Tensor> clean_batch,
                              std::span<const LidQuery> queries, const LidConfig& cfg);

/// CSV with header sample_id,label,lid_layer_0,...,lid_layer_{L-1}.
void write_features_csv(std::span<const LidFeatureVector> features, std::ostream& out);
std::vector<LidFeatureVector> read_features_csv(std::istream& in);

}  // namespace lidadv
