#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "lidadv/tensor.hpp"

namespace lidadv {

class Network;

enum class Split { train, test };

/// Samples with values in [0,1] and integer class labels.
struct LabeledDataset {
  std::vector<Tensor> samples;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;
  Split split = Split::train;

  [[nodiscard]] std::size_t size() const { return samples.size(); }
  [[nodiscard]] bool empty() const { return samples.empty(); }

  /// Checks lengths, label range and the [0,1] value range.
  void validate() const;

  /// Rows selected by index, in the given order.
  [[nodiscard]] LabeledDataset subset(std::span<const std::size_t> indices) const;
};

/// A correctly classified test sample chosen as an attack target.
struct AttackTarget {
  std::size_t sample_id = 0;  // index into the source dataset
  Tensor x;
  std::size_t label = 0;
};

/// Reads an IDX image/label file pair (gzip-compressed or plain). Pixels are
/// divided by 255 and flattened row-major.
LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path, Split split = Split::test);

/// Writes `data` as an IDX ubyte image/label pair (uncompressed). Values are
/// quantized with round-half-up on x*255.
void write_idx(const LabeledDataset& data, std::size_t rows, std::size_t cols,
               const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

/// Full-precision tensor matrix in IDX layout with the float64 type code
/// (magic 0x00000E02). Used to persist adversarial examples between CLI stages.
void write_idx_f64(const std::vector<Tensor>& rows, const std::filesystem::path& path);
std::vector<Tensor> read_idx_f64(const std::filesystem::path& path);

/// Gaussian clusters around seeded random centers in [0.15, 0.85]^dim,
/// clamped to [0,1]. Labels cycle 0,1,...,num_classes-1.
LabeledDataset synthetic_blobs(std::size_t n, std::size_t num_classes, std::size_t dim,
                               double spread, std::uint64_t seed);

/// The class centers `synthetic_blobs` uses for the same arguments.
std::vector<Tensor> blob_centers(std::size_t num_classes, std::size_t dim, std::uint64_t seed);

/// Uniform sample without replacement of `n` samples that `net` classifies
/// correctly. Output order follows the seeded draw.
std::vector<AttackTarget> select_attack_targets(const Network& net, const LabeledDataset& data,
                                                std::size_t n, std::uint64_t seed);

/// Same, restricted to samples every network in `nets` classifies correctly.
std::vector<AttackTarget> select_attack_targets(std::span<const Network* const> nets,
                                                const LabeledDataset& data, std::size_t n,
                                                std::uint64_t seed);

/// Binary PGM (P5), 8-bit, value round(x*255) with halves rounded up.
void dump_image(const Tensor& x, std::size_t width, std::size_t height,
                const std::filesystem::path& path);
void dump_image(const Tensor& x, std::size_t width, std::size_t height, std::ostream& out);

/// round-half-up quantization used by image dumps and IDX writes.
std::uint8_t to_byte(double v);

}  // namespace lidadv
