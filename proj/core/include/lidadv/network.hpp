#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "lidadv/dataset.hpp"
#include "lidadv/tensor.hpp"

namespace lidadv {

enum class Activation : std::uint32_t { identity = 0, relu = 1 };

struct LayerSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Activation activation = Activation::identity;

  bool operator==(const LayerSpec&) const = default;
};

/// Fully connected layer. `weights` is out_dim x in_dim, row-major.
struct DenseLayer {
  LayerSpec spec;
  std::vector<double> weights;
  std::vector<double> bias;

  bool operator==(const DenseLayer&) const = default;
};

/// Feedforward stack of dense layers whose last layer emits logits.
///
/// Immutable once built; every read-only operation below can run concurrently
/// on a shared instance.
class Network {
 public:
  /// Validates the dimension chain, parameter sizes and that the final layer
  /// is linear. Throws ShapeError / InvalidInputError.
  explicit Network(std::vector<DenseLayer> layers);

  /// relu hidden layers and a linear output, He-normal weights, zero biases.
  /// `dims` lists layer widths including input and output, e.g. {784,128,64,10}.
  static Network initialized(std::span<const std::size_t> dims, std::uint64_t seed);

  [[nodiscard]] const std::vector<DenseLayer>& layers() const { return layers_; }
  [[nodiscard]] std::size_t num_layers() const { return layers_.size(); }
  [[nodiscard]] std::size_t input_dim() const { return layers_.front().spec.in_dim; }
  [[nodiscard]] std::size_t num_classes() const { return layers_.back().spec.out_dim; }
  [[nodiscard]] std::vector<std::size_t> dims() const;

  bool operator==(const Network&) const = default;

 private:
  std::vector<DenseLayer> layers_;
};

/// Post-activation output of every layer, in order. The last entry is the
/// logits vector.
struct ActivationTrace {
  std::vector<Tensor> per_layer;

  [[nodiscard]] const Tensor& logits() const { return per_layer.back(); }
};

/// Scalar function of the logits with an analytic gradient.
class LogitLoss {
 public:
  virtual ~LogitLoss() = default;
  [[nodiscard]] virtual double value(std::span<const double> logits) const = 0;
  /// Writes d value / d logits into `grad` (same length as `logits`).
  virtual void gradient(std::span<const double> logits, std::span<double> grad) const = 0;
};

/// -log softmax(logits)[label]
class CrossEntropyLoss final : public LogitLoss {
 public:
  explicit CrossEntropyLoss(std::size_t label) : label_(label) {}
  [[nodiscard]] double value(std::span<const double> logits) const override;
  void gradient(std::span<const double> logits, std::span<double> grad) const override;

 private:
  std::size_t label_;
};

/// w . logits
class LinearLogitLoss final : public LogitLoss {
 public:
  explicit LinearLogitLoss(std::vector<double> weights) : weights_(std::move(weights)) {}
  [[nodiscard]] double value(std::span<const double> logits) const override;
  void gradient(std::span<const double> logits, std::span<double> grad) const override;

 private:
  std::vector<double> weights_;
};

ActivationTrace forward(const Network& net, const Tensor& x);

/// Logits only; skips storing the intermediate layers.
Tensor logits(const Network& net, const Tensor& x);

/// argmax of the logits, lowest index on ties.
std::size_t predict(const Network& net, const Tensor& x);
std::size_t argmax(std::span<const double> v);

struct LossGradient {
  double value = 0.0;
  Tensor logits;
  Tensor gradient;  // d loss / d x
};

/// Loss value and its exact input gradient by backpropagation. relu units with
/// pre-activation exactly 0 pass no gradient.
LossGradient loss_and_input_gradient(const Network& net, const Tensor& x, const LogitLoss& loss);

Tensor input_gradient(const Network& net, const Tensor& x, const LogitLoss& loss);

struct TrainParams {
  double learning_rate = 0.1;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

/// Mini-batch gradient descent on mean cross-entropy. Sample order is
/// reshuffled every epoch from `hp.seed`; the result is bit-reproducible.
Network train(Network net, const LabeledDataset& data, const TrainParams& hp);

/// Fraction of samples whose predicted class equals the label.
double accuracy(const Network& net, const LabeledDataset& data);

/// "LIDNN1" container: u32 layer count, then per layer u32 (in, out,
/// activation), then per layer row-major f64 weights followed by f64 biases.
/// All integers and reals little-endian.
void save_network(const Network& net, std::ostream& out);
void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(std::istream& in);
Network load_network(const std::filesystem::path& path);

}  // namespace lidadv
