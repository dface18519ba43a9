#include "lidadv/network.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lidadv/error.hpp"
#include "lidadv/rng.hpp"

namespace lidadv {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;

ConstMatrixMap weight_map(const DenseLayer& layer) {
  return {layer.weights.data(), static_cast<Eigen::Index>(layer.spec.out_dim),
          static_cast<Eigen::Index>(layer.spec.in_dim)};
}

ConstVectorMap bias_map(const DenseLayer& layer) {
  return {layer.bias.data(), static_cast<Eigen::Index>(layer.spec.out_dim)};
}

void apply_activation(Activation act, std::span<double> v) {
  if (act == Activation::relu) {
    for (double& x : v) x = x > 0.0 ? x : 0.0;
  }
}

void require_input(const Network& net, const Tensor& x) {
  if (x.size() != net.input_dim()) {
    throw ShapeError("network input expects " + std::to_string(net.input_dim()) +
                     " values, got " + std::to_string(x.size()));
  }
}

}  // namespace

Network::Network(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw InvalidInputError("network needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.spec.in_dim == 0 || l.spec.out_dim == 0) {
      throw ShapeError("layer " + std::to_string(i) + " has a zero dimension");
    }
    if (l.weights.size() != l.spec.in_dim * l.spec.out_dim || l.bias.size() != l.spec.out_dim) {
      throw ShapeError("layer " + std::to_string(i) + " parameter sizes do not match its spec");
    }
    if (i > 0 && layers_[i - 1].spec.out_dim != l.spec.in_dim) {
      throw ShapeError("layer " + std::to_string(i) + " input does not chain from layer " +
                       std::to_string(i - 1));
    }
  }
  if (layers_.back().spec.activation != Activation::identity) {
    throw InvalidInputError("last layer must be linear (it produces the logits)");
  }
}

Network Network::initialized(std::span<const std::size_t> dims, std::uint64_t seed) {
  if (dims.size() < 2) throw InvalidInputError("need at least input and output widths");
  Rng rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    DenseLayer layer;
    layer.spec = {dims[i], dims[i + 1],
                  i + 2 == dims.size() ? Activation::identity : Activation::relu};
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(dims[i])));
    layer.weights.resize(dims[i] * dims[i + 1]);
    for (double& w : layer.weights) w = dist(rng);
    layer.bias.assign(dims[i + 1], 0.0);
    layers.push_back(std::move(layer));
  }
  return Network(std::move(layers));
}

std::vector<std::size_t> Network::dims() const {
  std::vector<std::size_t> d{input_dim()};
  for (const auto& l : layers_) d.push_back(l.spec.out_dim);
  return d;
}

// --- losses -----------------------------------------------------------------

double CrossEntropyLoss::value(std::span<const double> logits) const {
  if (label_ >= logits.size()) throw InvalidInputError("cross-entropy label out of range");
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - m);
  return std::log(s) + m - logits[label_];
}

void CrossEntropyLoss::gradient(std::span<const double> logits, std::span<double> grad) const {
  if (label_ >= logits.size()) throw InvalidInputError("cross-entropy label out of range");
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    grad[j] = std::exp(logits[j] - m);
    s += grad[j];
  }
  for (std::size_t j = 0; j < logits.size(); ++j) grad[j] /= s;
  grad[label_] -= 1.0;
}

double LinearLogitLoss::value(std::span<const double> logits) const {
  if (weights_.size() != logits.size()) throw ShapeError("linear loss weight length");
  return std::inner_product(weights_.begin(), weights_.end(), logits.begin(), 0.0);
}

void LinearLogitLoss::gradient(std::span<const double> logits, std::span<double> grad) const {
  if (weights_.size() != logits.size()) throw ShapeError("linear loss weight length");
  std::copy(weights_.begin(), weights_.end(), grad.begin());
}

// --- inference --------------------------------------------------------------

ActivationTrace forward(const Network& net, const Tensor& x) {
  require_input(net, x);
  ActivationTrace trace;
  trace.per_layer.reserve(net.num_layers());
  const Tensor* in = &x;
  for (const auto& layer : net.layers()) {
    Tensor out({layer.spec.out_dim});
    VectorMap o(out.values().data(), static_cast<Eigen::Index>(out.size()));
    o.noalias() = weight_map(layer) * ConstVectorMap(in->values().data(),
                                                     static_cast<Eigen::Index>(in->size()));
    o += bias_map(layer);
    apply_activation(layer.spec.activation, out.values());
    trace.per_layer.push_back(std::move(out));
    in = &trace.per_layer.back();
  }
  return trace;
}

Tensor logits(const Network& net, const Tensor& x) {
  require_input(net, x);
  Eigen::VectorXd h = ConstVectorMap(x.values().data(), static_cast<Eigen::Index>(x.size()));
  for (const auto& layer : net.layers()) {
    Eigen::VectorXd next = weight_map(layer) * h + bias_map(layer);
    apply_activation(layer.spec.activation, {next.data(), static_cast<std::size_t>(next.size())});
    h = std::move(next);
  }
  return Tensor::vector(std::vector<double>(h.data(), h.data() + h.size()));
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw InvalidInputError("argmax of empty vector");
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::size_t predict(const Network& net, const Tensor& x) { return argmax(logits(net, x).values()); }

LossGradient loss_and_input_gradient(const Network& net, const Tensor& x, const LogitLoss& loss) {
  ActivationTrace trace = forward(net, x);
  LossGradient out;
  out.value = loss.value(trace.logits().values());

  Eigen::VectorXd g(static_cast<Eigen::Index>(net.num_classes()));
  loss.gradient(trace.logits().values(), {g.data(), static_cast<std::size_t>(g.size())});

  for (std::size_t i = net.num_layers(); i-- > 0;) {
    const auto& layer = net.layers()[i];
    if (layer.spec.activation == Activation::relu) {
      // post-activation > 0 exactly when pre-activation > 0
      const Tensor& post = trace.per_layer[i];
      for (Eigen::Index j = 0; j < g.size(); ++j) {
        if (!(post[static_cast<std::size_t>(j)] > 0.0)) g[j] = 0.0;
      }
    }
    g = weight_map(layer).transpose() * g;
  }
  out.logits = std::move(trace.per_layer.back());
  out.gradient = Tensor(x.shape(), std::vector<double>(g.data(), g.data() + g.size()));
  return out;
}

Tensor input_gradient(const Network& net, const Tensor& x, const LogitLoss& loss) {
  return loss_and_input_gradient(net, x, loss).gradient;
}

// --- training ---------------------------------------------------------------

Network train(Network net, const LabeledDataset& data, const TrainParams& hp) {
  if (data.empty()) throw InvalidInputError("training set is empty");
  if (hp.batch_size == 0) throw InvalidInputError("batch_size must be positive");
  const std::size_t classes = net.num_classes();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] >= classes) {
      throw InvalidInputError("label " + std::to_string(data.labels[i]) + " out of range");
    }
    require_input(net, data.samples[i]);
  }
  if (hp.epochs == 0) return net;

  std::vector<DenseLayer> layers = net.layers();
  const std::size_t n_layers = layers.size();
  const auto in_dim = static_cast<Eigen::Index>(net.input_dim());

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(hp.seed);

  std::vector<RowMatrix> acts(n_layers + 1);
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::size_t stop = std::min(order.size(), start + hp.batch_size);
      const auto rows = static_cast<Eigen::Index>(stop - start);

      RowMatrix& input = acts[0];
      input.resize(rows, in_dim);
      for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& s = data.samples[order[start + static_cast<std::size_t>(r)]];
        input.row(r) = ConstVectorMap(s.values().data(), in_dim).transpose();
      }
      for (std::size_t l = 0; l < n_layers; ++l) {
        const auto& layer = layers[l];
        acts[l + 1].noalias() = acts[l] * weight_map(layer).transpose();
        acts[l + 1].rowwise() += bias_map(layer).transpose();
        if (layer.spec.activation == Activation::relu) acts[l + 1] = acts[l + 1].cwiseMax(0.0);
      }

      // d(mean CE)/d logits = (softmax - onehot) / rows
      RowMatrix delta = acts[n_layers];
      for (Eigen::Index r = 0; r < rows; ++r) {
        const double m = delta.row(r).maxCoeff();
        delta.row(r) = (delta.row(r).array() - m).exp();
        delta.row(r) /= delta.row(r).sum();
        delta(r, static_cast<Eigen::Index>(data.labels[order[start + static_cast<std::size_t>(r)]])) -= 1.0;
      }
      delta /= static_cast<double>(rows);

      for (std::size_t l = n_layers; l-- > 0;) {
        auto& layer = layers[l];
        if (layer.spec.activation == Activation::relu) {
          delta = (acts[l + 1].array() > 0.0).select(delta, 0.0);
        }
        RowMatrix grad_w = delta.transpose() * acts[l];
        Eigen::VectorXd grad_b = delta.colwise().sum().transpose();
        if (l > 0) delta = delta * weight_map(layer);
        Eigen::Map<RowMatrix> w(layer.weights.data(), grad_w.rows(), grad_w.cols());
        Eigen::Map<Eigen::VectorXd> b(layer.bias.data(), grad_b.size());
        w -= hp.learning_rate * grad_w;
        b -= hp.learning_rate * grad_b;
      }
    }
  }
  return Network(std::move(layers));
}

double accuracy(const Network& net, const LabeledDataset& data) {
  if (data.empty()) throw InvalidInputError("accuracy of an empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (predict(net, data.samples[i]) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace lidadv
