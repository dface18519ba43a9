#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "lidadv/dataset.hpp"
#include "lidadv/network.hpp"
#include "lidadv/rng.hpp"
#include "lidadv/tensor.hpp"

namespace lidadv::testing {

inline Tensor random_tensor(std::size_t n, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return Tensor::vector(std::move(v));
}

/// Random relu network with Gaussian weights and biases; widths drawn in [2, 6].
inline Network random_network(Rng& rng, std::size_t in_dim, std::size_t classes, std::size_t hidden_layers) {
  std::normal_distribution<double> g(0.0, 0.8);
  std::uniform_int_distribution<std::size_t> width(2, 6);
  std::vector<DenseLayer> layers;
  std::size_t prev = in_dim;
  for (std::size_t l = 0; l <= hidden_layers; ++l) {
    const bool last = l == hidden_layers;
    const std::size_t out = last ? classes : width(rng);
    DenseLayer layer{{prev, out, last ? Activation::identity : Activation::relu}, {}, {}};
    layer.weights.resize(out * prev);
    layer.bias.resize(out);
    for (auto& w : layer.weights) w = g(rng);
    for (auto& b : layer.bias) b = g(rng);
    layers.push_back(std::move(layer));
    prev = out;
  }
  return Network(std::move(layers));
}

/// A small blob problem and a classifier trained on it, shared by several
/// suites. Training takes well under a second.
struct BlobFixture {
  LabeledDataset train;
  LabeledDataset test;
  Network net;
};

inline BlobFixture make_blob_fixture(std::uint64_t seed = 7, std::size_t dim = 8, std::size_t classes = 3) {
  LabeledDataset all = synthetic_blobs(900, classes, dim, 0.05, seed);
  std::vector<std::size_t> tr(600);
  std::vector<std::size_t> te(300);
  for (std::size_t i = 0; i < 600; ++i) tr[i] = i;
  for (std::size_t i = 0; i < 300; ++i) te[i] = 600 + i;
  LabeledDataset train = all.subset(tr);
  LabeledDataset test = all.subset(te);
  test.split = Split::test;
  const std::vector<std::size_t> dims{dim, 32, 32, classes};
  Network net = lidadv::train(Network::initialized(dims, seed), train, TrainParams{0.1, 40, 32, seed});
  return {std::move(train), std::move(test), std::move(net)};
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("lidadv_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace lidadv::testing
