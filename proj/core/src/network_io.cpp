#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "lidadv/error.hpp"
#include "lidadv/network.hpp"

namespace lidadv {

namespace {

constexpr std::array<char, 6> kMagic{'L', 'I', 'D', 'N', 'N', '1'};
constexpr std::uint32_t kMaxLayers = 1024;
constexpr std::uint32_t kMaxWidth = 1u << 20;

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void put_f64(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(b, 8);
}

void read_exact(std::istream& in, char* dst, std::size_t n) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw ParseError("weight file truncated");
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  read_exact(in, reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  read_exact(in, reinterpret_cast<char*>(b), 8);
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | b[i];
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_network(const Network& net, std::ostream& out) {
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, static_cast<std::uint32_t>(net.num_layers()));
  for (const auto& l : net.layers()) {
    put_u32(out, static_cast<std::uint32_t>(l.spec.in_dim));
    put_u32(out, static_cast<std::uint32_t>(l.spec.out_dim));
    put_u32(out, static_cast<std::uint32_t>(l.spec.activation));
  }
  for (const auto& l : net.layers()) {
    for (double w : l.weights) put_f64(out, w);
    for (double b : l.bias) put_f64(out, b);
  }
  if (!out) throw IoError("failed writing network weights");
}

void save_network(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  save_network(net, out);
}

Network load_network(std::istream& in) {
  std::array<char, 6> magic{};
  read_exact(in, magic.data(), magic.size());
  if (magic != kMagic) throw ParseError("not a LIDNN1 weight file");
  const std::uint32_t count = get_u32(in);
  if (count == 0 || count > kMaxLayers) throw ParseError("implausible layer count");

  std::vector<DenseLayer> layers(count);
  for (auto& l : layers) {
    const std::uint32_t in_dim = get_u32(in);
    const std::uint32_t out_dim = get_u32(in);
    const std::uint32_t act = get_u32(in);
    if (in_dim == 0 || out_dim == 0 || in_dim > kMaxWidth || out_dim > kMaxWidth) {
      throw ParseError("implausible layer width");
    }
    if (act > static_cast<std::uint32_t>(Activation::relu)) throw ParseError("unknown activation code");
    l.spec = {in_dim, out_dim, static_cast<Activation>(act)};
  }
  for (auto& l : layers) {
    l.weights.resize(l.spec.in_dim * l.spec.out_dim);
    for (double& w : l.weights) w = get_f64(in);
    l.bias.resize(l.spec.out_dim);
    for (double& b : l.bias) b = get_f64(in);
  }
  try {
    return Network(std::move(layers));
  } catch (const Error& e) {
    throw ParseError(std::string("invalid network in weight file: ") + e.what());
  }
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return load_network(in);
}

}  // namespace lidadv
