#include "lidadv/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <string>

#include "lidadv/error.hpp"
#include "lidadv/network.hpp"
#include "lidadv/rng.hpp"

namespace lidadv {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;
constexpr std::uint32_t kF64MatrixMagic = 0x00000E02;

/// Whole-file read through zlib, which passes plain files through unchanged.
std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes;
  unsigned char buf[1 << 16];
  int got = 0;
  while ((got = gzread(f, buf, sizeof buf)) > 0) bytes.insert(bytes.end(), buf, buf + got);
  const bool failed = got < 0;
  gzclose(f);
  if (failed) throw ParseError("corrupt compressed stream in " + path.string());
  return bytes;
}

class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& bytes, std::string name)
      : bytes_(bytes), name_(std::move(name)) {}

  std::uint32_t u32_be() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_++];
    return v;
  }

  std::uint64_t u64_be() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | bytes_[pos_++];
    return v;
  }

  const unsigned char* take(std::size_t n) {
    need(n);
    const unsigned char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ParseError(name_ + ": file truncated");
  }

  const std::vector<unsigned char>& bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

void put_u32_be(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>((v >> 16) & 0xff),
                     static_cast<char>((v >> 8) & 0xff), static_cast<char>(v & 0xff)};
  out.write(b, 4);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

void LabeledDataset::validate() const {
  if (samples.size() != labels.size()) throw InvalidInputError("samples/labels length mismatch");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (labels[i] >= num_classes) throw InvalidInputError("label out of range at " + std::to_string(i));
    for (double v : samples[i].values()) {
      if (!(v >= 0.0 && v <= 1.0)) throw InvalidInputError("sample value outside [0,1]");
    }
  }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.num_classes = num_classes;
  out.split = split;
  out.samples.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    out.samples.push_back(samples.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path, Split split) {
  const auto image_bytes = slurp(images_path);
  const auto label_bytes = slurp(labels_path);

  ByteReader images(image_bytes, images_path.string());
  if (images.u32_be() != kImagesMagic) throw ParseError(images_path.string() + ": bad IDX image magic");
  const std::uint32_t count = images.u32_be();
  const std::uint32_t rows = images.u32_be();
  const std::uint32_t cols = images.u32_be();

  ByteReader labels(label_bytes, labels_path.string());
  if (labels.u32_be() != kLabelsMagic) throw ParseError(labels_path.string() + ": bad IDX label magic");
  if (labels.u32_be() != count) throw ParseError("image and label files disagree on sample count");

  const std::size_t dim = static_cast<std::size_t>(rows) * cols;
  if (dim == 0) throw ParseError(images_path.string() + ": zero-sized images");
  const unsigned char* pixels = images.take(static_cast<std::size_t>(count) * dim);
  const unsigned char* label_data = labels.take(count);

  LabeledDataset data;
  data.split = split;
  data.samples.reserve(count);
  data.labels.reserve(count);
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> v(dim);
    for (std::size_t j = 0; j < dim; ++j) v[j] = pixels[i * dim + j] / 255.0;
    data.samples.push_back(Tensor::vector(std::move(v)));
    data.labels.push_back(label_data[i]);
    max_label = std::max<std::size_t>(max_label, label_data[i]);
  }
  data.num_classes = count == 0 ? 0 : max_label + 1;
  return data;
}

std::uint8_t to_byte(double v) {
  const double scaled = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(scaled);
}

void write_idx(const LabeledDataset& data, std::size_t rows, std::size_t cols,
               const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
  if (data.samples.size() != data.labels.size()) throw InvalidInputError("samples/labels length mismatch");
  auto img = open_out(images_path);
  put_u32_be(img, kImagesMagic);
  put_u32_be(img, static_cast<std::uint32_t>(data.size()));
  put_u32_be(img, static_cast<std::uint32_t>(rows));
  put_u32_be(img, static_cast<std::uint32_t>(cols));
  for (const auto& s : data.samples) {
    if (s.size() != rows * cols) throw ShapeError("write_idx: sample size != rows*cols");
    for (double v : s.values()) img.put(static_cast<char>(to_byte(v)));
  }
  auto lab = open_out(labels_path);
  put_u32_be(lab, kLabelsMagic);
  put_u32_be(lab, static_cast<std::uint32_t>(data.size()));
  for (std::size_t l : data.labels) {
    if (l > 255) throw InvalidInputError("IDX labels must fit in a byte");
    lab.put(static_cast<char>(l));
  }
  if (!img || !lab) throw IoError("failed writing IDX files");
}

void write_idx_f64(const std::vector<Tensor>& rows, const std::filesystem::path& path) {
  const std::size_t dim = rows.empty() ? 0 : rows.front().size();
  auto out = open_out(path);
  put_u32_be(out, kF64MatrixMagic);
  put_u32_be(out, static_cast<std::uint32_t>(rows.size()));
  put_u32_be(out, static_cast<std::uint32_t>(dim));
  for (const auto& r : rows) {
    if (r.size() != dim) throw ShapeError("write_idx_f64: ragged rows");
    for (double v : r.values()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      put_u32_be(out, static_cast<std::uint32_t>(bits >> 32));
      put_u32_be(out, static_cast<std::uint32_t>(bits & 0xffffffffu));
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<Tensor> read_idx_f64(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  ByteReader in(bytes, path.string());
  if (in.u32_be() != kF64MatrixMagic) throw ParseError(path.string() + ": bad IDX float64 magic");
  const std::uint32_t count = in.u32_be();
  const std::uint32_t dim = in.u32_be();
  std::vector<Tensor> rows;
  rows.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::vector<double> v(dim);
    for (double& x : v) x = std::bit_cast<double>(in.u64_be());
    rows.push_back(Tensor::vector(std::move(v)));
  }
  return rows;
}

std::vector<Tensor> blob_centers(std::size_t num_classes, std::size_t dim, std::uint64_t seed) {
  if (num_classes == 0 || dim == 0) throw InvalidInputError("blob_centers: empty configuration");
  Rng rng(derive_seed(seed, "blob-centers"));
  std::uniform_real_distribution<double> coord(0.15, 0.85);
  // Rejection keeps centers apart; the bound shrinks if it cannot be met.
  double min_gap = 0.7 / std::pow(static_cast<double>(num_classes), 1.0 / static_cast<double>(dim));
  std::vector<Tensor> centers;
  std::size_t attempts = 0;
  while (centers.size() < num_classes) {
    std::vector<double> c(dim);
    for (double& v : c) v = coord(rng);
    Tensor candidate = Tensor::vector(std::move(c));
    const bool far = std::all_of(centers.begin(), centers.end(), [&](const Tensor& o) {
      return l2_distance(o.values(), candidate.values()) >= min_gap;
    });
    if (far) centers.push_back(std::move(candidate));
    if (++attempts % 1000 == 0) min_gap *= 0.9;
  }
  return centers;
}

LabeledDataset synthetic_blobs(std::size_t n, std::size_t num_classes, std::size_t dim,
                               double spread, std::uint64_t seed) {
  if (n < num_classes) throw InvalidInputError("synthetic_blobs needs n >= num_classes");
  const auto centers = blob_centers(num_classes, dim, seed);
  Rng rng(derive_seed(seed, "blob-samples"));
  std::normal_distribution<double> noise(0.0, 1.0);
  LabeledDataset data;
  data.num_classes = num_classes;
  data.split = Split::train;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % num_classes;
    std::vector<double> v(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      v[j] = std::clamp(centers[label][j] + spread * noise(rng), 0.0, 1.0);
    }
    data.samples.push_back(Tensor::vector(std::move(v)));
    data.labels.push_back(label);
  }
  return data;
}

std::vector<AttackTarget> select_attack_targets(std::span<const Network* const> nets,
                                                const LabeledDataset& data, std::size_t n,
                                                std::uint64_t seed) {
  std::vector<std::size_t> correct;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool ok = std::all_of(nets.begin(), nets.end(), [&](const Network* net) {
      return predict(*net, data.samples[i]) == data.labels[i];
    });
    if (ok) correct.push_back(i);
  }
  if (correct.size() < n) {
    throw InvalidInputError("only " + std::to_string(correct.size()) +
                            " correctly classified samples, " + std::to_string(n) + " requested");
  }
  Rng rng(seed);
  // partial Fisher-Yates: first n slots are a uniform sample without replacement
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, correct.size() - 1);
    std::swap(correct[i], correct[pick(rng)]);
  }
  std::vector<AttackTarget> targets;
  targets.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t id = correct[i];
    targets.push_back({id, data.samples[id], data.labels[id]});
  }
  return targets;
}

std::vector<AttackTarget> select_attack_targets(const Network& net, const LabeledDataset& data,
                                                std::size_t n, std::uint64_t seed) {
  const Network* nets[] = {&net};
  return select_attack_targets(std::span<const Network* const>(nets), data, n, seed);
}

void dump_image(const Tensor& x, std::size_t width, std::size_t height, std::ostream& out) {
  if (width * height != x.size()) throw ShapeError("dump_image: width*height != tensor size");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  for (double v : x.values()) out.put(static_cast<char>(to_byte(v)));
  if (!out) throw IoError("failed writing PGM image");
}

void dump_image(const Tensor& x, std::size_t width, std::size_t height,
                const std::filesystem::path& path) {
  if (width * height != x.size()) throw ShapeError("dump_image: width*height != tensor size");
  auto out = open_out(path);
  dump_image(x, width, height, out);
}

}  // namespace lidadv
