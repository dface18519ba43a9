#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lidadv {

/// Closed interval of valid pixel values.
struct Box {
  double lo = 0.0;
  double hi = 1.0;

  [[nodiscard]] bool contains(double v) const { return v >= lo && v <= hi; }
  [[nodiscard]] double clamp(double v) const { return v < lo ? lo : (v > hi ? hi : v); }
};

/// Dense row-major array of doubles with an explicit shape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  /// 1-D tensor holding `values`.
  static Tensor vector(std::vector<double> values);

  [[nodiscard]] const std::vector<std::size_t>& shape() const { return shape_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  [[nodiscard]] std::span<const double> values() const { return data_; }
  [[nodiscard]] std::span<double> values() { return data_; }
  [[nodiscard]] const std::vector<double>& storage() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  [[nodiscard]] bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  [[nodiscard]] bool all_finite() const;

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);

double l1_norm(std::span<const double> v);
double l2_norm(std::span<const double> v);
double squared_l2_norm(std::span<const double> v);
double l2_distance(std::span<const double> a, std::span<const double> b);

/// Throws ShapeError unless `a` and `b` have identical shapes.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace lidadv
