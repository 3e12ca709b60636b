#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "locedit/errors.hpp"

namespace locedit {

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(width);
  }
  std::size_t plane() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Dense [channels, height, width] tensor of doubles, channel-major.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(int channels, int height, int width, double fill = 0.0)
      : Tensor(Shape{channels, height, width}, fill) {}
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  int channels() const { return shape_.channels; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int c, int y, int x) { return data_[index(c, y, x)]; }
  double operator()(int c, int y, int x) const { return data_[index(c, y, x)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> channel(int c) { return std::span<double>(data_).subspan(c * shape_.plane(), shape_.plane()); }
  std::span<const double> channel(int c) const {
    return std::span<const double>(data_).subspan(c * shape_.plane(), shape_.plane());
  }

  bool all_finite() const;
  double sum() const;
  double mean() const { return data_.empty() ? 0.0 : sum() / static_cast<double>(data_.size()); }
  double max_abs() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double scale);

  bool operator==(const Tensor& other) const = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x;
  }

  Shape shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);
Tensor operator*(double s, Tensor a);

// Elementwise product; a single-channel `b` broadcasts over the channels of `a`.
Tensor hadamard(const Tensor& a, const Tensor& b);

// a*x + b*y elementwise.
Tensor axpby(double a, const Tensor& x, double b, const Tensor& y);

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

// Latents and images share the tensor representation; the names document intent.
using Latent = Tensor;
using Image = Tensor;

}  // namespace locedit
