#include "locedit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace locedit {

std::string Shape::str() const {
  return "[" + std::to_string(channels) + "," + std::to_string(height) + "," + std::to_string(width) + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape) {
  if (shape.channels < 0 || shape.height < 0 || shape.width < 0) {
    throw ShapeError("negative tensor dimension " + shape.str());
  }
  data_.assign(shape.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape.numel()) {
    throw ShapeError("tensor data size " + std::to_string(data_.size()) + " does not match shape " + shape.str());
  }
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "tensor +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require_same_shape(*this, other, "tensor -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double scale) {
  for (double& v : data_) v *= scale;
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }
Tensor operator*(double s, Tensor a) { return a *= s; }

Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
  }
  if (b.channels() == 1 && b.height() == a.height() && b.width() == a.width()) {
    Tensor out(a.shape());
    const std::size_t plane = a.shape().plane();
    for (int c = 0; c < a.channels(); ++c) {
      for (std::size_t p = 0; p < plane; ++p) out[c * plane + p] = a[c * plane + p] * b[p];
    }
    return out;
  }
  throw ShapeError("hadamard: shapes " + a.shape().str() + " and " + b.shape().str() + " are incompatible");
}

Tensor axpby(double a, const Tensor& x, double b, const Tensor& y) {
  require_same_shape(x, y, "axpby");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * y[i];
  return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
}

}  // namespace locedit
