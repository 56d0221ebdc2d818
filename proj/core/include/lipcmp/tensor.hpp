#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "lipcmp/counter.hpp"
#include "lipcmp/errors.hpp"

namespace lipcmp {

using Complex = std::complex<double>;

enum class PaddingMode { Circular, Zero };

std::string to_string(PaddingMode mode);
PaddingMode parse_padding(const std::string& name);

namespace detail {
template <class T>
constexpr std::size_t scalars_per_value() {
  return std::is_same_v<T, Complex> ? 2 : 1;
}
}  // namespace detail

// Dense row-major 4-axis array.
template <class T>
class BasicTensor4 {
 public:
  using Shape = std::array<std::size_t, 4>;

  BasicTensor4() = default;

  explicit BasicTensor4(Shape shape, T fill = T{})
      : shape_(shape),
        data_(shape[0] * shape[1] * shape[2] * shape[3], fill),
        ticket_(data_.size() * detail::scalars_per_value<T>()) {}

  BasicTensor4(Shape shape, std::vector<T> values)
      : shape_(shape), data_(std::move(values)) {
    if (data_.size() != shape[0] * shape[1] * shape[2] * shape[3])
      throw ShapeError("tensor: value count does not match shape");
    ticket_ = LiveTicket(data_.size() * detail::scalars_per_value<T>());
  }

  const Shape& shape() const { return shape_; }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
    return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }
  const T& operator()(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
    return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  // Pointer to the contiguous (axis2, axis3) plane at (a, b).
  T* plane(std::size_t a, std::size_t b) { return data_.data() + (a * shape_[1] + b) * shape_[2] * shape_[3]; }
  const T* plane(std::size_t a, std::size_t b) const {
    return data_.data() + (a * shape_[1] + b) * shape_[2] * shape_[3];
  }

  bool all_finite() const {
    for (const auto& v : data_)
      if (!std::isfinite(std::abs(v))) return false;
    return true;
  }

 protected:
  Shape shape_{0, 0, 0, 0};
  std::vector<T> data_;
  LiveTicket ticket_;
};

using ComplexTensor4 = BasicTensor4<Complex>;

// Activations: (batch, channels, height, width).
class FeatureBatch : public BasicTensor4<double> {
 public:
  FeatureBatch() = default;
  FeatureBatch(std::size_t b, std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : BasicTensor4<double>(Shape{b, c, h, w}, fill) {}
  FeatureBatch(Shape shape, std::vector<double> values);

  std::size_t batch() const { return shape_[0]; }
  std::size_t channels() const { return shape_[1]; }
  std::size_t height() const { return shape_[2]; }
  std::size_t width() const { return shape_[3]; }
  // Scalars per sample.
  std::size_t sample_size() const { return shape_[1] * shape_[2] * shape_[3]; }
};

// Convolution kernel: (c_out, c_in, kh, kw).
class KernelTensor : public BasicTensor4<double> {
 public:
  KernelTensor() = default;
  KernelTensor(std::size_t c_out, std::size_t c_in, std::size_t kh, std::size_t kw)
      : BasicTensor4<double>(Shape{c_out, c_in, kh, kw}, 0.0) {}
  KernelTensor(Shape shape, std::vector<double> values);

  std::size_t c_out() const { return shape_[0]; }
  std::size_t c_in() const { return shape_[1]; }
  std::size_t kh() const { return shape_[2]; }
  std::size_t kw() const { return shape_[3]; }
};

// Shape helpers used by the architecture layers.

// (b,c,s,s) -> (b,4c,s/2,s/2); output channel = 4*c + 2*dy + dx.
FeatureBatch pixel_unshuffle(const FeatureBatch& x);
FeatureBatch pixel_shuffle(const FeatureBatch& x);
FeatureBatch zero_channel_pad(const FeatureBatch& x, std::size_t channels);
FeatureBatch first_channels(const FeatureBatch& x, std::size_t channels);

double squared_norm(const FeatureBatch& x);

}  // namespace lipcmp
