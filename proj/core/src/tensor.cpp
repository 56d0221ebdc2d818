#include <algorithm>
#include <cctype>

#include "lipcmp/tensor.hpp"

namespace lipcmp {

std::string to_string(PaddingMode mode) { return mode == PaddingMode::Circular ? "circular" : "zero"; }

PaddingMode parse_padding(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "circular") return PaddingMode::Circular;
  if (s == "zero" || s == "zeros") return PaddingMode::Zero;
  throw ConfigError("unknown padding mode '" + name + "'");
}

FeatureBatch::FeatureBatch(Shape shape, std::vector<double> values)
    : BasicTensor4<double>(shape, std::move(values)) {
  if (!all_finite()) throw NumericError("feature batch: non-finite value");
}

KernelTensor::KernelTensor(Shape shape, std::vector<double> values)
    : BasicTensor4<double>(shape, std::move(values)) {
  if (!all_finite()) throw NumericError("kernel: non-finite value");
}

FeatureBatch pixel_unshuffle(const FeatureBatch& x) {
  if (x.height() % 2 != 0 || x.width() % 2 != 0)
    throw ShapeError("pixel_unshuffle: spatial extents must be even");
  const std::size_t h = x.height() / 2, w = x.width() / 2;
  FeatureBatch out(x.batch(), 4 * x.channels(), h, w);
  for (std::size_t n = 0; n < x.batch(); ++n)
    for (std::size_t c = 0; c < x.channels(); ++c)
      for (std::size_t dy = 0; dy < 2; ++dy)
        for (std::size_t dx = 0; dx < 2; ++dx)
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx)
              out(n, 4 * c + 2 * dy + dx, y, xx) = x(n, c, 2 * y + dy, 2 * xx + dx);
  return out;
}

FeatureBatch pixel_shuffle(const FeatureBatch& x) {
  if (x.channels() % 4 != 0) throw ShapeError("pixel_shuffle: channel count must be a multiple of 4");
  const std::size_t c = x.channels() / 4;
  FeatureBatch out(x.batch(), c, 2 * x.height(), 2 * x.width());
  for (std::size_t n = 0; n < x.batch(); ++n)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t dy = 0; dy < 2; ++dy)
        for (std::size_t dx = 0; dx < 2; ++dx)
          for (std::size_t y = 0; y < x.height(); ++y)
            for (std::size_t xx = 0; xx < x.width(); ++xx)
              out(n, ch, 2 * y + dy, 2 * xx + dx) = x(n, 4 * ch + 2 * dy + dx, y, xx);
  return out;
}

FeatureBatch zero_channel_pad(const FeatureBatch& x, std::size_t channels) {
  if (channels < x.channels()) throw ShapeError("zero_channel_pad: target has fewer channels than input");
  FeatureBatch out(x.batch(), channels, x.height(), x.width());
  const std::size_t plane = x.height() * x.width();
  for (std::size_t n = 0; n < x.batch(); ++n)
    std::copy_n(x.plane(n, 0), x.channels() * plane, out.plane(n, 0));
  return out;
}

FeatureBatch first_channels(const FeatureBatch& x, std::size_t channels) {
  if (channels > x.channels()) throw ShapeError("first_channels: more channels requested than present");
  FeatureBatch out(x.batch(), channels, x.height(), x.width());
  const std::size_t plane = x.height() * x.width();
  for (std::size_t n = 0; n < x.batch(); ++n)
    std::copy_n(x.plane(n, 0), channels * plane, out.plane(n, 0));
  return out;
}

double squared_norm(const FeatureBatch& x) {
  double s = 0.0;
  for (double v : x.values()) s += v * v;
  return s;
}

}  // namespace lipcmp
