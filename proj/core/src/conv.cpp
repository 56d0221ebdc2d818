#include "lipcmp/conv.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

namespace lipcmp {

namespace {

void check_kernel_odd(const KernelTensor& w, const char* fn) {
  if (w.kh() % 2 == 0 || w.kw() % 2 == 0)
    throw ConfigError(std::string(fn) + ": even kernel sizes are not supported");
}

// FFTW planning is not thread-safe; plans are created once under a lock and
// then executed concurrently through the new-array interface.
class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(int h, int w, int sign) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto key = std::make_tuple(h, w, sign);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    // Out-of-place, matching how the plan is executed.
    auto* in = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * h * w));
    auto* out = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * h * w));
    fftw_plan plan = fftw_plan_dft_2d(h, w, in, out, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

double fft_macs(std::size_t n) {
  return n > 1 ? 5.0 * static_cast<double>(n) * std::log2(static_cast<double>(n)) : 0.0;
}

ComplexTensor4 transform(const ComplexTensor4& x, int sign) {
  const auto& s = x.shape();
  ComplexTensor4 out(s);
  const std::size_t h = s[2], w = s[3];
  if (h == 0 || w == 0) throw ShapeError("fft2: spatial extents must be >= 1");
  fftw_plan plan = plan_cache().get(static_cast<int>(h), static_cast<int>(w), sign);
  for (std::size_t a = 0; a < s[0]; ++a)
    for (std::size_t b = 0; b < s[1]; ++b) {
      auto* in = reinterpret_cast<fftw_complex*>(const_cast<Complex*>(x.plane(a, b)));
      auto* o = reinterpret_cast<fftw_complex*>(out.plane(a, b));
      fftw_execute_dft(plan, in, o);
    }
  count_macs(fft_macs(h * w) * static_cast<double>(s[0] * s[1]));
  return out;
}

}  // namespace

FeatureBatch conv2d(const FeatureBatch& x, const KernelTensor& w, PaddingMode padding) {
  check_kernel_odd(w, "conv2d");
  if (x.channels() != w.c_in())
    throw ShapeError("conv2d: input has " + std::to_string(x.channels()) + " channels, kernel expects " +
                     std::to_string(w.c_in()));
  const std::size_t b = x.batch(), ci = w.c_in(), co = w.c_out(), kh = w.kh(), kw = w.kw();
  const std::size_t h = x.height(), wd = x.width();
  const long ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
  FeatureBatch out(b, co, h, wd);
  if (h == 0 || wd == 0) return out;

  // Source index per (tap, output coordinate); -1 marks a zero-padded read.
  std::vector<long> row_src(kh * h), col_src(kw * wd);
  auto source = [padding](long pos, long extent) -> long {
    if (padding == PaddingMode::Circular) return ((pos % extent) + extent) % extent;
    return (pos < 0 || pos >= extent) ? -1 : pos;
  };
  for (std::size_t dy = 0; dy < kh; ++dy)
    for (std::size_t y = 0; y < h; ++y)
      row_src[dy * h + y] = source(static_cast<long>(y + dy) - ph, static_cast<long>(h));
  for (std::size_t dx = 0; dx < kw; ++dx)
    for (std::size_t xx = 0; xx < wd; ++xx)
      col_src[dx * wd + xx] = source(static_cast<long>(xx + dx) - pw, static_cast<long>(wd));

  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t o = 0; o < co; ++o) {
      double* dst = out.plane(n, o);
      for (std::size_t i = 0; i < ci; ++i) {
        const double* src = x.plane(n, i);
        for (std::size_t dy = 0; dy < kh; ++dy)
          for (std::size_t dx = 0; dx < kw; ++dx) {
            const double wv = w(o, i, dy, dx);
            if (wv == 0.0) continue;
            const long* cs = &col_src[dx * wd];
            for (std::size_t y = 0; y < h; ++y) {
              const long sy = row_src[dy * h + y];
              if (sy < 0) continue;
              const double* srow = src + sy * static_cast<long>(wd);
              double* drow = dst + y * wd;
              for (std::size_t xx = 0; xx < wd; ++xx)
                if (cs[xx] >= 0) drow[xx] += wv * srow[cs[xx]];
            }
          }
      }
    }
  count_macs(static_cast<double>(b * co * ci * kh * kw * h * wd));
  return out;
}

KernelTensor conv_transpose_kernel(const KernelTensor& w) {
  KernelTensor t(w.c_in(), w.c_out(), w.kh(), w.kw());
  for (std::size_t o = 0; o < w.c_out(); ++o)
    for (std::size_t i = 0; i < w.c_in(); ++i)
      for (std::size_t dy = 0; dy < w.kh(); ++dy)
        for (std::size_t dx = 0; dx < w.kw(); ++dx)
          t(i, o, w.kh() - 1 - dy, w.kw() - 1 - dx) = w(o, i, dy, dx);
  return t;
}

ComplexTensor4 fft2(const ComplexTensor4& x) { return transform(x, FFTW_FORWARD); }

ComplexTensor4 fft2(const FeatureBatch& x) {
  std::vector<Complex> v(x.values().begin(), x.values().end());
  return fft2(ComplexTensor4(x.shape(), std::move(v)));
}

ComplexTensor4 ifft2(const ComplexTensor4& x) {
  ComplexTensor4 out = transform(x, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(x.extent(2) * x.extent(3));
  for (auto& v : out.values()) v *= scale;
  return out;
}

FeatureBatch real_part(const ComplexTensor4& x) {
  FeatureBatch out(x.extent(0), x.extent(1), x.extent(2), x.extent(3));
  for (std::size_t i = 0; i < x.size(); ++i) out.values()[i] = x.values()[i].real();
  return out;
}

std::size_t conjugate_frequency(std::size_t index, std::size_t h, std::size_t w) {
  const std::size_t u = index / w, v = index % w;
  return ((h - u) % h) * w + (w - v) % w;
}

SpectralMatrices kernel_spectrum(const KernelTensor& w, std::size_t h, std::size_t width) {
  check_kernel_odd(w, "kernel_spectrum");
  const std::size_t co = w.c_out(), ci = w.c_in();
  const long ph = static_cast<long>(w.kh() / 2), pw = static_cast<long>(w.kw() / 2);
  const long hl = static_cast<long>(h), wl = static_cast<long>(width);
  ComplexTensor4 padded({co, ci, h, width});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t i = 0; i < ci; ++i)
      for (std::size_t dy = 0; dy < w.kh(); ++dy)
        for (std::size_t dx = 0; dx < w.kw(); ++dx) {
          const long u = (((ph - static_cast<long>(dy)) % hl) + hl) % hl;
          const long v = (((pw - static_cast<long>(dx)) % wl) + wl) % wl;
          padded(o, i, u, v) += w(o, i, dy, dx);
        }
  const ComplexTensor4 spec = fft2(padded);
  SpectralMatrices m;
  m.height = h;
  m.width = width;
  m.freq.reserve(h * width);
  for (std::size_t f = 0; f < h * width; ++f) {
    ComplexMatrix mat(co, ci);
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t i = 0; i < ci; ++i) mat(o, i) = spec.plane(o, i)[f];
    m.freq.push_back(std::move(mat));
  }
  return m;
}

SpectralMatrices adjoint(const SpectralMatrices& m) {
  SpectralMatrices out;
  out.height = m.height;
  out.width = m.width;
  out.freq.reserve(m.freq.size());
  for (const auto& f : m.freq) out.freq.push_back(adjoint(f));
  return out;
}

FeatureBatch apply_spectral(const SpectralMatrices& m, const FeatureBatch& x) {
  if (x.height() != m.height || x.width() != m.width)
    throw ShapeError("apply_spectral: spatial size differs from the materialized size");
  if (x.channels() != m.cols()) throw ShapeError("apply_spectral: channel mismatch");
  const std::size_t b = x.batch(), co = m.rows(), ci = m.cols(), nf = m.height * m.width;
  const ComplexTensor4 xf = fft2(x);
  ComplexTensor4 yf({b, co, m.height, m.width});
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t f = 0; f < nf; ++f) {
      const ComplexMatrix& a = m.freq[f];
      for (std::size_t o = 0; o < co; ++o) {
        Complex acc{};
        for (std::size_t i = 0; i < ci; ++i) acc += a(o, i) * xf.plane(n, i)[f];
        yf.plane(n, o)[f] = acc;
      }
    }
  count_macs(static_cast<double>(b * nf * co * ci));
  return real_part(ifft2(yf));
}

FeatureBatch fft_conv2d(const FeatureBatch& x, const KernelTensor& w) {
  return apply_spectral(kernel_spectrum(w, x.height(), x.width()), x);
}

}  // namespace lipcmp
