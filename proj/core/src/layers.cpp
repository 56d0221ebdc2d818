#include "lipcmp/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lipcmp/random.hpp"

namespace lipcmp {

namespace {

void add_channel_bias(FeatureBatch& y, const std::vector<double>& bias) {
  const std::size_t plane = y.height() * y.width();
  for (std::size_t n = 0; n < y.batch(); ++n)
    for (std::size_t c = 0; c < y.channels(); ++c) {
      double* p = y.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) p[i] += bias[c];
    }
}

void scale_channels(FeatureBatch& y, const std::vector<double>& s) {
  const std::size_t plane = y.height() * y.width();
  for (std::size_t n = 0; n < y.batch(); ++n)
    for (std::size_t c = 0; c < y.channels(); ++c) {
      double* p = y.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) p[i] *= s[c];
    }
}

// Multiplies every sample of v by the single-sample mask.
void apply_mask(FeatureBatch& v, const std::vector<double>& mask) {
  const std::size_t m = mask.size();
  for (std::size_t n = 0; n < v.batch(); ++n) {
    double* p = v.data() + n * m;
    for (std::size_t i = 0; i < m; ++i) p[i] *= mask[i];
  }
}

FeatureBatch relu(FeatureBatch x) {
  for (auto& v : x.values()) v = std::max(v, 0.0);
  return x;
}

void axpy(FeatureBatch& y, double a, const FeatureBatch& x) {
  for (std::size_t i = 0; i < y.size(); ++i) y.values()[i] += a * x.values()[i];
}

double min_abs(const FeatureBatch& x) {
  double m = std::numeric_limits<double>::infinity();
  for (double v : x.values()) m = std::min(m, std::abs(v));
  return m;
}

ComplexMatrix conjugate(ComplexMatrix m) {
  for (auto& v : m.values()) v = std::conj(v);
  return m;
}

// Fills every frequency from its own or its conjugate partner's matrix.
template <class F>
std::vector<ComplexMatrix> per_unique_frequency(std::size_t h, std::size_t w, F&& compute) {
  const std::size_t nf = h * w;
  std::vector<ComplexMatrix> out(nf);
  std::vector<bool> done(nf, false);
  for (std::size_t f = 0; f < nf; ++f) {
    if (done[f]) continue;
    out[f] = compute(f);
    done[f] = true;
    const std::size_t g = conjugate_frequency(f, h, w);
    if (!done[g]) {
      out[g] = conjugate(out[f]);
      done[g] = true;
    }
  }
  return out;
}

std::vector<double> spectral_values(const SpectralMatrices& m) {
  std::vector<double> v;
  for (const auto& f : m.freq)
    for (const auto& z : f.values()) {
      v.push_back(z.real());
      v.push_back(z.imag());
    }
  return v;
}

FeatureBatch as_batch(const std::vector<double>& v, Shape3 s) {
  return FeatureBatch({1, s.channels, s.height, s.width}, v);
}

class ConvLayer final : public Layer {
 public:
  ConvLayer(LayerSpec spec, Shape3 in, KernelTensor kernel, std::vector<double> bias)
      : Layer(spec, in, {kernel.c_out(), in.height, in.width}),
        kernel_(std::move(kernel)),
        kernel_t_(conv_transpose_kernel(kernel_)),
        bias_(std::move(bias)) {}

  FeatureBatch forward(const FeatureBatch& x) const override {
    check_input(x);
    FeatureBatch y = conv2d(x, kernel_, spec_.padding);
    add_channel_bias(y, bias_);
    check_output(y, "conv");
    return y;
  }
  FeatureBatch jvp(const FeatureBatch&, const FeatureBatch& v) const override {
    return conv2d(v, kernel_, spec_.padding);
  }
  FeatureBatch vjp(const FeatureBatch&, const FeatureBatch& u) const override {
    return conv2d(u, kernel_t_, spec_.padding);
  }
  bool is_linear() const override { return true; }
  std::vector<double> cached_weights() const override { return kernel_.values(); }

  const KernelTensor& kernel() const { return kernel_; }

 private:
  KernelTensor kernel_;
  KernelTensor kernel_t_;
  std::vector<double> bias_;
};

class SpectralLayer final : public Layer {
 public:
  SpectralLayer(LayerSpec spec, Shape3 in, SpectralMatrices q, std::vector<double> bias)
      : Layer(spec, in, {q.rows(), in.height, in.width}), q_(std::move(q)), qh_(adjoint(q_)), bias_(std::move(bias)) {}

  FeatureBatch forward(const FeatureBatch& x) const override {
    check_input(x);
    FeatureBatch y = apply_spectral(q_, x);
    add_channel_bias(y, bias_);
    check_output(y, "frequency-domain product");
    return y;
  }
  FeatureBatch jvp(const FeatureBatch&, const FeatureBatch& v) const override { return apply_spectral(q_, v); }
  FeatureBatch vjp(const FeatureBatch&, const FeatureBatch& u) const override { return apply_spectral(qh_, u); }
  bool is_linear() const override { return true; }
  std::vector<double> cached_weights() const override { return spectral_values(q_); }

 private:
  SpectralMatrices q_;
  SpectralMatrices qh_;
  std::vector<double> bias_;
};

class SocLayer final : public Layer {
 public:
  SocLayer(LayerSpec spec, Shape3 in, KernelTensor skew, std::size_t terms, std::vector<double> bias)
      : Layer(spec, in, in),
        l_(std::move(skew)),
        lt_(conv_transpose_kernel(l_)),
        terms_(terms),
        bias_(std::move(bias)) {}

  FeatureBatch forward(const FeatureBatch& x) const override {
    check_input(x);
    FeatureBatch y = series(x, l_);
    add_channel_bias(y, bias_);
    check_output(y, "exponential series");
    return y;
  }
  FeatureBatch jvp(const FeatureBatch&, const FeatureBatch& v) const override { return series(v, l_); }
  FeatureBatch vjp(const FeatureBatch&, const FeatureBatch& u) const override { return series(u, lt_); }
  bool is_linear() const override { return true; }
  std::vector<double> cached_weights() const override { return l_.values(); }

 private:
  FeatureBatch series(const FeatureBatch& x, const KernelTensor& k) const {
    FeatureBatch sum = x;
    FeatureBatch term = x;
    for (std::size_t j = 1; j <= terms_; ++j) {
      term = conv2d(term, k, PaddingMode::Circular);
      for (auto& v : term.values()) v /= static_cast<double>(j);
      axpy(sum, 1.0, term);
    }
    return sum;
  }

  KernelTensor l_;
  KernelTensor lt_;
  std::size_t terms_;
  std::vector<double> bias_;
};

// x - (2/sigma^2) W^T relu(W x + b)
class CplLayer final : public Layer {
 public:
  CplLayer(LayerSpec spec, Shape3 in, KernelTensor w, PowerState state, std::vector<double> bias)
      : Layer(spec, in, in),
        w_(std::move(w)),
        wt_(conv_transpose_kernel(w_)),
        state_(std::move(state)),
        coeff_(state_.sigma_estimate > 0 ? 2.0 / (state_.sigma_estimate * state_.sigma_estimate) : 0.0),
        bias_(std::move(bias)) {}

  FeatureBatch forward(const FeatureBatch& x) const override {
    check_input(x);
    FeatureBatch h = relu(pre(x));
    check_output(h, "activation");
    FeatureBatch y = x;
    axpy(y, -coeff_, conv2d(h, wt_, spec_.padding));
    check_output(y, "residual update");
    return y;
  }
  FeatureBatch jvp(const FeatureBatch& at, const FeatureBatch& v) const override {
    FeatureBatch g = conv2d(v, w_, spec_.padding);
    apply_mask(g, mask(at));
    FeatureBatch y = v;
    axpy(y, -coeff_, conv2d(g, wt_, spec_.padding));
    return y;
  }
  FeatureBatch vjp(const FeatureBatch& at, const FeatureBatch& u) const override { return jvp(at, u); }
  bool is_linear() const override { return false; }
  double kink_distance(const FeatureBatch& at) const override { return min_abs(pre(at)); }

  // Jacobian eigenvalues lie in [1 - coeff * sigma^2, 1].
  BoundResult lipschitz_bound(std::size_t iterations, std::uint64_t seed) const override {
    const PowerState st = power_method_conv(w_, {in_.channels, in_.height, in_.width}, spec_.padding,
                                            PowerState::seeded(seed), iterations);
    const double s = st.sigma_estimate;
    return {std::max(1.0, coeff_ * s * s - 1.0), BoundMethod::PowerMethod, iterations};
  }
  std::vector<double> cached_weights() const override {
    std::vector<double> v = w_.values();
    v.push_back(coeff_);
    return v;
  }

  const PowerState& state() const { return state_; }

 private:
  FeatureBatch pre(const FeatureBatch& x) const {
    FeatureBatch p = conv2d(x, w_, spec_.padding);
    add_channel_bias(p, bias_);
    return p;
  }
  std::vector<double> mask(const FeatureBatch& at) const {
    const FeatureBatch p = pre(at);
    std::vector<double> m(p.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = p.values()[i] > 0.0 ? 1.0 : 0.0;
    return m;
  }

  KernelTensor w_;
  KernelTensor wt_;
  PowerState state_;
  double coeff_;
  std::vector<double> bias_;
};

// x - 2 W S relu(W^T x + b), S = Q^-2 D^2 per hidden channel.
class SllLayer final : public Layer {
 public:
  SllLayer(LayerSpec spec, Shape3 in, KernelTensor w, std::vector<double> s, std::vector<double> bias)
      : Layer(spec, in, in),
        w_(std::move(w)),
        wt_(conv_transpose_kernel(w_)),
        s_(std::move(s)),
        bias_(std::move(bias)) {}

  FeatureBatch forward(const FeatureBatch& x) const override {
    check_input(x);
    FeatureBatch h = relu(pre(x));
    scale_channels(h, s_);
    check_output(h, "activation");
    FeatureBatch y = x;
    axpy(y, -2.0, conv2d(h, wt_, spec_.padding));
    check_output(y, "residual update");
    return y;
  }
  FeatureBatch jvp(const FeatureBatch& at, const FeatureBatch& v) const override {
    FeatureBatch g = conv2d(v, w_, spec_.padding);
    apply_mask(g, mask(at));
    scale_channels(g, s_);
    FeatureBatch y = v;
    axpy(y, -2.0, conv2d(g, wt_, spec_.padding));
    return y;
  }
  FeatureBatch vjp(const FeatureBatch& at, const FeatureBatch& u) const override { return jvp(at, u); }
  bool is_linear() const override { return false; }
  double kink_distance(const FeatureBatch& at) const override { return min_abs(pre(at)); }

  BoundResult lipschitz_bound(std::size_t iterations, std::uint64_t seed) const override {
    KernelTensor pd = wt_;
    for (std::size_t o = 0; o < pd.c_out(); ++o)
      for (std::size_t j = 0; j < pd.c_in(); ++j)
        for (std::size_t a = 0; a < pd.kh(); ++a)
          for (std::size_t b = 0; b < pd.kw(); ++b) pd(o, j, a, b) *= std::sqrt(s_[j]);
    const PowerState st = power_method_conv(pd, {pd.c_in(), in_.height, in_.width}, spec_.padding,
                                            PowerState::seeded(seed), iterations);
    const double r = st.sigma_estimate;
    return {std::max(1.0, 2.0 * r * r - 1.0), BoundMethod::PowerMethod, iterations};
  }
  std::vector<double> cached_weights() const override {
    std::vector<double> v = w_.values();
    v.insert(v.end(), s_.begin(), s_.end());
    return v;
  }

 private:
  FeatureBatch pre(const FeatureBatch& x) const {
    FeatureBatch p = conv2d(x, w_, spec_.padding);
    add_channel_bias(p, bias_);
    return p;
  }
  std::vector<double> mask(const FeatureBatch& at) const {
    const FeatureBatch p = pre(at);
    std::vector<double> m(p.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = p.values()[i] > 0.0 ? 1.0 : 0.0;
    return m;
  }

  KernelTensor w_;
  KernelTensor wt_;
  std::vector<double> s_;
  std::vector<double> bias_;
};

// sqrt(2) A^T Psi relu(sqrt(2) Psi^{-1} B x + b) with [A B] having orthonormal
// rows per frequency.
class SandwichLayer final : public Layer {
 public:
  SandwichLayer(LayerSpec spec, Shape3 in, SpectralMatrices a, SpectralMatrices b, std::vector<double> psi,
                std::vector<double> bias)
      : Layer(spec, in, {a.cols(), in.height, in.width}),
        a_(std::move(a)),
        at_(adjoint(a_)),
        b_(std::move(b)),
        bh_(adjoint(b_)),
        psi_(std::move(psi)),
        bias_(std::move(bias)) {}

  FeatureBatch forward(const FeatureBatch& x) const override {
    check_input(x);
    FeatureBatch h = relu(pre(x));
    std::vector<double> up(psi_.size());
    for (std::size_t i = 0; i < up.size(); ++i) up[i] = std::sqrt(2.0) * psi_[i];
    scale_channels(h, up);
    check_output(h, "activation");
    FeatureBatch y = apply_spectral(at_, h);
    check_output(y, "output product");
    return y;
  }
  FeatureBatch jvp(const FeatureBatch& at, const FeatureBatch& v) const override {
    FeatureBatch g = apply_spectral(b_, v);
    apply_mask(g, mask(at));
    return apply_spectral(at_, g);
  }
  FeatureBatch vjp(const FeatureBatch& at, const FeatureBatch& u) const override {
    FeatureBatch g = apply_spectral(a_, u);
    apply_mask(g, mask(at));
    return apply_spectral(bh_, g);
  }
  bool is_linear() const override { return false; }
  double kink_distance(const FeatureBatch& at) const override { return min_abs(pre(at)); }

  // |J| <= |[A B]|^2 for any activation pattern.
  BoundResult lipschitz_bound(std::size_t iterations, std::uint64_t seed) const override {
    const Shape3 ys = out_, xs = in_;
    const Shape3 hs{a_.rows(), in_.height, in_.width};
    LinearOperator op;
    op.in_dim = ys.size() + xs.size();
    op.out_dim = hs.size();
    op.apply = [this, ys, xs](const std::vector<double>& v) {
      std::vector<double> y(v.begin(), v.begin() + static_cast<long>(ys.size()));
      std::vector<double> x(v.begin() + static_cast<long>(ys.size()), v.end());
      FeatureBatch r = apply_spectral(a_, as_batch(y, ys));
      axpy(r, 1.0, apply_spectral(b_, as_batch(x, xs)));
      return r.values();
    };
    op.apply_transpose = [this, hs](const std::vector<double>& h) {
      const FeatureBatch hb = as_batch(h, hs);
      std::vector<double> out = apply_spectral(at_, hb).values();
      const std::vector<double> xb = apply_spectral(bh_, hb).values();
      out.insert(out.end(), xb.begin(), xb.end());
      return out;
    };
    const PowerState st = power_method(op, PowerState::seeded(seed), iterations);
    const double r = st.sigma_estimate;
    return {r * r, BoundMethod::PowerMethod, iterations};
  }
  std::vector<double> cached_weights() const override {
    std::vector<double> v = spectral_values(a_);
    const std::vector<double> w = spectral_values(b_);
    v.insert(v.end(), w.begin(), w.end());
    v.insert(v.end(), psi_.begin(), psi_.end());
    return v;
  }

  MaterializedLayer folded() const {
    for (double p : psi_)
      if (!(p > 0.0)) throw PreconditionError("sandwich_fold: Psi must be positive");
    std::vector<double> b(bias_.size());
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = psi_[i] * bias_[i];
    return std::make_shared<SandwichLayer>(spec_, in_, a_, b_, std::vector<double>(psi_.size(), 1.0), std::move(b));
  }

 private:
  FeatureBatch pre(const FeatureBatch& x) const {
    FeatureBatch p = apply_spectral(b_, x);
    std::vector<double> down(psi_.size());
    for (std::size_t i = 0; i < down.size(); ++i) down[i] = std::sqrt(2.0) / psi_[i];
    scale_channels(p, down);
    add_channel_bias(p, bias_);
    return p;
  }
  std::vector<double> mask(const FeatureBatch& at) const {
    const FeatureBatch p = pre(at);
    std::vector<double> m(p.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = p.values()[i] > 0.0 ? 2.0 : 0.0;
    return m;
  }

  SpectralMatrices a_;   // hidden x c_out per frequency
  SpectralMatrices at_;  // c_out x hidden
  SpectralMatrices b_;   // hidden x c_in
  SpectralMatrices bh_;  // c_in x hidden
  std::vector<double> psi_;
  std::vector<double> bias_;
};

class MaxMinLayer final : public Layer {
 public:
  MaxMinLayer(LayerSpec spec, Shape3 in) : Layer(spec, in, in) {}

  FeatureBatch forward(const FeatureBatch& x) const override {
    check_input(x);
    FeatureBatch y = x;
    const std::size_t plane = x.height() * x.width();
    for (std::size_t n = 0; n < x.batch(); ++n)
      for (std::size_t c = 0; c + 1 < x.channels(); c += 2) {
        double* a = y.plane(n, c);
        double* b = y.plane(n, c + 1);
        for (std::size_t i = 0; i < plane; ++i)
          if (a[i] < b[i]) std::swap(a[i], b[i]);
      }
    check_output(y, "maxmin");
    return y;
  }
  // The local Jacobian swaps the pair wherever the first entry is smaller.
  FeatureBatch jvp(const FeatureBatch& at, const FeatureBatch& v) const override {
    FeatureBatch y = v;
    const std::size_t plane = in_.height * in_.width;
    for (std::size_t n = 0; n < v.batch(); ++n)
      for (std::size_t c = 0; c + 1 < in_.channels; c += 2) {
        const double* pa = at.plane(0, c);
        const double* pb = at.plane(0, c + 1);
        double* a = y.plane(n, c);
        double* b = y.plane(n, c + 1);
        for (std::size_t i = 0; i < plane; ++i)
          if (pa[i] < pb[i]) std::swap(a[i], b[i]);
      }
    return y;
  }
  FeatureBatch vjp(const FeatureBatch& at, const FeatureBatch& u) const override { return jvp(at, u); }
  bool is_linear() const override { return false; }
  double kink_distance(const FeatureBatch& at) const override {
    double m = std::numeric_limits<double>::infinity();
    const std::size_t plane = in_.height * in_.width;
    for (std::size_t c = 0; c + 1 < in_.channels; c += 2)
      for (std::size_t i = 0; i < plane; ++i) m = std::min(m, std::abs(at.plane(0, c)[i] - at.plane(0, c + 1)[i]));
    return m;
  }
  BoundResult lipschitz_bound(std::size_t, std::uint64_t) const override { return {1.0, BoundMethod::Analytic, 0}; }
};

// Parameter-free linear layers: channel padding/selection, pixel unshuffle,
// flatten, and scaling.
class ShapeLayer final : public Layer {
 public:
  ShapeLayer(LayerSpec spec, Shape3 in, Shape3 out, double factor = 1.0) : Layer(spec, in, out), factor_(factor) {}

  FeatureBatch forward(const FeatureBatch& x) const override {
    check_input(x);
    FeatureBatch y = apply(x);
    check_output(y, "reshape");
    return y;
  }
  FeatureBatch jvp(const FeatureBatch&, const FeatureBatch& v) const override { return apply(v); }
  FeatureBatch vjp(const FeatureBatch&, const FeatureBatch& u) const override {
    switch (spec_.kind) {
      case LayerKind::ZeroChannelPad: return first_channels(u, in_.channels);
      case LayerKind::FirstChannels: return zero_channel_pad(u, in_.channels);
      case LayerKind::PixelUnshuffle: return pixel_shuffle(u);
      case LayerKind::Flatten:
        return FeatureBatch({u.batch(), in_.channels, in_.height, in_.width}, u.values());
      default: {
        FeatureBatch y = u;
        for (auto& v : y.values()) v *= factor_;
        return y;
      }
    }
  }
  bool is_linear() const override { return true; }
  BoundResult lipschitz_bound(std::size_t iterations, std::uint64_t seed) const override {
    (void)iterations;
    (void)seed;
    // Padding, selection and reshapes have norm at most one.
    return {spec_.kind == LayerKind::Standard ? std::abs(factor_) : 1.0, BoundMethod::Analytic, 0};
  }

 private:
  FeatureBatch apply(const FeatureBatch& x) const {
    switch (spec_.kind) {
      case LayerKind::ZeroChannelPad: return zero_channel_pad(x, out_.channels);
      case LayerKind::FirstChannels: return first_channels(x, out_.channels);
      case LayerKind::PixelUnshuffle: return pixel_unshuffle(x);
      case LayerKind::Flatten: return FeatureBatch({x.batch(), out_.channels, 1, 1}, x.values());
      default: {
        FeatureBatch y = x;
        for (auto& v : y.values()) v *= factor_;
        return y;
      }
    }
  }

  double factor_;
};

class DenseLayer final : public Layer {
 public:
  DenseLayer(LayerSpec spec, RealMatrix w, std::vector<double> bias)
      : Layer(spec, {spec.c_in, 1, 1}, {spec.c_out, 1, 1}), w_(std::move(w)), wt_(transpose(w_)), bias_(std::move(bias)) {}

  FeatureBatch forward(const FeatureBatch& x) const override {
    check_input(x);
    FeatureBatch y = multiply(w_, x, out_);
    add_channel_bias(y, bias_);
    check_output(y, "dense");
    return y;
  }
  FeatureBatch jvp(const FeatureBatch&, const FeatureBatch& v) const override { return multiply(w_, v, out_); }
  FeatureBatch vjp(const FeatureBatch&, const FeatureBatch& u) const override { return multiply(wt_, u, in_); }
  bool is_linear() const override { return true; }
  std::vector<double> cached_weights() const override { return w_.values(); }

 private:
  static FeatureBatch multiply(const RealMatrix& m, const FeatureBatch& x, Shape3 out) {
    FeatureBatch y(x.batch(), out.channels, 1, 1);
    for (std::size_t n = 0; n < x.batch(); ++n) {
      const std::vector<double> col(x.data() + n * m.cols(), x.data() + (n + 1) * m.cols());
      const std::vector<double> r = matvec(m, col);
      std::copy(r.begin(), r.end(), y.plane(n, 0));
    }
    return y;
  }

  RealMatrix w_;
  RealMatrix wt_;
  std::vector<double> bias_;
};

// Kernel as a grid of channel matrices, for block convolution products.
struct TapGrid {
  std::size_t kh = 1;
  std::size_t kw = 1;
  std::vector<RealMatrix> taps;
};

TapGrid block_convolve(const TapGrid& x, const TapGrid& y) {
  TapGrid z;
  z.kh = x.kh + y.kh - 1;
  z.kw = x.kw + y.kw - 1;
  const std::size_t c = x.taps.front().rows();
  z.taps.assign(z.kh * z.kw, RealMatrix(c, c));
  for (std::size_t a = 0; a < x.kh; ++a)
    for (std::size_t b = 0; b < x.kw; ++b)
      for (std::size_t p = 0; p < y.kh; ++p)
        for (std::size_t q = 0; q < y.kw; ++q)
          z.taps[(a + p) * z.kw + (b + q)] += matmul(x.taps[a * x.kw + b], y.taps[p * y.kw + q]);
  return z;
}

RealMatrix projection(const std::vector<double>& raw, std::size_t offset, std::size_t c, std::size_t r,
                      std::size_t iters) {
  if (r == 0) return RealMatrix(c, c);
  RealMatrix u(c, r, std::vector<double>(raw.begin() + static_cast<long>(offset),
                                         raw.begin() + static_cast<long>(offset + c * r)));
  u = orthonormalize(u, iters);
  return matmul(u, transpose(u));
}

KernelTensor bcop_kernel(const LayerSpec& spec, const std::vector<double>& raw, std::size_t iters) {
  const std::size_t c = spec.c_in, r = c / 2;
  const RealMatrix eye = RealMatrix::identity(c);
  RealMatrix h(c, c, std::vector<double>(raw.begin(), raw.begin() + static_cast<long>(c * c)));
  TapGrid grid{1, 1, {orthonormalize(h, iters)}};
  std::size_t offset = c * c;
  for (std::size_t i = 0; i + 1 < spec.k; ++i) {
    const RealMatrix p = projection(raw, offset, c, r, iters);
    offset += c * r;
    const RealMatrix q = projection(raw, offset, c, r, iters);
    offset += c * r;
    grid = block_convolve(grid, TapGrid{1, 2, {p, eye - p}});
    grid = block_convolve(grid, TapGrid{2, 1, {q, eye - q}});
  }
  KernelTensor k(c, c, grid.kh, grid.kw);
  for (std::size_t a = 0; a < grid.kh; ++a)
    for (std::size_t b = 0; b < grid.kw; ++b)
      for (std::size_t o = 0; o < c; ++o)
        for (std::size_t i = 0; i < c; ++i) k(o, i, a, b) = grid.taps[a * grid.kw + b](o, i);
  return k;
}

KernelTensor kernel_from(const LayerSpec& s, std::size_t c_out, std::size_t c_in, const std::vector<double>& raw,
                         std::size_t offset = 0) {
  const std::size_t n = c_out * c_in * s.k * s.k;
  return KernelTensor({c_out, c_in, s.k, s.k}, std::vector<double>(raw.begin() + static_cast<long>(offset),
                                                                   raw.begin() + static_cast<long>(offset + n)));
}

// Orthonormal-row [A B] per frequency from the wide matrix Z_f via the
// Cayley map of its tall adjoint.
std::pair<ComplexMatrix, ComplexMatrix> sandwich_blocks(const ComplexMatrix& z, std::size_t hidden) {
  const std::size_t cin = z.cols() - hidden;
  const ComplexMatrix t = adjoint(z);
  ComplexMatrix u(hidden, hidden), v(cin, hidden);
  for (std::size_t i = 0; i < hidden; ++i)
    for (std::size_t j = 0; j < hidden; ++j) u(i, j) = t(i, j);
  for (std::size_t i = 0; i < cin; ++i)
    for (std::size_t j = 0; j < hidden; ++j) v(i, j) = t(hidden + i, j);
  const ComplexMatrix eye = ComplexMatrix::identity(hidden);
  const ComplexMatrix s = u - adjoint(u) + matmul(adjoint(v), v);
  const ComplexMatrix r = matinv(eye + s);
  const ComplexMatrix top = matmul(eye - s, r);
  const ComplexMatrix bottom = matmul(v, r) * Complex(-2.0);
  ComplexMatrix a(hidden, hidden), b(hidden, cin);
  for (std::size_t i = 0; i < hidden; ++i) {
    for (std::size_t j = 0; j < hidden; ++j) a(i, j) = std::conj(top(j, i));
    for (std::size_t j = 0; j < cin; ++j) b(i, j) = std::conj(bottom(j, i));
  }
  return {std::move(a), std::move(b)};
}

}  // namespace

double Layer::kink_distance(const FeatureBatch&) const { return std::numeric_limits<double>::infinity(); }

BoundResult Layer::lipschitz_bound(std::size_t iterations, std::uint64_t seed) const {
  if (!is_linear()) throw ConfigError(to_string(spec_.kind) + ": no Lipschitz bound available");
  return linear_power_bound(iterations, seed);
}

BoundResult Layer::linear_power_bound(std::size_t iterations, std::uint64_t seed) const {
  const FeatureBatch zero(1, in_.channels, in_.height, in_.width);
  LinearOperator op;
  op.in_dim = in_.size();
  op.out_dim = out_.size();
  op.apply = [this, &zero](const std::vector<double>& v) { return jvp(zero, as_batch(v, in_)).values(); };
  op.apply_transpose = [this, &zero](const std::vector<double>& u) { return vjp(zero, as_batch(u, out_)).values(); };
  const PowerState st = power_method(op, PowerState::seeded(seed), iterations);
  return {st.sigma_estimate, BoundMethod::PowerMethod, iterations};
}

void Layer::check_input(const FeatureBatch& x) const {
  if (x.channels() != in_.channels || x.height() != in_.height || x.width() != in_.width)
    throw ShapeError(to_string(spec_.kind) + ": input shape (" + std::to_string(x.channels()) + "," +
                     std::to_string(x.height()) + "," + std::to_string(x.width()) + ") differs from materialized (" +
                     std::to_string(in_.channels) + "," + std::to_string(in_.height) + "," +
                     std::to_string(in_.width) + ")");
}

void Layer::check_output(const FeatureBatch& y, const char* stage) const {
  if (!y.all_finite())
    throw NumericError("layer " + to_string(spec_.kind) + ": non-finite values after " + stage);
}

MaterializedLayer build(const LayerSpec& spec, const std::vector<double>& raw, const BuildOptions& opt) {
  validate(spec);
  if (raw.size() != parameter_count(spec))
    throw ShapeError(to_string(spec.kind) + ": expected " + std::to_string(parameter_count(spec)) +
                     " parameters, got " + std::to_string(raw.size()));
  std::vector<double> bias = opt.bias;
  if (bias.empty()) bias.assign(bias_count(spec), 0.0);
  if (bias.size() != bias_count(spec)) throw ShapeError(to_string(spec.kind) + ": wrong bias length");
  const Shape3 in{spec.c_in, opt.height, opt.width};
  const std::size_t h = opt.height, w = opt.width;
  const std::size_t iters = spec.iterations(opt.phase);

  switch (spec.kind) {
    case LayerKind::Standard:
      return std::make_shared<ConvLayer>(spec, in, kernel_from(spec, spec.c_out, spec.c_in, raw), bias);
    case LayerKind::AOL: {
      KernelTensor k = kernel_from(spec, spec.c_out, spec.c_in, raw);
      const std::vector<double> d = aol_rescale_conv(k);
      for (std::size_t o = 0; o < k.c_out(); ++o)
        for (std::size_t i = 0; i < k.c_in(); ++i)
          for (std::size_t a = 0; a < k.kh(); ++a)
            for (std::size_t b = 0; b < k.kw(); ++b) k(o, i, a, b) *= d[i];
      return std::make_shared<ConvLayer>(spec, in, std::move(k), bias);
    }
    case LayerKind::BCOP:
      return std::make_shared<ConvLayer>(spec, in, bcop_kernel(spec, raw, iters), bias);
    case LayerKind::Cayley: {
      const SpectralMatrices m = kernel_spectrum(kernel_from(spec, spec.c_out, spec.c_in, raw), h, w);
      SpectralMatrices q{h, w, per_unique_frequency(h, w, [&m](std::size_t f) {
                           const ComplexMatrix& mf = m.freq[f];
                           return cayley_transform(ComplexMatrix(mf - adjoint(mf)));
                         })};
      return std::make_shared<SpectralLayer>(spec, in, std::move(q), bias);
    }
    case LayerKind::LOT: {
      const SpectralMatrices m = kernel_spectrum(kernel_from(spec, spec.c_out, spec.c_in, raw), h, w);
      SpectralMatrices q{h, w, per_unique_frequency(h, w, [&m, iters](std::size_t f) {
                           const ComplexMatrix& vf = m.freq[f];
                           return matmul(vf, newton_inv_sqrt_scaled(vf, iters));
                         })};
      return std::make_shared<SpectralLayer>(spec, in, std::move(q), bias);
    }
    case LayerKind::SOC: {
      const KernelTensor k = kernel_from(spec, spec.c_out, spec.c_in, raw);
      const KernelTensor kt = conv_transpose_kernel(k);
      KernelTensor l(k.c_out(), k.c_in(), k.kh(), k.kw());
      for (std::size_t i = 0; i < l.size(); ++i) l.values()[i] = k.values()[i] - kt.values()[i];
      const double bound = reshape_bound(l, opt.reshape_iterations).value;
      if (bound > 0.0)
        for (auto& v : l.values()) v /= bound;
      return std::make_shared<SocLayer>(spec, in, std::move(l), iters, bias);
    }
    case LayerKind::CPL: {
      KernelTensor k = kernel_from(spec, spec.c_out, spec.c_in, raw);
      PowerState st = opt.power_state ? *opt.power_state : PowerState::seeded(spec.seed);
      st = power_method_conv(k, {spec.c_in, h, w}, spec.padding, std::move(st), iters);
      return std::make_shared<CplLayer>(spec, in, std::move(k), std::move(st), bias);
    }
    case LayerKind::SLL: {
      KernelTensor k = kernel_from(spec, spec.c_out, spec.c_in, raw);
      const std::size_t nk = k.size();
      std::vector<double> q(spec.c_out);
      for (std::size_t j = 0; j < q.size(); ++j) q[j] = std::exp(raw[nk + j]);
      KernelTensor p = conv_transpose_kernel(k);
      for (std::size_t o = 0; o < p.c_out(); ++o)
        for (std::size_t j = 0; j < p.c_in(); ++j)
          for (std::size_t a = 0; a < p.kh(); ++a)
            for (std::size_t b = 0; b < p.kw(); ++b) p(o, j, a, b) /= q[j];
      const std::vector<double> d = aol_rescale_conv(p);
      std::vector<double> s(q.size());
      for (std::size_t j = 0; j < s.size(); ++j) s[j] = d[j] * d[j] / (q[j] * q[j]);
      return std::make_shared<SllLayer>(spec, in, std::move(k), std::move(s), bias);
    }
    case LayerKind::Sandwich: {
      const std::size_t hidden = spec.c_out;
      const KernelTensor z = kernel_from(spec, hidden, spec.c_out + spec.c_in, raw);
      const SpectralMatrices zf = kernel_spectrum(z, h, w);
      std::vector<ComplexMatrix> bparts(h * w);
      std::vector<ComplexMatrix> aparts = per_unique_frequency(h, w, [&](std::size_t f) {
        auto [a, b] = sandwich_blocks(zf.freq[f], hidden);
        bparts[f] = std::move(b);
        const std::size_t g = conjugate_frequency(f, h, w);
        if (g != f) bparts[g] = conjugate(bparts[f]);
        return a;
      });
      std::vector<double> psi(hidden);
      for (std::size_t i = 0; i < hidden; ++i) psi[i] = std::exp(raw[z.size() + i]);
      return std::make_shared<SandwichLayer>(spec, in, SpectralMatrices{h, w, std::move(aparts)},
                                             SpectralMatrices{h, w, std::move(bparts)}, std::move(psi), bias);
    }
    case LayerKind::MaxMin:
      return std::make_shared<MaxMinLayer>(spec, in);
    case LayerKind::ZeroChannelPad:
    case LayerKind::FirstChannels:
      return std::make_shared<ShapeLayer>(spec, in, Shape3{spec.c_out, h, w});
    case LayerKind::PixelUnshuffle:
      if (h % 2 != 0 || w % 2 != 0) throw ShapeError("PixelUnshuffle: spatial extents must be even");
      return std::make_shared<ShapeLayer>(spec, in, Shape3{spec.c_out, h / 2, w / 2});
    case LayerKind::Flatten:
      if (spec.c_out != spec.c_in * h * w) throw ConfigError("Flatten: c_out must equal c_in * h * w");
      return std::make_shared<ShapeLayer>(spec, in, Shape3{spec.c_out, 1, 1});
    case LayerKind::Dense:
      if (h != 1 || w != 1) throw ConfigError("Dense: input must be flattened (1x1 spatial)");
      return std::make_shared<DenseLayer>(spec, RealMatrix(spec.c_out, spec.c_in, raw), bias);
  }
  throw ConfigError("build: unsupported layer kind");
}

MaterializedLayer make_scale_layer(Shape3 shape, double factor) {
  LayerSpec spec = LayerSpec::make(LayerKind::Standard, shape.channels, shape.channels, 1);
  return std::make_shared<ShapeLayer>(spec, shape, shape, factor);
}

RealMatrix jacobian_dense(const Layer& layer, const FeatureBatch* at, std::uint64_t seed) {
  const Shape3 in = layer.input_shape(), out = layer.output_shape();
  FeatureBatch point(1, in.channels, in.height, in.width);
  if (!layer.is_linear()) {
    Rng rng(seed);
    bool ok = false;
    if (at) {
      point = *at;
      ok = layer.kink_distance(point) >= 1e-7;
    }
    for (int attempt = 0; !ok && attempt < 10; ++attempt) {
      point = FeatureBatch({1, in.channels, in.height, in.width}, rng.normal_vector(in.size()));
      ok = layer.kink_distance(point) >= 1e-7;
    }
    if (!ok) throw NumericError("jacobian_dense: no probe point away from activation kinks after 10 attempts");
  }
  const std::size_t n_in = in.size(), n_out = out.size();
  FeatureBatch basis(n_in, in.channels, in.height, in.width);
  for (std::size_t j = 0; j < n_in; ++j) basis.values()[j * n_in + j] = 1.0;
  const FeatureBatch cols = layer.jvp(point, basis);
  RealMatrix jac(n_out, n_in);
  for (std::size_t j = 0; j < n_in; ++j)
    for (std::size_t r = 0; r < n_out; ++r) jac(r, j) = cols.values()[j * n_out + r];
  return jac;
}

MaterializedLayer sandwich_fold(const MaterializedLayer& layer) {
  const auto* s = dynamic_cast<const SandwichLayer*>(layer.get());
  if (!s) throw ConfigError("sandwich_fold: layer is not a Sandwich layer");
  return s->folded();
}

std::optional<PowerState> power_state_of(const Layer& layer) {
  if (const auto* c = dynamic_cast<const CplLayer*>(&layer)) return c->state();
  return std::nullopt;
}

}  // namespace lipcmp
