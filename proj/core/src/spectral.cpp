#include "lipcmp/spectral.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "lipcmp/random.hpp"

namespace lipcmp {

namespace {

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void scale_in_place(std::vector<double>& v, double s) {
  for (auto& x : v) x *= s;
}

}  // namespace

PowerState PowerState::seeded(std::uint64_t seed) {
  PowerState s;
  s.seed = seed;
  return s;
}

std::string to_string(BoundMethod method) {
  switch (method) {
    case BoundMethod::PowerMethod: return "PowerMethod";
    case BoundMethod::ReshapeBound: return "ReshapeBound";
    case BoundMethod::AolBound: return "AolBound";
    case BoundMethod::ExactSvd: return "ExactSvd";
    case BoundMethod::Analytic: return "Analytic";
  }
  return "unknown";
}

PowerState power_method(const LinearOperator& op, PowerState state, std::size_t t) {
  if (state.u.empty()) {
    Rng rng(state.seed);
    state.u = rng.unit_vector(op.out_dim);
  }
  if (state.u.size() != op.out_dim) throw ShapeError("power_method: state vector has wrong length");
  for (std::size_t it = 0; it < t; ++it) {
    std::vector<double> v = op.apply_transpose(state.u);
    double nv = norm2(v);
    if (nv == 0.0) {
      Rng rng(state.seed ^ (0x9E3779B97F4A7C15ull + state.iterations_done));
      state.u = rng.unit_vector(op.out_dim);
      v = op.apply_transpose(state.u);
      nv = norm2(v);
      if (nv == 0.0) {
        state.sigma_estimate = 0.0;
        state.iterations_done += 1;
        return state;
      }
    }
    scale_in_place(v, 1.0 / nv);
    std::vector<double> w = op.apply(v);
    const double nw = norm2(w);
    if (!std::isfinite(nw)) throw NumericError("power_method: non-finite iterate");
    state.iterations_done += 1;
    state.sigma_estimate = nw;
    if (nw == 0.0) return state;
    scale_in_place(w, 1.0 / nw);
    state.u = std::move(w);
  }
  return state;
}

PowerState power_method_matrix(const RealMatrix& w, PowerState state, std::size_t t) {
  LinearOperator op;
  op.in_dim = w.cols();
  op.out_dim = w.rows();
  op.apply = [&w](const std::vector<double>& v) { return matvec(w, v); };
  const RealMatrix wt = transpose(w);
  op.apply_transpose = [&wt](const std::vector<double>& u) { return matvec(wt, u); };
  return power_method(op, std::move(state), t);
}

LinearOperator conv_operator(const KernelTensor& kernel, ConvInputShape shape, PaddingMode padding) {
  if (shape.channels != kernel.c_in()) throw ShapeError("conv_operator: channel mismatch");
  LinearOperator op;
  op.in_dim = kernel.c_in() * shape.height * shape.width;
  op.out_dim = kernel.c_out() * shape.height * shape.width;
  const KernelTensor kt = conv_transpose_kernel(kernel);
  op.apply = [kernel, shape, padding](const std::vector<double>& v) {
    FeatureBatch x({1, kernel.c_in(), shape.height, shape.width}, v);
    return conv2d(x, kernel, padding).values();
  };
  op.apply_transpose = [kt, shape, padding](const std::vector<double>& u) {
    FeatureBatch y({1, kt.c_in(), shape.height, shape.width}, u);
    return conv2d(y, kt, padding).values();
  };
  return op;
}

PowerState power_method_conv(const KernelTensor& kernel, ConvInputShape shape, PaddingMode padding,
                             PowerState state, std::size_t t) {
  return power_method(conv_operator(kernel, shape, padding), std::move(state), t);
}

template <class T>
double orthogonality_residual(const Matrix<T>& q) {
  Matrix<T> g = matmul(adjoint(q), q);
  g -= Matrix<T>::identity(g.rows());
  return max_abs(g);
}

template <class T>
Matrix<T> bjorck_bowie(const Matrix<T>& a, std::size_t t) {
  const std::size_t n = a.cols();
  const Matrix<T> eye = Matrix<T>::identity(n);
  Matrix<T> cur = a;
  Matrix<T> gram = matmul(adjoint(cur), cur);
  double residual = frobenius_norm(gram - eye);
  int growth = 0;
  for (std::size_t k = 0; k < t; ++k) {
    Matrix<T> step = eye + (eye - gram) * T(0.5);
    cur = matmul(cur, step);
    gram = matmul(adjoint(cur), cur);
    const double next = frobenius_norm(gram - eye);
    // Growth at round-off level after convergence is not divergence.
    const bool grew = next > residual && next > 1e-8;
    if (!std::isfinite(next) || (grew && ++growth >= 3))
      throw DivergenceError("bjorck_bowie: iteration diverges for input with Frobenius norm " +
                            std::to_string(frobenius_norm(a)));
    if (!grew) growth = 0;
    residual = next;
  }
  return cur;
}

template <class T>
Matrix<T> orthonormalize(const Matrix<T>& a, std::size_t t) {
  const double f = frobenius_norm(a);
  if (f > 1.0) return bjorck_bowie(a * T(1.0 / f), t);
  return bjorck_bowie(a, t);
}

template <class T>
Matrix<T> newton_inv_sqrt(const Matrix<T>& v, std::size_t t) {
  Matrix<T> y = matmul(adjoint(v), v);
  const std::size_t n = y.rows();
  const Matrix<T> three = Matrix<T>::identity(n) * T(3.0);
  Matrix<T> z = Matrix<T>::identity(n);
  for (std::size_t i = 0; i < t; ++i) {
    const Matrix<T> m = three - matmul(z, y);
    y = matmul(y, m) * T(0.5);
    z = matmul(m, z) * T(0.5);
    if (!all_finite(z) || !all_finite(y))
      throw DivergenceError("newton_inv_sqrt: non-finite iterate at step " + std::to_string(i + 1));
  }
  return z;
}

template <class T>
Matrix<T> newton_inv_sqrt_scaled(const Matrix<T>& v, std::size_t t) {
  const double f = frobenius_norm(v);
  const double scale = std::sqrt(f * f + 1e-12);
  Matrix<T> z = newton_inv_sqrt(v * T(1.0 / scale), t);
  return z * T(1.0 / scale);
}

template <class T>
Matrix<T> cayley_transform(const Matrix<T>& a) {
  if (!a.square()) throw ShapeError("cayley_transform: matrix not square");
  const double skew_err = max_abs(a + adjoint(a));
  if (skew_err > 1e-10)
    throw PreconditionError("cayley_transform: input is not skew (|A + A^H| = " + std::to_string(skew_err) + ")");
  const Matrix<T> eye = Matrix<T>::identity(a.rows());
  return matmul(eye - a, matinv(eye + a));
}

template Matrix<double> bjorck_bowie(const Matrix<double>&, std::size_t);
template Matrix<Complex> bjorck_bowie(const Matrix<Complex>&, std::size_t);
template Matrix<double> orthonormalize(const Matrix<double>&, std::size_t);
template Matrix<Complex> orthonormalize(const Matrix<Complex>&, std::size_t);
template Matrix<double> newton_inv_sqrt(const Matrix<double>&, std::size_t);
template Matrix<Complex> newton_inv_sqrt(const Matrix<Complex>&, std::size_t);
template Matrix<double> newton_inv_sqrt_scaled(const Matrix<double>&, std::size_t);
template Matrix<Complex> newton_inv_sqrt_scaled(const Matrix<Complex>&, std::size_t);
template Matrix<double> cayley_transform(const Matrix<double>&);
template Matrix<Complex> cayley_transform(const Matrix<Complex>&);
template double orthogonality_residual(const Matrix<double>&);
template double orthogonality_residual(const Matrix<Complex>&);

RealMatrix aol_rescale_matrix(const RealMatrix& p) {
  const RealMatrix g = matmul(transpose(p), p);
  RealMatrix d(p.cols(), p.cols());
  for (std::size_t i = 0; i < g.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < g.cols(); ++j) s += std::abs(g(i, j));
    d(i, i) = 1.0 / std::sqrt(s + 1e-9);
  }
  return d;
}

std::vector<double> aol_rescale_conv(const KernelTensor& kernel) {
  const std::size_t co = kernel.c_out(), ci = kernel.c_in(), kh = kernel.kh(), kw = kernel.kw();
  const std::size_t oh = 2 * kh - 1, ow = 2 * kw - 1;
  // Self-correlation T[i][j][dy][dx] = sum_o sum_a w[o,i,a] w[o,j,a+d].
  std::vector<double> corr(ci * ci * oh * ow, 0.0);
  for (std::size_t i = 0; i < ci; ++i)
    for (std::size_t j = 0; j < ci; ++j) {
      double* t = &corr[(i * ci + j) * oh * ow];
      for (std::size_t o = 0; o < co; ++o)
        for (std::size_t ay = 0; ay < kh; ++ay)
          for (std::size_t ax = 0; ax < kw; ++ax) {
            const double wa = kernel(o, i, ay, ax);
            for (std::size_t by = 0; by < kh; ++by)
              for (std::size_t bx = 0; bx < kw; ++bx)
                t[(by + kh - 1 - ay) * ow + (bx + kw - 1 - ax)] += wa * kernel(o, j, by, bx);
          }
    }
  count_macs(static_cast<double>(ci * ci * co * kh * kw * kh * kw));
  std::vector<double> d(ci);
  for (std::size_t i = 0; i < ci; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < ci * oh * ow; ++k) s += std::abs(corr[i * ci * oh * ow + k]);
    d[i] = 1.0 / std::sqrt(s + 1e-9);
  }
  return d;
}

BoundResult reshape_bound(const KernelTensor& kernel, std::size_t iterations) {
  const std::size_t taps = kernel.kh() * kernel.kw();
  RealMatrix w(kernel.c_out(), kernel.c_in() * taps, kernel.values());
  const PowerState st = power_method_matrix(w, PowerState::seeded(0x5EEDB0D5ull), iterations);
  return {st.sigma_estimate * std::sqrt(static_cast<double>(taps)), BoundMethod::ReshapeBound, iterations};
}

RealMatrix conv_jacobian(const KernelTensor& kernel, std::size_t h, std::size_t w, PaddingMode padding) {
  const std::size_t n_in = kernel.c_in() * h * w, n_out = kernel.c_out() * h * w;
  FeatureBatch basis(n_in, kernel.c_in(), h, w);
  for (std::size_t j = 0; j < n_in; ++j) basis.values()[j * n_in + j] = 1.0;
  const FeatureBatch out = conv2d(basis, kernel, padding);
  RealMatrix jac(n_out, n_in);
  for (std::size_t j = 0; j < n_in; ++j)
    for (std::size_t r = 0; r < n_out; ++r) jac(r, j) = out.values()[j * n_out + r];
  return jac;
}

double exact_spectral_norm(const RealMatrix& j) {
  if (j.rows() == 0 || j.cols() == 0) return 0.0;
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const Mat> m(j.values().data(), static_cast<Eigen::Index>(j.rows()),
                          static_cast<Eigen::Index>(j.cols()));
  Eigen::MatrixXd g = j.cols() <= j.rows() ? Eigen::MatrixXd(m.transpose() * m) : Eigen::MatrixXd(m * m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

BoundResult exact_conv_spectral_norm(const KernelTensor& kernel, std::size_t s, PaddingMode padding,
                                     std::size_t oracle_limit) {
  const std::size_t dim = std::max(kernel.c_in(), kernel.c_out()) * s * s;
  if (dim > oracle_limit)
    throw OracleLimitError("exact_conv_spectral_norm: dense dimension " + std::to_string(dim) +
                           " exceeds oracle limit " + std::to_string(oracle_limit));
  return {exact_spectral_norm(conv_jacobian(kernel, s, s, padding)), BoundMethod::ExactSvd, 0};
}

}  // namespace lipcmp
