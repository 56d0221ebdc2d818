#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace lipcmp::testing {

Eigen::MatrixXd to_eigen(const RealMatrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

Eigen::MatrixXcd to_eigen(const ComplexMatrix& m) {
  Eigen::MatrixXcd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

RealMatrix from_eigen(const Eigen::MatrixXd& e) {
  RealMatrix m(e.rows(), e.cols());
  for (Eigen::Index i = 0; i < e.rows(); ++i)
    for (Eigen::Index j = 0; j < e.cols(); ++j) m(i, j) = e(i, j);
  return m;
}

RealMatrix circulant_oracle(const KernelTensor& w, std::size_t h, std::size_t wd, PaddingMode padding) {
  const auto co = w.c_out(), ci = w.c_in(), kh = w.kh(), kw = w.kw();
  const auto ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
  RealMatrix j(co * h * wd, ci * h * wd);
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < wd; ++x)
        for (std::size_t i = 0; i < ci; ++i)
          for (std::size_t a = 0; a < kh; ++a)
            for (std::size_t b = 0; b < kw; ++b) {
              long sy = static_cast<long>(y) + static_cast<long>(a) - ph;
              long sx = static_cast<long>(x) + static_cast<long>(b) - pw;
              if (padding == PaddingMode::Circular) {
                sy = ((sy % static_cast<long>(h)) + static_cast<long>(h)) % static_cast<long>(h);
                sx = ((sx % static_cast<long>(wd)) + static_cast<long>(wd)) % static_cast<long>(wd);
              } else if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(wd)) {
                continue;
              }
              j((o * h + y) * wd + x, (i * h + static_cast<std::size_t>(sy)) * wd + static_cast<std::size_t>(sx)) +=
                  w(o, i, a, b);
            }
  return j;
}

double svd_sigma_max(const RealMatrix& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(m));
  return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

double svd_sigma_min(const RealMatrix& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(m));
  const auto& s = svd.singularValues();
  return s.size() ? s(s.size() - 1) : 0.0;
}

RealMatrix polar_factor(const RealMatrix& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(m), Eigen::ComputeThinU | Eigen::ComputeThinV);
  return from_eigen(svd.matrixU() * svd.matrixV().transpose());
}

double gram_residual_max(const RealMatrix& j) {
  const Eigen::MatrixXd e = to_eigen(j);
  const Eigen::MatrixXd g = e.transpose() * e - Eigen::MatrixXd::Identity(e.cols(), e.cols());
  return g.cwiseAbs().maxCoeff();
}

double gram_residual_frobenius(const RealMatrix& j) {
  const Eigen::MatrixXd e = to_eigen(j);
  return (e.transpose() * e - Eigen::MatrixXd::Identity(e.cols(), e.cols())).norm();
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace lipcmp::testing
