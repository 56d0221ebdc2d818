#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lipcmp/conv.hpp"
#include "lipcmp/matrix.hpp"

namespace lipcmp {

struct PowerState {
  std::vector<double> u;  // unit vector in the operator's output space
  std::size_t iterations_done = 0;
  double sigma_estimate = 0.0;
  std::uint64_t seed = 0;

  // Empty state; the first power-method call draws u from `seed`.
  static PowerState seeded(std::uint64_t seed);
};

enum class BoundMethod { PowerMethod, ReshapeBound, AolBound, ExactSvd, Analytic };

std::string to_string(BoundMethod method);

struct BoundResult {
  double value = 0.0;
  BoundMethod method = BoundMethod::PowerMethod;
  std::size_t iterations = 0;
};

// Matrix-free real operator R^in -> R^out with its transpose.
struct LinearOperator {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::function<std::vector<double>(const std::vector<double>&)> apply;
  std::function<std::vector<double>(const std::vector<double>&)> apply_transpose;
};

// v = W^T u / |W^T u|, u = W v / |W v|, sigma = u^T W v; repeated t times.
PowerState power_method(const LinearOperator& op, PowerState state, std::size_t t);
PowerState power_method_matrix(const RealMatrix& w, PowerState state, std::size_t t);

struct ConvInputShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};

LinearOperator conv_operator(const KernelTensor& kernel, ConvInputShape shape, PaddingMode padding);
PowerState power_method_conv(const KernelTensor& kernel, ConvInputShape shape, PaddingMode padding,
                             PowerState state, std::size_t t);

// A_{k+1} = A_k (I + Q_k / 2), Q_k = I - A_k^T A_k. Requires sigma_max(A) < sqrt(3).
template <class T>
Matrix<T> bjorck_bowie(const Matrix<T>& a, std::size_t t);

// bjorck_bowie after dividing by the Frobenius norm when it exceeds 1.
template <class T>
Matrix<T> orthonormalize(const Matrix<T>& a, std::size_t t);

// Coupled Newton-Schulz iteration on Y_0 = V^H V, Z_0 = I; returns Z_t, which
// approaches (V^H V)^{-1/2} when the spectrum of V^H V lies in (0, 1].
template <class T>
Matrix<T> newton_inv_sqrt(const Matrix<T>& v, std::size_t t);

// newton_inv_sqrt on V / sqrt(trace(V^H V) + eps) with the scale reapplied,
// so any nonsingular V is admissible.
template <class T>
Matrix<T> newton_inv_sqrt_scaled(const Matrix<T>& v, std::size_t t);

// Q = (I - A)(I + A)^{-1} for skew-symmetric / skew-Hermitian A.
template <class T>
Matrix<T> cayley_transform(const Matrix<T>& a);

template <class T>
double orthogonality_residual(const Matrix<T>& q);  // max |Q^H Q - I|

// D_ii = (sum_j |P^T P|_ij + 1e-9)^{-1/2}; returned as a diagonal matrix.
RealMatrix aol_rescale_matrix(const RealMatrix& p);
std::vector<double> aol_rescale_conv(const KernelTensor& kernel);

// sigma_max of the kernel reshaped to c_out x (c_in kh kw), times sqrt(kh kw).
BoundResult reshape_bound(const KernelTensor& kernel, std::size_t iterations = 100);

// Dense Jacobian of conv2d by basis probing.
RealMatrix conv_jacobian(const KernelTensor& kernel, std::size_t h, std::size_t w, PaddingMode padding);

constexpr std::size_t kDefaultOracleLimit = 4096;

// Largest singular value via a symmetric eigensolver on J^T J.
double exact_spectral_norm(const RealMatrix& j);

BoundResult exact_conv_spectral_norm(const KernelTensor& kernel, std::size_t s,
                                     PaddingMode padding = PaddingMode::Circular,
                                     std::size_t oracle_limit = kDefaultOracleLimit);

}  // namespace lipcmp
