#pragma once

#include <array>
#include <functional>
#include <span>
#include <vector>

#include "mmlimit/core_types.hpp"

namespace mmlimit {

/// Tridiagonal system A x = rhs. lower[0] and upper[n-1] are ignored.
/// Construction rejects matrices that are not strictly diagonally dominant.
class TridiagonalSystem {
 public:
  TridiagonalSystem(std::vector<double> lower, std::vector<double> diag, std::vector<double> upper,
                    std::vector<double> rhs);

  std::size_t size() const noexcept { return diag_.size(); }
  const std::vector<double>& lower() const noexcept { return lower_; }
  const std::vector<double>& diag() const noexcept { return diag_; }
  const std::vector<double>& upper() const noexcept { return upper_; }
  const std::vector<double>& rhs() const noexcept { return rhs_; }

  /// A x, for residual checks.
  std::vector<double> multiply(std::span<const double> x) const;

 private:
  std::vector<double> lower_, diag_, upper_, rhs_;
};

/// Thomas elimination without pivoting.
std::vector<double> solve_tridiagonal(const TridiagonalSystem& sys);

/// Precomputed Thomas elimination for repeated solves with the same matrix.
///
/// For matrices with positive diagonal and nonpositive off-diagonals every
/// operation on a nonnegative right-hand side adds nonnegative terms, so the
/// result is nonnegative in floating point, not only in exact arithmetic.
class TridiagonalFactor {
 public:
  TridiagonalFactor() = default;
  TridiagonalFactor(std::span<const double> lower, std::span<const double> diag, std::span<const double> upper);

  void solve(std::span<const double> rhs, std::span<double> x) const;
  std::size_t size() const noexcept { return inv_pivot_.size(); }

  /// Four independent solves of equal size, interleaved so their recurrences overlap.
  static void solve4(const std::array<const TridiagonalFactor*, 4>& factors,
                     const std::array<std::span<const double>, 4>& rhs, const std::array<std::span<double>, 4>& x);

 private:
  std::vector<double> lower_, upper_scaled_, inv_pivot_;
};

/// Matrix of I - gamma * Laplacian_h on a 1D grid (mirror Neumann rows at both ends).
TridiagonalSystem implicit_diffusion_system(double gamma, const Grid& g, std::vector<double> rhs);
TridiagonalFactor implicit_diffusion_factor(double gamma, const Grid& g);

using LinearOperator = std::function<void(std::span<const double>, std::span<double>)>;

struct CgResult {
  std::vector<double> x;
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Unpreconditioned conjugate gradients for a symmetric positive-definite operator.
/// Throws MaxIterExceeded when ||A x - b|| <= tol ||b|| is not reached.
CgResult solve_cg(const LinearOperator& apply_a, std::span<const double> b, double tol, int max_iter,
                  std::span<const double> x0 = {});

}  // namespace mmlimit
