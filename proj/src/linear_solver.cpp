#include "mmlimit/linear_solver.hpp"

#include <cmath>
#include <string>

namespace mmlimit {

TridiagonalSystem::TridiagonalSystem(std::vector<double> lower, std::vector<double> diag, std::vector<double> upper,
                                     std::vector<double> rhs)
    : lower_(std::move(lower)), diag_(std::move(diag)), upper_(std::move(upper)), rhs_(std::move(rhs)) {
  const std::size_t n = diag_.size();
  if (n == 0 || lower_.size() != n || upper_.size() != n || rhs_.size() != n)
    throw Error(ErrorCode::SizeMismatch, "tridiagonal arrays must share a nonzero length");
  for (std::size_t i = 0; i < n; ++i) {
    const double off = (i > 0 ? std::abs(lower_[i]) : 0.0) + (i + 1 < n ? std::abs(upper_[i]) : 0.0);
    if (!(std::abs(diag_[i]) > off))
      throw Error(ErrorCode::NotDiagonallyDominant, "row " + std::to_string(i) + " is not strictly dominant");
  }
}

std::vector<double> TridiagonalSystem::multiply(std::span<const double> x) const {
  const std::size_t n = size();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = diag_[i] * x[i];
    if (i > 0) s += lower_[i] * x[i - 1];
    if (i + 1 < n) s += upper_[i] * x[i + 1];
    y[i] = s;
  }
  return y;
}

TridiagonalFactor::TridiagonalFactor(std::span<const double> lower, std::span<const double> diag,
                                     std::span<const double> upper)
    : lower_(lower.begin(), lower.end()), upper_scaled_(diag.size(), 0.0), inv_pivot_(diag.size(), 0.0) {
  const std::size_t n = diag.size();
  double prev = 0.0;  // upper_scaled_[i-1]
  for (std::size_t i = 0; i < n; ++i) {
    const double pivot = diag[i] - (i > 0 ? lower[i] * prev : 0.0);
    if (pivot == 0.0 || !std::isfinite(pivot))
      throw Error(ErrorCode::ZeroPivot, "zero pivot at row " + std::to_string(i));
    inv_pivot_[i] = 1.0 / pivot;
    upper_scaled_[i] = (i + 1 < n ? upper[i] : 0.0) * inv_pivot_[i];
    prev = upper_scaled_[i];
  }
}

void TridiagonalFactor::solve(std::span<const double> rhs, std::span<double> x) const {
  const std::size_t n = inv_pivot_.size();
  if (rhs.size() != n || x.size() != n) throw Error(ErrorCode::SizeMismatch, "tridiagonal solve size mismatch");
  x[0] = rhs[0] * inv_pivot_[0];
  for (std::size_t i = 1; i < n; ++i) x[i] = (rhs[i] - lower_[i] * x[i - 1]) * inv_pivot_[i];
  for (std::size_t i = n - 1; i-- > 0;) x[i] -= upper_scaled_[i] * x[i + 1];
}

void TridiagonalFactor::solve4(const std::array<const TridiagonalFactor*, 4>& f,
                               const std::array<std::span<const double>, 4>& rhs,
                               const std::array<std::span<double>, 4>& x) {
  const std::size_t n = f[0]->size();
  for (std::size_t j = 0; j < 4; ++j)
    if (f[j]->size() != n || rhs[j].size() != n || x[j].size() != n)
      throw Error(ErrorCode::SizeMismatch, "tridiagonal solve size mismatch");
  const TridiagonalFactor &a = *f[0], &b = *f[1], &c = *f[2], &d = *f[3];
  double xa = rhs[0][0] * a.inv_pivot_[0], xb = rhs[1][0] * b.inv_pivot_[0];
  double xc = rhs[2][0] * c.inv_pivot_[0], xd = rhs[3][0] * d.inv_pivot_[0];
  x[0][0] = xa, x[1][0] = xb, x[2][0] = xc, x[3][0] = xd;
  for (std::size_t i = 1; i < n; ++i) {
    xa = (rhs[0][i] - a.lower_[i] * xa) * a.inv_pivot_[i];
    xb = (rhs[1][i] - b.lower_[i] * xb) * b.inv_pivot_[i];
    xc = (rhs[2][i] - c.lower_[i] * xc) * c.inv_pivot_[i];
    xd = (rhs[3][i] - d.lower_[i] * xd) * d.inv_pivot_[i];
    x[0][i] = xa, x[1][i] = xb, x[2][i] = xc, x[3][i] = xd;
  }
  for (std::size_t i = n - 1; i-- > 0;) {
    xa = x[0][i] -= a.upper_scaled_[i] * xa;
    xb = x[1][i] -= b.upper_scaled_[i] * xb;
    xc = x[2][i] -= c.upper_scaled_[i] * xc;
    xd = x[3][i] -= d.upper_scaled_[i] * xd;
  }
}

std::vector<double> solve_tridiagonal(const TridiagonalSystem& sys) {
  TridiagonalFactor f(sys.lower(), sys.diag(), sys.upper());
  std::vector<double> x(sys.size());
  f.solve(sys.rhs(), x);
  return x;
}

namespace {

void diffusion_coefficients(double gamma, const Grid& g, std::vector<double>& lo, std::vector<double>& di,
                            std::vector<double>& up) {
  if (g.dimension() != 1) throw Error(ErrorCode::InvalidGrid, "tridiagonal diffusion requires a 1D grid");
  const std::size_t n = std::size_t(g.n());
  const double c = gamma / (g.h() * g.h());
  lo.assign(n, -c);
  up.assign(n, -c);
  di.assign(n, 1.0 + 2.0 * c);
  lo[0] = 0.0;
  up[n - 1] = 0.0;
  di[0] = 1.0 + c;
  di[n - 1] = 1.0 + c;
}

}  // namespace

TridiagonalSystem implicit_diffusion_system(double gamma, const Grid& g, std::vector<double> rhs) {
  std::vector<double> lo, di, up;
  diffusion_coefficients(gamma, g, lo, di, up);
  return TridiagonalSystem(std::move(lo), std::move(di), std::move(up), std::move(rhs));
}

TridiagonalFactor implicit_diffusion_factor(double gamma, const Grid& g) {
  std::vector<double> lo, di, up;
  diffusion_coefficients(gamma, g, lo, di, up);
  return TridiagonalFactor(lo, di, up);
}

CgResult solve_cg(const LinearOperator& apply_a, std::span<const double> b, double tol, int max_iter,
                  std::span<const double> x0) {
  const std::size_t n = b.size();
  CgResult res;
  res.x.assign(n, 0.0);
  if (!x0.empty()) {
    if (x0.size() != n) throw Error(ErrorCode::SizeMismatch, "initial guess size mismatch");
    res.x.assign(x0.begin(), x0.end());
  }
  auto dot = [n](std::span<const double> a, std::span<const double> c) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * c[i];
    return s;
  };
  const double bnorm = std::sqrt(dot(b, b));
  if (bnorm == 0.0) {
    res.x.assign(n, 0.0);
    return res;
  }
  std::vector<double> r(n), p(n), ap(n);
  apply_a(res.x, ap);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
  p = r;
  double rr = dot(r, r);
  res.relative_residual = std::sqrt(rr) / bnorm;
  while (res.relative_residual > tol) {
    if (res.iterations >= max_iter)
      throw Error(ErrorCode::MaxIterExceeded,
                  "CG stalled at relative residual " + std::to_string(res.relative_residual));
    apply_a(p, ap);
    const double alpha = rr / dot(p, ap);
    for (std::size_t i = 0; i < n; ++i) {
      res.x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    const double rr_new = dot(r, r);
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    ++res.iterations;
    res.relative_residual = std::sqrt(rr) / bnorm;
  }
  return res;
}

}  // namespace mmlimit
