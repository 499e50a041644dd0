#include "mmlimit/spatial_ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mmlimit {

namespace {

void check_exponent(double p) {
  if (!(p >= 1.0)) throw Error(ErrorCode::InvalidExponent, "exponent must be >= 1 or inf, got " + std::to_string(p));
}

double pow_abs(double x, double p) {
  const double a = std::abs(x);
  if (p == 1.0) return a;
  if (p == 2.0) return a * a;
  return std::pow(a, p);
}

}  // namespace

void laplacian_neumann(std::span<const double> f, const Grid& g, std::span<double> out) {
  g.check_size(f);
  g.check_size(out);
  const int n = g.n();
  const double inv_h2 = 1.0 / (g.h() * g.h());
  if (g.dimension() == 1) {
    // Mirror ghosts f_{-1} = f_0, f_n = f_{n-1}: the boundary flux vanishes.
    out[0] = (f[1] - f[0]) * inv_h2;
    for (int i = 1; i < n - 1; ++i) out[i] = (f[i - 1] - 2.0 * f[i] + f[i + 1]) * inv_h2;
    out[n - 1] = (f[n - 2] - f[n - 1]) * inv_h2;
    return;
  }
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const std::size_t c = std::size_t(j) * n + i;
      double acc = 0.0;
      if (i > 0) acc += f[c - 1] - f[c];
      if (i < n - 1) acc += f[c + 1] - f[c];
      if (j > 0) acc += f[c - n] - f[c];
      if (j < n - 1) acc += f[c + n] - f[c];
      out[c] = acc * inv_h2;
    }
  }
}

Field laplacian_neumann(std::span<const double> f, const Grid& g) {
  Field out(f.size());
  laplacian_neumann(f, g, out);
  return out;
}

double integrate(std::span<const double> f, const Grid& g) {
  g.check_size(f);
  double s = 0.0;
  for (double x : f) s += x;
  return s * g.cell_measure();
}

double lp_norm(std::span<const double> f, const Grid& g, double p) {
  check_exponent(p);
  g.check_size(f);
  if (std::isinf(p)) {
    double m = 0.0;
    for (double x : f) m = std::max(m, std::abs(x));
    return m;
  }
  double s = 0.0;
  for (double x : f) s += pow_abs(x, p);
  return std::pow(s * g.cell_measure(), 1.0 / p);
}

FieldStats field_stats(std::span<const double> f, const Grid& g, std::span<const double> exponents) {
  FieldStats st;
  st.integral = integrate(f, g);
  for (double p : exponents) st.lp_norms[p] = lp_norm(f, g, p);
  return st;
}

std::vector<double> trapezoid_weights(std::span<const double> times) {
  const std::size_t k = times.size();
  std::vector<double> w(k, 0.0);
  if (k < 2) return w;
  w[0] = 0.5 * (times[1] - times[0]);
  for (std::size_t i = 1; i + 1 < k; ++i) w[i] = 0.5 * (times[i + 1] - times[i - 1]);
  w[k - 1] = 0.5 * (times[k - 1] - times[k - 2]);
  return w;
}

double lp_norm_spacetime(std::span<const double> times, std::span<const Field> fields, const Grid& g, double p) {
  check_exponent(p);
  if (times.size() != fields.size())
    throw Error(ErrorCode::SizeMismatch, "times and fields differ in length");
  if (std::isinf(p)) {
    double m = 0.0;
    for (const auto& f : fields)
      for (double x : f) m = std::max(m, std::abs(x));
    return m;
  }
  const auto w = trapezoid_weights(times);
  double total = 0.0;
  for (std::size_t k = 0; k < fields.size(); ++k) {
    g.check_size(fields[k]);
    if (w[k] == 0.0) continue;
    double s = 0.0;
    for (double x : fields[k]) s += pow_abs(x, p);
    total += w[k] * g.cell_measure() * s;
  }
  return std::pow(total, 1.0 / p);
}

}  // namespace mmlimit
