#include "mmlimit/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mmlimit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveRate: return "NonPositiveRate";
    case ErrorCode::NonPositiveDiffusivity: return "NonPositiveDiffusivity";
    case ErrorCode::NegativeL2: return "NegativeL2";
    case ErrorCode::InvalidGrid: return "InvalidGrid";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::InvalidExponent: return "InvalidExponent";
    case ErrorCode::NotDiagonallyDominant: return "NotDiagonallyDominant";
    case ErrorCode::ZeroPivot: return "ZeroPivot";
    case ErrorCode::MaxIterExceeded: return "MaxIterExceeded";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::NegativeState: return "NegativeState";
    case ErrorCode::CflViolation: return "CflViolation";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::NonPositiveValue: return "NonPositiveValue";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

std::array<double, 4> DiffusionParams::at(double eps) const noexcept {
  if (rule == EpsRule::Constant || !std::isfinite(eps)) return d;
  std::array<double, 4> out{};
  for (std::size_t j = 0; j < 4; ++j) out[j] = d[j] * (1.0 + eps);
  return out;
}

std::optional<ErrorCode> validate_params(const KineticParams& kin, const DiffusionParams& dif) {
  // NaN fails every comparison below, so it is rejected as well.
  if (!(kin.k1 > 0.0) || !(kin.l1 > 0.0) || !(kin.k2 > 0.0)) return ErrorCode::NonPositiveRate;
  if (!(kin.l2 >= 0.0)) return ErrorCode::NegativeL2;
  for (double dj : dif.d)
    if (!(dj > 0.0) || !std::isfinite(dj)) return ErrorCode::NonPositiveDiffusivity;
  return std::nullopt;
}

double diffusivity_gap(const DiffusionParams& dif) {
  const double d2 = dif.d[1];
  const double d3 = dif.d[2];
  return std::abs(d2 - d3) / (d2 + d3);
}

Grid::Grid(int dimension, int cells_per_axis, double length)
    : dim_(dimension), n_(cells_per_axis), length_(length), h_(length / cells_per_axis) {
  if (dimension != 1 && dimension != 2)
    throw Error(ErrorCode::InvalidGrid, "dimension must be 1 or 2, got " + std::to_string(dimension));
  if (cells_per_axis < 4)
    throw Error(ErrorCode::InvalidGrid, "need at least 4 cells per axis, got " + std::to_string(cells_per_axis));
  if (!(length > 0.0) || !std::isfinite(length))
    throw Error(ErrorCode::InvalidGrid, "domain length must be positive");
}

void Grid::check_size(std::span<const double> f) const {
  if (f.size() != cells())
    throw Error(ErrorCode::SizeMismatch,
                "field has " + std::to_string(f.size()) + " values, grid has " + std::to_string(cells()));
}

Field StateField::v() const {
  Field out(u[1].size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = u[1][i] + u[2][i];
  return out;
}

namespace {
double min_of(const Field& f) {
  return f.empty() ? std::numeric_limits<double>::infinity() : *std::min_element(f.begin(), f.end());
}
bool finite(const Field& f) {
  return std::all_of(f.begin(), f.end(), [](double x) { return std::isfinite(x); });
}
}  // namespace

double StateField::min_value() const {
  return std::min({min_of(u[0]), min_of(u[1]), min_of(u[2]), min_of(u[3])});
}

bool StateField::all_finite() const {
  return finite(u[0]) && finite(u[1]) && finite(u[2]) && finite(u[3]);
}

bool StateField::consistent() const {
  return u[1].size() == u[0].size() && u[2].size() == u[0].size() && u[3].size() == u[0].size();
}

double ReducedState::min_value() const { return std::min({min_of(u1), min_of(v), min_of(u4)}); }

bool ReducedState::all_finite() const { return finite(u1) && finite(v) && finite(u4); }

}  // namespace mmlimit
