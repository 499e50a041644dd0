#include "mmlimit/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

#include "mmlimit/spatial_ops.hpp"

namespace mmlimit {

Field manifold_residual(const StateField& s, const KineticParams& kin) {
  Field out(s.cells());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (kin.k1 * s[0][i] + kin.l2 * s[3][i]) * s[1][i] - kin.a3() * s[2][i];
  return out;
}

Field manifold_gap(const StateField& s, const KineticParams& kin) {
  Field out(s.cells());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double a2 = kin.k1 * s[0][i] + kin.l2 * s[3][i];
    out[i] = s[2][i] - a2 / (a2 + kin.a3()) * (s[1][i] + s[2][i]);
  }
  return out;
}

double energy_alpha(double eps, double p) {
  if (!(p > 1.0 && p <= 2.0)) throw Error(ErrorCode::InvalidExponent, "perturbed residual needs p in (1, 2]");
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidSpec, "eps must be > 0");
  return std::pow(eps, 1.0 / (4.0 - p));
}

Field perturbed_residual(const StateField& s, const KineticParams& kin, double eps, double p) {
  const double alpha = energy_alpha(eps, p);
  Field out(s.cells());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (kin.k1 * s[0][i] + kin.l2 * s[3][i] + alpha) * s[1][i] - kin.a3() * s[2][i];
  return out;
}

double energy_H(const StateField& s, const KineticParams& kin, double p, double alpha, const Grid& g) {
  if (!(p >= 1.0)) throw Error(ErrorCode::InvalidExponent, "energy exponent must be >= 1");
  Field density(s.cells());
  const double a3 = kin.a3();
  for (std::size_t i = 0; i < density.size(); ++i) {
    const double u2 = s[1][i];
    const double u3 = s[2][i];
    const double w2 = (kin.k1 * s[0][i] + kin.l2 * s[3][i] + alpha) * u2;
    const double w3 = a3 * u3;
    density[i] = (p == 1.0 ? u2 + u3 : std::pow(w2, p - 1.0) * u2 + std::pow(w3, p - 1.0) * u3);
  }
  return integrate(density, g);
}

ConservedQuantities conserved_quantities(const StateField& s, double eps, const Grid& g) {
  Field enzyme(s.cells()), balance(s.cells());
  for (std::size_t i = 0; i < enzyme.size(); ++i) {
    enzyme[i] = s[1][i] + s[2][i];
    balance[i] = s[0][i] + eps * s[2][i] + s[3][i];
  }
  return {integrate(enzyme, g), integrate(balance, g)};
}

RateFit fit_rate(std::span<const std::pair<double, double>> points) {
  std::set<double> distinct;
  for (const auto& [eps, value] : points) {
    if (!(value > 0.0)) throw Error(ErrorCode::NonPositiveValue, "rate fit needs positive values");
    if (!(eps > 0.0)) throw Error(ErrorCode::NonPositiveValue, "rate fit needs positive eps");
    distinct.insert(eps);
  }
  if (points.size() < 3 || distinct.size() < 3)
    throw Error(ErrorCode::TooFewPoints, "rate fit needs at least 3 distinct eps");

  const double n = double(points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [eps, value] : points) {
    mx += std::log(eps);
    my += std::log(value);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [eps, value] : points) {
    const double dx = std::log(eps) - mx;
    const double dy = std::log(value) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  RateFit fit;
  fit.points = points.size();
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  const double ss_res = std::max(0.0, syy - fit.slope * sxy);
  fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

namespace {

// C-infinity bump on (0, 1), equal to 1 at the midpoint.
double bump(double z) {
  if (z <= 0.0 || z >= 1.0) return 0.0;
  const double w = 2.0 * z - 1.0;
  return std::exp(1.0 - 1.0 / (1.0 - w * w));
}

constexpr std::array<std::pair<double, double>, 3> kTimeWindows{{{0.05, 0.45}, {0.30, 0.70}, {0.55, 0.95}}};

}  // namespace

double TestFunction::operator()(double x, double y, double t) const {
  const double lo = 0.1 * length;
  const double span = 0.8 * length;
  const double xs = (x - lo) / span;
  double space = std::sin(m * std::numbers::pi * xs) * bump(xs);
  if (dimension == 2) space *= bump((y - lo) / span);
  const auto [a, b] = kTimeWindows[std::size_t(k - 1)];
  const double ts = (t - a * horizon) / ((b - a) * horizon);
  return space * bump(ts);
}

std::string TestFunction::name() const { return "psi_m" + std::to_string(m) + "_k" + std::to_string(k); }

std::vector<TestFunction> distributional_test_family(double length, double horizon, int dimension) {
  std::vector<TestFunction> out;
  for (int m = 1; m <= 3; ++m)
    for (int k = 1; k <= 3; ++k) out.push_back(TestFunction{m, k, length, horizon, dimension});
  return out;
}

std::string exponent_key(double p) {
  if (std::isinf(p)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", p);
  return buf;
}

FitOutcome fit_quantity(const std::vector<SweepEntry>& entries, const std::string& quantity, double floor_factor,
                        bool from_differences) {
  FitOutcome out;
  std::vector<std::pair<double, double>> pts;
  for (const auto& e : entries) {
    if (!e.ok()) continue;
    const auto& source = from_differences ? e.differences : e.residual_norms;
    auto it = source.find(quantity);
    if (it == source.end()) continue;
    auto fl = e.floor_norms.find(quantity);
    if (!from_differences && fl != e.floor_norms.end() && it->second < floor_factor * fl->second) {
      out.excluded_eps.push_back(e.eps);
      continue;
    }
    pts.emplace_back(e.eps, it->second);
    out.used_eps.push_back(e.eps);
  }
  try {
    out.fit = fit_rate(pts);
  } catch (const Error& err) {
    out.error = err.what();
  }
  return out;
}

BoundVerdict uniform_bound_check(const SweepReport& report, double p, double factor) {
  BoundVerdict v;
  const std::string key = exponent_key(p);
  for (const auto& e : report.entries) {
    if (!e.ok()) continue;
    auto it = e.species_norms.find(key);
    if (it == e.species_norms.end()) continue;
    for (std::size_t j = 0; j < 4; ++j) v.table[j].emplace_back(e.eps, it->second[j]);
  }
  if (v.table[0].size() < 3) {
    v.error = "uniform bound check needs at least 3 successful eps entries with L^" + key + " norms";
    return v;
  }
  v.pass = true;
  for (std::size_t j = 0; j < 4; ++j) {
    auto& rows = v.table[j];
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    const double ref = rows.front().second;
    double worst = 0.0;
    for (const auto& [eps, norm] : rows) worst = std::max(worst, norm);
    const double ratio = ref > 0.0 ? worst / ref : (worst > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
    v.ratios[j] = ratio;
    v.worst_ratio = std::max(v.worst_ratio, ratio);
    if (!(ratio <= factor)) v.pass = false;
  }
  return v;
}

namespace {

nlohmann::json fit_to_json(const FitOutcome& f) {
  nlohmann::json j;
  if (f.fit) {
    j["slope"] = f.fit->slope;
    j["intercept"] = f.fit->intercept;
    j["r2"] = f.fit->r2;
    j["points"] = f.fit->points;
  } else {
    j["error"] = f.error;
  }
  j["used_eps"] = f.used_eps;
  j["excluded_eps"] = f.excluded_eps;
  return j;
}

FitOutcome fit_from_json(const nlohmann::json& j) {
  FitOutcome f;
  if (j.contains("slope")) {
    RateFit r;
    r.slope = j.at("slope").get<double>();
    r.intercept = j.at("intercept").get<double>();
    r.r2 = j.at("r2").get<double>();
    r.points = j.at("points").get<std::size_t>();
    f.fit = r;
  } else {
    f.error = j.value("error", std::string{});
  }
  f.used_eps = j.value("used_eps", std::vector<double>{});
  f.excluded_eps = j.value("excluded_eps", std::vector<double>{});
  return f;
}

}  // namespace

nlohmann::json to_json(const SweepReport& report) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["metadata"] = report.metadata;
  auto& entries = j["entries"] = nlohmann::json::array();
  for (const auto& e : report.entries) {
    nlohmann::json je;
    je["eps"] = e.eps;
    je["dt"] = e.dt;
    if (!e.ok()) je["error"] = e.error;
    je["residual_norms"] = e.residual_norms;
    je["floor_norms"] = e.floor_norms;
    je["energies"] = e.energies;
    je["conserved_drift"] = e.conserved_drift;
    je["sup_norms"] = e.sup_norms;
    if (!e.differences.empty()) je["differences"] = e.differences;
    je["species_norms"] = e.species_norms;
    je["distributional"] = e.distributional;
    je["min_value"] = e.min_value;
    je["negative_values"] = e.negative_values;
    entries.push_back(std::move(je));
  }
  auto& fits = j["fitted_rates"] = nlohmann::json::object();
  for (const auto& [name, f] : report.fitted_rates) fits[name] = fit_to_json(f);
  return j;
}

SweepReport sweep_report_from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != 1)
    throw Error(ErrorCode::ConfigError, "unsupported report schema_version");
  SweepReport r;
  r.metadata = j.value("metadata", nlohmann::json::object());
  for (const auto& je : j.at("entries")) {
    SweepEntry e;
    e.eps = je.at("eps").get<double>();
    e.dt = je.at("dt").get<double>();
    e.error = je.value("error", std::string{});
    auto get_map = [&je](const char* key) { return je.value(key, std::map<std::string, double>{}); };
    e.residual_norms = get_map("residual_norms");
    e.floor_norms = get_map("floor_norms");
    e.energies = get_map("energies");
    e.conserved_drift = get_map("conserved_drift");
    e.sup_norms = get_map("sup_norms");
    e.differences = get_map("differences");
    e.species_norms = je.value("species_norms", std::map<std::string, std::array<double, 4>>{});
    e.distributional = je.value("distributional", std::vector<double>{});
    e.min_value = je.value("min_value", 0.0);
    e.negative_values = je.value("negative_values", 0L);
    r.entries.push_back(std::move(e));
  }
  const auto fits = j.value("fitted_rates", nlohmann::json::object());
  for (const auto& [name, jf] : fits.items()) r.fitted_rates[name] = fit_from_json(jf);
  return r;
}

}  // namespace mmlimit
