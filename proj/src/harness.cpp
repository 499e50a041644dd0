#include "mmlimit/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <numbers>
#include <random>
#include <set>
#include <thread>

#include "mmlimit/ode_kinetics.hpp"
#include "mmlimit/reduced.hpp"
#include "mmlimit/spatial_ops.hpp"

namespace mmlimit {

using nlohmann::json;

namespace {

Error config_error(const std::string& what) { return Error(ErrorCode::ConfigError, what); }

// ---------------------------------------------------------------- names

template <class E>
struct NamedValue {
  const char* name;
  E value;
};

constexpr NamedValue<Scheme> kSchemes[] = {{"lie", Scheme::Lie}, {"strang", Scheme::Strang}};
constexpr NamedValue<DiffusionMethod> kDiffusionMethods[] = {{"implicit_euler", DiffusionMethod::ImplicitEuler},
                                                             {"crank_nicolson", DiffusionMethod::CrankNicolson}};
constexpr NamedValue<SlowMethod> kSlowMethods[] = {{"exact", SlowMethod::Exact},
                                                   {"semi_implicit", SlowMethod::SemiImplicit}};
constexpr NamedValue<EpsRule> kEpsRules[] = {{"constant", EpsRule::Constant}, {"linear", EpsRule::Linear}};
constexpr NamedValue<FloorMode> kFloorModes[] = {{"none", FloorMode::None}, {"eps_zero", FloorMode::EpsZero}};
constexpr NamedValue<InitKind> kInitKinds[] = {
    {"constant", InitKind::Constant},   {"cosine", InitKind::Cosine},
    {"gaussian", InitKind::Gaussian},   {"indicator", InitKind::Indicator},
    {"random_smooth", InitKind::RandomSmooth}, {"manifold", InitKind::Manifold}};
constexpr const char* kKinds[] = {"simulate", "sweep", "reduced-compare", "ode-compare", "report"};

template <class E, std::size_t N>
const char* name_of(const NamedValue<E> (&table)[N], E v) {
  for (const auto& nv : table)
    if (nv.value == v) return nv.name;
  return "?";
}

template <class E, std::size_t N>
E value_of(const NamedValue<E> (&table)[N], const std::string& name, const std::string& where) {
  for (const auto& nv : table)
    if (name == nv.name) return nv.value;
  std::string options;
  for (const auto& nv : table) options += std::string(options.empty() ? "" : ", ") + nv.name;
  throw config_error(where + ": unknown value '" + name + "' (expected one of " + options + ")");
}

// ---------------------------------------------------------------- strict reader

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw config_error(path_ + ": expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& at(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }
  std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void number(const char* key, double& out) {
    seen_.insert(key);
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw config_error(where(key) + ": expected a number");
    out = v.get<double>();
  }
  void integer(const char* key, int& out) {
    seen_.insert(key);
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) throw config_error(where(key) + ": expected an integer");
    out = v.get<int>();
  }
  void unsigned64(const char* key, std::uint64_t& out) {
    seen_.insert(key);
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
      throw config_error(where(key) + ": expected a nonnegative integer");
    out = v.get<std::uint64_t>();
  }
  void boolean(const char* key, bool& out) {
    seen_.insert(key);
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) throw config_error(where(key) + ": expected true or false");
    out = v.get<bool>();
  }
  void string(const char* key, std::string& out) {
    seen_.insert(key);
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_string()) throw config_error(where(key) + ": expected a string");
    out = v.get<std::string>();
  }
  template <class E, std::size_t N>
  void named(const char* key, const NamedValue<E> (&table)[N], E& out) {
    std::string s;
    string(key, s);
    if (has(key)) out = value_of(table, s, where(key));
  }
  void number_map(const char* key, std::map<std::string, double>& out) {
    seen_.insert(key);
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_object()) throw config_error(where(key) + ": expected an object of numbers");
    out.clear();
    for (const auto& [k, x] : v.items()) {
      if (!x.is_number()) throw config_error(where(key) + "." + k + ": expected a number");
      out[k] = x.get<double>();
    }
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw config_error("unknown config key '" + where(k.c_str()) + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

InitField parse_init_field(const json& j, const std::string& path) {
  Reader r(j, path);
  InitField f;
  if (!r.has("type")) throw config_error(path + ".type: missing");
  r.named("type", kInitKinds, f.kind);
  switch (f.kind) {
    case InitKind::Constant:
      r.number("value", f.value);
      break;
    case InitKind::Cosine:
      r.number("base", f.base);
      r.number("amplitude", f.amplitude);
      r.integer("mode", f.mode);
      break;
    case InitKind::Gaussian:
      r.number("base", f.base);
      r.number("amplitude", f.amplitude);
      r.number("width", f.width);
      if (r.has("center")) {
        const auto& c = r.at("center");
        if (c.is_number()) {
          f.center = {c.get<double>(), c.get<double>()};
        } else if (c.is_array() && c.size() == 2 && c[0].is_number() && c[1].is_number()) {
          f.center = {c[0].get<double>(), c[1].get<double>()};
        } else {
          throw config_error(path + ".center: expected a number or [x, y]");
        }
      }
      break;
    case InitKind::Indicator:
      r.number("amplitude", f.amplitude);
      r.number("lo", f.lo);
      r.number("hi", f.hi);
      r.number("edge", f.edge);
      break;
    case InitKind::RandomSmooth:
      r.number("base", f.base);
      r.number("amplitude", f.amplitude);
      r.integer("modes", f.modes);
      if (r.has("seed")) {
        r.unsigned64("seed", f.seed);
        f.has_seed = true;
      }
      break;
    case InitKind::Manifold:
      break;
  }
  r.finish();
  return f;
}

json init_field_to_json(const InitField& f, int dimension) {
  json j;
  j["type"] = name_of(kInitKinds, f.kind);
  switch (f.kind) {
    case InitKind::Constant:
      j["value"] = f.value;
      break;
    case InitKind::Cosine:
      j["base"] = f.base;
      j["amplitude"] = f.amplitude;
      j["mode"] = f.mode;
      break;
    case InitKind::Gaussian:
      j["base"] = f.base;
      j["amplitude"] = f.amplitude;
      j["width"] = f.width;
      if (dimension == 1)
        j["center"] = f.center[0];
      else
        j["center"] = {f.center[0], f.center[1]};
      break;
    case InitKind::Indicator:
      j["amplitude"] = f.amplitude;
      j["lo"] = f.lo;
      j["hi"] = f.hi;
      j["edge"] = f.edge;
      break;
    case InitKind::RandomSmooth:
      j["base"] = f.base;
      j["amplitude"] = f.amplitude;
      j["modes"] = f.modes;
      if (f.has_seed) j["seed"] = f.seed;
      break;
    case InitKind::Manifold:
      break;
  }
  return j;
}

// ---------------------------------------------------------------- initial data

// C-infinity step: 0 for z <= 0, 1 for z >= 1.
double smooth_step(double z) {
  if (z <= 0.0) return 0.0;
  if (z >= 1.0) return 1.0;
  const double a = std::exp(-1.0 / z);
  const double b = std::exp(-1.0 / (1.0 - z));
  return a / (a + b);
}

double unit_uniform(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1p-53; }

Field generate_field(const InitField& f, const Grid& g, std::uint64_t seed, double* clip_fraction) {
  Field out(g.cells(), 0.0);
  const double L = g.length();
  const double pi = std::numbers::pi;
  const bool two_d = g.dimension() == 2;
  switch (f.kind) {
    case InitKind::Constant:
      std::fill(out.begin(), out.end(), f.value);
      break;
    case InitKind::Cosine:
      for (std::size_t i = 0; i < out.size(); ++i) {
        double c = std::cos(f.mode * pi * g.x_of(i) / L);
        if (two_d) c *= std::cos(f.mode * pi * g.y_of(i) / L);
        out[i] = f.base + f.amplitude * c;
      }
      break;
    case InitKind::Gaussian:
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double dx = g.x_of(i) - f.center[0];
        const double dy = two_d ? g.y_of(i) - f.center[1] : 0.0;
        out[i] = f.base + f.amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * f.width * f.width));
      }
      break;
    case InitKind::Indicator: {
      auto axis = [&f](double x) { return smooth_step((x - f.lo) / f.edge) * smooth_step((f.hi - x) / f.edge); };
      for (std::size_t i = 0; i < out.size(); ++i) {
        double s = axis(g.x_of(i));
        if (two_d) s *= axis(g.y_of(i));
        out[i] = f.amplitude * s;
      }
      break;
    }
    case InitKind::RandomSmooth: {
      std::mt19937_64 rng(seed);
      if (!two_d) {
        std::vector<double> a(std::size_t(f.modes) + 1, 0.0);
        for (int k = 1; k <= f.modes; ++k) a[std::size_t(k)] = 2.0 * unit_uniform(rng) - 1.0;
        for (std::size_t i = 0; i < out.size(); ++i) {
          double s = 0.0;
          for (int k = 1; k <= f.modes; ++k) s += a[std::size_t(k)] * std::cos(k * pi * g.x_of(i) / L) / k;
          out[i] = f.base + f.amplitude * s;
        }
      } else {
        const std::size_t m = std::size_t(f.modes) + 1;
        std::vector<double> a(m * m, 0.0);
        for (std::size_t l = 0; l < m; ++l)
          for (std::size_t k = 0; k < m; ++k)
            if (k + l > 0) a[l * m + k] = 2.0 * unit_uniform(rng) - 1.0;
        for (std::size_t i = 0; i < out.size(); ++i) {
          double s = 0.0;
          for (std::size_t l = 0; l < m; ++l)
            for (std::size_t k = 0; k < m; ++k)
              if (k + l > 0)
                s += a[l * m + k] * std::cos(double(k) * pi * g.x_of(i) / L) *
                     std::cos(double(l) * pi * g.y_of(i) / L) / double(k + l);
          out[i] = f.base + f.amplitude * s;
        }
      }
      std::size_t clipped = 0;
      for (double& x : out)
        if (x < 0.0) x = 0.0, ++clipped;
      if (clip_fraction) *clip_fraction = double(clipped) / double(out.size());
      break;
    }
    case InitKind::Manifold:
      break;
  }
  return out;
}

void check_init_field(const InitField& f, int species) {
  const std::string who = "init.u" + std::to_string(species + 1);
  auto bad = [&who](const std::string& why) { return Error(ErrorCode::InvalidSpec, who + ": " + why); };
  if (f.kind == InitKind::Manifold && species != 2) throw bad("'manifold' is only available for u3");
  switch (f.kind) {
    case InitKind::Constant:
      if (!(f.value >= 0.0) || !std::isfinite(f.value)) throw bad("value must be finite and >= 0");
      break;
    case InitKind::Cosine:
      if (!(f.base >= std::abs(f.amplitude))) throw bad("cosine needs base >= |amplitude|");
      if (f.mode < 0) throw bad("mode must be >= 0");
      break;
    case InitKind::Gaussian:
      if (!(f.width > 0.0)) throw bad("gaussian width must be > 0");
      if (!(f.base >= 0.0) || !(f.amplitude >= 0.0)) throw bad("gaussian base and amplitude must be >= 0");
      break;
    case InitKind::Indicator:
      if (!(f.amplitude >= 0.0)) throw bad("amplitude must be >= 0");
      if (!(f.lo < f.hi) || !(f.edge > 0.0) || !(2.0 * f.edge <= f.hi - f.lo))
        throw bad("indicator needs lo < hi and 0 < edge <= (hi - lo) / 2");
      break;
    case InitKind::RandomSmooth:
      if (f.modes < 1) throw bad("modes must be >= 1");
      if (!(f.amplitude >= 0.0)) throw bad("amplitude must be >= 0");
      break;
    case InitKind::Manifold:
      break;
  }
}

// ---------------------------------------------------------------- output

void append_double(std::string& buf, double x) {
  char tmp[32];
  auto res = std::to_chars(tmp, tmp + sizeof tmp, x);
  buf.append(tmp, res.ptr);
}

void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw Error(ErrorCode::ConfigError, "cannot write " + file.string());
  os << text;
}

void write_trajectory_csv(const std::filesystem::path& file, const Trajectory& traj) {
  const Grid& g = traj.grid;
  const bool two_d = g.dimension() == 2;
  std::string buf = two_d ? "t,x,y,u1,u2,u3,u4\n" : "t,x,u1,u2,u3,u4\n";
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const auto& s = traj.states[k];
    for (std::size_t i = 0; i < s.cells(); ++i) {
      append_double(buf, traj.times[k]);
      buf += ',';
      append_double(buf, g.x_of(i));
      if (two_d) {
        buf += ',';
        append_double(buf, g.y_of(i));
      }
      for (int j = 0; j < 4; ++j) {
        buf += ',';
        append_double(buf, s[j][i]);
      }
      buf += '\n';
    }
  }
  write_text(file, buf);
}

// ---------------------------------------------------------------- helpers

double relative_drift(const std::vector<double>& q) {
  double worst = 0.0;
  const double ref = q.front();
  for (double x : q) worst = std::max(worst, std::abs(x - ref));
  return ref != 0.0 ? worst / std::abs(ref) : worst;
}

template <class Task>
void run_parallel(std::size_t count, int workers, Task&& task) {
  const std::size_t nthreads = std::min<std::size_t>(count, std::size_t(std::max(1, workers)));
  if (nthreads <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < nthreads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

void log_line(const char* fmt, double a, double b) {
  std::fprintf(stderr, fmt, a, b);
  std::fflush(stderr);
}

json base_metadata(const ExperimentConfig& cfg) {
  json m;
  m["kind"] = cfg.kind;
  m["config"] = config_to_json(cfg);
  m["diffusivity_gap"] = diffusivity_gap(cfg.dif);
  return m;
}

std::vector<double> decreasing(std::vector<double> eps) {
  std::sort(eps.begin(), eps.end(), std::greater<>());
  return eps;
}

const char* kGapKeys[] = {"manifold_gap_L2", "manifold_gap_Lr", "manifold_residual_L2"};

json bound_to_json(const BoundVerdict& v, double p, double factor) {
  json j;
  j["p"] = p;
  j["factor"] = factor;
  j["pass"] = v.pass;
  j["worst_ratio"] = v.worst_ratio;
  j["ratios"] = v.ratios;
  if (!v.error.empty()) j["error"] = v.error;
  return j;
}

void record_failure(SweepEntry& e, const Error& err, int& diverged, std::mutex& mu) {
  e.error = err.what();
  if (err.code() == ErrorCode::NonFiniteState) {
    std::lock_guard lock(mu);
    ++diverged;
  }
}

StateField initial_state(const ExperimentConfig& cfg, const Grid& g, InitReport* rep) {
  return generate_initial(cfg.init, g, cfg.kin, cfg.seed, rep);
}

void finish_report(SweepReport& report, const ExperimentConfig& cfg) {
  if (!cfg.output_dir.empty()) write_report(report, cfg.output_dir);
}

}  // namespace

// ---------------------------------------------------------------- public

std::string eps_label(double eps) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", eps);
  return buf;
}

StateField generate_initial(const InitSpec& spec, const Grid& g, const KineticParams& kin, std::uint64_t seed,
                            InitReport* report) {
  for (int j = 0; j < 4; ++j) check_init_field(spec.fields[std::size_t(j)], j);
  StateField s(g.cells());
  InitReport rep;
  for (std::size_t j = 0; j < 4; ++j) {
    const auto& f = spec.fields[j];
    if (f.kind == InitKind::Manifold) continue;
    const std::uint64_t field_seed = f.has_seed ? f.seed : seed + 7919ULL * (j + 1);
    s.u[j] = generate_field(f, g, field_seed, &rep.clip_fraction[j]);
  }
  if (spec.fields[2].kind == InitKind::Manifold) {
    // u2 was generated as the total enzyme.
    const ReducedState r(s[0], s[1], s[3]);
    auto [u2, u3] = reconstruct_u23(r, kin);
    s[1] = std::move(u2);
    s[2] = std::move(u3);
  }
  if (report) *report = rep;
  return s;
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.init.fields[0] = InitField{};
  c.init.fields[0].kind = InitKind::Cosine;
  c.init.fields[0].base = 1.0;
  c.init.fields[0].amplitude = 0.8;
  c.init.fields[0].mode = 1;
  c.init.fields[1] = InitField{};
  c.init.fields[1].kind = InitKind::Gaussian;
  c.init.fields[1].base = 0.0;
  c.init.fields[1].amplitude = 1.0;
  c.init.fields[1].center = {0.6, 0.6};
  c.init.fields[1].width = 0.1;
  c.init.fields[2] = InitField{};
  c.init.fields[2].kind = InitKind::Manifold;
  c.init.fields[3] = InitField{};
  c.init.fields[3].kind = InitKind::Constant;
  c.init.fields[3].value = 0.0;
  return c;
}

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c = default_config();
  Reader r(j, "");
  r.string("kind", c.kind);
  if (r.has("kinetics")) {
    Reader k(r.at("kinetics"), "kinetics");
    k.number("k1", c.kin.k1);
    k.number("l1", c.kin.l1);
    k.number("k2", c.kin.k2);
    k.number("l2", c.kin.l2);
    k.finish();
  }
  if (r.has("diffusion")) {
    Reader d(r.at("diffusion"), "diffusion");
    d.number("d1", c.dif.d[0]);
    d.number("d2", c.dif.d[1]);
    d.number("d3", c.dif.d[2]);
    d.number("d4", c.dif.d[3]);
    d.named("eps_rule", kEpsRules, c.dif.rule);
    d.finish();
  }
  if (r.has("grid")) {
    Reader g(r.at("grid"), "grid");
    g.integer("dimension", c.dimension);
    g.integer("n", c.n);
    g.number("length", c.length);
    g.finish();
  }
  if (r.has("init")) {
    Reader in(r.at("init"), "init");
    const char* names[] = {"u1", "u2", "u3", "u4"};
    for (std::size_t s = 0; s < 4; ++s)
      if (in.has(names[s])) c.init.fields[s] = parse_init_field(in.at(names[s]), std::string("init.") + names[s]);
    in.finish();
  }
  if (r.has("eps_list")) {
    const auto& e = r.at("eps_list");
    if (!e.is_array()) throw config_error("eps_list: expected an array of numbers");
    c.eps_list.clear();
    for (const auto& x : e) {
      if (!x.is_number()) throw config_error("eps_list: expected an array of numbers");
      c.eps_list.push_back(x.get<double>());
    }
  }
  r.number("dt", c.dt);
  r.number("T", c.T);
  r.integer("snapshot_every", c.snapshot_every);
  r.named("scheme", kSchemes, c.scheme);
  r.named("diffusion_method", kDiffusionMethods, c.diffusion_method);
  r.named("slow_method", kSlowMethods, c.slow_method);
  r.number("eps_dt_ratio", c.eps_dt_ratio);
  r.named("floor_mode", kFloorModes, c.floor_mode);
  r.number("floor_eps", c.floor_eps);
  r.number("floor_factor", c.floor_factor);
  r.number("bound_factor", c.bound_factor);
  r.number("reduced_dt", c.reduced_dt);
  r.number("s0", c.s0);
  r.number("ode_dt", c.ode_dt);
  r.number("layer_factor", c.layer_factor);
  r.string("output_dir", c.output_dir);
  r.unsigned64("seed", c.seed);
  r.integer("workers", c.workers);
  r.boolean("write_csv", c.write_csv);
  r.string("report_input", c.report_input);
  if (r.has("checks")) {
    Reader k(r.at("checks"), "checks");
    k.number_map("min_slope", c.checks.min_slope);
    k.number_map("min_r2", c.checks.min_r2);
    k.number("max_enzyme_drift", c.checks.max_enzyme_drift);
    k.number("max_substrate_drift", c.checks.max_substrate_drift);
    k.boolean("require_positivity", c.checks.require_positivity);
    k.number("bound_p", c.checks.bound_p);
    k.boolean("require_monotone_distributional", c.checks.require_monotone_distributional);
    k.number("distributional_ratio", c.checks.distributional_ratio);
    k.finish();
  }
  r.finish();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw config_error("cannot open config file " + file.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw config_error("config is not valid JSON: " + std::string(e.what()));
  }
  return parse_config(j);
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["kind"] = c.kind;
  j["kinetics"] = {{"k1", c.kin.k1}, {"l1", c.kin.l1}, {"k2", c.kin.k2}, {"l2", c.kin.l2}};
  j["diffusion"] = {{"d1", c.dif.d[0]},
                    {"d2", c.dif.d[1]},
                    {"d3", c.dif.d[2]},
                    {"d4", c.dif.d[3]},
                    {"eps_rule", name_of(kEpsRules, c.dif.rule)}};
  j["grid"] = {{"dimension", c.dimension}, {"n", c.n}, {"length", c.length}};
  const char* names[] = {"u1", "u2", "u3", "u4"};
  for (std::size_t s = 0; s < 4; ++s) j["init"][names[s]] = init_field_to_json(c.init.fields[s], c.dimension);
  j["eps_list"] = c.eps_list;
  j["dt"] = c.dt;
  j["T"] = c.T;
  j["snapshot_every"] = c.snapshot_every;
  j["scheme"] = name_of(kSchemes, c.scheme);
  j["diffusion_method"] = name_of(kDiffusionMethods, c.diffusion_method);
  j["slow_method"] = name_of(kSlowMethods, c.slow_method);
  j["eps_dt_ratio"] = c.eps_dt_ratio;
  j["floor_mode"] = name_of(kFloorModes, c.floor_mode);
  j["floor_eps"] = c.floor_eps;
  j["floor_factor"] = c.floor_factor;
  j["bound_factor"] = c.bound_factor;
  j["reduced_dt"] = c.reduced_dt;
  j["s0"] = c.s0;
  j["ode_dt"] = c.ode_dt;
  j["layer_factor"] = c.layer_factor;
  j["output_dir"] = c.output_dir;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["write_csv"] = c.write_csv;
  j["report_input"] = c.report_input;
  j["checks"] = {{"min_slope", c.checks.min_slope},
                 {"min_r2", c.checks.min_r2},
                 {"max_enzyme_drift", c.checks.max_enzyme_drift},
                 {"max_substrate_drift", c.checks.max_substrate_drift},
                 {"require_positivity", c.checks.require_positivity},
                 {"bound_p", c.checks.bound_p},
                 {"require_monotone_distributional", c.checks.require_monotone_distributional},
                 {"distributional_ratio", c.checks.distributional_ratio}};
  return j;
}

void validate_config(const ExperimentConfig& c) {
  if (std::find_if(std::begin(kKinds), std::end(kKinds), [&c](const char* k) { return c.kind == k; }) ==
      std::end(kKinds))
    throw config_error("kind: unknown experiment kind '" + c.kind + "'");
  if (auto err = validate_params(c.kin, c.dif))
    throw config_error("invalid parameters: " + std::string(to_string(*err)));
  try {
    (void)c.grid();
  } catch (const Error& e) {
    throw config_error(std::string("grid: ") + e.what());
  }
  if (c.eps_list.empty()) throw config_error("eps_list: must not be empty");
  for (std::size_t i = 0; i < c.eps_list.size(); ++i) {
    const double e = c.eps_list[i];
    if (!(e > 0.0 && e <= 1.0)) throw config_error("eps_list: every eps must lie in (0, 1]");
    if (i > 0 && !(e < c.eps_list[i - 1])) throw config_error("eps_list: must be strictly decreasing");
  }
  if (!(c.T > 0.0)) throw config_error("T: must be > 0");
  if (!(c.dt > 0.0) || !(c.dt <= c.T)) throw config_error("dt: must satisfy 0 < dt <= T");
  if (c.snapshot_every < 1) throw config_error("snapshot_every: must be >= 1");
  if (!(c.eps_dt_ratio >= 0.0)) throw config_error("eps_dt_ratio: must be >= 0");
  if (!(c.floor_eps > 0.0)) throw config_error("floor_eps: must be > 0");
  if (!(c.floor_factor >= 0.0)) throw config_error("floor_factor: must be >= 0");
  if (!(c.bound_factor >= 1.0)) throw config_error("bound_factor: must be >= 1");
  if (!(c.reduced_dt >= 0.0)) throw config_error("reduced_dt: must be >= 0");
  if (!(c.s0 >= 0.0)) throw config_error("s0: must be >= 0");
  if (!(c.ode_dt >= 0.0)) throw config_error("ode_dt: must be >= 0");
  if (!(c.layer_factor >= 0.0)) throw config_error("layer_factor: must be >= 0");
  if (c.workers < 1) throw config_error("workers: must be >= 1");
  if (c.kind == "ode-compare") {
    if (!c.kin.irreversible()) throw config_error("ode-compare needs l2 = 0");
    if (!(c.eps_list.front() < 1.0)) throw config_error("ode-compare needs every eps < 1");
  }
  for (int j = 0; j < 4; ++j) {
    try {
      check_init_field(c.init.fields[std::size_t(j)], j);
    } catch (const Error& e) {
      throw config_error(e.what());
    }
  }
}

SplitStepConfig step_config_for(const ExperimentConfig& cfg, double eps) {
  SplitStepConfig s;
  s.T = cfg.T;
  s.scheme = cfg.scheme;
  s.diffusion = cfg.diffusion_method;
  s.slow = cfg.slow_method;
  long m = 1;
  if (cfg.eps_dt_ratio > 0.0) m = std::max(1L, long(std::ceil(cfg.dt / (cfg.eps_dt_ratio * eps) * (1.0 - 1e-12))));
  s.dt = cfg.dt / double(m);
  s.snapshot_every = int(cfg.snapshot_every * m);
  return s;
}

SweepEntry evaluate_trajectory(const Trajectory& traj, const ExperimentConfig& cfg, double eps) {
  SweepEntry e;
  e.eps = eps;
  e.dt = traj.dt_used;
  const Grid& g = traj.grid;
  const auto& kin = cfg.kin;
  constexpr double r = 4.0 / 3.0;

  std::vector<Field> gaps, residuals;
  for (const auto& s : traj.states) {
    gaps.push_back(manifold_gap(s, kin));
    residuals.push_back(manifold_residual(s, kin));
  }
  e.residual_norms["manifold_gap_L2"] = lp_norm_spacetime(traj.times, gaps, g, 2.0);
  e.residual_norms["manifold_gap_Lr"] = lp_norm_spacetime(traj.times, gaps, g, r);
  e.residual_norms["manifold_residual_L2"] = lp_norm_spacetime(traj.times, residuals, g, 2.0);

  for (double p : {1.5, 2.0}) {
    const double alpha = energy_alpha(eps, p);
    std::vector<double> h;
    for (const auto& s : traj.states) h.push_back(energy_H(s, kin, p, alpha, g));
    const std::string key = "H_p" + exponent_key(p);
    e.energies[key + "_initial"] = h.front();
    e.energies[key + "_final"] = h.back();
    e.energies[key + "_max"] = *std::max_element(h.begin(), h.end());
  }

  std::vector<double> enzyme, balance;
  for (const auto& s : traj.states) {
    const auto q = conserved_quantities(s, eps, g);
    enzyme.push_back(q.enzyme_mass);
    balance.push_back(q.substrate_balance);
  }
  e.conserved_drift["enzyme_mass"] = relative_drift(enzyme);
  e.conserved_drift["substrate_balance"] = relative_drift(balance);

  double gap_sup = 0.0;
  for (const auto& f : gaps)
    for (double x : f) gap_sup = std::max(gap_sup, std::abs(x));
  e.sup_norms["manifold_gap"] = gap_sup;
  e.min_value = std::numeric_limits<double>::infinity();
  for (int j = 0; j < 4; ++j) {
    double sup = 0.0;
    for (const auto& s : traj.states)
      for (double x : s[j]) {
        sup = std::max(sup, std::abs(x));
        e.min_value = std::min(e.min_value, x);
        if (x < 0.0) ++e.negative_values;
      }
    e.sup_norms["u" + std::to_string(j + 1)] = sup;
  }

  for (double p : {2.0, 3.0}) {
    std::array<double, 4> norms{};
    for (int j = 0; j < 4; ++j)
      norms[std::size_t(j)] = lp_norm_spacetime(traj, p, [j](const StateField& s) { return s[j]; });
    e.species_norms[exponent_key(p)] = norms;
  }

  for (const auto& psi : distributional_test_family(g.length(), cfg.T, g.dimension()))
    e.distributional.push_back(std::abs(integrate_spacetime(traj.times, gaps, g, psi)));
  return e;
}

void write_report(const SweepReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.json", to_json(report).dump(2) + "\n");
}

namespace {

RunResult run_full(const ExperimentConfig& cfg, bool with_floor, bool with_fits) {
  validate_config(cfg);
  const Grid g = cfg.grid();
  InitReport init_rep;
  const StateField init = initial_state(cfg, g, &init_rep);
  if (!cfg.output_dir.empty()) std::filesystem::create_directories(cfg.output_dir);

  RunResult out;
  const auto eps_list = decreasing(cfg.eps_list);
  out.report.entries.resize(eps_list.size());
  std::mutex mu;
  run_parallel(eps_list.size(), cfg.workers, [&](std::size_t i) {
    const double eps = eps_list[i];
    SweepEntry& e = out.report.entries[i];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const auto step_cfg = step_config_for(cfg, eps);
      const auto traj = simulate(init, cfg.kin, cfg.dif, eps, step_cfg, g);
      e = evaluate_trajectory(traj, cfg, eps);
      if (cfg.write_csv && !cfg.output_dir.empty())
        write_trajectory_csv(std::filesystem::path(cfg.output_dir) / ("series_eps" + eps_label(eps) + ".csv"),
                             traj);
      if (with_floor && cfg.floor_mode == FloorMode::EpsZero) {
        const auto floor = simulate(init, cfg.kin, cfg.dif, cfg.floor_eps, step_cfg, g);
        std::vector<Field> gaps, residuals;
        for (const auto& s : floor.states) {
          gaps.push_back(manifold_gap(s, cfg.kin));
          residuals.push_back(manifold_residual(s, cfg.kin));
        }
        e.floor_norms["manifold_gap_L2"] = lp_norm_spacetime(floor.times, gaps, g, 2.0);
        e.floor_norms["manifold_gap_Lr"] = lp_norm_spacetime(floor.times, gaps, g, 4.0 / 3.0);
        e.floor_norms["manifold_residual_L2"] = lp_norm_spacetime(floor.times, residuals, g, 2.0);
      }
    } catch (const Error& err) {
      e = SweepEntry{};
      e.eps = eps;
      record_failure(e, err, out.diverged, mu);
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_line("eps %g finished in %.1f s\n", eps, sec);
  });

  auto& meta = out.report.metadata = base_metadata(cfg);
  meta["r_exponent"] = 4.0 / 3.0;
  meta["floor_method"] = with_floor ? name_of(kFloorModes, cfg.floor_mode) : "none";
  meta["init_clip_fraction"] = init_rep.clip_fraction;
  json tests = json::array();
  for (const auto& psi : distributional_test_family(g.length(), cfg.T, g.dimension())) tests.push_back(psi.name());
  meta["test_functions"] = tests;

  if (with_fits) {
    for (const char* key : kGapKeys)
      out.report.fitted_rates[key] = fit_quantity(out.report.entries, key, cfg.floor_factor);
    const auto verdict = uniform_bound_check(out.report, 2.0, cfg.bound_factor);
    meta["uniform_bound"] = bound_to_json(verdict, 2.0, cfg.bound_factor);
  }
  return out;
}

}  // namespace

RunResult run_simulate(const ExperimentConfig& cfg) {
  auto out = run_full(cfg, false, false);
  finish_report(out.report, cfg);
  return out;
}

RunResult run_sweep(const ExperimentConfig& cfg) {
  auto out = run_full(cfg, true, true);
  finish_report(out.report, cfg);
  return out;
}

RunResult run_reduced_compare(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const Grid g = cfg.grid();
  const StateField init = initial_state(cfg, g, nullptr);
  const ReducedState r0 = to_reduced_state(init);

  // The reduced run stores snapshots at the same times as the full runs.
  const double interval = cfg.dt * cfg.snapshot_every;
  // Default: no coarser than the finest full-system step, so the reduced time error
  // stays below the smallest eps difference.
  double target = cfg.reduced_dt;
  if (!(target > 0.0)) {
    target = 0.5 * reduced_max_dt(r0, cfg.kin, cfg.dif, g);
    for (double eps : cfg.eps_list) target = std::min(target, step_config_for(cfg, eps).dt);
  }
  const long m = std::max(1L, long(std::ceil(interval / target * (1.0 - 1e-12))));
  SplitStepConfig rcfg;
  rcfg.T = cfg.T;
  rcfg.dt = interval / double(m);
  rcfg.snapshot_every = int(m);

  RunResult out;
  ReducedTrajectory reduced;
  std::string reduced_error;
  try {
    reduced = simulate_reduced(r0, cfg.kin, cfg.dif, rcfg, g);
  } catch (const Error& err) {
    reduced_error = err.what();
    if (err.code() == ErrorCode::NonFiniteState) ++out.diverged;
  }
  std::vector<Field> red_u3;
  for (const auto& s : reduced.states) red_u3.push_back(reconstruct_u23(s, cfg.kin).second);

  const auto eps_list = decreasing(cfg.eps_list);
  out.report.entries.resize(eps_list.size());
  if (!cfg.output_dir.empty()) std::filesystem::create_directories(cfg.output_dir);
  std::mutex mu;
  run_parallel(eps_list.size(), cfg.workers, [&](std::size_t i) {
    const double eps = eps_list[i];
    SweepEntry& e = out.report.entries[i];
    if (!reduced_error.empty()) {
      e.eps = eps;
      e.error = "reduced run failed: " + reduced_error;
      return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const auto traj = simulate(init, cfg.kin, cfg.dif, eps, step_config_for(cfg, eps), g);
      e = evaluate_trajectory(traj, cfg, eps);
      if (traj.size() != reduced.size())
        throw Error(ErrorCode::SizeMismatch, "full and reduced snapshot counts differ");
      for (std::size_t k = 0; k < traj.size(); ++k)
        if (std::abs(traj.times[k] - reduced.times[k]) > 1e-9 * cfg.T)
          throw Error(ErrorCode::SizeMismatch, "full and reduced snapshot times differ");
      std::array<std::vector<Field>, 4> diff;
      for (std::size_t k = 0; k < traj.size(); ++k) {
        const auto& s = traj.states[k];
        const auto& q = reduced.states[k];
        Field d1(s.cells()), d4(s.cells()), dv(s.cells()), d3(s.cells());
        for (std::size_t c = 0; c < s.cells(); ++c) {
          d1[c] = s[0][c] - q.u1[c];
          d4[c] = s[3][c] - q.u4[c];
          dv[c] = s[1][c] + s[2][c] - q.v[c];
          d3[c] = s[2][c] - red_u3[k][c];
        }
        diff[0].push_back(std::move(d1));
        diff[1].push_back(std::move(d4));
        diff[2].push_back(std::move(dv));
        diff[3].push_back(std::move(d3));
      }
      const char* names[] = {"u1_L2", "u4_L2", "v_L2", "u3_L2"};
      for (std::size_t q = 0; q < 4; ++q) e.differences[names[q]] = lp_norm_spacetime(traj.times, diff[q], g, 2.0);
      if (cfg.write_csv && !cfg.output_dir.empty())
        write_trajectory_csv(std::filesystem::path(cfg.output_dir) / ("series_eps" + eps_label(eps) + ".csv"),
                             traj);
    } catch (const Error& err) {
      e = SweepEntry{};
      e.eps = eps;
      record_failure(e, err, out.diverged, mu);
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_line("eps %g finished in %.1f s\n", eps, sec);
  });

  if (cfg.write_csv && !cfg.output_dir.empty() && reduced_error.empty()) {
    Trajectory as_full;
    as_full.grid = g;
    as_full.times = reduced.times;
    as_full.dt_used = reduced.dt_used;
    for (const auto& s : reduced.states) as_full.states.push_back(to_full_state(s, cfg.kin));
    write_trajectory_csv(std::filesystem::path(cfg.output_dir) / "series_reduced.csv", as_full);
  }

  auto& meta = out.report.metadata = base_metadata(cfg);
  meta["reduced_dt"] = rcfg.dt;
  if (!reduced_error.empty()) meta["reduced_error"] = reduced_error;
  if (cfg.dif.d[1] != cfg.dif.d[2])
    meta["limit_note"] =
        "uniqueness of the limit is not established for d2 != d3; differences are taken against this "
        "scheme's reduced solution";
  for (const char* key : {"u1_L2", "u4_L2", "v_L2", "u3_L2"})
    out.report.fitted_rates[std::string("difference_") + key] = fit_quantity(out.report.entries, key, 0.0, true);
  for (const char* key : kGapKeys) out.report.fitted_rates[key] = fit_quantity(out.report.entries, key, 0.0);
  const auto verdict = uniform_bound_check(out.report, 2.0, cfg.bound_factor);
  meta["uniform_bound"] = bound_to_json(verdict, 2.0, cfg.bound_factor);
  finish_report(out.report, cfg);
  return out;
}

RunResult run_ode_compare(const ExperimentConfig& cfg) {
  validate_config(cfg);
  RunResult out;
  const auto eps_list = decreasing(cfg.eps_list);
  out.report.entries.resize(eps_list.size());
  if (!cfg.output_dir.empty()) std::filesystem::create_directories(cfg.output_dir);
  std::mutex mu;
  run_parallel(eps_list.size(), cfg.workers, [&](std::size_t i) {
    const double eps = eps_list[i];
    SweepEntry& e = out.report.entries[i];
    e.eps = eps;
    try {
      const double dt = cfg.ode_dt > 0.0 ? cfg.ode_dt : std::min(1e-3, eps / 10.0);
      const auto cmp = qssa_compare(cfg.kin, cfg.s0, eps, cfg.T, dt, cfg.layer_factor);
      e.dt = dt;
      e.residual_norms["qssa_sup_gap"] = cmp.sup_gap;
      e.residual_norms["qssa_sup_gap_post_layer"] = cmp.sup_gap_post_layer;
      std::vector<double> enzyme, total;
      e.min_value = std::numeric_limits<double>::infinity();
      for (const auto& y : cmp.full.values) {
        enzyme.push_back(y[1] + y[2]);
        total.push_back(y[0] + y[2] + y[3]);
        for (double x : y) e.min_value = std::min(e.min_value, x);
      }
      for (const auto& y : cmp.mm.values) e.min_value = std::min(e.min_value, y[0]);
      e.conserved_drift["enzyme_mass"] = relative_drift(enzyme);
      e.conserved_drift["substrate_balance"] = relative_drift(total);
      e.negative_values = cmp.full.negative_steps + cmp.mm.negative_steps;
      if (cfg.write_csv && !cfg.output_dir.empty()) {
        const std::size_t n = cmp.full.times.size();
        const std::size_t stride = std::max<std::size_t>(1, (n - 1) / 2000);
        std::string buf = "t,s_full,s_mm,e,c,p\n";
        for (std::size_t k = 0; k < n; ++k) {
          if (k % stride != 0 && k + 1 != n) continue;
          const auto& y = cmp.full.values[k];
          append_double(buf, cmp.full.times[k]);
          for (double x : {y[0], cmp.mm.values[k][0], y[1], y[2], y[3]}) {
            buf += ',';
            append_double(buf, x);
          }
          buf += '\n';
        }
        write_text(std::filesystem::path(cfg.output_dir) / ("series_eps" + eps_label(eps) + ".csv"), buf);
      }
    } catch (const Error& err) {
      e = SweepEntry{};
      e.eps = eps;
      record_failure(e, err, out.diverged, mu);
    }
  });
  auto& meta = out.report.metadata = base_metadata(cfg);
  meta["time_variable"] = "slow time t = eps * tau; T, ode_dt and the layer length are slow-time quantities";
  meta["layer_factor"] = cfg.layer_factor;
  for (const char* key : {"qssa_sup_gap", "qssa_sup_gap_post_layer"})
    out.report.fitted_rates[key] = fit_quantity(out.report.entries, key, 0.0);
  finish_report(out.report, cfg);
  return out;
}

std::vector<CheckLine> check_report(const SweepReport& report, const Checks& checks, double bound_factor) {
  std::vector<CheckLine> lines;
  char buf[256];

  {
    CheckLine l{"entries_succeeded", true, ""};
    for (const auto& e : report.entries)
      if (!e.ok()) {
        l.pass = false;
        l.detail += "eps " + eps_label(e.eps) + ": " + e.error + "; ";
      }
    if (report.entries.empty()) l.pass = false, l.detail = "report has no entries";
    lines.push_back(l);
  }
  for (const auto& [key, threshold] : checks.min_slope) {
    CheckLine l{"slope_" + key, false, ""};
    auto it = report.fitted_rates.find(key);
    if (it == report.fitted_rates.end()) {
      l.detail = "no fitted rate named " + key;
    } else if (!it->second.fit) {
      l.detail = "no fit: " + it->second.error;
    } else {
      l.pass = it->second.fit->slope >= threshold;
      std::snprintf(buf, sizeof buf, "slope %.4f (need >= %.4f), r2 %.4f", it->second.fit->slope, threshold,
                    it->second.fit->r2);
      l.detail = buf;
    }
    lines.push_back(l);
  }
  for (const auto& [key, threshold] : checks.min_r2) {
    CheckLine l{"r2_" + key, false, ""};
    auto it = report.fitted_rates.find(key);
    if (it == report.fitted_rates.end() || !it->second.fit) {
      l.detail = "no fit for " + key;
    } else {
      l.pass = it->second.fit->r2 >= threshold;
      std::snprintf(buf, sizeof buf, "r2 %.5f (need >= %.5f)", it->second.fit->r2, threshold);
      l.detail = buf;
    }
    lines.push_back(l);
  }
  auto drift_line = [&](const char* name, const char* key, double limit) {
    CheckLine l{name, true, ""};
    double worst = 0.0;
    bool any = false;
    for (const auto& e : report.entries) {
      auto it = e.conserved_drift.find(key);
      if (it == e.conserved_drift.end()) continue;
      any = true;
      worst = std::max(worst, it->second);
    }
    l.pass = any && worst <= limit;
    std::snprintf(buf, sizeof buf, "max relative drift %.3e (limit %.1e)", worst, limit);
    l.detail = any ? buf : "no drift recorded";
    lines.push_back(l);
  };
  if (checks.max_enzyme_drift >= 0.0) drift_line("enzyme_mass_drift", "enzyme_mass", checks.max_enzyme_drift);
  if (checks.max_substrate_drift >= 0.0)
    drift_line("substrate_balance_drift", "substrate_balance", checks.max_substrate_drift);
  if (checks.require_positivity) {
    CheckLine l{"positivity", true, ""};
    long neg = 0;
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& e : report.entries) {
      neg += e.negative_values;
      if (e.ok()) lo = std::min(lo, e.min_value);
    }
    l.pass = neg == 0;
    std::snprintf(buf, sizeof buf, "%ld negative values, min %.3e", neg, lo);
    l.detail = buf;
    lines.push_back(l);
  }
  if (checks.bound_p > 0.0) {
    bool any = false;
    for (const auto& e : report.entries) any = any || e.species_norms.count(exponent_key(checks.bound_p));
    if (any) {
      const auto v = uniform_bound_check(report, checks.bound_p, bound_factor);
      CheckLine l{"uniform_bound_p" + exponent_key(checks.bound_p), v.pass, ""};
      std::snprintf(buf, sizeof buf, "worst ratio %.4f (factor %.2f)", v.worst_ratio, bound_factor);
      l.detail = v.error.empty() ? buf : v.error;
      lines.push_back(l);
    }
  }
  if (checks.require_monotone_distributional || checks.distributional_ratio >= 0.0) {
    CheckLine l{"distributional", true, ""};
    std::vector<const SweepEntry*> ok;
    for (const auto& e : report.entries)
      if (e.ok()) ok.push_back(&e);
    std::sort(ok.begin(), ok.end(), [](auto* a, auto* b) { return a->eps > b->eps; });
    if (ok.size() < 2 || ok.front()->distributional.empty()) {
      l.pass = false;
      l.detail = "needs at least two entries with distributional values";
    } else {
      double worst_ratio = 0.0;
      for (std::size_t t = 0; t < ok.front()->distributional.size(); ++t) {
        for (std::size_t k = 1; k < ok.size(); ++k)
          if (checks.require_monotone_distributional && !(ok[k]->distributional[t] < ok[k - 1]->distributional[t]))
            l.pass = false;
        const double first = ok.front()->distributional[t];
        const double ratio = first > 0.0 ? ok.back()->distributional[t] / first : 0.0;
        worst_ratio = std::max(worst_ratio, ratio);
      }
      if (checks.distributional_ratio >= 0.0 && !(worst_ratio <= checks.distributional_ratio)) l.pass = false;
      std::snprintf(buf, sizeof buf, "worst smallest/largest eps ratio %.3e", worst_ratio);
      l.detail = buf;
    }
    lines.push_back(l);
  }
  return lines;
}

}  // namespace mmlimit
