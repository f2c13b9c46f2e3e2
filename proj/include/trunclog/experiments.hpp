#ifndef TRUNCLOG_EXPERIMENTS_HPP
#define TRUNCLOG_EXPERIMENTS_HPP

// Experiment harness: configuration, the order/identity experiments and
// their reports.

#include <json.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "trunclog/bounds.hpp"
#include "trunclog/errors.hpp"
#include "trunclog/flows.hpp"
#include "trunclog/free_lie.hpp"
#include "trunclog/io.hpp"
#include "trunclog/magnus.hpp"
#include "trunclog/series.hpp"
#include "trunclog/systems.hpp"
#include "trunclog/tensor_algebra.hpp"

namespace trunclog {

struct ExperimentConfig {
  std::string experiment;
  int d = 2;
  int kappa = 2;
  /// Built-in name or an inline system object.
  json system = "linear";
  int linear_n = 3;
  double linear_scale = 1.0;
  std::uint64_t system_seed = 7;
  json matrices;
  /// Null selects a seeded random piecewise-constant path.
  json path;
  int random_pieces = 3;
  double path_scale = 1.0;
  std::vector<double> lambdas = geometric_grid(0.5, 8);
  int samples = 16;
  int tangent_samples = 16;
  double region_radius = 1.0;
  int steps_per_unit = 4096;
  std::uint64_t seed = 1;
  /// auto | order | exact | none
  std::string expect = "auto";
  double slope_margin = 0.3;
  json A;
  json B;
  std::vector<int> step_counts{64, 128, 256, 512, 1024, 2048, 4096};
  double w_time = -1.0;
  std::vector<double> h_list{0.04, 0.02, 0.01};
  int squad = 8;
  int cases = 100;
  int lie_samples = 200;
  int threads = 0;
  bool corrupt_psi_minus = false;
};

namespace detail {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  static const std::set<std::string> known{
      "experiment", "d", "kappa", "system", "linear_n", "linear_scale", "system_seed", "matrices", "path", "random_pieces",
      "path_scale", "lambdas", "samples", "tangent_samples", "region_radius", "steps_per_unit", "seed", "expect",
      "slope_margin", "A", "B", "step_counts", "w_time", "h_list", "squad", "cases", "lie_samples", "threads", "test_hooks"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError("config: unknown key '" + k + "'");
  ExperimentConfig c;
  detail::read_opt(j, "experiment", c.experiment);
  detail::read_opt(j, "d", c.d);
  detail::read_opt(j, "kappa", c.kappa);
  if (j.contains("system")) c.system = j["system"];
  detail::read_opt(j, "linear_n", c.linear_n);
  detail::read_opt(j, "linear_scale", c.linear_scale);
  detail::read_opt(j, "system_seed", c.system_seed);
  if (j.contains("matrices")) c.matrices = j["matrices"];
  if (j.contains("path")) c.path = j["path"];
  detail::read_opt(j, "random_pieces", c.random_pieces);
  detail::read_opt(j, "path_scale", c.path_scale);
  detail::read_opt(j, "lambdas", c.lambdas);
  detail::read_opt(j, "samples", c.samples);
  detail::read_opt(j, "tangent_samples", c.tangent_samples);
  detail::read_opt(j, "region_radius", c.region_radius);
  detail::read_opt(j, "steps_per_unit", c.steps_per_unit);
  detail::read_opt(j, "seed", c.seed);
  detail::read_opt(j, "expect", c.expect);
  detail::read_opt(j, "slope_margin", c.slope_margin);
  if (j.contains("A")) c.A = j["A"];
  if (j.contains("B")) c.B = j["B"];
  detail::read_opt(j, "step_counts", c.step_counts);
  detail::read_opt(j, "w_time", c.w_time);
  detail::read_opt(j, "h_list", c.h_list);
  detail::read_opt(j, "squad", c.squad);
  detail::read_opt(j, "cases", c.cases);
  detail::read_opt(j, "lie_samples", c.lie_samples);
  detail::read_opt(j, "threads", c.threads);
  if (j.contains("test_hooks")) detail::read_opt(j["test_hooks"], "corrupt_psi_minus", c.corrupt_psi_minus);

  if (c.d < 1 || c.kappa < 1) throw ConfigError("config: d and kappa must be >= 1");
  if (c.kappa > kMaxKappa) throw ConfigError("config: kappa too large");
  if (c.lambdas.empty()) throw ConfigError("config: empty lambda grid");
  for (std::size_t i = 0; i < c.lambdas.size(); ++i) {
    if (!(c.lambdas[i] > 0.0)) throw ConfigError("config: lambdas must be positive");
    if (i && !(c.lambdas[i] < c.lambdas[i - 1])) throw ConfigError("config: lambdas must be strictly decreasing");
  }
  if (c.samples < 1 || c.tangent_samples < 1) throw ConfigError("config: sample counts must be >= 1");
  if (c.steps_per_unit < 1) throw ConfigError("config: steps_per_unit must be >= 1");
  if (c.expect != "auto" && c.expect != "order" && c.expect != "exact" && c.expect != "none")
    throw ConfigError("config: expect must be auto, order, exact or none");
  if (c.step_counts.empty()) throw ConfigError("config: empty step_counts");
  for (int s : c.step_counts)
    if (s < 1) throw ConfigError("config: step counts must be >= 1");
  if (c.h_list.size() < 2) throw ConfigError("config: h_list needs at least two values");
  if (c.squad < 1) throw ConfigError("config: squad must be >= 1");
  if (c.cases < 1 || c.lie_samples < 1) throw ConfigError("config: cases and lie_samples must be >= 1");
  if (!(c.region_radius > 0.0)) throw ConfigError("config: region_radius must be positive");
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Reports

struct Check {
  std::string name;
  double value = 0.0;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool passed = false;
  std::string note;
};

struct ConvergenceReport {
  std::vector<double> lambdas;
  std::vector<double> distances;
  std::vector<double> running;
  double floor = 0.0;
  std::optional<SlopeFit> fit;
  double expected_order = 0.0;
  std::string expectation;
  std::vector<std::string> notes;
};

struct Report {
  std::string command;
  std::vector<Check> checks;
  std::optional<ConvergenceReport> convergence;
  io::CsvTable table;
  json details = json::object();
  std::string plot_title;
  int plot_x = 1;
  int plot_y = 2;
  std::string plot_xlabel;
  std::string plot_ylabel;

  bool passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }

  Check& check_range(std::string name, double value, double lo, double hi, std::string note = {}) {
    checks.push_back({std::move(name), value, lo, hi, std::isfinite(value) && value >= lo && value <= hi, std::move(note)});
    return checks.back();
  }
  Check& check_le(std::string name, double value, double hi, std::string note = {}) {
    return check_range(std::move(name), value, -std::numeric_limits<double>::infinity(), hi, std::move(note));
  }
  Check& check_ge(std::string name, double value, double lo, std::string note = {}) {
    return check_range(std::move(name), value, lo, std::numeric_limits<double>::infinity(), std::move(note));
  }
  void fail(std::string name, std::string note) {
    checks.push_back({std::move(name), std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0, false, std::move(note)});
  }
};

inline json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline json to_json(const Report& r) {
  json checks = json::array();
  for (const auto& c : r.checks) {
    json jc{{"name", c.name}, {"value", number_or_null(c.value)}, {"passed", c.passed}};
    if (std::isfinite(c.lo)) jc["min"] = c.lo;
    if (std::isfinite(c.hi)) jc["max"] = c.hi;
    if (!c.note.empty()) jc["note"] = c.note;
    checks.push_back(jc);
  }
  json out{{"command", r.command}, {"passed", r.passed()}, {"checks", checks}, {"details", r.details}};
  if (r.convergence) {
    const auto& cv = *r.convergence;
    json running = json::array();
    for (double s : cv.running) running.push_back(number_or_null(s));
    json c{{"lambdas", cv.lambdas},     {"distances", cv.distances}, {"running_slope", running},
           {"noise_floor", cv.floor},   {"expectation", cv.expectation}, {"notes", cv.notes}};
    if (cv.expected_order > 0.0) c["expected_order"] = cv.expected_order;
    if (cv.fit) c["fit"] = {{"slope", cv.fit->slope}, {"residual", cv.fit->residual}, {"points", cv.fit->used}};
    out["convergence"] = c;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared machinery

namespace detail {

/// Evaluates f(0..n-1) on a worker pool; results in index order, so the
/// output does not depend on scheduling.
template <typename T>
std::vector<T> parallel_map(int n, int threads, const std::function<T(int)>& f) {
  std::vector<std::optional<T>> out(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> err(static_cast<std::size_t>(n));
  int workers = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::max(1, std::min(workers, n));
  std::atomic<int> next{0};
  auto work = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        out[static_cast<std::size_t>(i)] = f(i);
      } catch (...) {
        err[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : err)
    if (e) std::rethrow_exception(e);
  std::vector<T> r;
  r.reserve(out.size());
  for (auto& o : out) r.push_back(std::move(*o));
  return r;
}

inline double rel_err(const GradedTensor& a, const GradedTensor& b) {
  return norm(a - b) / std::max(1.0, std::max(norm(a), norm(b)));
}

/// Gaussian Lie element with every degree present, scaled by `scale`.
inline LieCoordinates gaussian_lie(const HallBasisPtr& b, std::uint64_t seed, double scale = 1.0) {
  return scale * random_lie(b, seed, std::vector<double>(static_cast<std::size_t>(b->params().kappa), 1.0));
}

inline ControlPath random_pwc_path(const HallBasisPtr& b, std::uint64_t seed, int pieces, double scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> len(0.2, 1.0);
  std::vector<double> bp{0.0};
  std::vector<LieCoordinates> vals;
  for (int i = 0; i < pieces; ++i) {
    bp.push_back(bp.back() + len(rng));
    vals.push_back(gaussian_lie(b, seed * 1000003ULL + static_cast<std::uint64_t>(i), scale));
  }
  return ControlPath::piecewise_constant(std::move(bp), std::move(vals));
}

inline bool is_linear_field(const PolyVectorField& f) {
  for (const auto& p : f.components())
    for (const auto& [m, c] : p.terms()) {
      int deg = 0;
      for (int e : m) deg += e;
      if (deg != 1) return false;
    }
  return true;
}

}  // namespace detail

/// A resolved experiment: basis, system and control path.
struct Experiment {
  ExperimentConfig cfg;
  HallBasisPtr basis;
  std::optional<DynamicalSystem> system;
  std::optional<ControlPath> path;
  FlowConfig flow_cfg;

  const DynamicalSystem& sys() const { return *system; }
  const ControlPath& control() const { return *path; }
  std::vector<double> psi_minus() const {
    auto c = psi_minus_coeffs(cfg.kappa);
    if (cfg.corrupt_psi_minus && c.size() > 1) c[1] = -c[1];
    return c;
  }
  bool linear_system() const {
    if (!sys().manifold().is_flat()) return false;
    for (const auto& f : sys().base_fields())
      if (!detail::is_linear_field(f)) return false;
    return true;
  }
  /// M(A) = DV_A, exact for linear systems.
  Eigen::MatrixXd linear_matrix(const LieCoordinates& a) const {
    return sys().jacobian(a.coeffs(), Eigen::VectorXd::Zero(sys().dim()));
  }
};

inline DynamicalSystem make_system(const ExperimentConfig& cfg, const HallBasisPtr& basis) {
  if (cfg.system.is_object()) return io::system_from_json(cfg.system, basis);
  if (!cfg.system.is_string()) throw ConfigError("config: system must be a name or an object");
  const std::string name = cfg.system.get<std::string>();
  if (name == "heisenberg") return systems::heisenberg(basis);
  if (name == "polyquad") return systems::polyquad(basis);
  if (name == "so3") return systems::so3(basis);
  if (name == "linear") {
    if (!cfg.matrices.is_null()) {
      std::vector<Eigen::MatrixXd> m;
      for (const auto& x : cfg.matrices) m.push_back(io::matrix_from_json(x, "matrices"));
      if (static_cast<int>(m.size()) != cfg.d) throw ConfigError("config: linear system needs d matrices");
      for (const auto& x : m)
        if (x.rows() != m.front().rows()) throw ConfigError("config: linear matrices must share a size");
      return systems::linear(basis, m);
    }
    if (cfg.linear_n < 1) throw ConfigError("config: linear_n must be >= 1");
    return systems::linear(basis, cfg.linear_n, cfg.system_seed, cfg.linear_scale);
  }
  throw ConfigError("config: unknown system '" + name + "'");
}

inline Experiment resolve(const ExperimentConfig& cfg) {
  Experiment e;
  e.cfg = cfg;
  e.basis = build_hall_basis(AlgebraParams(cfg.d, cfg.kappa));
  e.system.emplace(make_system(cfg, e.basis));
  if (cfg.path.is_null()) {
    e.path.emplace(detail::random_pwc_path(e.basis, cfg.seed, cfg.random_pieces, cfg.path_scale));
  } else {
    try {
      e.path.emplace(io::path_from_json(cfg.path, e.basis));
    } catch (const DomainError& ex) {
      throw ConfigError(std::string("config: bad path: ") + ex.what());
    } catch (const json::exception& ex) {
      throw ConfigError(std::string("config: bad path: ") + ex.what());
    }
  }
  e.flow_cfg.steps_per_unit = cfg.steps_per_unit;
  return e;
}

inline LieCoordinates lie_or_random(const json& j, const HallBasisPtr& b, std::uint64_t seed) {
  return j.is_null() ? random_unit_lie(b, seed) : io::lie_from_json(j, b);
}

/// Distances below this are treated as solver error.
inline double noise_floor(const FlowConfig& fc, double duration) { return 100.0 * fc.integrator_tolerance(duration); }

inline int magnus_steps(const Experiment& e) { return e.flow_cfg.steps_for(e.control().horizon()); }

inline MagnusMethod magnus_method(const ControlPath& p) {
  return p.is_piecewise_constant() ? MagnusMethod::chen : MagnusMethod::ode;
}

namespace detail {

/// Fills the convergence block and its checks from measured distances.
inline void finish_convergence(Report& r, const Experiment& e, std::vector<double> lambdas, std::vector<double> dist,
                               double floor, bool exact_expected, double order) {
  ConvergenceReport cv;
  cv.lambdas = std::move(lambdas);
  cv.distances = std::move(dist);
  cv.floor = floor;
  cv.running = running_slopes(cv.lambdas, cv.distances, floor);
  cv.expectation = e.cfg.expect == "auto" ? (exact_expected ? "exact" : "order") : e.cfg.expect;
  cv.expected_order = order;
  const int excluded = static_cast<int>(std::count_if(cv.distances.begin(), cv.distances.end(), [&](double d) { return d <= floor; }));
  if (excluded) cv.notes.push_back(std::to_string(excluded) + " distance(s) at or below the noise floor excluded from the fit");
  try {
    cv.fit = fit_slope(cv.lambdas, cv.distances, floor);
  } catch (const DomainError&) {
  }
  const double maxd = *std::max_element(cv.distances.begin(), cv.distances.end());
  if (cv.expectation == "exact") {
    r.check_le("distance_at_noise_floor", maxd, floor, "exact identity expected; all distances at integrator noise");
  } else if (cv.expectation == "order") {
    if (cv.fit)
      r.check_ge("fitted_slope", cv.fit->slope, order - e.cfg.slope_margin,
                 "expected small-lambda exponent " + format_double(order));
    else
      r.fail("fitted_slope", "fewer than 3 distances above the noise floor");
  }
  r.table.header = {"lambda", "distance", "running_slope", "ratio_to_order"};
  for (std::size_t i = 0; i < cv.lambdas.size(); ++i) {
    const double ratio = cv.distances[i] / std::pow(cv.lambdas[i], order);
    r.table.rows.push_back({format_double(cv.lambdas[i]), format_double(cv.distances[i]),
                            std::isfinite(cv.running[i]) ? format_double(cv.running[i]) : std::string(), format_double(ratio)});
  }
  r.plot_x = 1;
  r.plot_y = 2;
  r.plot_xlabel = "lambda";
  r.plot_ylabel = "distance";
  r.convergence = std::move(cv);
}

inline void describe(Report& r, const Experiment& e) {
  r.details["d"] = e.cfg.d;
  r.details["kappa"] = e.cfg.kappa;
  r.details["system"] = e.sys().name();
  r.details["manifold"] = e.sys().manifold().name();
  r.details["dimension"] = e.sys().dim();
  r.details["seed"] = e.cfg.seed;
  r.details["steps_per_unit"] = e.cfg.steps_per_unit;
  r.details["integrator_tolerance_per_unit"] = e.flow_cfg.integrator_tolerance(1.0);
  const int step = e.sys().nilpotency_step();
  r.details["nilpotency_step"] = step < 0 ? json(nullptr) : json(step);
}

inline bool nilpotent_within_truncation(const Experiment& e) {
  const int step = e.sys().nilpotency_step();
  return step >= 0 && step <= e.cfg.kappa;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands

/// Flow of the dilated control against the exponential of its Magnus log.
inline Report cmd_dilation_order(const ExperimentConfig& cfg) {
  const Experiment e = resolve(cfg);
  Report r;
  r.command = "dilation-order";
  detail::describe(r, e);
  const ControlPath& base = e.control();
  const double T = base.horizon();
  const int steps = magnus_steps(e);
  const auto pts = sample_points(e.sys().manifold(), cfg.samples, cfg.seed + 101, cfg.region_radius);
  struct Row {
    double dist, residual;
  };
  const auto rows = detail::parallel_map<Row>(static_cast<int>(cfg.lambdas.size()), cfg.threads, [&](int i) {
    const ControlPath p = dilate(base, cfg.lambdas[static_cast<std::size_t>(i)]);
    const GroupElement g = magnus_method(p) == MagnusMethod::chen ? chen_product(p, T) : group_ode_solve(p, T, steps);
    const auto pr = project_to_lie(log(g), e.basis);
    const LieCoordinates& c = pr.coords;
    const double d = dist_map(
        e.sys().manifold(), [&](const Eigen::VectorXd& m) { return flow(e.sys(), p, m, 0.0, T, e.flow_cfg); },
        [&](const Eigen::VectorXd& m) { return exp_flow(e.sys(), c, m, e.flow_cfg); }, pts);
    return Row{d, pr.residual};
  });
  std::vector<double> dist;
  double maxres = 0.0;
  for (const auto& row : rows) {
    dist.push_back(row.dist);
    maxres = std::max(maxres, row.residual);
  }
  r.check_le("lie_residual", maxres, kMagnusLieTolerance);
  r.details["path"] = base.is_piecewise_constant() || !base.smooth_rep().poly.empty() ? io::to_json(base) : json("smooth");
  r.details["samples"] = cfg.samples;
  r.plot_title = "dilation order: " + e.sys().name() + ", kappa=" + std::to_string(cfg.kappa);
  detail::finish_convergence(r, e, cfg.lambdas, std::move(dist), noise_floor(e.flow_cfg, std::max(T, 1.0)),
                             detail::nilpotent_within_truncation(e), cfg.kappa + 1.0);
  return r;
}

/// e^{V_B} o e^{V_A} against e^{V_{bch(A,B)}} under dilation.
inline Report cmd_bch_order(const ExperimentConfig& cfg) {
  const Experiment e = resolve(cfg);
  Report r;
  r.command = "bch-order";
  detail::describe(r, e);
  const LieCoordinates A = lie_or_random(cfg.A, e.basis, cfg.seed + 11);
  const LieCoordinates B = lie_or_random(cfg.B, e.basis, cfg.seed + 12);
  r.details["A"] = io::to_json(A);
  r.details["B"] = io::to_json(B);
  const auto pts = sample_points(e.sys().manifold(), cfg.samples, cfg.seed + 101, cfg.region_radius);
  const auto dist = detail::parallel_map<double>(static_cast<int>(cfg.lambdas.size()), cfg.threads, [&](int i) {
    const double lam = cfg.lambdas[static_cast<std::size_t>(i)];
    const LieCoordinates a = dilate(A, lam), b = dilate(B, lam), c = bch(a, b);
    return dist_map(
        e.sys().manifold(),
        [&](const Eigen::VectorXd& m) { return exp_flow(e.sys(), b, exp_flow(e.sys(), a, m, e.flow_cfg), e.flow_cfg); },
        [&](const Eigen::VectorXd& m) { return exp_flow(e.sys(), c, m, e.flow_cfg); }, pts);
  });
  // The composition is the time-2 flow of the two-piece path [A, B].
  const ControlPath two = ControlPath::piecewise_constant({A, B});
  const double two_piece = dist_map(
      e.sys().manifold(),
      [&](const Eigen::VectorXd& m) { return exp_flow(e.sys(), B, exp_flow(e.sys(), A, m, e.flow_cfg), e.flow_cfg); },
      [&](const Eigen::VectorXd& m) { return flow(e.sys(), two, m, 0.0, 2.0, e.flow_cfg); }, pts);
  r.check_le("two_piece_flow", two_piece, 10.0 * e.flow_cfg.integrator_tolerance(2.0),
             "composition equals the flow of the two-piece path");
  const bool trivial = A.coeffs().isZero(0.0) || B.coeffs().isZero(0.0);
  r.plot_title = "BCH order: " + e.sys().name() + ", kappa=" + std::to_string(cfg.kappa);
  detail::finish_convergence(r, e, cfg.lambdas, dist, noise_floor(e.flow_cfg, 2.0),
                             trivial || detail::nilpotent_within_truncation(e), cfg.kappa + 1.0);
  return r;
}

/// Differential of the flow against the differential of the exponential.
inline Report cmd_pushforward_order(const ExperimentConfig& cfg) {
  const Experiment e = resolve(cfg);
  if (!e.sys().manifold().is_flat())
    throw ConfigError("pushforward-order: unsupported manifold '" + e.sys().manifold().name() + "' (flat space only)");
  Report r;
  r.command = "pushforward-order";
  detail::describe(r, e);
  const ControlPath& base = e.control();
  const double T = base.horizon();
  const int steps = magnus_steps(e);
  const auto tangents = sample_unit_tangents(e.sys().manifold(), cfg.tangent_samples, cfg.seed + 202, cfg.region_radius);
  const bool oracle = e.linear_system() && base.is_piecewise_constant();
  struct Row {
    double dist, residual, oracle_gap;
  };
  const auto rows = detail::parallel_map<Row>(static_cast<int>(cfg.lambdas.size()), cfg.threads, [&](int i) {
    const ControlPath p = dilate(base, cfg.lambdas[static_cast<std::size_t>(i)]);
    const GroupElement g = magnus_method(p) == MagnusMethod::chen ? chen_product(p, T) : group_ode_solve(p, T, steps);
    const auto pr = project_to_lie(log(g), e.basis);
    auto fstar = [&](const TangentSample& s) { return pushforward_flow(e.sys(), p, s, 0.0, T, e.flow_cfg); };
    auto gstar = [&](const TangentSample& s) { return exp_pushforward(e.sys(), pr.coords, s, e.flow_cfg); };
    const double d = dist_dmap(e.sys().manifold(), fstar, gstar, tangents);
    double gap = 0.0;
    if (oracle) {
      Eigen::MatrixXd F = Eigen::MatrixXd::Identity(e.sys().dim(), e.sys().dim());
      const auto& pc = p.pieces();
      for (std::size_t k = 0; k < pc.values.size(); ++k)
        F = ((pc.breakpoints[k + 1] - pc.breakpoints[k]) * e.linear_matrix(pc.values[k])).exp() * F;
      const Eigen::MatrixXd G = e.linear_matrix(pr.coords).exp();
      double od = 0.0;
      for (const auto& s : tangents) {
        const auto a = fstar(s), b = gstar(s);
        const Eigen::VectorXd fm = F * s.point, fv = F * s.vector, gm = G * s.point, gv = G * s.vector;
        gap = std::max(gap, std::sqrt((a.point - fm).squaredNorm() + (a.vector - fv).squaredNorm()) / std::max(1.0, fm.norm()));
        gap = std::max(gap, std::sqrt((b.point - gm).squaredNorm() + (b.vector - gv).squaredNorm()) / std::max(1.0, gm.norm()));
        od = std::max(od, std::sqrt(((F - G) * s.point).squaredNorm() + ((F - G) * s.vector).squaredNorm()));
      }
      gap = std::max(gap, std::abs(od - d));
    }
    return Row{d, pr.residual, gap};
  });
  std::vector<double> dist;
  double maxres = 0.0, maxgap = 0.0;
  for (const auto& row : rows) {
    dist.push_back(row.dist);
    maxres = std::max(maxres, row.residual);
    maxgap = std::max(maxgap, row.oracle_gap);
  }
  r.check_le("lie_residual", maxres, kMagnusLieTolerance);
  if (oracle) r.check_le("matrix_oracle_agreement", maxgap, 1e-9, "RK4 pushforwards against matrix exponentials");
  r.details["tangent_samples"] = cfg.tangent_samples;
  r.plot_title = "pushforward order: " + e.sys().name() + ", kappa=" + std::to_string(cfg.kappa);
  detail::finish_convergence(r, e, cfg.lambdas, std::move(dist), noise_floor(e.flow_cfg, std::max(T, 1.0)),
                             detail::nilpotent_within_truncation(e), cfg.kappa + 1.0);
  return r;
}

/// Chen, group-ODE and C-ODE logarithms across step counts.
inline Report cmd_magnus_compare(const ExperimentConfig& cfg) {
  const Experiment e = resolve(cfg);
  Report r;
  r.command = "magnus-compare";
  detail::describe(r, e);
  const ControlPath& p = e.control();
  const double T = p.horizon();
  const bool pwc = p.is_piecewise_constant();
  const auto psi = e.psi_minus();
  std::vector<int> steps = cfg.step_counts;
  std::sort(steps.begin(), steps.end());
  const int finest = steps.back();

  const GradedTensor ref = pwc ? log(chen_product(p, T)).tensor() : log(group_ode_solve(p, T, 4 * finest)).tensor();
  r.details["reference"] = pwc ? "chen" : "group-ode at 4x the finest step count";
  r.details["reference_log"] = io::to_json(ref);

  struct Row {
    GradedTensor ode, code;
    double ode_res, code_res;
  };
  const auto rows = detail::parallel_map<Row>(static_cast<int>(steps.size()), cfg.threads, [&](int i) {
    const int n = steps[static_cast<std::size_t>(i)];
    const AlgebraElement lo = log(group_ode_solve(p, T, n));
    const AlgebraElement lc = c_ode_trajectory(p, T, n, psi).values.back();
    return Row{lo.tensor(), lc.tensor(), project_to_lie(lo, e.basis).residual, project_to_lie(lc, e.basis).residual};
  });

  std::vector<double> e_ode, e_code;
  double maxres = pwc ? project_to_lie(AlgebraElement(ref), e.basis).residual : 0.0, agree = 0.0;
  r.table.header = {"steps", "ode_vs_ref", "code_vs_ref", "ode_vs_code", "ode_ratio", "code_ratio"};
  for (std::size_t i = 0; i < steps.size(); ++i) {
    e_ode.push_back(norm(rows[i].ode - ref));
    e_code.push_back(norm(rows[i].code - ref));
    if (steps[i] >= 1024 || steps[i] == finest) {
      maxres = std::max({maxres, rows[i].ode_res, rows[i].code_res});
      agree = std::max({agree, e_ode.back(), e_code.back()});
    }
  }
  for (std::size_t i = 0; i < steps.size(); ++i) {
    auto ratio = [&](const std::vector<double>& err) {
      return i > 0 && steps[i] == 2 * steps[i - 1] && err[i] > 0.0 ? format_double(err[i - 1] / err[i]) : std::string();
    };
    r.table.rows.push_back({std::to_string(steps[i]), format_double(e_ode[i]), format_double(e_code[i]),
                            format_double(norm(rows[i].ode - rows[i].code)), ratio(e_ode), ratio(e_code)});
  }
  r.check_le("lie_residual", maxres, kMagnusLieTolerance, "resolved step counts (>= 1024 or the finest)");
  r.check_le("three_way_agreement", agree, 1e-8, "max distance to the reference at >= 1024 steps (or the finest)");

  // Fourth order: the finest halving pair whose finer error is well above
  // roundoff, per solver column.
  const double resolvable = 1e-11 * std::max(1.0, norm(ref));
  int resolved = 0;
  for (const auto& [name, err] : {std::pair<std::string, const std::vector<double>&>{"ode", e_ode}, {"code", e_code}}) {
    std::optional<double> ratio;
    for (std::size_t i = 1; i < steps.size(); ++i)
      if (steps[i] == 2 * steps[i - 1] && err[i] > resolvable) ratio = err[i - 1] / err[i];
    if (ratio) {
      ++resolved;
      r.check_range(name + "_step_halving_ratio", *ratio, 16.0 * 0.7, 16.0 * 1.3, "fourth-order RK4");
    } else {
      r.details[name + "_order_note"] = "errors at roundoff for every step count: " + name + " column exact on this path";
    }
  }
  if (cfg.kappa == 1) {
    // Abelian: every column is the plain integral of the rate.
    GradedTensor integral(e.basis->params());
    if (pwc) {
      for (std::size_t k = 0; k < p.pieces().values.size(); ++k)
        integral += (p.pieces().breakpoints[k + 1] - p.pieces().breakpoints[k]) * p.pieces().values[k].to_tensor().tensor();
    } else {
      integral = ref;
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < steps.size(); ++i)
      worst = std::max({worst, norm(rows[i].ode - integral), norm(rows[i].code - integral)});
    if (pwc) worst = std::max(worst, norm(ref - integral));
    r.check_le("abelian_integral", worst, 1e-14);
  } else if (!resolved) {
    r.details["order_note"] = "no solver column resolvable above roundoff";
  }

  // Monitored ratio N*(C') / N*(xi') along the finest C-ODE trajectory.
  const auto tr = c_ode_trajectory(p, T, finest, psi);
  PathNorms cn;
  cn.per_degree.assign(static_cast<std::size_t>(cfg.kappa), 0.0);
  for (std::size_t i = 0; i + 1 < tr.times.size(); ++i) {
    const double h = tr.times[i + 1] - tr.times[i];
    for (int k = 1; k <= cfg.kappa; ++k)
      cn.per_degree[static_cast<std::size_t>(k - 1)] += 0.5 * h * (tr.rates[i].level(k).norm() + tr.rates[i + 1].level(k).norm());
  }
  const double nx = path_norms(p, T).homogeneous();
  r.details["monitored_ratio"] = nx > 0.0 ? json(cn.homogeneous() / nx) : json(nullptr);
  r.plot_title = "Magnus solvers: distance to reference";
  r.plot_x = 1;
  r.plot_y = 3;
  r.plot_xlabel = "steps";
  r.plot_ylabel = "distance";
  return r;
}

/// Finite-difference check of d/dt e^{V_C(t)} = W_t^C o e^{V_C(t)}.
inline Report cmd_w_field_check(const ExperimentConfig& cfg) {
  const Experiment e = resolve(cfg);
  Report r;
  r.command = "w-field-check";
  detail::describe(r, e);
  const ControlPath& p = e.control();
  const double T = p.horizon();
  std::vector<double> hs = cfg.h_list;
  std::sort(hs.rbegin(), hs.rend());
  const double hmax = hs.front();
  double t = cfg.w_time;
  if (t < 0.0) {
    if (p.is_piecewise_constant()) {
      const auto& bp = p.pieces().breakpoints;
      std::size_t best = 0;
      for (std::size_t i = 1; i + 1 < bp.size(); ++i)
        if (bp[i + 1] - bp[i] > bp[best + 1] - bp[best]) best = i;
      t = 0.5 * (bp[best] + bp[best + 1]);
    } else {
      t = 0.5 * T;
    }
  }
  if (!(t - hmax >= 0.0 && t + hmax <= T)) throw ConfigError("w-field-check: t +- h must lie in [0, T]");
  if (p.is_piecewise_constant()) {
    const std::size_t k = p.piece_index(t);
    if (t - hmax < p.pieces().breakpoints[k] || t + hmax > p.pieces().breakpoints[k + 1])
      throw ConfigError("w-field-check: t +- h must stay inside one constant piece");
  }
  const int steps = magnus_steps(e);
  const MagnusMethod method = magnus_method(p);
  auto C = [&](double s) { return magnus_log(p, s, method, std::max(1, static_cast<int>(std::lround(steps * s / T)))); };
  const LieCoordinates c = C(t);
  const LieCoordinates cdot =
      require_lie(ad_series_apply(psi_minus_coeffs(cfg.kappa), c.to_tensor(), p.rate(t).to_tensor()), e.basis,
                  kMagnusLieTolerance, "w-field-check");
  r.details["t"] = t;
  r.details["C"] = io::to_json(c);
  r.details["Cdot"] = io::to_json(cdot);
  const auto& M = e.sys().manifold();
  const auto pts = sample_points(M, cfg.samples, cfg.seed + 303, cfg.region_radius);
  const auto images = detail::parallel_map<Eigen::VectorXd>(
      static_cast<int>(pts.size()), cfg.threads, [&](int i) { return exp_flow(e.sys(), c, pts[static_cast<std::size_t>(i)], e.flow_cfg); });
  const auto w = detail::parallel_map<Eigen::VectorXd>(static_cast<int>(pts.size()), cfg.threads, [&](int i) {
    return w_field_eval(e.sys(), c, cdot, images[static_cast<std::size_t>(i)], cfg.squad, e.flow_cfg);
  });

  // Ad fixes its generator, so W = V_{C'} whenever C' is parallel to C.
  const double cn = c.coeffs().norm(), dn = cdot.coeffs().norm();
  const bool parallel =
      cn == 0.0 || (cdot.coeffs() - (cdot.coeffs().dot(c.coeffs()) / (cn * cn)) * c.coeffs()).norm() <= 1e-12 * std::max(1.0, dn);
  if (parallel) {
    const PolyVectorField vd = system_extend(e.sys(), cdot);
    double gen = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) gen = std::max(gen, (w[i] - vd(images[i])).norm());
    r.check_le("w_equals_generator", gen, noise_floor(e.flow_cfg, 1.0), "C' parallel to C");
  }

  std::vector<double> res, floors;
  for (double h : hs) {
    const LieCoordinates cp = C(t + h), cm = C(t - h);
    const auto diffs = detail::parallel_map<double>(static_cast<int>(pts.size()), cfg.threads, [&](int i) {
      const auto& m = pts[static_cast<std::size_t>(i)];
      const Eigen::VectorXd fd = (exp_flow(e.sys(), cp, m, e.flow_cfg) - exp_flow(e.sys(), cm, m, e.flow_cfg)) / (2.0 * h);
      return (fd - w[static_cast<std::size_t>(i)]).norm();
    });
    res.push_back(*std::max_element(diffs.begin(), diffs.end()));
    floors.push_back(noise_floor(e.flow_cfg, 1.0) / h);
  }
  r.table.header = {"h", "residual", "ratio"};
  for (std::size_t i = 0; i < hs.size(); ++i)
    r.table.rows.push_back({format_double(hs[i]), format_double(res[i]), i ? format_double(res[i - 1] / res[i]) : std::string()});

  bool all_floor = true;
  for (std::size_t i = 0; i < hs.size(); ++i) all_floor = all_floor && res[i] <= floors[i];
  const std::string expect = cfg.expect == "auto" ? (all_floor ? "exact" : "order") : cfg.expect;
  if (expect == "exact") {
    double worst = 0.0;
    for (std::size_t i = 0; i < hs.size(); ++i) worst = std::max(worst, res[i] / floors[i]);
    r.check_le("residual_over_floor", worst, 1.0, "identity exact up to integrator noise");
  } else if (expect == "order") {
    int checked = 0;
    for (std::size_t i = 1; i < hs.size(); ++i) {
      if (res[i] <= floors[i]) continue;
      const double expected = std::pow(hs[i - 1] / hs[i], 2.0);
      r.check_range("halving_ratio_h=" + format_double(hs[i]), res[i - 1] / res[i], 0.8 * expected, 1.2 * expected,
                    "second-order central difference");
      ++checked;
    }
    if (!checked) r.fail("halving_ratio", "every residual at the noise floor; no trend to measure");
  }
  r.details["max_residual"] = *std::max_element(res.begin(), res.end());
  r.details["expectation"] = expect;
  r.plot_title = "flow-derivative identity: residual vs h";
  r.plot_xlabel = "h";
  r.plot_ylabel = "residual";
  return r;
}

/// Algebraic and flow identities at the configured (d, kappa).
inline Report cmd_identity_suite(const ExperimentConfig& cfg) {
  const Experiment e = resolve(cfg);
  Report r;
  r.command = "identity-suite";
  detail::describe(r, e);
  const AlgebraParams& prm = e.basis->params();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> g;
  auto rand_alg = [&] {
    GradedTensor t(prm);
    for (Eigen::Index i = 1; i < t.coeffs().size(); ++i) t.coeffs()[i] = g(rng);
    return AlgebraElement(std::move(t));
  };
  auto rand_grp = [&] {
    GradedTensor t = rand_alg().tensor();
    t.set_scalar_part(1.0);
    return GroupElement(std::move(t));
  };
  double round = 0.0, assoc = 0.0, inv = 0.0, jacobi = 0.0, adexp = 0.0, tri = 0.0, grade = 0.0;
  for (int i = 0; i < cfg.cases; ++i) {
    const AlgebraElement a = rand_alg(), b = rand_alg(), c = rand_alg();
    round = std::max(round, detail::rel_err(log(exp(a)).tensor(), a.tensor()));
    const GroupElement x = rand_grp(), y = rand_grp(), z = rand_grp();
    assoc = std::max(assoc, detail::rel_err(mul(mul(x, y), z).tensor(), mul(x, mul(y, z)).tensor()));
    inv = std::max(inv, detail::rel_err(mul(x, inverse(x)).tensor(), GradedTensor::unit(prm)));
    const GradedTensor jac =
        bracket(a.tensor(), bracket(b.tensor(), c.tensor())) + bracket(b.tensor(), bracket(c.tensor(), a.tensor())) +
        bracket(c.tensor(), bracket(a.tensor(), b.tensor()));
    jacobi = std::max(jacobi, norm(jac) / std::max(1.0, norm(a) * norm(b) * norm(c)));
    if (i < 100) adexp = std::max(adexp, operator_exp(ad_operator(a)).frobenius_distance(conjugation_operator(exp(a))));
    const double na = hom_norm(a), nb = hom_norm(b);
    tri = std::max(tri, hom_norm(a + b) - (na + nb));
    const GradedTensor ab = mul_extended(a, b);
    for (int k = 2; k <= 2 * prm.kappa; ++k)
      grade = std::max(grade, ab.level(k).norm() - na * nb * std::pow(na + nb, k - 2));
  }
  r.check_le("exp_log_round_trip", round, 1e-12);
  r.check_le("group_associativity", assoc, 1e-12);
  r.check_le("group_inverse", inv, 1e-12);
  r.check_le("jacobi", jacobi, 1e-12);
  r.check_le("ad_exp_conjugation", adexp, 1e-12, "Frobenius distance");
  r.check_le("hom_norm_triangle", tri, 1e-13, "excess over N(A) + N(B)");
  r.check_le("graded_product_bound", grade, 1e-13, "excess over N(A) N(B) (N(A)+N(B))^(k-2)");

  // Series identities with the coefficients the C-ODE will use.
  const auto psi = e.psi_minus();
  const auto prod = series_product(psi, [&] {
    auto p = psi_coeffs(prm.kappa);
    for (std::size_t k = 1; k < p.size(); k += 2) p[k] = -p[k];
    return p;
  }(), prm.kappa);
  double series = std::abs(prod[0] - 1.0);
  for (std::size_t k = 1; k < prod.size(); ++k) series = std::max(series, std::abs(prod[k]));
  r.check_le("psi_minus_inverts_psi", series, 1e-15, "psi_-(z) psi(-z) = 1");

  const ControlPath& p = e.control();
  const double T = p.horizon();
  const int steps = std::max(1024, magnus_steps(e));
  const GradedTensor ode = log(group_ode_solve(p, T, steps)).tensor();
  const GradedTensor code = c_ode_trajectory(p, T, steps, psi).values.back().tensor();
  const GradedTensor ref = p.is_piecewise_constant() ? log(chen_product(p, T)).tensor() : ode;
  r.check_le("c_ode_vs_chen", norm(code - ref), 1e-8, cfg.corrupt_psi_minus ? "psi_- coefficients corrupted" : "");
  r.check_le("group_ode_vs_chen", norm(ode - ref), 1e-8);
  r.check_le("lie_residual", project_to_lie(AlgebraElement(ref), e.basis).residual, kMagnusLieTolerance);

  // Vector-field homomorphism on degree-1 inputs.
  double hom = 0.0;
  const auto pts = sample_points(e.sys().manifold(), cfg.samples, cfg.seed + 404, cfg.region_radius);
  if (prm.kappa >= 2) {
    for (int i = 0; i < 10; ++i) {
      LieCoordinates a = random_lie(e.basis, cfg.seed + 500 + i, std::vector<double>(static_cast<std::size_t>(prm.kappa), 0.0));
      LieCoordinates b = a;
      std::normal_distribution<double> u;
      for (int k = 0; k < prm.d; ++k) a.coeffs()[k] = u(rng), b.coeffs()[k] = u(rng);
      const auto direct = vf_bracket(system_extend(e.sys(), a), system_extend(e.sys(), b));
      const auto via = system_extend(e.sys(), lie_bracket(a, b));
      for (const auto& m : pts) hom = std::max(hom, (direct(m) - via(m)).norm());
    }
  }
  r.check_le("field_homomorphism", hom, 1e-10);

  // Flow group law and inverse flow.
  const double s1 = 0.35 * T, s0 = 0.1 * T;
  double law = 0.0, invf = 0.0, growth = 1.0;
  const auto& M = e.sys().manifold();
  for (const auto& m : pts) {
    growth = std::max(growth, flow(e.sys(), p, m, 0.0, T, e.flow_cfg).norm() / std::max(1e-300, m.norm()));
    const auto direct = flow(e.sys(), p, m, s0, T, e.flow_cfg);
    const auto composed = flow(e.sys(), p, flow(e.sys(), p, m, s0, s1, e.flow_cfg), s1, T, e.flow_cfg);
    law = std::max(law, dist_M(M, direct, composed));
    invf = std::max(invf, dist_M(M, flow(e.sys(), p, flow(e.sys(), p, m, 0.0, T, e.flow_cfg), T, 0.0, e.flow_cfg), m));
  }
  const double ftol = 10.0 * e.flow_cfg.integrator_tolerance(T);
  const std::string gnote = growth > 100.0 ? "flow expands samples by " + format_double(growth) + "; roundoff is amplified accordingly" : "";
  r.check_le("flow_group_law", law, ftol, gnote);
  r.check_le("flow_inverse", invf, ftol, gnote);
  r.details["flow_growth"] = growth;
  r.details["cases"] = cfg.cases;
  r.table.header = {"check", "value", "passed"};
  for (const auto& c : r.checks) r.table.rows.push_back({c.name, format_double(c.value), c.passed ? "1" : "0"});
  return r;
}

/// Hall basis listing.
inline Report cmd_hall_basis(const ExperimentConfig& cfg) {
  const auto b = build_hall_basis(AlgebraParams(cfg.d, cfg.kappa));
  Report r;
  r.command = "hall-basis";
  r.details = io::to_json(*b);
  for (int k = 1; k <= cfg.kappa; ++k)
    r.check_range("witt_dimension_" + std::to_string(k), b->degree_count(k), witt_dimension(cfg.d, k), witt_dimension(cfg.d, k));
  r.table.header = {"index", "degree", "bracket"};
  for (std::size_t i = 0; i < b->size(); ++i)
    r.table.rows.push_back({std::to_string(i), std::to_string(b->words()[i].degree), "\"" + b->bracket_string(static_cast<int>(i)) + "\""});
  return r;
}

/// Sampled dynamical-system norms.
inline Report cmd_norms(const ExperimentConfig& cfg) {
  const Experiment e = resolve(cfg);
  Report r;
  r.command = "norms";
  detail::describe(r, e);
  const auto pts = sample_points(e.sys().manifold(), cfg.samples, cfg.seed + 505, cfg.region_radius);
  const std::string region = e.sys().manifold().is_flat() ? "[-" + format_double(cfg.region_radius) + "," +
                                                                 format_double(cfg.region_radius) + "]^" + std::to_string(e.sys().dim())
                                                           : "sphere";
  const DynNorms n = estimate_dyn_norms(e.sys(), pts, cfg.lie_samples, cfg.seed, region);
  r.details["norms"] = io::to_json(n, cfg.kappa);
  r.check_le("c0_within_bound", n.c0.value, n.c0_bound(cfg.kappa) * (1 + 1e-12), "C0 <= kappa(kappa+1)|V||grad V|");
  r.check_le("c1_within_bound", n.c1.value, n.c1_bound(cfg.kappa) * (1 + 1e-12),
             "C1 <= kappa(kappa+1)(|grad^2 V||V| + |grad V|^2)");
  r.table.header = {"quantity", "value"};
  for (const auto& q : n.all()) r.table.rows.push_back({"\"" + q.quantity + "\"", format_double(q.value)});
  return r;
}

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"identity-suite", "dilation-order", "bch-order",  "pushforward-order",
                                              "magnus-compare", "w-field-check",  "hall-basis", "norms"};
  return names;
}

inline Report run_command(const std::string& name, const ExperimentConfig& cfg) {
  if (name == "identity-suite") return cmd_identity_suite(cfg);
  if (name == "dilation-order") return cmd_dilation_order(cfg);
  if (name == "bch-order") return cmd_bch_order(cfg);
  if (name == "pushforward-order") return cmd_pushforward_order(cfg);
  if (name == "magnus-compare") return cmd_magnus_compare(cfg);
  if (name == "w-field-check") return cmd_w_field_check(cfg);
  if (name == "hall-basis") return cmd_hall_basis(cfg);
  if (name == "norms") return cmd_norms(cfg);
  throw ConfigError("unknown command '" + name + "'");
}

/// Writes <out>/<command>.json, .csv and .gp.
inline void write_report(const Report& r, const std::string& out_dir) {
  const std::string base = out_dir + "/" + r.command;
  io::write_text(base + ".json", to_json(r).dump(2) + "\n");
  io::write_text(base + ".csv", r.table.str());
  if (!r.plot_title.empty())
    io::write_text(base + ".gp", io::gnuplot_script(r.command + ".csv", r.plot_title, r.plot_x, r.plot_y, r.plot_xlabel,
                                                    r.plot_ylabel));
}

}  // namespace trunclog

#endif  // TRUNCLOG_EXPERIMENTS_HPP
