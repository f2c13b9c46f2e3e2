#ifndef TRUNCLOG_FLOWS_HPP
#define TRUNCLOG_FLOWS_HPP

// Dynamical systems w -> V_w on flat R^n or the unit sphere S^n in R^{n+1},
// their extension to F^(kappa) by nested brackets, flows, pushforwards,
// adjoint actions and distances between maps.

#include <Eigen/Dense>

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "trunclog/errors.hpp"
#include "trunclog/free_lie.hpp"
#include "trunclog/magnus.hpp"
#include "trunclog/poly.hpp"

namespace trunclog {

struct Manifold {
  enum class Kind { flat, sphere };
  Kind kind = Kind::flat;
  /// Dimension of the coordinate space: n for R^n, n+1 for S^n.
  int ambient = 1;

  static Manifold flat(int n) { return {Kind::flat, n}; }
  /// Unit sphere S^n embedded in R^{n+1}.
  static Manifold sphere(int n) { return {Kind::sphere, n + 1}; }

  bool is_flat() const { return kind == Kind::flat; }
  bool is_sphere() const { return kind == Kind::sphere; }
  std::string name() const { return is_flat() ? "flat" : "sphere"; }
};

inline constexpr double kManifoldTolerance = 1e-8;

inline void check_on_manifold(const Manifold& M, const Eigen::VectorXd& m, const char* where) {
  if (m.size() != M.ambient) throw DomainError(std::string(where) + ": point has wrong dimension");
  if (!m.allFinite()) throw DomainError(std::string(where) + ": point is not finite");
  if (M.is_sphere() && std::abs(m.norm() - 1.0) > kManifoldTolerance)
    throw DomainError(std::string(where) + ": point is off the unit sphere");
}

struct TangentSample {
  Eigen::VectorXd point;
  Eigen::VectorXd vector;
};

inline void check_tangent(const Manifold& M, const TangentSample& s, const char* where) {
  check_on_manifold(M, s.point, where);
  if (s.vector.size() != M.ambient) throw DomainError(std::string(where) + ": tangent vector has wrong dimension");
  if (M.is_sphere() && std::abs(s.point.dot(s.vector)) > kManifoldTolerance * std::max(1.0, s.vector.norm()))
    throw DomainError(std::string(where) + ": vector is not tangent to the sphere");
}

struct FlowConfig {
  /// RK4 steps per unit of integration time.
  int steps_per_unit = 4096;
  bool pushforward = false;

  int steps_for(double duration) const {
    if (steps_per_unit < 1) throw DomainError("FlowConfig: steps_per_unit must be >= 1");
    return std::max(1, static_cast<int>(std::ceil(steps_per_unit * std::abs(duration) - 1e-9)));
  }
  /// Per-step tolerance (one unit roundoff) times the number of steps.
  double integrator_tolerance(double duration) const { return DBL_EPSILON * steps_for(duration); }
};

class DynamicalSystem {
 public:
  /// Builds V_w for every Hall word by nested brackets of the base fields.
  DynamicalSystem(Manifold manifold, HallBasisPtr basis, std::vector<PolyVectorField> base_fields, std::string name = "custom")
      : manifold_(manifold), basis_(std::move(basis)), base_(std::move(base_fields)), name_(std::move(name)) {
    if (static_cast<int>(base_.size()) != basis_->params().d)
      throw DomainError("DynamicalSystem: need one base field per generator");
    for (const auto& f : base_)
      if (f.dim() != manifold_.ambient) throw DomainError("DynamicalSystem: field dimension must match the manifold");
    if (manifold_.is_sphere()) check_tangency();
    hall_.reserve(basis_->size());
    for (const auto& w : basis_->words()) {
      if (w.is_generator())
        hall_.push_back(base_[static_cast<std::size_t>(w.letter)]);
      else
        hall_.push_back(vf_bracket(hall_[static_cast<std::size_t>(w.left)], hall_[static_cast<std::size_t>(w.right)]));
    }
  }

  const Manifold& manifold() const { return manifold_; }
  const HallBasisPtr& basis() const { return basis_; }
  const std::vector<PolyVectorField>& base_fields() const { return base_; }
  const std::vector<PolyVectorField>& hall_fields() const { return hall_; }
  const PolyVectorField& hall_field(int i) const { return hall_[static_cast<std::size_t>(i)]; }
  const std::string& name() const { return name_; }
  int dim() const { return manifold_.ambient; }

  /// Smallest s such that every bracket field of degree s+1 vanishes
  /// identically, looking up to degree kappa+1; -1 if none does.
  int nilpotency_step() const {
    const int kappa = basis_->params().kappa;
    for (int k = 1; k <= kappa; ++k) {
      bool all_zero = true;
      const auto [b, e] = basis_->degree_range(k);
      for (int i = b; i < e; ++i) all_zero = all_zero && hall_[static_cast<std::size_t>(i)].is_zero();
      if (all_zero && e > b) return k - 1;
    }
    // Degree kappa+1 is spanned by [e_i, w] with w of degree kappa.
    const auto [b, e] = basis_->degree_range(kappa);
    for (const auto& f : base_)
      for (int i = b; i < e; ++i)
        if (!vf_bracket(f, hall_[static_cast<std::size_t>(i)]).is_zero()) return -1;
    return kappa;
  }

  /// V_A(x) with A given by Hall coordinates.
  Eigen::VectorXd eval(const Eigen::VectorXd& coeffs, const Eigen::VectorXd& x) const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim());
    for (Eigen::Index i = 0; i < coeffs.size(); ++i)
      if (coeffs[i] != 0.0) hall_[static_cast<std::size_t>(i)].add_value(x, coeffs[i], v);
    return v;
  }
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& coeffs, const Eigen::VectorXd& x) const {
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(dim(), dim());
    for (Eigen::Index i = 0; i < coeffs.size(); ++i)
      if (coeffs[i] != 0.0) hall_[static_cast<std::size_t>(i)].add_jacobian(x, coeffs[i], j);
    return j;
  }

 private:
  void check_tangency() const {
    std::mt19937_64 rng(12345);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int s = 0; s < 32; ++s) {
      Eigen::VectorXd x(manifold_.ambient);
      for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = g(rng);
      x.normalize();
      for (const auto& f : base_)
        if (std::abs(x.dot(f(x))) > 1e-12) throw DomainError("DynamicalSystem: sphere field is not tangent");
    }
  }

  Manifold manifold_;
  HallBasisPtr basis_;
  std::vector<PolyVectorField> base_;
  std::vector<PolyVectorField> hall_;
  std::string name_;
};

/// V_A = sum_w A_w V_w as a symbolic field.
inline PolyVectorField system_extend(const DynamicalSystem& sys, const LieCoordinates& a) {
  if (a.basis() != sys.basis() && !(a.params() == sys.basis()->params()))
    throw ParamsMismatch("system_extend: coordinates belong to a different Hall basis");
  PolyVectorField out(sys.dim());
  for (Eigen::Index i = 0; i < a.coeffs().size(); ++i)
    if (a[static_cast<int>(i)] != 0.0) out += a[static_cast<int>(i)] * sys.hall_field(static_cast<int>(i));
  return out;
}

// ---------------------------------------------------------------------------
// Integration

struct FlowResult {
  Eigen::VectorXd point;
  Eigen::VectorXd vector;  // empty unless a pushforward was propagated
  /// RK4-weighted estimate of the integral of |V(x(t))| along the trajectory.
  double path_length = 0.0;
};

namespace detail {

/// One joint RK4 pass over `nodes`; coeffs_at(t, h) yields the Hall
/// coefficients at start/mid/end of the step.
template <typename CoeffsAt>
FlowResult integrate(const DynamicalSystem& sys, const std::vector<double>& nodes, CoeffsAt&& coeffs_at, Eigen::VectorXd x,
                     std::optional<Eigen::VectorXd> v) {
  const bool sphere = sys.manifold().is_sphere();
  FlowResult out;
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    const double t = nodes[i], h = nodes[i + 1] - nodes[i];
    const std::array<Eigen::VectorXd, 3> c = coeffs_at(t, h);
    const Eigen::VectorXd k1 = sys.eval(c[0], x);
    const Eigen::VectorXd x2 = x + 0.5 * h * k1;
    const Eigen::VectorXd k2 = sys.eval(c[1], x2);
    const Eigen::VectorXd x3 = x + 0.5 * h * k2;
    const Eigen::VectorXd k3 = sys.eval(c[1], x3);
    const Eigen::VectorXd x4 = x + h * k3;
    const Eigen::VectorXd k4 = sys.eval(c[2], x4);
    out.path_length += std::abs(h) / 6.0 * (k1.norm() + 2.0 * k2.norm() + 2.0 * k3.norm() + k4.norm());
    if (v) {
      const Eigen::VectorXd& w = *v;
      const Eigen::VectorXd l1 = sys.jacobian(c[0], x) * w;
      const Eigen::VectorXd l2 = sys.jacobian(c[1], x2) * (w + 0.5 * h * l1);
      const Eigen::VectorXd l3 = sys.jacobian(c[1], x3) * (w + 0.5 * h * l2);
      const Eigen::VectorXd l4 = sys.jacobian(c[2], x4) * (w + h * l3);
      *v = w + (h / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
    }
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (sphere) {
      x.normalize();
      if (v) *v -= x.dot(*v) * x;
    }
  }
  out.point = std::move(x);
  if (v) out.vector = std::move(*v);
  return out;
}

inline std::vector<double> uniform_nodes(double a, double b, int steps) {
  std::vector<double> n(static_cast<std::size_t>(steps + 1));
  for (int i = 0; i <= steps; ++i) n[static_cast<std::size_t>(i)] = a + (b - a) * i / steps;
  n.back() = b;
  return n;
}

inline FlowResult path_flow(const DynamicalSystem& sys, const ControlPath& path, const Eigen::VectorXd& m,
                            std::optional<Eigen::VectorXd> v, double t0, double t1, const FlowConfig& cfg) {
  if (path.basis() != sys.basis() && !(path.basis()->params() == sys.basis()->params()))
    throw ParamsMismatch("flow: path and system use different Hall bases");
  path.check_time(t0, "flow");
  path.check_time(t1, "flow");
  const auto nodes = path.step_nodes(t0, t1, cfg.steps_for(t1 - t0));
  auto coeffs_at = [&](double t, double h) {
    const auto r = path.stage_rates(t, h);
    return std::array<Eigen::VectorXd, 3>{r[0].coeffs(), r[1].coeffs(), r[2].coeffs()};
  };
  return integrate(sys, nodes, coeffs_at, m, std::move(v));
}

inline FlowResult autonomous_flow(const DynamicalSystem& sys, const LieCoordinates& a, const Eigen::VectorXd& m,
                                  std::optional<Eigen::VectorXd> v, double time, const FlowConfig& cfg) {
  if (a.basis() != sys.basis() && !(a.params() == sys.basis()->params()))
    throw ParamsMismatch("exp_flow: coordinates belong to a different Hall basis");
  if (time == 0.0) return {m, v ? *v : Eigen::VectorXd(), 0.0};
  const auto nodes = uniform_nodes(0.0, time, cfg.steps_for(time));
  const Eigen::VectorXd& c = a.coeffs();
  auto coeffs_at = [&](double, double) { return std::array<Eigen::VectorXd, 3>{c, c, c}; };
  return integrate(sys, nodes, coeffs_at, m, std::move(v));
}

}  // namespace detail

/// mu_{t1,t0}(m): RK4 of m' = V_{xi'(t)}(m) from t0 to t1 (either order).
inline Eigen::VectorXd flow(const DynamicalSystem& sys, const ControlPath& path, const Eigen::VectorXd& m, double t0,
                            double t1, const FlowConfig& cfg) {
  check_on_manifold(sys.manifold(), m, "flow");
  return detail::path_flow(sys, path, m, std::nullopt, t0, t1, cfg).point;
}

/// Flow along with the RK4 estimate of the integral of |V_{xi'(t)}| along it.
inline FlowResult flow_with_length(const DynamicalSystem& sys, const ControlPath& path, const Eigen::VectorXd& m, double t0,
                                   double t1, const FlowConfig& cfg) {
  check_on_manifold(sys.manifold(), m, "flow");
  return detail::path_flow(sys, path, m, std::nullopt, t0, t1, cfg);
}

/// e^{s V_A}(m)
inline Eigen::VectorXd exp_flow(const DynamicalSystem& sys, const LieCoordinates& a, const Eigen::VectorXd& m,
                                const FlowConfig& cfg, double s = 1.0) {
  check_on_manifold(sys.manifold(), m, "exp_flow");
  return detail::autonomous_flow(sys, a, m, std::nullopt, s, cfg).point;
}

/// (mu_{t1,t0})_* v at m, via the variational equation v' = DV(m(t)) v.
inline TangentSample pushforward_flow(const DynamicalSystem& sys, const ControlPath& path, const TangentSample& mv,
                                      double t0, double t1, const FlowConfig& cfg) {
  check_tangent(sys.manifold(), mv, "pushforward_flow");
  auto r = detail::path_flow(sys, path, mv.point, mv.vector, t0, t1, cfg);
  return {std::move(r.point), std::move(r.vector)};
}

/// (e^{s V_A})_* v at m.
inline TangentSample exp_pushforward(const DynamicalSystem& sys, const LieCoordinates& a, const TangentSample& mv,
                                     const FlowConfig& cfg, double s = 1.0) {
  check_tangent(sys.manifold(), mv, "exp_pushforward");
  auto r = detail::autonomous_flow(sys, a, mv.point, mv.vector, s, cfg);
  return {std::move(r.point), std::move(r.vector)};
}

/// (Ad_{e^{s V_A}} Z)(m) = (e^{s V_A})_* Z(e^{-s V_A}(m)).
inline Eigen::VectorXd adjoint_eval(const DynamicalSystem& sys, const LieCoordinates& a, const PolyVectorField& z, double s,
                                    const Eigen::VectorXd& m, const FlowConfig& cfg) {
  check_on_manifold(sys.manifold(), m, "adjoint_eval");
  if (z.dim() != sys.dim()) throw DomainError("adjoint_eval: field dimension mismatch");
  const Eigen::VectorXd p = detail::autonomous_flow(sys, a, m, std::nullopt, -s, cfg).point;
  Eigen::VectorXd zp = z(p);
  if (sys.manifold().is_sphere()) zp -= p.dot(zp) * p;
  return detail::autonomous_flow(sys, a, p, zp, s, cfg).vector;
}

/// W_t^C(m) = int_0^1 (Ad_{e^{s V_C}} V_{C'})(m) ds by squad-point Gauss-Legendre.
inline Eigen::VectorXd w_field_eval(const DynamicalSystem& sys, const LieCoordinates& c, const LieCoordinates& cdot,
                                    const Eigen::VectorXd& m, int squad, const FlowConfig& cfg) {
  if (squad < 1) throw DomainError("w_field_eval: squad must be >= 1");
  const PolyVectorField z = system_extend(sys, cdot);
  const auto [gx, gw] = detail::gauss_legendre(squad);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(sys.dim());
  for (std::size_t q = 0; q < gx.size(); ++q) w += 0.5 * gw[q] * adjoint_eval(sys, c, z, 0.5 * (gx[q] + 1.0), m, cfg);
  return w;
}

// ---------------------------------------------------------------------------
// Distances

/// Euclidean distance on R^n, great-circle distance on the sphere.
inline double dist_M(const Manifold& M, const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  check_on_manifold(M, p, "dist_M");
  check_on_manifold(M, q, "dist_M");
  const double chord = (p - q).norm();
  if (M.is_flat()) return chord;
  // 2 asin(chord/2) equals arccos(p.q) for unit vectors and stays accurate
  // for nearby points.
  return 2.0 * std::asin(std::min(1.0, 0.5 * chord));
}

/// max over the sample of d(f(m), g(m)): a lower estimate of d_M(f, g).
template <typename F, typename G>
double dist_map(const Manifold& M, F&& f, G&& g, const std::vector<Eigen::VectorXd>& samples) {
  double d = 0.0;
  for (const auto& m : samples) {
    check_on_manifold(M, m, "dist_map");
    d = std::max(d, dist_M(M, f(m), g(m)));
  }
  return d;
}

/// sqrt(|m - p|^2 + |v - w|^2): the tangent-bundle distance on flat space.
inline double dist_TM_flat(const Manifold& M, const TangentSample& a, const TangentSample& b) {
  if (!M.is_flat()) throw DomainError("dist_TM_flat: only available on flat space");
  check_tangent(M, a, "dist_TM_flat");
  check_tangent(M, b, "dist_TM_flat");
  return std::sqrt((a.point - b.point).squaredNorm() + (a.vector - b.vector).squaredNorm());
}

/// max over unit tangent samples of d^TM(f_* v, g_* v): a lower estimate of
/// d_M^TM(f_*, g_*).
template <typename F, typename G>
double dist_dmap(const Manifold& M, F&& fstar, G&& gstar, const std::vector<TangentSample>& samples) {
  if (!M.is_flat()) throw DomainError("dist_dmap: only available on flat space");
  double d = 0.0;
  for (const auto& s : samples) {
    if (std::abs(s.vector.norm() - 1.0) > 1e-12) throw DomainError("dist_dmap: tangent samples must have unit length");
    d = std::max(d, dist_TM_flat(M, fstar(s), gstar(s)));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Sampling

/// Uniform points of [-r, r]^n (flat) or uniform points of the sphere.
inline std::vector<Eigen::VectorXd> sample_points(const Manifold& M, int count, std::uint64_t seed, double radius = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-radius, radius);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Eigen::VectorXd> pts;
  for (int i = 0; i < count; ++i) {
    Eigen::VectorXd x(M.ambient);
    for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = M.is_flat() ? u(rng) : g(rng);
    if (M.is_sphere()) x.normalize();
    pts.push_back(std::move(x));
  }
  return pts;
}

/// Unit tangent vectors at sampled base points.
inline std::vector<TangentSample> sample_unit_tangents(const Manifold& M, int count, std::uint64_t seed, double radius = 1.0) {
  auto pts = sample_points(M, count, seed, radius);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<TangentSample> out;
  for (auto& p : pts) {
    Eigen::VectorXd v(M.ambient);
    for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = g(rng);
    if (M.is_sphere()) v -= p.dot(v) * p;
    v.normalize();
    out.push_back({std::move(p), std::move(v)});
  }
  return out;
}

}  // namespace trunclog

#endif  // TRUNCLOG_FLOWS_HPP
