#ifndef TRUNCLOG_MAGNUS_HPP
#define TRUNCLOG_MAGNUS_HPP

// Development g(t) of a control path (g' = g xi', g(0) = 1) and its
// truncated logarithm C(t) = log g(t), computed three ways:
//   chen    exact ordered product of increment exponentials (piecewise-constant paths)
//   ode     classical RK4 on the group ODE
//   c-ode   RK4 on C' = psi_-(ad_C) xi'

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "trunclog/errors.hpp"
#include "trunclog/free_lie.hpp"
#include "trunclog/series.hpp"
#include "trunclog/tensor_algebra.hpp"

namespace trunclog {

struct PiecewiseConstant {
  /// breakpoints[0] = 0 < breakpoints[1] < ... < breakpoints.back() = T.
  std::vector<double> breakpoints;
  /// values[i] is the rate on [breakpoints[i], breakpoints[i+1]).
  std::vector<LieCoordinates> values;
};

/// Smooth rate t -> xi'(t). When `poly` is non-empty the rate is the
/// polynomial sum_j t^j poly[j] (Hall coordinates) and `rate` is derived
/// from it; such paths serialise to JSON.
struct SmoothPath {
  std::function<LieCoordinates(double)> rate;
  std::vector<Eigen::VectorXd> poly;
  /// Number of continuous derivatives of the rate (informational).
  int smoothness = 1;
};

class ControlPath {
 public:
  static ControlPath piecewise_constant(std::vector<double> breakpoints, std::vector<LieCoordinates> values) {
    if (breakpoints.size() < 2 || values.size() + 1 != breakpoints.size())
      throw DomainError("ControlPath: need n+1 breakpoints for n pieces");
    if (breakpoints.front() != 0.0) throw DomainError("ControlPath: breakpoints must start at 0");
    for (std::size_t i = 1; i < breakpoints.size(); ++i)
      if (!(breakpoints[i] > breakpoints[i - 1])) throw DomainError("ControlPath: breakpoints must be strictly increasing");
    for (std::size_t i = 1; i < values.size(); ++i) values[0].check_same(values[i], "ControlPath");
    ControlPath p;
    p.T_ = breakpoints.back();
    p.basis_ = values.front().basis();
    p.rep_ = PiecewiseConstant{std::move(breakpoints), std::move(values)};
    return p;
  }

  /// Unit-length pieces with the given constant rates.
  static ControlPath piecewise_constant(std::vector<LieCoordinates> values) {
    std::vector<double> bp(values.size() + 1);
    for (std::size_t i = 0; i < bp.size(); ++i) bp[i] = static_cast<double>(i);
    return piecewise_constant(std::move(bp), std::move(values));
  }

  static ControlPath constant(const LieCoordinates& a, double T) { return piecewise_constant({0.0, T}, {a}); }

  static ControlPath smooth(HallBasisPtr basis, double T, std::function<LieCoordinates(double)> rate, int smoothness = 1) {
    if (!(T > 0.0)) throw DomainError("ControlPath: horizon must be positive");
    ControlPath p;
    p.T_ = T;
    p.basis_ = std::move(basis);
    p.rep_ = SmoothPath{std::move(rate), {}, smoothness};
    return p;
  }

  /// Rate sum_j t^j coeffs[j] in Hall coordinates.
  static ControlPath polynomial(HallBasisPtr basis, double T, std::vector<Eigen::VectorXd> coeffs) {
    for (const auto& c : coeffs)
      if (static_cast<std::size_t>(c.size()) != basis->size()) throw DomainError("ControlPath: polynomial coefficient has wrong size");
    auto rate = [basis, coeffs](double t) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis->size()));
      for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) v = t * v + *it;
      return LieCoordinates(basis, std::move(v));
    };
    ControlPath p = smooth(basis, T, rate, 1000);
    std::get<SmoothPath>(p.rep_).poly = std::move(coeffs);
    return p;
  }

  double horizon() const { return T_; }
  const HallBasisPtr& basis() const { return basis_; }
  bool is_piecewise_constant() const { return std::holds_alternative<PiecewiseConstant>(rep_); }
  const PiecewiseConstant& pieces() const { return std::get<PiecewiseConstant>(rep_); }
  const SmoothPath& smooth_rep() const { return std::get<SmoothPath>(rep_); }

  /// Right-continuous rate; at t = T the last piece.
  LieCoordinates rate(double t) const {
    if (const auto* pc = std::get_if<PiecewiseConstant>(&rep_)) return pc->values[piece_index(t)];
    return std::get<SmoothPath>(rep_).rate(t);
  }

  std::size_t piece_index(double t) const {
    const auto& bp = pieces().breakpoints;
    std::size_t i = 0;
    while (i + 2 < bp.size() && t >= bp[i + 1]) ++i;
    return i;
  }

  /// Integration nodes from a to b (either order) with about `steps` steps in
  /// total; piecewise-constant paths get every interior breakpoint as a node
  /// and at least one step per piece.
  std::vector<double> step_nodes(double a, double b, int steps) const {
    if (steps < 1) throw DomainError("step_nodes: steps must be >= 1");
    std::vector<double> cuts{a};
    if (is_piecewise_constant()) {
      const double lo = std::min(a, b), hi = std::max(a, b);
      std::vector<double> inner;
      for (double x : pieces().breakpoints)
        if (x > lo && x < hi) inner.push_back(x);
      if (b < a) std::reverse(inner.begin(), inner.end());
      cuts.insert(cuts.end(), inner.begin(), inner.end());
    }
    cuts.push_back(b);
    std::vector<double> nodes{a};
    const double total = std::abs(b - a);
    if (total == 0.0) return nodes;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      const double len = cuts[i + 1] - cuts[i];
      const int n = std::max(1, static_cast<int>(std::lround(steps * std::abs(len) / total)));
      for (int j = 1; j < n; ++j) nodes.push_back(cuts[i] + len * j / n);
      nodes.push_back(cuts[i + 1]);
    }
    return nodes;
  }

  /// Rates used by one RK4 step over [t, t+h]: start, midpoint, end. On a
  /// constant piece all three are the piece value.
  std::array<LieCoordinates, 3> stage_rates(double t, double h) const {
    if (is_piecewise_constant()) {
      LieCoordinates v = rate(t + 0.5 * h);
      return {v, v, v};
    }
    return {rate(t), rate(t + 0.5 * h), rate(t + h)};
  }

  void check_time(double t, const char* where) const {
    if (!(t >= 0.0 && t <= T_)) throw DomainError(std::string(where) + ": t outside [0, T]");
  }

 private:
  ControlPath() = default;
  double T_ = 0.0;
  HallBasisPtr basis_;
  std::variant<PiecewiseConstant, SmoothPath> rep_;
};

/// The path with rate delta_lambda(xi'(t)).
inline ControlPath dilate(const ControlPath& path, double lambda) {
  if (path.is_piecewise_constant()) {
    const auto& pc = path.pieces();
    std::vector<LieCoordinates> v;
    v.reserve(pc.values.size());
    for (const auto& x : pc.values) v.push_back(dilate(x, lambda));
    return ControlPath::piecewise_constant(pc.breakpoints, std::move(v));
  }
  const auto& sp = path.smooth_rep();
  if (!sp.poly.empty()) {
    std::vector<Eigen::VectorXd> c;
    for (const auto& x : sp.poly) c.push_back(dilate(LieCoordinates(path.basis(), x), lambda).coeffs());
    return ControlPath::polynomial(path.basis(), path.horizon(), std::move(c));
  }
  auto rate = sp.rate;
  return ControlPath::smooth(path.basis(), path.horizon(), [rate, lambda](double t) { return dilate(rate(t), lambda); },
                             sp.smoothness);
}

/// The path tau -> xi'(s + tau) on [0, t - s].
inline ControlPath shifted(const ControlPath& path, double s, double t) {
  path.check_time(s, "shifted");
  path.check_time(t, "shifted");
  if (!(t > s)) throw DomainError("shifted: need s < t");
  if (path.is_piecewise_constant()) {
    const auto& pc = path.pieces();
    std::vector<double> bp{0.0};
    std::vector<LieCoordinates> vals;
    for (std::size_t i = 0; i < pc.values.size(); ++i) {
      const double a = std::max(pc.breakpoints[i], s), b = std::min(pc.breakpoints[i + 1], t);
      if (b > a) {
        bp.push_back(b - s);
        vals.push_back(pc.values[i]);
      }
    }
    return ControlPath::piecewise_constant(std::move(bp), std::move(vals));
  }
  auto rate = path.smooth_rep().rate;
  return ControlPath::smooth(path.basis(), t - s, [rate, s](double tau) { return rate(s + tau); },
                             path.smooth_rep().smoothness);
}

/// phi(t) = 30 t^2 (1-t)^2 on [0,1], zero elsewhere: unit integral, C^1.
inline double bump(double t) { return (t <= 0.0 || t >= 1.0) ? 0.0 : 30.0 * t * t * (1.0 - t) * (1.0 - t); }

/// Integral of bump from 0 to t, clamped to [0, 1].
inline double bump_integral(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

/// Smooth two-segment path on [0, 2] with rate bump(t) A + bump(t-1) B;
/// the endpoint development is exp(A) exp(B).
inline ControlPath smooth_two_segment(const LieCoordinates& a, const LieCoordinates& b) {
  a.check_same(b, "smooth_two_segment");
  return ControlPath::smooth(a.basis(), 2.0, [a, b](double t) { return bump(t) * a + bump(t - 1.0) * b; }, 1);
}

// ---------------------------------------------------------------------------

/// Ordered product exp(h_1 v_1) exp(h_2 v_2) ... over the pieces met up to t.
inline GroupElement chen_product(const ControlPath& path, double t) {
  if (!path.is_piecewise_constant()) throw DomainError("chen_product: path must be piecewise constant");
  path.check_time(t, "chen_product");
  const auto& pc = path.pieces();
  GroupElement g(path.basis()->params());
  for (std::size_t i = 0; i < pc.values.size(); ++i) {
    const double a = pc.breakpoints[i];
    if (a >= t) break;
    const double h = std::min(pc.breakpoints[i + 1], t) - a;
    g = mul(g, exp(h * pc.values[i].to_tensor()));
  }
  return g;
}

/// Fixed-step RK4 for g' = g xi'(t), g(0) = 1; level 0 re-pinned to 1 every step.
inline GroupElement group_ode_solve(const ControlPath& path, double t, int steps) {
  if (steps < 1) throw DomainError("group_ode_solve: steps must be >= 1");
  path.check_time(t, "group_ode_solve");
  const AlgebraParams& p = path.basis()->params();
  GradedTensor g = GradedTensor::unit(p);
  const auto nodes = path.step_nodes(0.0, t, steps);
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    const double t0 = nodes[i], h = nodes[i + 1] - nodes[i];
    const auto r = path.stage_rates(t0, h);
    const GradedTensor x0 = r[0].to_tensor().tensor(), x1 = r[1].to_tensor().tensor(), x2 = r[2].to_tensor().tensor();
    const GradedTensor k1 = mul(g, x0);
    const GradedTensor k2 = mul(g + (0.5 * h) * k1, x1);
    const GradedTensor k3 = mul(g + (0.5 * h) * k2, x1);
    const GradedTensor k4 = mul(g + h * k3, x2);
    g += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    g.set_scalar_part(1.0);
  }
  return GroupElement(std::move(g));
}

enum class MagnusMethod { chen, ode };

inline constexpr double kMagnusLieTolerance = 1e-9;

/// C(t) = log g(t) in Hall coordinates, with the Lie residual enforced.
inline LieCoordinates magnus_log(const ControlPath& path, double t, MagnusMethod method, int steps = 1024) {
  const GroupElement g = method == MagnusMethod::chen ? chen_product(path, t) : group_ode_solve(path, t, steps);
  return require_lie(log(g), path.basis(), kMagnusLieTolerance, "magnus_log");
}

/// Lie residual of log g(t) (0 for an exact Lie element).
inline double magnus_residual(const ControlPath& path, double t, MagnusMethod method, int steps = 1024) {
  const GroupElement g = method == MagnusMethod::chen ? chen_product(path, t) : group_ode_solve(path, t, steps);
  return project_to_lie(log(g), path.basis()).residual;
}

struct COdeTrajectory {
  std::vector<double> times;
  std::vector<AlgebraElement> values;
  /// C'(t_i) = psi_-(ad_C) xi'(t_i) at every node.
  std::vector<AlgebraElement> rates;
};

/// RK4 on C' = psi_-(ad_C) xi' with C(0) = 0, all nodes recorded. The
/// coefficient list is a parameter so that tests can feed corrupted series.
inline COdeTrajectory c_ode_trajectory(const ControlPath& path, double t, int steps, const std::vector<double>& coeffs) {
  if (steps < 1) throw DomainError("c_ode_solve: steps must be >= 1");
  path.check_time(t, "c_ode_solve");
  const AlgebraParams& p = path.basis()->params();
  auto rhs = [&](const AlgebraElement& c, const AlgebraElement& x) { return ad_series_apply(coeffs, c, x); };
  COdeTrajectory tr;
  AlgebraElement c(p);
  const auto nodes = path.step_nodes(0.0, t, steps);
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    const double t0 = nodes[i], h = nodes[i + 1] - nodes[i];
    const auto r = path.stage_rates(t0, h);
    const AlgebraElement x0 = r[0].to_tensor(), x1 = r[1].to_tensor(), x2 = r[2].to_tensor();
    const AlgebraElement k1 = rhs(c, x0);
    const AlgebraElement k2 = rhs(c + (0.5 * h) * k1, x1);
    const AlgebraElement k3 = rhs(c + (0.5 * h) * k2, x1);
    const AlgebraElement k4 = rhs(c + h * k3, x2);
    tr.times.push_back(t0);
    tr.values.push_back(c);
    tr.rates.push_back(k1);
    c = c + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  tr.times.push_back(nodes.back());
  tr.values.push_back(c);
  const auto rl = path.stage_rates(nodes.back(), 0.0);
  tr.rates.push_back(rhs(c, rl[0].to_tensor()));
  return tr;
}

inline LieCoordinates c_ode_solve(const ControlPath& path, double t, int steps, const std::vector<double>& coeffs) {
  auto tr = c_ode_trajectory(path, t, steps, coeffs);
  return require_lie(tr.values.back(), path.basis(), kMagnusLieTolerance, "c_ode_solve");
}

inline LieCoordinates c_ode_solve(const ControlPath& path, double t, int steps) {
  return c_ode_solve(path, t, steps, psi_minus_coeffs(path.basis()->params().kappa));
}

// ---------------------------------------------------------------------------

struct PathNorms {
  /// per_degree[k-1] = integral_0^t |xi'_k(s)| ds.
  std::vector<double> per_degree;

  /// N_t^* = max_k (per_degree[k-1])^{1/k}.
  double homogeneous() const {
    double n = 0.0;
    for (std::size_t k = 0; k < per_degree.size(); ++k)
      n = std::max(n, std::pow(per_degree[k], 1.0 / static_cast<double>(k + 1)));
    return n;
  }
};

namespace detail {

inline void accumulate_degree_norms(const AlgebraElement& x, double w, std::vector<double>& acc) {
  for (int k = 1; k <= x.params().kappa; ++k) acc[static_cast<std::size_t>(k - 1)] += w * x.level(k).norm();
}

/// Gauss-Legendre nodes/weights on [-1, 1].
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
  std::vector<double> x(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n));
  const double pi = 3.14159265358979323846;
  for (int i = 0; i < n; ++i) {
    double z = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[static_cast<std::size_t>(i)] = z;
    w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return {x, w};
}

}  // namespace detail

/// Per-degree L1 norms of the rate on [0, t]; exact sums for piecewise-
/// constant paths, composite 5-point Gauss-Legendre otherwise.
inline PathNorms path_norms(const ControlPath& path, double t, int panels = 256) {
  path.check_time(t, "path_norms");
  const int kappa = path.basis()->params().kappa;
  PathNorms out;
  out.per_degree.assign(static_cast<std::size_t>(kappa), 0.0);
  if (path.is_piecewise_constant()) {
    const auto& pc = path.pieces();
    for (std::size_t i = 0; i < pc.values.size(); ++i) {
      const double a = pc.breakpoints[i];
      if (a >= t) break;
      const double h = std::min(pc.breakpoints[i + 1], t) - a;
      detail::accumulate_degree_norms(pc.values[i].to_tensor(), h, out.per_degree);
    }
    return out;
  }
  if (t == 0.0) return out;
  const auto [gx, gw] = detail::gauss_legendre(5);
  const double h = t / panels;
  for (int j = 0; j < panels; ++j) {
    const double mid = (j + 0.5) * h;
    for (std::size_t q = 0; q < gx.size(); ++q)
      detail::accumulate_degree_norms(path.rate(mid + 0.5 * h * gx[q]).to_tensor(), 0.5 * h * gw[q], out.per_degree);
  }
  return out;
}

/// Ad_{g(t)} as a GradedOperator, by RK4 on X' = X ad_{xi'(t)}, X(0) = I.
inline GradedOperator ad_flow_operator(const ControlPath& path, double t, int steps) {
  if (steps < 1) throw DomainError("ad_flow_operator: steps must be >= 1");
  path.check_time(t, "ad_flow_operator");
  const AlgebraParams& p = path.basis()->params();
  Eigen::MatrixXd x = GradedOperator::identity(p).matrix();
  const auto nodes = path.step_nodes(0.0, t, steps);
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    const double t0 = nodes[i], h = nodes[i + 1] - nodes[i];
    const auto r = path.stage_rates(t0, h);
    const Eigen::MatrixXd m0 = ad_operator(r[0].to_tensor()).matrix();
    const Eigen::MatrixXd m1 = ad_operator(r[1].to_tensor()).matrix();
    const Eigen::MatrixXd m2 = ad_operator(r[2].to_tensor()).matrix();
    const Eigen::MatrixXd k1 = x * m0;
    const Eigen::MatrixXd k2 = (x + 0.5 * h * k1) * m1;
    const Eigen::MatrixXd k3 = (x + 0.5 * h * k2) * m1;
    const Eigen::MatrixXd k4 = (x + h * k3) * m2;
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return GradedOperator(p, std::move(x));
}

}  // namespace trunclog

#endif  // TRUNCLOG_MAGNUS_HPP
