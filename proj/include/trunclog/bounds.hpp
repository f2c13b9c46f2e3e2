#ifndef TRUNCLOG_BOUNDS_HPP
#define TRUNCLOG_BOUNDS_HPP

// Q-functions, sampled dynamical-system norms and log-log slope fitting.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "trunclog/errors.hpp"
#include "trunclog/flows.hpp"
#include "trunclog/free_lie.hpp"

namespace trunclog {

/// Q_[m,n] (closed) or Q_(m,n] (half-open).
struct QSpec {
  int m = 1;
  int n = 2;
  bool closed = true;

  QSpec() = default;
  QSpec(int m_, int n_, bool closed_ = true) : m(m_), n(n_), closed(closed_) {
    if (!(m >= 1 && m < n)) throw DomainError("QSpec: need 1 <= m < n");
  }
};

/// max(lambda^m, lambda^n) for [m,n]; max(lambda^{m+1}, lambda^n) for (m,n].
inline double q_eval(const QSpec& q, double lambda) {
  if (!(lambda >= 0.0)) throw DomainError("q_eval: lambda must be >= 0");
  const int lo = q.closed ? q.m : q.m + 1;
  return std::max(std::pow(lambda, lo), std::pow(lambda, q.n));
}

struct NormEstimate {
  std::string quantity;
  double value = 0.0;
  int points = 0;
  int lie_samples = 0;
  std::string region;
};

struct CommutatorEstimate {
  int m = 0;
  int n = 0;
  double c0 = 0.0;
  double c1 = 0.0;
};

/// Sampled norms for a system at its truncation level. Every value is a max
/// over the supplied points and sampled unit Lie elements, hence a lower
/// estimate of the corresponding sup.
struct DynNorms {
  NormEstimate field;      // |V^(kappa)|
  NormEstimate jacobian;   // |grad V^(kappa)|
  NormEstimate hessian;    // |grad^2 V^(kappa)|
  NormEstimate c0;         // C^0(V^(kappa)) = sum of C^0_{m,n}
  NormEstimate c1;         // C^1(V^(kappa))
  std::vector<CommutatorEstimate> pairs;

  std::vector<NormEstimate> all() const { return {field, jacobian, hessian, c0, c1}; }
  /// Right-hand side kappa (kappa+1) |V| |grad V| of the C^0 bound.
  double c0_bound(int kappa) const { return kappa * (kappa + 1.0) * field.value * jacobian.value; }
  double c1_bound(int kappa) const {
    return kappa * (kappa + 1.0) * (hessian.value * field.value + jacobian.value * jacobian.value);
  }
};

namespace detail {

inline double spectral_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

/// Second derivative as the n x n^2 matrix (i, j*n + k) -> d^2 V_i/dx_j dx_k;
/// its spectral norm bounds |D^2 V[u, w]| for unit u, w.
inline Eigen::MatrixXd flatten_hessian(const std::vector<Eigen::MatrixXd>& h) {
  const auto n = static_cast<Eigen::Index>(h.size());
  Eigen::MatrixXd f(n, n * n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < n; ++k) f(i, j * n + k) = h[static_cast<std::size_t>(i)](j, k);
  return f;
}

/// sum_k H_i(j, k) x_k as the matrix (i, j).
inline Eigen::MatrixXd contract_hessian(const std::vector<Eigen::MatrixXd>& h, const Eigen::VectorXd& x) {
  const auto n = static_cast<Eigen::Index>(h.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = (h[static_cast<std::size_t>(i)] * x).transpose();
  return out;
}

struct FieldSample {
  Eigen::VectorXd value;
  Eigen::MatrixXd jac;
  std::vector<Eigen::MatrixXd> hess;
};

inline FieldSample sample_field(const PolyVectorField& f, const Eigen::VectorXd& x) {
  return {f(x), f.jacobian(x), f.hessians(x)};
}

}  // namespace detail

inline DynNorms estimate_dyn_norms(const DynamicalSystem& sys, const std::vector<Eigen::VectorXd>& points, int lie_samples,
                                   std::uint64_t seed, const std::string& region = "sample") {
  if (points.empty()) throw DomainError("estimate_dyn_norms: empty point sample");
  if (lie_samples < 1) throw DomainError("estimate_dyn_norms: need at least one Lie sample");
  const HallBasisPtr& basis = sys.basis();
  const int kappa = basis->params().kappa;

  // General unit elements of F^(kappa) plus, per degree, unit elements of F_k
  // used for the commutator sups; all of them enter |V|, |grad V|, |grad^2 V|.
  std::vector<PolyVectorField> general;
  for (int s = 0; s < lie_samples; ++s) general.push_back(system_extend(sys, random_unit_lie(basis, seed + 7919ULL * s)));
  std::vector<std::vector<PolyVectorField>> homogeneous(static_cast<std::size_t>(kappa + 1));
  for (int k = 1; k <= kappa; ++k) {
    if (basis->degree_count(k) == 0) continue;
    for (int s = 0; s < lie_samples; ++s)
      homogeneous[k].push_back(system_extend(sys, random_unit_lie(basis, seed + 104729ULL * k + 7919ULL * s + 1, k)));
  }

  DynNorms out;
  auto tag = [&](NormEstimate& e, const char* q) {
    e.quantity = q;
    e.points = static_cast<int>(points.size());
    e.lie_samples = lie_samples;
    e.region = region;
  };
  tag(out.field, "|V|");
  tag(out.jacobian, "|grad V|");
  tag(out.hessian, "|grad^2 V|");
  tag(out.c0, "C0");
  tag(out.c1, "C1");

  auto absorb = [&](const detail::FieldSample& s) {
    out.field.value = std::max(out.field.value, s.value.norm());
    out.jacobian.value = std::max(out.jacobian.value, detail::spectral_norm(s.jac));
    out.hessian.value = std::max(out.hessian.value, detail::spectral_norm(detail::flatten_hessian(s.hess)));
  };

  for (const auto& x : points) {
    check_on_manifold(sys.manifold(), x, "estimate_dyn_norms");
    for (const auto& f : general) absorb(detail::sample_field(f, x));
  }

  for (int m = 1; m <= kappa; ++m)
    for (int n = 1; n <= kappa; ++n) {
      if (m + n <= kappa) continue;
      CommutatorEstimate ce{m, n, 0.0, 0.0};
      const auto& fa = homogeneous[static_cast<std::size_t>(m)];
      const auto& fb = homogeneous[static_cast<std::size_t>(n)];
      if (!fa.empty() && !fb.empty()) {
        for (const auto& x : points) {
          std::vector<detail::FieldSample> sa, sb;
          for (const auto& f : fa) sa.push_back(detail::sample_field(f, x));
          for (const auto& f : fb) sb.push_back(detail::sample_field(f, x));
          for (const auto& s : sa) absorb(s);
          for (const auto& s : sb) absorb(s);
          for (std::size_t s = 0; s < sa.size(); ++s) {
            // Samples are paired through a fixed permutation.
            const auto& a = sa[s];
            const auto& b = sb[(s * 31 + 7) % sb.size()];
            const Eigen::VectorXd br = b.jac * a.value - a.jac * b.value;
            const Eigen::MatrixXd dbr = detail::contract_hessian(b.hess, a.value) + b.jac * a.jac -
                                        detail::contract_hessian(a.hess, b.value) - a.jac * b.jac;
            ce.c0 = std::max(ce.c0, br.norm());
            ce.c1 = std::max(ce.c1, detail::spectral_norm(dbr));
          }
        }
      }
      out.c0.value += ce.c0;
      out.c1.value += ce.c1;
      out.pairs.push_back(ce);
    }
  return out;
}

struct SlopeFit {
  double slope = 0.0;
  /// RMS residual of the log-log fit.
  double residual = 0.0;
  int used = 0;
};

/// Least-squares slope of log(distance) against log(lambda) over the pairs
/// with distance > floor.
inline SlopeFit fit_slope(const std::vector<double>& lambdas, const std::vector<double>& distances, double floor = 0.0) {
  if (lambdas.size() != distances.size()) throw DomainError("fit_slope: length mismatch");
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < lambdas.size(); ++i)
    if (distances[i] > floor && distances[i] > 0.0 && lambdas[i] > 0.0) {
      xs.push_back(std::log(lambdas[i]));
      ys.push_back(std::log(distances[i]));
    }
  if (xs.size() < 3) throw DomainError("fit_slope: fewer than 3 usable points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i], my += ys[i];
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0.0) throw DomainError("fit_slope: lambdas are all equal");
  SlopeFit f;
  f.slope = sxy / sxx;
  const double icpt = my - f.slope * mx;
  double r2 = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) r2 += std::pow(ys[i] - (icpt + f.slope * xs[i]), 2);
  f.residual = std::sqrt(r2 / n);
  f.used = static_cast<int>(xs.size());
  return f;
}

/// Least-squares slope over the usable pairs among the first i+1, for each
/// i; NaN until two usable pairs are available.
inline std::vector<double> running_slopes(const std::vector<double>& lambdas, const std::vector<double>& distances,
                                          double floor = 0.0) {
  std::vector<double> out;
  double n = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (distances[i] > floor && distances[i] > 0.0 && lambdas[i] > 0.0) {
      const double x = std::log(lambdas[i]), y = std::log(distances[i]);
      n += 1.0;
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double den = n * sxx - sx * sx;
    out.push_back(n >= 2.0 && den > 0.0 ? (n * sxy - sx * sy) / den : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

/// Geometric grid first, first/2, ..., count values.
inline std::vector<double> geometric_grid(double first, int count, double ratio = 0.5) {
  std::vector<double> g;
  double x = first;
  for (int i = 0; i < count; ++i, x *= ratio) g.push_back(x);
  return g;
}

}  // namespace trunclog

#endif  // TRUNCLOG_BOUNDS_HPP
