#ifndef TRUNCLOG_POLY_HPP
#define TRUNCLOG_POLY_HPP

// Polynomial vector fields on R^n with exact derivatives and Lie brackets.

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "trunclog/errors.hpp"

namespace trunclog {

using Monomial = std::vector<int>;

/// Sparse multivariate polynomial: exponent tuple -> coefficient. Terms with
/// coefficient exactly zero are dropped.
class Polynomial {
 public:
  Polynomial() = default;
  explicit Polynomial(int nvars) : n_(nvars) {}

  static Polynomial constant(int nvars, double c) {
    Polynomial p(nvars);
    p.add_term(Monomial(static_cast<std::size_t>(nvars), 0), c);
    return p;
  }
  /// c * x_i
  static Polynomial variable(int nvars, int i, double c = 1.0) {
    Monomial m(static_cast<std::size_t>(nvars), 0);
    m[static_cast<std::size_t>(i)] = 1;
    Polynomial p(nvars);
    p.add_term(m, c);
    return p;
  }

  int nvars() const { return n_; }
  const std::map<Monomial, double>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }

  int degree() const {
    int deg = 0;
    for (const auto& [m, c] : terms_) {
      int s = 0;
      for (int e : m) s += e;
      deg = std::max(deg, s);
    }
    return deg;
  }

  void add_term(const Monomial& m, double c) {
    if (static_cast<int>(m.size()) != n_) throw DomainError("Polynomial: monomial has wrong arity");
    for (int e : m)
      if (e < 0) throw DomainError("Polynomial: negative exponent");
    if (c == 0.0) return;
    auto [it, inserted] = terms_.emplace(m, c);
    if (!inserted) {
      it->second += c;
      if (it->second == 0.0) terms_.erase(it);
    }
  }

  double eval(const Eigen::VectorXd& x) const {
    double s = 0.0;
    for (const auto& [m, c] : terms_) s += c * monomial_value(m, x);
    return s;
  }

  Polynomial partial(int i) const {
    Polynomial p(n_);
    for (const auto& [m, c] : terms_) {
      const int e = m[static_cast<std::size_t>(i)];
      if (e == 0) continue;
      Monomial dm = m;
      dm[static_cast<std::size_t>(i)] = e - 1;
      p.add_term(dm, c * e);
    }
    return p;
  }

  Polynomial& operator+=(const Polynomial& o) {
    check(o);
    for (const auto& [m, c] : o.terms_) add_term(m, c);
    return *this;
  }
  Polynomial& operator-=(const Polynomial& o) {
    check(o);
    for (const auto& [m, c] : o.terms_) add_term(m, -c);
    return *this;
  }
  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
  friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
  friend Polynomial operator*(double s, const Polynomial& a) {
    Polynomial p(a.n_);
    if (s == 0.0) return p;
    for (const auto& [m, c] : a.terms_) p.add_term(m, s * c);
    return p;
  }
  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    a.check(b);
    Polynomial p(a.n_);
    for (const auto& [ma, ca] : a.terms_)
      for (const auto& [mb, cb] : b.terms_) {
        Monomial m = ma;
        for (std::size_t i = 0; i < m.size(); ++i) m[i] += mb[i];
        p.add_term(m, ca * cb);
      }
    return p;
  }

  static double monomial_value(const Monomial& m, const Eigen::VectorXd& x) {
    double v = 1.0;
    for (std::size_t i = 0; i < m.size(); ++i)
      for (int e = 0; e < m[i]; ++e) v *= x[static_cast<Eigen::Index>(i)];
    return v;
  }

 private:
  void check(const Polynomial& o) const {
    if (o.n_ != n_) throw DomainError("Polynomial: variable count mismatch");
  }
  int n_ = 0;
  std::map<Monomial, double> terms_;
};

/// V(x) = sum_i p_i(x) e_i on R^n. Evaluation, Jacobian and second
/// derivatives read flattened term lists built at construction.
class PolyVectorField {
 public:
  PolyVectorField() = default;
  explicit PolyVectorField(int n) : PolyVectorField(std::vector<Polynomial>(static_cast<std::size_t>(n), Polynomial(n))) {}
  explicit PolyVectorField(std::vector<Polynomial> components) : comps_(std::move(components)) {
    n_ = static_cast<int>(comps_.size());
    for (const auto& p : comps_)
      if (p.nvars() != n_) throw DomainError("PolyVectorField: component arity must equal dimension");
    compile();
  }

  /// V(x) = M x.
  static PolyVectorField linear(const Eigen::MatrixXd& m) {
    const int n = static_cast<int>(m.rows());
    if (m.cols() != m.rows()) throw DomainError("PolyVectorField::linear: matrix must be square");
    std::vector<Polynomial> c(static_cast<std::size_t>(n), Polynomial(n));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) c[static_cast<std::size_t>(i)] += Polynomial::variable(n, j, m(i, j));
    return PolyVectorField(std::move(c));
  }

  int dim() const { return n_; }
  const std::vector<Polynomial>& components() const { return comps_; }
  const Polynomial& component(int i) const { return comps_[static_cast<std::size_t>(i)]; }
  bool is_zero() const {
    for (const auto& p : comps_)
      if (!p.is_zero()) return false;
    return true;
  }
  int degree() const {
    int deg = 0;
    for (const auto& p : comps_) deg = std::max(deg, p.degree());
    return deg;
  }

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n_);
    add_value(x, 1.0, v);
    return v;
  }

  /// out += s * V(x)
  void add_value(const Eigen::VectorXd& x, double s, Eigen::VectorXd& out) const {
    for (const auto& t : flat_) out[t.comp] += s * t.coeff * Polynomial::monomial_value(t.exps, x);
  }

  /// DV(x), (i, j) = d V_i / d x_j.
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n_, n_);
    add_jacobian(x, 1.0, j);
    return j;
  }

  /// out += s * DV(x)
  void add_jacobian(const Eigen::VectorXd& x, double s, Eigen::MatrixXd& out) const {
    for (const auto& t : flat_) {
      for (int j = 0; j < n_; ++j) {
        const int e = t.exps[static_cast<std::size_t>(j)];
        if (e == 0) continue;
        double v = s * t.coeff * e;
        for (int i = 0; i < n_; ++i) {
          const int ei = t.exps[static_cast<std::size_t>(i)] - (i == j ? 1 : 0);
          for (int r = 0; r < ei; ++r) v *= x[i];
        }
        out(t.comp, j) += v;
      }
    }
  }

  /// Second derivatives: result[i](j, k) = d^2 V_i / dx_j dx_k.
  std::vector<Eigen::MatrixXd> hessians(const Eigen::VectorXd& x) const {
    std::vector<Eigen::MatrixXd> h(static_cast<std::size_t>(n_), Eigen::MatrixXd::Zero(n_, n_));
    for (const auto& t : flat_) {
      for (int j = 0; j < n_; ++j)
        for (int k = 0; k < n_; ++k) {
          Monomial m = t.exps;
          double v = t.coeff;
          v *= m[static_cast<std::size_t>(j)]--;
          if (v == 0.0) continue;
          v *= m[static_cast<std::size_t>(k)]--;
          if (v == 0.0) continue;
          h[static_cast<std::size_t>(t.comp)](j, k) += v * Polynomial::monomial_value(m, x);
        }
    }
    return h;
  }

  PolyVectorField& operator+=(const PolyVectorField& o) {
    check(o);
    for (std::size_t i = 0; i < comps_.size(); ++i) comps_[i] += o.comps_[i];
    compile();
    return *this;
  }
  friend PolyVectorField operator+(PolyVectorField a, const PolyVectorField& b) { return a += b; }
  friend PolyVectorField operator-(const PolyVectorField& a, const PolyVectorField& b) { return a + (-1.0) * b; }
  friend PolyVectorField operator*(double s, const PolyVectorField& a) {
    std::vector<Polynomial> c;
    c.reserve(a.comps_.size());
    for (const auto& p : a.comps_) c.push_back(s * p);
    return PolyVectorField(std::move(c));
  }

  void check(const PolyVectorField& o) const {
    if (o.n_ != n_) throw DomainError("PolyVectorField: dimension mismatch");
  }

 private:
  struct Term {
    int comp;
    Monomial exps;
    double coeff;
  };

  void compile() {
    flat_.clear();
    for (int i = 0; i < n_; ++i)
      for (const auto& [m, c] : comps_[static_cast<std::size_t>(i)].terms()) flat_.push_back({i, m, c});
  }

  int n_ = 0;
  std::vector<Polynomial> comps_;
  std::vector<Term> flat_;
};

/// [X, Y] = (DY) X - (DX) Y, the commutator XY - YX of X and Y as
/// derivations.
inline PolyVectorField vf_bracket(const PolyVectorField& x, const PolyVectorField& y) {
  x.check(y);
  const int n = x.dim();
  std::vector<Polynomial> out(static_cast<std::size_t>(n), Polynomial(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      out[static_cast<std::size_t>(i)] += y.component(i).partial(j) * x.component(j);
      out[static_cast<std::size_t>(i)] -= x.component(i).partial(j) * y.component(j);
    }
  return PolyVectorField(std::move(out));
}

}  // namespace trunclog

#endif  // TRUNCLOG_POLY_HPP
