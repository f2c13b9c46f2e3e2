#ifndef TRUNCLOG_TENSOR_ALGEBRA_HPP
#define TRUNCLOG_TENSOR_ALGEBRA_HPP

// Truncated tensor algebra T^(kappa)(R^d).
//
// Memory layout
// =============
// One contiguous vector holding the degree blocks back to back:
//
//   [ level 0 | level 1 (d) | level 2 (d^2) | ... | level kappa (d^kappa) ]
//
// Inside level k the word (i_1, ..., i_k), i_j in {0..d-1}, sits at the
// lexicographic index i_1 d^{k-1} + ... + i_k, so the tensor product of a
// degree-j word a and a degree-l word b lands at a * d^l + b.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "trunclog/errors.hpp"
#include "trunclog/series.hpp"

namespace trunclog {

struct AlgebraParams {
  int d = 1;
  int kappa = 1;

  AlgebraParams() = default;
  AlgebraParams(int d_, int kappa_) : d(d_), kappa(kappa_) {
    if (d < 1) throw DomainError("AlgebraParams: d must be >= 1");
    if (kappa < 1) throw DomainError("AlgebraParams: kappa must be >= 1");
  }

  friend bool operator==(const AlgebraParams&, const AlgebraParams&) = default;

  std::size_t level_size(int k) const {
    std::size_t s = 1;
    for (int i = 0; i < k; ++i) s *= static_cast<std::size_t>(d);
    return s;
  }
  std::size_t offset(int k) const {
    std::size_t o = 0;
    for (int i = 0; i < k; ++i) o += level_size(i);
    return o;
  }
  std::size_t total_size() const { return offset(kappa + 1); }
  /// Dimension of g^(kappa) = levels 1..kappa.
  std::size_t algebra_dim() const { return total_size() - 1; }
};

inline void require_same(const AlgebraParams& a, const AlgebraParams& b, const char* where) {
  if (!(a == b))
    throw ParamsMismatch(std::string(where) + ": operands have different (d, kappa): (" + std::to_string(a.d) + "," +
                         std::to_string(a.kappa) + ") vs (" + std::to_string(b.d) + "," + std::to_string(b.kappa) + ")");
}

class GradedTensor {
 public:
  GradedTensor() : GradedTensor(AlgebraParams{}) {}
  explicit GradedTensor(const AlgebraParams& p) : params_(p), data_(Eigen::VectorXd::Zero(p.total_size())) {}
  GradedTensor(const AlgebraParams& p, Eigen::VectorXd coeffs) : params_(p), data_(std::move(coeffs)) {
    if (static_cast<std::size_t>(data_.size()) != p.total_size())
      throw DomainError("GradedTensor: coefficient vector has wrong length");
  }

  static GradedTensor scalar(const AlgebraParams& p, double a) {
    GradedTensor t(p);
    t.data_[0] = a;
    return t;
  }
  static GradedTensor unit(const AlgebraParams& p) { return scalar(p, 1.0); }

  /// The word e_{i_1} ... e_{i_k} (0-based letters) times `coeff`; words
  /// longer than kappa are truncated to zero.
  static GradedTensor word(const AlgebraParams& p, const std::vector<int>& letters, double coeff = 1.0) {
    GradedTensor t(p);
    const int k = static_cast<int>(letters.size());
    if (k > p.kappa) return t;
    std::size_t idx = 0;
    for (int l : letters) {
      if (l < 0 || l >= p.d) throw DomainError("GradedTensor::word: letter out of range");
      idx = idx * static_cast<std::size_t>(p.d) + static_cast<std::size_t>(l);
    }
    t.data_[static_cast<Eigen::Index>(p.offset(k) + idx)] = coeff;
    return t;
  }
  static GradedTensor generator(const AlgebraParams& p, int i, double coeff = 1.0) { return word(p, {i}, coeff); }

  const AlgebraParams& params() const { return params_; }
  int d() const { return params_.d; }
  int kappa() const { return params_.kappa; }

  auto level(int k) {
    return data_.segment(static_cast<Eigen::Index>(params_.offset(k)), static_cast<Eigen::Index>(params_.level_size(k)));
  }
  auto level(int k) const {
    return data_.segment(static_cast<Eigen::Index>(params_.offset(k)), static_cast<Eigen::Index>(params_.level_size(k)));
  }
  /// Levels 1..kappa as one vector (coordinates on g^(kappa)).
  auto algebra_part() { return data_.tail(static_cast<Eigen::Index>(params_.algebra_dim())); }
  auto algebra_part() const { return data_.tail(static_cast<Eigen::Index>(params_.algebra_dim())); }

  double scalar_part() const { return data_[0]; }
  void set_scalar_part(double a) { data_[0] = a; }

  const Eigen::VectorXd& coeffs() const { return data_; }
  Eigen::VectorXd& coeffs() { return data_; }

  bool all_finite() const { return data_.allFinite(); }

  GradedTensor& operator+=(const GradedTensor& o) {
    require_same(params_, o.params_, "operator+");
    data_ += o.data_;
    return *this;
  }
  GradedTensor& operator-=(const GradedTensor& o) {
    require_same(params_, o.params_, "operator-");
    data_ -= o.data_;
    return *this;
  }
  GradedTensor& operator*=(double s) {
    data_ *= s;
    return *this;
  }
  friend GradedTensor operator+(GradedTensor a, const GradedTensor& b) { return a += b; }
  friend GradedTensor operator-(GradedTensor a, const GradedTensor& b) { return a -= b; }
  friend GradedTensor operator-(GradedTensor a) {
    a.data_ = -a.data_;
    return a;
  }
  friend GradedTensor operator*(double s, GradedTensor a) { return a *= s; }
  friend GradedTensor operator*(GradedTensor a, double s) { return a *= s; }

 private:
  AlgebraParams params_;
  Eigen::VectorXd data_;
};

/// Element of g^(kappa): level 0 is exactly zero.
class AlgebraElement {
 public:
  explicit AlgebraElement(const AlgebraParams& p) : t_(p) {}
  explicit AlgebraElement(GradedTensor t) : t_(std::move(t)) {
    if (t_.scalar_part() != 0.0) throw DomainError("AlgebraElement: level 0 must be exactly 0");
  }
  /// Drops level 0 instead of validating it.
  static AlgebraElement from_projection(GradedTensor t) {
    t.set_scalar_part(0.0);
    return AlgebraElement(std::move(t));
  }

  const GradedTensor& tensor() const { return t_; }
  const AlgebraParams& params() const { return t_.params(); }
  auto level(int k) const { return t_.level(k); }

  friend AlgebraElement operator+(const AlgebraElement& a, const AlgebraElement& b) { return AlgebraElement(a.t_ + b.t_); }
  friend AlgebraElement operator-(const AlgebraElement& a, const AlgebraElement& b) { return AlgebraElement(a.t_ - b.t_); }
  friend AlgebraElement operator-(const AlgebraElement& a) { return AlgebraElement(-a.t_); }
  friend AlgebraElement operator*(double s, const AlgebraElement& a) { return AlgebraElement(s * a.t_); }

 private:
  GradedTensor t_;
};

/// Element of G^(kappa) = 1 + g^(kappa): level 0 is exactly one.
class GroupElement {
 public:
  explicit GroupElement(const AlgebraParams& p) : t_(GradedTensor::unit(p)) {}
  explicit GroupElement(GradedTensor t) : t_(std::move(t)) {
    if (t_.scalar_part() != 1.0) throw DomainError("GroupElement: level 0 must be exactly 1");
  }
  static GroupElement identity(const AlgebraParams& p) { return GroupElement(p); }
  /// Re-pins level 0 to one; used after numerical integration steps.
  static GroupElement pinned(GradedTensor t) {
    t.set_scalar_part(1.0);
    return GroupElement(std::move(t));
  }

  const GradedTensor& tensor() const { return t_; }
  const AlgebraParams& params() const { return t_.params(); }

 private:
  GradedTensor t_;
};

// ---------------------------------------------------------------------------
// Products

namespace detail {

/// Accumulates sum_{j+l=k} A_j (x) B_l into `out` for every degree k in
/// [kmin, out.kappa()], reading operands of possibly smaller truncation.
inline void tensor_product_into(const GradedTensor& a, const GradedTensor& b, GradedTensor& out, int kmin = 0) {
  const int ka = a.kappa();
  const int kb = b.kappa();
  const AlgebraParams& po = out.params();
  for (int k = kmin; k <= po.kappa; ++k) {
    double* dst = out.coeffs().data() + po.offset(k);
    for (int j = std::max(0, k - kb); j <= std::min(k, ka); ++j) {
      const int l = k - j;
      const auto aj = a.level(j);
      const auto bl = b.level(l);
      const auto nl = static_cast<std::size_t>(bl.size());
      for (Eigen::Index x = 0; x < aj.size(); ++x) {
        const double ax = aj[x];
        if (ax == 0.0) continue;
        double* row = dst + static_cast<std::size_t>(x) * nl;
        for (Eigen::Index y = 0; y < bl.size(); ++y) row[y] += ax * bl[y];
      }
    }
  }
}

}  // namespace detail

/// Truncated product: (AB)_k = sum_j A_j (x) B_{k-j}, k <= kappa.
inline GradedTensor mul(const GradedTensor& a, const GradedTensor& b) {
  require_same(a.params(), b.params(), "mul");
  GradedTensor out(a.params());
  detail::tensor_product_into(a, b, out);
  return out;
}

inline GroupElement mul(const GroupElement& a, const GroupElement& b) {
  return GroupElement::pinned(mul(a.tensor(), b.tensor()));
}

/// Copies `a` into the algebra with truncation `kappa` (extra levels zero,
/// missing levels dropped).
inline GradedTensor retruncate(const GradedTensor& a, int kappa) {
  const AlgebraParams p(a.d(), kappa);
  GradedTensor out(p);
  for (int k = 0; k <= std::min(kappa, a.kappa()); ++k) out.level(k) = a.level(k);
  return out;
}

/// Exact product of two elements of g^(kappa), returned in T^(2 kappa).
inline GradedTensor mul_extended(const AlgebraElement& a, const AlgebraElement& b) {
  require_same(a.params(), b.params(), "mul_extended");
  const AlgebraParams ext(a.params().d, 2 * a.params().kappa);
  GradedTensor out(ext);
  detail::tensor_product_into(a.tensor(), b.tensor(), out);
  return out;
}

inline GradedTensor bracket(const GradedTensor& a, const GradedTensor& b) { return mul(a, b) - mul(b, a); }

inline AlgebraElement bracket(const AlgebraElement& a, const AlgebraElement& b) {
  return AlgebraElement::from_projection(bracket(a.tensor(), b.tensor()));
}

// ---------------------------------------------------------------------------
// Norms and dilations

/// Degree blocks are mutually orthogonal; each block carries the Euclidean
/// inner product of its word coordinates.
inline double inner(const GradedTensor& a, const GradedTensor& b) {
  require_same(a.params(), b.params(), "inner");
  return a.coeffs().dot(b.coeffs());
}

inline double norm(const GradedTensor& a) { return a.coeffs().norm(); }
inline double norm(const AlgebraElement& a) { return norm(a.tensor()); }

/// N(A) = max_k |A_k|^{1/k}.
inline double hom_norm(const GradedTensor& a) {
  if (a.scalar_part() != 0.0) throw DomainError("hom_norm: level 0 must be zero");
  double n = 0.0;
  for (int k = 1; k <= a.kappa(); ++k) n = std::max(n, std::pow(a.level(k).norm(), 1.0 / k));
  return n;
}
inline double hom_norm(const AlgebraElement& a) { return hom_norm(a.tensor()); }

inline GradedTensor dilate(GradedTensor a, double lambda) {
  double s = 1.0;
  for (int k = 0; k <= a.kappa(); ++k) {
    a.level(k) *= s;
    s *= lambda;
  }
  return a;
}
inline AlgebraElement dilate(const AlgebraElement& a, double lambda) {
  return AlgebraElement::from_projection(dilate(a.tensor(), lambda));
}

// ---------------------------------------------------------------------------
// Functional calculus

/// sum_{k=0}^{kappa} a_k xi^k by Horner's rule; coefficients past kappa are
/// ignored since xi^{kappa+1} = 0.
inline GradedTensor series_apply(const std::vector<double>& coeffs, const AlgebraElement& xi) {
  const AlgebraParams& p = xi.params();
  if (coeffs.empty()) return GradedTensor(p);
  const int top = std::min<int>(p.kappa, static_cast<int>(coeffs.size()) - 1);
  GradedTensor r = GradedTensor::scalar(p, coeffs[static_cast<std::size_t>(top)]);
  for (int k = top - 1; k >= 0; --k) {
    r = mul(xi.tensor(), r);
    r.set_scalar_part(r.scalar_part() + coeffs[static_cast<std::size_t>(k)]);
  }
  return r;
}

inline GroupElement exp(const AlgebraElement& xi) {
  return GroupElement::pinned(series_apply(exp_coeffs(xi.params().kappa + 1), xi));
}

inline AlgebraElement log(const GroupElement& g) {
  GradedTensor x = g.tensor();
  x.set_scalar_part(0.0);
  return AlgebraElement::from_projection(series_apply(log1p_coeffs(g.params().kappa + 1), AlgebraElement(std::move(x))));
}

/// (1 + xi)^{-1} = sum_k (-xi)^k.
inline GroupElement inverse(const GroupElement& g) {
  GradedTensor x = g.tensor();
  x.set_scalar_part(0.0);
  const int kappa = g.params().kappa;
  std::vector<double> c(static_cast<std::size_t>(kappa + 1));
  for (int k = 0; k <= kappa; ++k) c[k] = (k % 2 == 0) ? 1.0 : -1.0;
  return GroupElement::pinned(series_apply(c, AlgebraElement(std::move(x))));
}

// ---------------------------------------------------------------------------
// Linear operators on g^(kappa)

/// Linear map on g^(kappa) stored as one dense matrix over the level 1..kappa
/// coordinates; block(k, j) is the d^k x d^j piece mapping degree j to k.
class GradedOperator {
 public:
  explicit GradedOperator(const AlgebraParams& p)
      : params_(p), m_(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p.algebra_dim()),
                                             static_cast<Eigen::Index>(p.algebra_dim()))) {}
  GradedOperator(const AlgebraParams& p, Eigen::MatrixXd m) : params_(p), m_(std::move(m)) {
    const auto n = static_cast<Eigen::Index>(p.algebra_dim());
    if (m_.rows() != n || m_.cols() != n) throw DomainError("GradedOperator: matrix has wrong shape");
  }

  static GradedOperator identity(const AlgebraParams& p) {
    const auto n = static_cast<Eigen::Index>(p.algebra_dim());
    return GradedOperator(p, Eigen::MatrixXd::Identity(n, n));
  }

  /// Matrix of an arbitrary linear map, built column by column from basis
  /// words.
  template <typename F>
  static GradedOperator from_map(const AlgebraParams& p, F&& f) {
    GradedOperator op(p);
    const auto n = static_cast<Eigen::Index>(p.algebra_dim());
    for (Eigen::Index c = 0; c < n; ++c) {
      GradedTensor e(p);
      e.algebra_part()[c] = 1.0;
      const AlgebraElement img = f(AlgebraElement(std::move(e)));
      op.m_.col(c) = img.tensor().algebra_part();
    }
    return op;
  }

  const AlgebraParams& params() const { return params_; }
  const Eigen::MatrixXd& matrix() const { return m_; }
  Eigen::MatrixXd& matrix() { return m_; }

  /// Degree j -> degree k block (1 <= j, k <= kappa).
  auto block(int k, int j) const {
    return m_.block(static_cast<Eigen::Index>(params_.offset(k) - 1), static_cast<Eigen::Index>(params_.offset(j) - 1),
                    static_cast<Eigen::Index>(params_.level_size(k)), static_cast<Eigen::Index>(params_.level_size(j)));
  }

  AlgebraElement apply(const AlgebraElement& b) const {
    require_same(params_, b.params(), "GradedOperator::apply");
    GradedTensor out(params_);
    out.algebra_part() = m_ * b.tensor().algebra_part();
    return AlgebraElement(std::move(out));
  }

  friend GradedOperator operator*(const GradedOperator& a, const GradedOperator& b) {
    require_same(a.params_, b.params_, "GradedOperator::operator*");
    return GradedOperator(a.params_, a.m_ * b.m_);
  }
  friend GradedOperator operator+(const GradedOperator& a, const GradedOperator& b) {
    require_same(a.params_, b.params_, "GradedOperator::operator+");
    return GradedOperator(a.params_, a.m_ + b.m_);
  }
  friend GradedOperator operator-(const GradedOperator& a, const GradedOperator& b) {
    require_same(a.params_, b.params_, "GradedOperator::operator-");
    return GradedOperator(a.params_, a.m_ - b.m_);
  }
  friend GradedOperator operator*(double s, const GradedOperator& a) { return GradedOperator(a.params_, s * a.m_); }

  double frobenius_distance(const GradedOperator& o) const {
    require_same(params_, o.params_, "GradedOperator::frobenius_distance");
    return (m_ - o.m_).norm();
  }

 private:
  AlgebraParams params_;
  Eigen::MatrixXd m_;
};

/// ad_xi : B -> [xi, B].
inline GradedOperator ad_operator(const AlgebraElement& xi) {
  return GradedOperator::from_map(xi.params(), [&](const AlgebraElement& b) { return bracket(xi, b); });
}

/// Ad_g : B -> g B g^{-1}.
inline GradedOperator conjugation_operator(const GroupElement& g) {
  const GroupElement gi = inverse(g);
  return GradedOperator::from_map(g.params(), [&](const AlgebraElement& b) {
    return AlgebraElement::from_projection(mul(mul(g.tensor(), b.tensor()), gi.tensor()));
  });
}

/// sum_{k=0}^{kappa-1} a_k ad_xi^k B, evaluated with brackets (no matrices).
inline AlgebraElement ad_series_apply(const std::vector<double>& coeffs, const AlgebraElement& xi, const AlgebraElement& b) {
  require_same(xi.params(), b.params(), "ad_series_apply");
  const AlgebraParams& p = xi.params();
  if (coeffs.empty()) return AlgebraElement(p);
  const int top = std::min<int>(p.kappa - 1, static_cast<int>(coeffs.size()) - 1);
  AlgebraElement r = coeffs[static_cast<std::size_t>(top)] * b;
  for (int k = top - 1; k >= 0; --k) r = coeffs[static_cast<std::size_t>(k)] * b + bracket(xi, r);
  return r;
}

/// sum_{k=0}^{kappa-1} a_k op^k for a degree-raising operator (such as
/// ad_xi), for which op^kappa = 0 on g^(kappa).
inline GradedOperator operator_series_apply(const std::vector<double>& coeffs, const GradedOperator& op) {
  const AlgebraParams& p = op.params();
  if (coeffs.empty()) return GradedOperator(p);
  const int top = std::min<int>(p.kappa - 1, static_cast<int>(coeffs.size()) - 1);
  const auto n = op.matrix().rows();
  Eigen::MatrixXd r = coeffs[static_cast<std::size_t>(top)] * Eigen::MatrixXd::Identity(n, n);
  for (int k = top - 1; k >= 0; --k) {
    r = op.matrix() * r;
    r.diagonal().array() += coeffs[static_cast<std::size_t>(k)];
  }
  return GradedOperator(p, std::move(r));
}

inline GradedOperator operator_exp(const GradedOperator& op) {
  return operator_series_apply(exp_coeffs(op.params().kappa), op);
}

}  // namespace trunclog

#endif  // TRUNCLOG_TENSOR_ALGEBRA_HPP
