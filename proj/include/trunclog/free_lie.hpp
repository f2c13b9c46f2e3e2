#ifndef TRUNCLOG_FREE_LIE_HPP
#define TRUNCLOG_FREE_LIE_HPP

// Free nilpotent Lie algebra F^(kappa)(R^d) realised inside T^(kappa)(R^d)
// through the Lyndon-word Hall basis with standard bracketing.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "trunclog/errors.hpp"
#include "trunclog/tensor_algebra.hpp"

namespace trunclog {

struct HallWord {
  int degree = 1;
  /// Generator index for degree-1 words, -1 otherwise.
  int letter = -1;
  /// Indices of the standard-bracketing factors in HallBasis::words().
  int left = -1;
  int right = -1;
  /// The underlying Lyndon word, 0-based letters.
  std::vector<int> letters;

  bool is_generator() const { return degree == 1; }
};

namespace detail {

/// Duval's algorithm: all Lyndon words of length 1..max_len over {0..d-1},
/// in lexicographic order.
inline std::vector<std::vector<int>> lyndon_words(int d, int max_len) {
  std::vector<std::vector<int>> out;
  std::vector<int> w{-1};
  while (!w.empty()) {
    ++w.back();
    out.push_back(w);
    const std::size_t m = w.size();
    while (w.size() < static_cast<std::size_t>(max_len)) w.push_back(w[w.size() - m]);
    while (!w.empty() && w.back() == d - 1) w.pop_back();
  }
  return out;
}

inline bool is_lyndon(const std::vector<int>& w) {
  for (std::size_t i = 1; i < w.size(); ++i)
    if (!std::lexicographical_compare(w.begin(), w.end(), w.begin() + static_cast<std::ptrdiff_t>(i), w.end()))
      return false;
  return !w.empty();
}

}  // namespace detail

inline std::int64_t witt_dimension(int d, int k) {
  auto mobius = [](int n) {
    int m = 1;
    for (int p = 2; p * p <= n; ++p) {
      if (n % p == 0) {
        n /= p;
        if (n % p == 0) return 0;
        m = -m;
      }
    }
    if (n > 1) m = -m;
    return m;
  };
  std::int64_t s = 0;
  for (int j = 1; j <= k; ++j) {
    if (k % j != 0) continue;
    std::int64_t p = 1;
    for (int i = 0; i < k / j; ++i) p *= d;
    s += mobius(j) * p;
  }
  return s / k;
}

class HallBasis {
 public:
  const AlgebraParams& params() const { return params_; }
  const std::vector<HallWord>& words() const { return words_; }
  std::size_t size() const { return words_.size(); }

  /// Columns are the tensor coordinates (levels 1..kappa) of each word.
  const Eigen::MatrixXd& embedding() const { return embed_; }

  /// Index range [begin, end) of the degree-k words.
  std::pair<int, int> degree_range(int k) const { return {degree_begin_[k], degree_begin_[k + 1]}; }
  int degree_count(int k) const { return degree_begin_[k + 1] - degree_begin_[k]; }
  std::vector<int> degree_dimensions() const {
    std::vector<int> dims;
    for (int k = 1; k <= params_.kappa; ++k) dims.push_back(degree_count(k));
    return dims;
  }

  AlgebraElement word_element(int i) const {
    GradedTensor t(params_);
    t.algebra_part() = embed_.col(i);
    return AlgebraElement(std::move(t));
  }

  /// Bracketing string such as "[1,[1,2]]" with 1-based letters.
  std::string bracket_string(int i) const {
    const HallWord& w = words_[static_cast<std::size_t>(i)];
    if (w.is_generator()) return std::to_string(w.letter + 1);
    return "[" + bracket_string(w.left) + "," + bracket_string(w.right) + "]";
  }

  /// Degree-k embedding block E_k (d^k x dim F_k).
  Eigen::MatrixXd degree_block(int k) const {
    const auto [b, e] = degree_range(k);
    return embed_.block(static_cast<Eigen::Index>(params_.offset(k) - 1), b,
                        static_cast<Eigen::Index>(params_.level_size(k)), e - b);
  }

  /// Thin QR factors of E_k; Q_k has orthonormal columns spanning F_k.
  const Eigen::MatrixXd& orthonormal_block(int k) const { return q_[static_cast<std::size_t>(k)]; }
  const Eigen::MatrixXd& triangular_block(int k) const { return r_[static_cast<std::size_t>(k)]; }

  friend std::shared_ptr<const HallBasis> build_hall_basis(const AlgebraParams& params);

 private:
  explicit HallBasis(const AlgebraParams& p) : params_(p) {}

  AlgebraParams params_;
  std::vector<HallWord> words_;
  std::vector<int> degree_begin_;
  Eigen::MatrixXd embed_;
  std::vector<Eigen::MatrixXd> q_;
  std::vector<Eigen::MatrixXd> r_;
};

using HallBasisPtr = std::shared_ptr<const HallBasis>;

/// Builds the Lyndon basis graded by degree; inside a degree, words are in
/// lexicographic order. Embeddings come from recursive tensor brackets.
inline HallBasisPtr build_hall_basis(const AlgebraParams& params) {
  std::shared_ptr<HallBasis> basis(new HallBasis(params));
  auto lw = detail::lyndon_words(params.d, params.kappa);
  std::stable_sort(lw.begin(), lw.end(), [](const auto& a, const auto& b) { return a.size() < b.size(); });

  auto& words = basis->words_;
  words.reserve(lw.size());
  std::vector<GradedTensor> tensors;
  auto find_word = [&](const std::vector<int>& letters) {
    for (std::size_t i = 0; i < words.size(); ++i)
      if (words[i].letters == letters) return static_cast<int>(i);
    throw ConsistencyError("build_hall_basis: standard factor missing");
  };

  basis->degree_begin_.assign(static_cast<std::size_t>(params.kappa + 2), 0);
  for (const auto& letters : lw) {
    HallWord w;
    w.degree = static_cast<int>(letters.size());
    w.letters = letters;
    if (w.degree == 1) {
      w.letter = letters[0];
      tensors.push_back(GradedTensor::generator(params, w.letter));
    } else {
      // Standard factorisation: right factor is the longest proper Lyndon suffix.
      for (std::size_t split = 1; split < letters.size(); ++split) {
        std::vector<int> suffix(letters.begin() + static_cast<std::ptrdiff_t>(split), letters.end());
        if (detail::is_lyndon(suffix)) {
          std::vector<int> prefix(letters.begin(), letters.begin() + static_cast<std::ptrdiff_t>(split));
          w.left = find_word(prefix);
          w.right = find_word(suffix);
          break;
        }
      }
      tensors.push_back(bracket(tensors[static_cast<std::size_t>(w.left)], tensors[static_cast<std::size_t>(w.right)]));
    }
    words.push_back(std::move(w));
  }
  for (int k = 1; k <= params.kappa + 1; ++k) {
    int c = 0;
    for (const auto& w : words)
      if (w.degree < k) ++c;
    basis->degree_begin_[static_cast<std::size_t>(k)] = c;
  }
  basis->degree_begin_[0] = 0;

  const auto n = static_cast<Eigen::Index>(params.algebra_dim());
  basis->embed_.resize(n, static_cast<Eigen::Index>(words.size()));
  for (std::size_t i = 0; i < words.size(); ++i) basis->embed_.col(static_cast<Eigen::Index>(i)) = tensors[i].algebra_part();

  basis->q_.resize(static_cast<std::size_t>(params.kappa + 1));
  basis->r_.resize(static_cast<std::size_t>(params.kappa + 1));
  for (int k = 1; k <= params.kappa; ++k) {
    const Eigen::MatrixXd ek = basis->degree_block(k);
    if (ek.cols() == 0) {
      basis->q_[k] = Eigen::MatrixXd(ek.rows(), 0);
      basis->r_[k] = Eigen::MatrixXd(0, 0);
      continue;
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(ek);
    basis->q_[k] = qr.householderQ() * Eigen::MatrixXd::Identity(ek.rows(), ek.cols());
    basis->r_[k] = qr.matrixQR().topRows(ek.cols()).triangularView<Eigen::Upper>();
    const Eigen::VectorXd diag = basis->r_[k].diagonal().cwiseAbs();
    if (diag.minCoeff() <= 1e-12 * diag.maxCoeff())
      throw ConsistencyError("build_hall_basis: embedding columns are linearly dependent at degree " + std::to_string(k));
  }
  return basis;
}

/// Coordinates of an element of F^(kappa) in a Hall basis.
class LieCoordinates {
 public:
  explicit LieCoordinates(HallBasisPtr basis)
      : basis_(std::move(basis)), c_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis_->size()))) {}
  LieCoordinates(HallBasisPtr basis, Eigen::VectorXd coeffs) : basis_(std::move(basis)), c_(std::move(coeffs)) {
    if (static_cast<std::size_t>(c_.size()) != basis_->size()) throw DomainError("LieCoordinates: wrong coefficient count");
  }

  /// Coordinate 1 on the given Hall word.
  static LieCoordinates unit(HallBasisPtr basis, int word) {
    LieCoordinates l(std::move(basis));
    l.c_[word] = 1.0;
    return l;
  }

  const HallBasisPtr& basis() const { return basis_; }
  const Eigen::VectorXd& coeffs() const { return c_; }
  Eigen::VectorXd& coeffs() { return c_; }
  double operator[](int i) const { return c_[i]; }
  const AlgebraParams& params() const { return basis_->params(); }

  AlgebraElement to_tensor() const {
    GradedTensor t(basis_->params());
    t.algebra_part() = basis_->embedding() * c_;
    return AlgebraElement(std::move(t));
  }

  friend LieCoordinates operator+(const LieCoordinates& a, const LieCoordinates& b) {
    a.check_same(b, "LieCoordinates::operator+");
    return LieCoordinates(a.basis_, a.c_ + b.c_);
  }
  friend LieCoordinates operator-(const LieCoordinates& a, const LieCoordinates& b) {
    a.check_same(b, "LieCoordinates::operator-");
    return LieCoordinates(a.basis_, a.c_ - b.c_);
  }
  friend LieCoordinates operator-(const LieCoordinates& a) { return LieCoordinates(a.basis_, -a.c_); }
  friend LieCoordinates operator*(double s, const LieCoordinates& a) { return LieCoordinates(a.basis_, s * a.c_); }

  void check_same(const LieCoordinates& o, const char* where) const {
    if (basis_ != o.basis_ && !(basis_->params() == o.basis_->params()))
      throw ParamsMismatch(std::string(where) + ": coordinates belong to different Hall bases");
  }

 private:
  HallBasisPtr basis_;
  Eigen::VectorXd c_;
};

/// Per-degree dilation of Hall coordinates (each word is homogeneous).
inline LieCoordinates dilate(const LieCoordinates& a, double lambda) {
  Eigen::VectorXd c = a.coeffs();
  const auto& words = a.basis()->words();
  for (std::size_t i = 0; i < words.size(); ++i) c[static_cast<Eigen::Index>(i)] *= std::pow(lambda, words[i].degree);
  return LieCoordinates(a.basis(), std::move(c));
}

inline double norm(const LieCoordinates& a) { return norm(a.to_tensor()); }

struct LieProjection {
  LieCoordinates coords;
  double residual = 0.0;
};

/// Least-squares coordinates of A against the embedding, degree by degree.
/// The residual |A - E c| is zero exactly when A lies in F^(kappa).
inline LieProjection project_to_lie(const AlgebraElement& a, const HallBasisPtr& basis) {
  require_same(a.params(), basis->params(), "project_to_lie");
  LieCoordinates c(basis);
  double res2 = 0.0;
  for (int k = 1; k <= basis->params().kappa; ++k) {
    const Eigen::VectorXd ak = a.level(k);
    const auto [b, e] = basis->degree_range(k);
    if (e == b) {
      res2 += ak.squaredNorm();
      continue;
    }
    const Eigen::MatrixXd& q = basis->orthonormal_block(k);
    const Eigen::VectorXd z = q.transpose() * ak;
    const Eigen::VectorXd ck = basis->triangular_block(k).triangularView<Eigen::Upper>().solve(z);
    if (!ck.allFinite()) throw ConsistencyError("project_to_lie: rank-deficient Gram matrix");
    c.coeffs().segment(b, e - b) = ck;
    res2 += (ak - q * z).squaredNorm();
  }
  return {std::move(c), std::sqrt(res2)};
}

inline constexpr double kLieResidualTolerance = 1e-10;

/// Projects and enforces residual <= tol * max(1, |A|).
inline LieCoordinates require_lie(const AlgebraElement& a, const HallBasisPtr& basis, double tol, const char* where) {
  auto pr = project_to_lie(a, basis);
  const double scale = std::max(1.0, norm(a));
  if (!(pr.residual <= tol * scale))
    throw ConsistencyError(std::string(where) + ": result is not a Lie element (residual " + std::to_string(pr.residual) +
                           ")");
  return std::move(pr.coords);
}

/// log(exp(A) exp(B)) computed in the tensor algebra and read back in Hall
/// coordinates.
inline LieCoordinates bch(const LieCoordinates& a, const LieCoordinates& b) {
  a.check_same(b, "bch");
  const AlgebraElement c = log(mul(exp(a.to_tensor()), exp(b.to_tensor())));
  return require_lie(c, a.basis(), kLieResidualTolerance, "bch");
}

/// Lie bracket of Hall coordinates.
inline LieCoordinates lie_bracket(const LieCoordinates& a, const LieCoordinates& b) {
  a.check_same(b, "lie_bracket");
  return require_lie(bracket(a.to_tensor(), b.to_tensor()), a.basis(), kLieResidualTolerance, "lie_bracket");
}

/// Gaussian Hall coordinates; degree-k coordinates scaled by profile[k-1]
/// (missing entries count as 1).
inline LieCoordinates random_lie(const HallBasisPtr& basis, std::uint64_t seed, const std::vector<double>& degree_profile = {}) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  LieCoordinates c(basis);
  const auto& words = basis->words();
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto k = static_cast<std::size_t>(words[i].degree - 1);
    const double s = k < degree_profile.size() ? degree_profile[k] : 1.0;
    const double g = gauss(rng);
    c.coeffs()[static_cast<Eigen::Index>(i)] = s * g;
  }
  return c;
}

/// Uniform sample from the unit sphere of F^(kappa) (tensor norm); with
/// `degree` > 0 the sample is restricted to F_degree.
inline LieCoordinates random_unit_lie(const HallBasisPtr& basis, std::uint64_t seed, int degree = 0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int kappa = basis->params().kappa;
  std::vector<Eigen::VectorXd> z(static_cast<std::size_t>(kappa + 1));
  double n2 = 0.0;
  for (int k = 1; k <= kappa; ++k) {
    z[k] = Eigen::VectorXd::Zero(basis->degree_count(k));
    if (degree != 0 && degree != k) continue;
    for (Eigen::Index i = 0; i < z[k].size(); ++i) z[k][i] = gauss(rng);
    n2 += z[k].squaredNorm();
  }
  if (n2 == 0.0) throw DomainError("random_unit_lie: selected degree has no Hall words");
  LieCoordinates c(basis);
  const double inv = 1.0 / std::sqrt(n2);
  for (int k = 1; k <= kappa; ++k) {
    if (z[k].size() == 0) continue;
    const auto [b, e] = basis->degree_range(k);
    c.coeffs().segment(b, e - b) = basis->triangular_block(k).triangularView<Eigen::Upper>().solve(inv * z[k]);
  }
  return c;
}

}  // namespace trunclog

#endif  // TRUNCLOG_FREE_LIE_HPP
