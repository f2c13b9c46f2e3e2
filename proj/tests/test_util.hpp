#ifndef TRUNCLOG_TESTS_TEST_UTIL_HPP
#define TRUNCLOG_TESTS_TEST_UTIL_HPP

#include <random>

#include "trunclog/tensor_algebra.hpp"

namespace trunclog::testing {

/// Gaussian coefficients on levels 1..kappa, level 0 = `level0`.
inline GradedTensor random_tensor(const AlgebraParams& p, std::mt19937_64& rng, double scale = 1.0, double level0 = 0.0) {
  std::normal_distribution<double> g(0.0, scale);
  GradedTensor t(p);
  for (Eigen::Index i = 1; i < t.coeffs().size(); ++i) t.coeffs()[i] = g(rng);
  t.set_scalar_part(level0);
  return t;
}

inline AlgebraElement random_algebra(const AlgebraParams& p, std::mt19937_64& rng, double scale = 1.0) {
  return AlgebraElement(random_tensor(p, rng, scale, 0.0));
}

inline GroupElement random_group(const AlgebraParams& p, std::mt19937_64& rng, double scale = 1.0) {
  return GroupElement(random_tensor(p, rng, scale, 1.0));
}

inline double rel_err(const GradedTensor& a, const GradedTensor& b) {
  return norm(a - b) / std::max(1.0, std::max(norm(a), norm(b)));
}

}  // namespace trunclog::testing

#endif
