#ifndef TRUNCLOG_SYSTEMS_HPP
#define TRUNCLOG_SYSTEMS_HPP

// Built-in dynamical systems.
//
//   heisenberg  R^3, V_1 = d_x - (y/2) d_z, V_2 = d_y + (x/2) d_z; step-2 nilpotent
//   linear      R^n, V_i(x) = M_i x
//   polyquad    R^2, V_1 = d_x + x^2 d_y, V_2 = x d_x + y d_y; complete, not nilpotent
//   so3         S^2, V_1(x) = e_1 cross x, V_2(x) = e_2 cross x (rotation fields)

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "trunclog/errors.hpp"
#include "trunclog/flows.hpp"
#include "trunclog/poly.hpp"

namespace trunclog::systems {

inline void require_generators(const HallBasisPtr& basis, int d, const char* name) {
  if (basis->params().d != d)
    throw ConfigError(std::string(name) + " system needs d = " + std::to_string(d) + " generators");
}

inline DynamicalSystem heisenberg(const HallBasisPtr& basis) {
  require_generators(basis, 2, "heisenberg");
  const int n = 3;
  using P = Polynomial;
  PolyVectorField x({P::constant(n, 1.0), P(n), P::variable(n, 1, -0.5)});
  PolyVectorField y({P(n), P::constant(n, 1.0), P::variable(n, 0, 0.5)});
  return DynamicalSystem(Manifold::flat(n), basis, {x, y}, "heisenberg");
}

/// Random matrices with i.i.d. N(0, scale^2 / n) entries.
inline std::vector<Eigen::MatrixXd> random_matrices(int count, int n, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale / std::sqrt(static_cast<double>(n)));
  std::vector<Eigen::MatrixXd> out;
  for (int k = 0; k < count; ++k) {
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = g(rng);
    out.push_back(std::move(m));
  }
  return out;
}

inline DynamicalSystem linear(const HallBasisPtr& basis, const std::vector<Eigen::MatrixXd>& matrices) {
  if (static_cast<int>(matrices.size()) != basis->params().d) throw ConfigError("linear system needs one matrix per generator");
  std::vector<PolyVectorField> f;
  for (const auto& m : matrices) f.push_back(PolyVectorField::linear(m));
  return DynamicalSystem(Manifold::flat(static_cast<int>(matrices.front().rows())), basis, std::move(f), "linear");
}

inline DynamicalSystem linear(const HallBasisPtr& basis, int n, std::uint64_t seed, double scale = 1.0) {
  return linear(basis, random_matrices(basis->params().d, n, seed, scale));
}

inline DynamicalSystem polyquad(const HallBasisPtr& basis) {
  require_generators(basis, 2, "polyquad");
  const int n = 2;
  using P = Polynomial;
  Monomial xx{2, 0};
  P x2(n);
  x2.add_term(xx, 1.0);
  PolyVectorField v1({P::constant(n, 1.0), x2});
  PolyVectorField v2({P::variable(n, 0), P::variable(n, 1)});
  return DynamicalSystem(Manifold::flat(n), basis, {v1, v2}, "polyquad");
}

inline DynamicalSystem so3(const HallBasisPtr& basis) {
  require_generators(basis, 2, "so3");
  Eigen::Matrix3d l1, l2;
  l1 << 0, 0, 0, 0, 0, -1, 0, 1, 0;
  l2 << 0, 0, 1, 0, 0, 0, -1, 0, 0;
  return DynamicalSystem(Manifold::sphere(2), basis, {PolyVectorField::linear(l1), PolyVectorField::linear(l2)}, "so3");
}

}  // namespace trunclog::systems

#endif  // TRUNCLOG_SYSTEMS_HPP
