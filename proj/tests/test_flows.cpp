#include <gtest/gtest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <random>

#include "trunclog/flows.hpp"
#include "trunclog/systems.hpp"

using namespace trunclog;

namespace {

LieCoordinates random_coords(const HallBasisPtr& b, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  LieCoordinates c(b);
  for (Eigen::Index i = 0; i < c.coeffs().size(); ++i) c.coeffs()[i] = g(rng);
  return c;
}

/// Matrices of the Hall fields of a linear system, built by the matrix
/// recursion M_[u,v] = M_v M_u - M_u M_v.
std::vector<Eigen::MatrixXd> hall_matrices(const HallBasis& b, const std::vector<Eigen::MatrixXd>& base) {
  std::vector<Eigen::MatrixXd> m;
  for (const auto& w : b.words()) {
    if (w.is_generator()) {
      m.push_back(base[static_cast<std::size_t>(w.letter)]);
    } else {
      const auto& u = m[static_cast<std::size_t>(w.left)];
      const auto& v = m[static_cast<std::size_t>(w.right)];
      m.push_back(v * u - u * v);
    }
  }
  return m;
}

Eigen::MatrixXd linear_extension(const std::vector<Eigen::MatrixXd>& hm, const LieCoordinates& a) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(hm[0].rows(), hm[0].cols());
  for (std::size_t i = 0; i < hm.size(); ++i) out += a[static_cast<int>(i)] * hm[i];
  return out;
}

ControlPath random_pwc(const HallBasisPtr& b, std::mt19937_64& rng, int pieces, double scale = 1.0) {
  std::uniform_real_distribution<double> len(0.2, 0.6);
  std::vector<double> bp{0.0};
  std::vector<LieCoordinates> v;
  for (int i = 0; i < pieces; ++i) {
    bp.push_back(bp.back() + len(rng));
    v.push_back(random_coords(b, rng, scale));
  }
  return ControlPath::piecewise_constant(bp, v);
}

/// Heisenberg time-1 flow in closed form.
Eigen::VectorXd heisenberg_exp(const LieCoordinates& a, const Eigen::VectorXd& m) {
  const double p = a[0], q = a[1], c = a[2];
  Eigen::VectorXd r(3);
  r << m[0] + p, m[1] + q, m[2] + c + 0.5 * (q * m[0] - p * m[1]);
  return r;
}

const FlowConfig kCfg{};

}  // namespace

TEST(DynamicalSystem, HallCacheAndErrors) {
  const auto b = build_hall_basis(AlgebraParams(2, 3));
  const auto h = systems::heisenberg(b);
  EXPECT_EQ(h.nilpotency_step(), 2);
  EXPECT_EQ(systems::polyquad(b).nilpotency_step(), -1);
  const Eigen::VectorXd x = Eigen::VectorXd::Random(3);
  EXPECT_EQ((system_extend(h, LieCoordinates::unit(b, 0))(x) - h.base_fields()[0](x)).norm(), 0.0);
  EXPECT_EQ((system_extend(h, LieCoordinates::unit(b, 2))(x) - vf_bracket(h.base_fields()[0], h.base_fields()[1])(x)).norm(),
            0.0);
  EXPECT_TRUE(system_extend(h, LieCoordinates::unit(b, 3)).is_zero());
  EXPECT_THROW(systems::heisenberg(build_hall_basis(AlgebraParams(3, 2))), ConfigError);
  EXPECT_THROW(system_extend(h, LieCoordinates(build_hall_basis(AlgebraParams(2, 2)))), ParamsMismatch);
  // Non-tangent field on the sphere is rejected.
  const int n = 3;
  PolyVectorField radial = PolyVectorField::linear(Eigen::MatrixXd::Identity(n, n));
  EXPECT_THROW(DynamicalSystem(Manifold::sphere(2), b, {radial, radial}), DomainError);
}

TEST(DynamicalSystem, BracketHomomorphism) {
  std::mt19937_64 rng(61);
  const auto b = build_hall_basis(AlgebraParams(2, 4));
  for (const auto& sys : {systems::polyquad(b), systems::linear(b, 3, 5), systems::heisenberg(b)}) {
    for (int i = 0; i < 10; ++i) {
      // Degree-1 inputs keep [A, B] inside the truncation.
      auto a = random_coords(b, rng), c = random_coords(b, rng);
      for (int k = 2; k < static_cast<int>(b->size()); ++k) a.coeffs()[k] = 0.0, c.coeffs()[k] = 0.0;
      const auto va = system_extend(sys, a), vc = system_extend(sys, c);
      const auto vac = system_extend(sys, lie_bracket(a, c));
      const auto direct = vf_bracket(va, vc);
      for (const auto& x : sample_points(sys.manifold(), 8, 100 + i))
        EXPECT_LE((vac(x) - direct(x)).norm(), 1e-10) << sys.name();
    }
  }
}

TEST(Flow, ZeroPathAndExpOfZero) {
  const auto b = build_hall_basis(AlgebraParams(2, 2));
  const auto sys = systems::polyquad(b);
  const Eigen::VectorXd m = Eigen::VectorXd::Random(2);
  EXPECT_EQ((flow(sys, ControlPath::constant(LieCoordinates(b), 1.0), m, 0.0, 1.0, kCfg) - m).norm(), 0.0);
  EXPECT_EQ((exp_flow(sys, LieCoordinates(b), m, kCfg) - m).norm(), 0.0);
  EXPECT_THROW(flow(systems::so3(b), ControlPath::constant(LieCoordinates(b), 1.0), Eigen::Vector3d(1, 1, 0), 0.0, 1.0, kCfg),
               DomainError);
}

TEST(Flow, LinearMatchesMatrixExponentials) {
  std::mt19937_64 rng(62);
  const auto b = build_hall_basis(AlgebraParams(2, 3));
  const auto mats = systems::random_matrices(2, 3, 9, 1.0);
  const auto sys = systems::linear(b, mats);
  const auto hm = hall_matrices(*b, mats);
  const auto p = random_pwc(b, rng, 3, 0.5);
  const Eigen::VectorXd m = Eigen::VectorXd::Random(3);
  const Eigen::Vector3d v(0.3, -1.0, 0.2);
  Eigen::MatrixXd prod = Eigen::MatrixXd::Identity(3, 3);
  for (std::size_t i = 0; i < p.pieces().values.size(); ++i) {
    const double h = p.pieces().breakpoints[i + 1] - p.pieces().breakpoints[i];
    prod = (h * linear_extension(hm, p.pieces().values[i])).exp() * prod;
  }
  auto rel = [](const Eigen::VectorXd& x, const Eigen::VectorXd& y) { return (x - y).norm() / std::max(1.0, y.norm()); };
  EXPECT_LE(rel(flow(sys, p, m, 0.0, p.horizon(), kCfg), prod * m), 1e-11);
  const auto a = random_coords(b, rng, 0.5);
  EXPECT_LE(rel(exp_flow(sys, a, m, kCfg), linear_extension(hm, a).exp() * m), 1e-11);
  const auto tv = pushforward_flow(sys, p, {m, v}, 0.0, p.horizon(), kCfg);
  EXPECT_LE(rel(tv.vector, prod * v), 1e-11);
}

TEST(Flow, HeisenbergClosedForm) {
  std::mt19937_64 rng(63);
  const auto b = build_hall_basis(AlgebraParams(2, 2));
  const auto sys = systems::heisenberg(b);
  for (int i = 0; i < 10; ++i) {
    const auto a = random_coords(b, rng);
    const Eigen::VectorXd m = Eigen::VectorXd::Random(3);
    EXPECT_LE((exp_flow(sys, a, m, kCfg) - heisenberg_exp(a, m)).norm(), 1e-12);
  }
}

TEST(Flow, GroupLawAndInverse) {
  std::mt19937_64 rng(64);
  const auto b = build_hall_basis(AlgebraParams(2, 2));
  for (const auto& sys : {systems::polyquad(b), systems::so3(b)}) {
    const auto p = random_pwc(b, rng, 4, 0.7);
    const double T = p.horizon(), s = 0.4 * T, r = 0.15 * T;
    const double tol = 10.0 * kCfg.integrator_tolerance(T);
    for (const auto& m : sample_points(sys.manifold(), 6, 7, 0.5)) {
      const Eigen::VectorXd direct = flow(sys, p, m, r, T, kCfg);
      const Eigen::VectorXd composed = flow(sys, p, flow(sys, p, m, r, s, kCfg), s, T, kCfg);
      EXPECT_LE(dist_M(sys.manifold(), direct, composed), tol) << sys.name();
      const Eigen::VectorXd back = flow(sys, p, flow(sys, p, m, 0.0, T, kCfg), T, 0.0, kCfg);
      EXPECT_LE(dist_M(sys.manifold(), back, m), tol) << sys.name();
      const auto a = random_coords(b, rng, 0.7);
      EXPECT_LE(dist_M(sys.manifold(), exp_flow(sys, -a, exp_flow(sys, a, m, kCfg), kCfg), m), tol) << sys.name();
    }
  }
}

TEST(Flow, ExpOfBchIsCompositionOnHeisenberg) {
  std::mt19937_64 rng(65);
  const auto b = build_hall_basis(AlgebraParams(2, 2));
  const auto sys = systems::heisenberg(b);
  const auto a = random_coords(b, rng), c = random_coords(b, rng);
  const Eigen::VectorXd m = Eigen::VectorXd::Random(3);
  EXPECT_LE((exp_flow(sys, c, exp_flow(sys, a, m, kCfg), kCfg) - exp_flow(sys, bch(a, c), m, kCfg)).norm(),
            10.0 * kCfg.integrator_tolerance(1.0));
}

TEST(Flow, SphereTangencyPreserved) {
  std::mt19937_64 rng(66);
  const auto b = build_hall_basis(AlgebraParams(2, 3));
  const auto sys = systems::so3(b);
  const auto p = random_pwc(b, rng, 3);
  for (const auto& s : sample_unit_tangents(sys.manifold(), 5, 3)) {
    const auto r = pushforward_flow(sys, p, s, 0.0, p.horizon(), kCfg);
    EXPECT_NEAR(r.point.norm(), 1.0, 1e-10);
    EXPECT_LE(std::abs(r.point.dot(r.vector)), 1e-10);
    // Rotations are isometries.
    EXPECT_NEAR(r.vector.norm(), 1.0, 1e-10);
  }
}

TEST(Pushforward, ZeroPathAndRotationNorm) {
  const auto b = build_hall_basis(AlgebraParams(2, 2));
  Eigen::MatrixXd rot(2, 2);
  rot << 0, -1, 1, 0;
  const auto sys = systems::linear(b, {rot, 2.0 * rot});
  const TangentSample s{Eigen::Vector2d(0.3, 0.4), Eigen::Vector2d(1.0, -2.0)};
  const auto z = pushforward_flow(sys, ControlPath::constant(LieCoordinates(b), 1.0), s, 0.0, 1.0, kCfg);
  EXPECT_EQ((z.point - s.point).norm() + (z.vector - s.vector).norm(), 0.0);
  std::mt19937_64 rng(67);
  const auto r = pushforward_flow(sys, random_pwc(b, rng, 3), s, 0.0, 1.0, kCfg);
  EXPECT_NEAR(r.vector.norm(), s.vector.norm(), 1e-12);
}

TEST(Pushforward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(68);
  const auto b = build_hall_basis(AlgebraParams(2, 3));
  const auto sys = systems::polyquad(b);
  const auto p = random_pwc(b, rng, 3, 0.5);
  const double h = 1e-4;
  for (const auto& s : sample_unit_tangents(sys.manifold(), 5, 11, 0.5)) {
    const auto r = pushforward_flow(sys, p, s, 0.0, p.horizon(), kCfg);
    const Eigen::VectorXd fd =
        (flow(sys, p, s.point + h * s.vector, 0.0, p.horizon(), kCfg) - flow(sys, p, s.point - h * s.vector, 0.0, p.horizon(), kCfg)) /
        (2 * h);
    EXPECT_LE((fd - r.vector).norm() / std::max(1.0, r.vector.norm()), std::max(10 * h * h, kCfg.integrator_tolerance(p.horizon())));
  }
}

TEST(Adjoint, BasicIdentities) {
  std::mt19937_64 rng(69);
  const auto b = build_hall_basis(AlgebraParams(2, 2));
  const auto sys = systems::polyquad(b);
  const auto a = random_coords(b, rng, 0.5);
  const auto z = system_extend(sys, random_coords(b, rng));
  const auto va = system_extend(sys, a);
  const Eigen::VectorXd m = Eigen::Vector2d(0.2, -0.3);
  EXPECT_LE((adjoint_eval(sys, a, z, 0.0, m, kCfg) - z(m)).norm(), 0.0);
  EXPECT_LE((adjoint_eval(sys, a, va, 0.7, m, kCfg) - va(m)).norm(), 1e-11);
  // d/ds at 0 equals -[V_A, Z] = (DV_A) Z - (DZ) V_A.
  const double h = 1e-3;
  const Eigen::VectorXd fd = (adjoint_eval(sys, a, z, h, m, kCfg) - adjoint_eval(sys, a, z, -h, m, kCfg)) / (2 * h);
  const Eigen::VectorXd expected = -vf_bracket(va, z)(m);
  EXPECT_LE((fd - expected).norm(), 1e-5);
}

TEST(Adjoint, LinearConjugation) {
  std::mt19937_64 rng(70);
  const auto b = build_hall_basis(AlgebraParams(2, 2));
  const auto mats = systems::random_matrices(2, 3, 4, 1.0);
  const auto sys = systems::linear(b, mats);
  const auto hm = hall_matrices(*b, mats);
  const auto a = random_coords(b, rng);
  Eigen::MatrixXd nz = Eigen::MatrixXd::Random(3, 3);
  const Eigen::VectorXd m = Eigen::VectorXd::Random(3);
  const Eigen::MatrixXd e = (0.6 * linear_extension(hm, a)).exp();
  const Eigen::VectorXd expected = e * nz * e.inverse() * m;
  EXPECT_LE((adjoint_eval(sys, a, PolyVectorField::linear(nz), 0.6, m, kCfg) - expected).norm(), 1e-11);
}

TEST(WField, TrivialCases) {
  std::mt19937_64 rng(71);
  const auto b = build_hall_basis(AlgebraParams(2, 2));
  const auto sys = systems::polyquad(b);
  const auto a = random_coords(b, rng, 0.5), c = random_coords(b, rng);
  const Eigen::VectorXd m = Eigen::Vector2d(0.1, 0.4);
  EXPECT_LE((w_field_eval(sys, LieCoordinates(b), c, m, 4, kCfg) - system_extend(sys, c)(m)).norm(), 1e-15);
  EXPECT_LE((w_field_eval(sys, a, 2.0 * a, m, 4, kCfg) - system_extend(sys, 2.0 * a)(m)).norm(), 1e-11);
  EXPECT_THROW(w_field_eval(sys, a, c, m, 0, kCfg), DomainError);
}

TEST(WField, FlowDerivativeIdentity) {
  // (e^{V_C(t+h)} - e^{V_C(t-h)})(m) / 2h ~ W_t^C(e^{V_C(t)}(m)), error O(h^2).
  std::mt19937_64 rng(72);
  const auto b = build_hall_basis(AlgebraParams(2, 2));
  const auto sys = systems::polyquad(b);
  const auto a = random_coords(b, rng, 0.5), c2 = random_coords(b, rng, 0.5);
  auto C = [&](double t) { return t * a + (t * t) * c2; };
  auto Cdot = [&](double t) { return a + (2.0 * t) * c2; };
  const double t = 0.6;
  const Eigen::VectorXd m = Eigen::Vector2d(0.3, -0.2);
  const Eigen::VectorXd w = w_field_eval(sys, C(t), Cdot(t), exp_flow(sys, C(t), m, kCfg), 8, kCfg);
  std::vector<double> res;
  for (double h : {0.04, 0.02}) {
    const Eigen::VectorXd fd = (exp_flow(sys, C(t + h), m, kCfg) - exp_flow(sys, C(t - h), m, kCfg)) / (2 * h);
    res.push_back((fd - w).norm());
  }
  EXPECT_NEAR(res[0] / res[1], 4.0, 0.8);
}

TEST(Distances, Examples) {
  const auto S = Manifold::sphere(2);
  const Eigen::Vector3d p(1, 0, 0);
  EXPECT_EQ(dist_M(S, p, p), 0.0);
  EXPECT_NEAR(dist_M(S, p, -p), M_PI, 1e-15);
  const Eigen::Vector3d q(0, 1, 0);
  EXPECT_NEAR(dist_M(S, p, q), std::acos(p.dot(q)), 1e-15);
  const auto F = Manifold::flat(2);
  const Eigen::Vector2d c(0.3, -0.4);
  const auto pts = sample_points(F, 5, 1);
  EXPECT_NEAR(dist_map(F, [](const Eigen::VectorXd& x) { return x; }, [&](const Eigen::VectorXd& x) { return Eigen::VectorXd(x + c); }, pts),
              0.5, 1e-15);
  const TangentSample a{Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 0)}, bb{Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 1)};
  EXPECT_NEAR(dist_TM_flat(F, a, bb), std::sqrt(2.0), 1e-15);
  const TangentSample moved{Eigen::Vector2d(3, 4), Eigen::Vector2d(1, 0)};
  EXPECT_NEAR(dist_TM_flat(F, a, moved), 5.0, 1e-15);
  EXPECT_THROW(dist_TM_flat(S, {p, q}, {p, q}), DomainError);
  EXPECT_THROW(dist_M(S, Eigen::Vector3d(2, 0, 0), p), DomainError);
}

TEST(Distances, TangentScaling) {
  std::mt19937_64 rng(73);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.0, 4.0);
  const auto F = Manifold::flat(3);
  for (int i = 0; i < 1000; ++i) {
    TangentSample a{Eigen::Vector3d(g(rng), g(rng), g(rng)), Eigen::Vector3d(g(rng), g(rng), g(rng))};
    TangentSample c{Eigen::Vector3d(g(rng), g(rng), g(rng)), Eigen::Vector3d(g(rng), g(rng), g(rng))};
    const double lam = u(rng);
    const double lhs = dist_TM_flat(F, {a.point, lam * a.vector}, {c.point, lam * c.vector});
    EXPECT_LE(lhs, std::max(lam, 1.0) * dist_TM_flat(F, a, c) * (1 + 1e-15));
  }
}

TEST(Distances, DmapLinearOracle) {
  std::mt19937_64 rng(74);
  const auto b = build_hall_basis(AlgebraParams(2, 2));
  const auto mats = systems::random_matrices(2, 3, 6, 1.0);
  const auto sys = systems::linear(b, mats);
  const auto hm = hall_matrices(*b, mats);
  const auto a = random_coords(b, rng), c = random_coords(b, rng);
  const Eigen::MatrixXd fa = linear_extension(hm, a).exp(), fc = linear_extension(hm, c).exp();
  const auto samples = sample_unit_tangents(sys.manifold(), 8, 2);
  auto fstar = [&](const TangentSample& s) { return exp_pushforward(sys, a, s, kCfg); };
  auto gstar = [&](const TangentSample& s) { return exp_pushforward(sys, c, s, kCfg); };
  double expected = 0.0;
  for (const auto& s : samples)
    expected = std::max(expected, std::sqrt(((fa - fc) * s.point).squaredNorm() + ((fa - fc) * s.vector).squaredNorm()));
  EXPECT_NEAR(dist_dmap(sys.manifold(), fstar, gstar, samples), expected, 1e-11);
  EXPECT_EQ(dist_dmap(sys.manifold(), fstar, fstar, samples), 0.0);
  auto bad = samples;
  bad[0].vector *= 2.0;
  EXPECT_THROW(dist_dmap(sys.manifold(), fstar, gstar, bad), DomainError);
}

TEST(Distances, DisplacementBoundedByPathLength) {
  std::mt19937_64 rng(75);
  const auto b = build_hall_basis(AlgebraParams(2, 3));
  for (const auto& sys : {systems::polyquad(b), systems::so3(b)}) {
    const auto p = random_pwc(b, rng, 4);
    for (const auto& m : sample_points(sys.manifold(), 8, 5, 0.5)) {
      const auto r = flow_with_length(sys, p, m, 0.0, p.horizon(), kCfg);
      EXPECT_LE(dist_M(sys.manifold(), m, r.point), 1.1 * r.path_length) << sys.name();
    }
  }
}
