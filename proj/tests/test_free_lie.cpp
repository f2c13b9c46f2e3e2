#include <gtest/gtest.h>

#include <random>

#include "test_util.hpp"
#include "trunclog/free_lie.hpp"

using namespace trunclog;

namespace {

/// Brute-force count of Lyndon words: enumerate every word of length k and
/// test strict minimality among its rotations.
int brute_force_lyndon_count(int d, int k) {
  int count = 0;
  std::vector<int> w(static_cast<std::size_t>(k), 0);
  while (true) {
    bool lyndon = true;
    for (int r = 1; r < k && lyndon; ++r) {
      std::vector<int> rot(w.begin() + r, w.end());
      rot.insert(rot.end(), w.begin(), w.begin() + r);
      if (!(w < rot)) lyndon = false;
    }
    count += lyndon ? 1 : 0;
    int i = k - 1;
    while (i >= 0 && w[static_cast<std::size_t>(i)] == d - 1) w[static_cast<std::size_t>(i--)] = 0;
    if (i < 0) break;
    ++w[static_cast<std::size_t>(i)];
  }
  return count;
}

LieCoordinates random_coords(const HallBasisPtr& b, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  LieCoordinates c(b);
  for (Eigen::Index i = 0; i < c.coeffs().size(); ++i) c.coeffs()[i] = g(rng);
  return c;
}

}  // namespace

TEST(HallBasis, DegreeDimensions) {
  EXPECT_EQ(build_hall_basis(AlgebraParams(2, 3))->degree_dimensions(), (std::vector<int>{2, 1, 2}));
  EXPECT_EQ(build_hall_basis(AlgebraParams(2, 4))->degree_dimensions(), (std::vector<int>{2, 1, 2, 3}));
  EXPECT_EQ(build_hall_basis(AlgebraParams(1, 3))->degree_dimensions(), (std::vector<int>{1, 0, 0}));
}

TEST(HallBasis, WittDimensionsMatchBruteForce) {
  for (int d = 1; d <= 3; ++d)
    for (int k = 1; k <= 5; ++k) {
      const auto b = build_hall_basis(AlgebraParams(d, k));
      for (int j = 1; j <= k; ++j) {
        EXPECT_EQ(b->degree_count(j), brute_force_lyndon_count(d, j)) << "d=" << d << " k=" << j;
        EXPECT_EQ(b->degree_count(j), witt_dimension(d, j));
      }
    }
}

TEST(HallBasis, StandardBracketing) {
  const auto b = build_hall_basis(AlgebraParams(2, 3));
  std::vector<std::string> s;
  for (std::size_t i = 0; i < b->size(); ++i) s.push_back(b->bracket_string(static_cast<int>(i)));
  EXPECT_EQ(s, (std::vector<std::string>{"1", "2", "[1,2]", "[1,[1,2]]", "[[1,2],2]"}));
  const AlgebraParams& p = b->params();
  const GradedTensor e12 = GradedTensor::word(p, {0, 1}) - GradedTensor::word(p, {1, 0});
  EXPECT_EQ(norm(b->word_element(2).tensor() - e12), 0.0);
}

TEST(HallBasis, EachWordProjectsToItsUnitCoordinate) {
  const auto b = build_hall_basis(AlgebraParams(3, 4));
  for (std::size_t i = 0; i < b->size(); ++i) {
    const auto pr = project_to_lie(b->word_element(static_cast<int>(i)), b);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(b->size()));
    e[static_cast<Eigen::Index>(i)] = 1.0;
    EXPECT_LE((pr.coords.coeffs() - e).norm(), 1e-12);
    EXPECT_LE(pr.residual, 1e-12);
  }
}

TEST(ProjectToLie, GeneratorAndNonLieElement) {
  const auto b = build_hall_basis(AlgebraParams(2, 2));
  const AlgebraParams& p = b->params();
  const auto pe = project_to_lie(AlgebraElement(GradedTensor::generator(p, 0)), b);
  EXPECT_DOUBLE_EQ(pe.coords[0], 1.0);
  EXPECT_EQ(pe.residual, 0.0);
  // Nearest Lie element to e1e2 is (e1e2 - e2e1)/2; residual computed directly.
  const GradedTensor x = GradedTensor::word(p, {0, 1});
  const GradedTensor nearest = 0.5 * (GradedTensor::word(p, {0, 1}) - GradedTensor::word(p, {1, 0}));
  const double expected = norm(x - nearest);
  const auto pr = project_to_lie(AlgebraElement(x), b);
  EXPECT_NEAR(pr.residual, expected, 1e-15);
  EXPECT_GT(pr.residual, 0.5);
  EXPECT_NEAR(pr.coords[2], 0.5, 1e-15);
  EXPECT_THROW(project_to_lie(AlgebraElement(AlgebraParams(2, 3)), b), ParamsMismatch);
}

TEST(ProjectToLie, LogOfChenProductIsLie) {
  std::mt19937_64 rng(21);
  for (int d = 2; d <= 3; ++d)
    for (int k = 2; k <= 4; ++k) {
      const auto b = build_hall_basis(AlgebraParams(d, k));
      for (int i = 0; i < 20; ++i) {
        GroupElement g(b->params());
        for (int j = 0; j < 4; ++j) g = mul(g, exp(random_coords(b, rng).to_tensor()));
        EXPECT_LE(project_to_lie(log(g), b).residual, 1e-10);
      }
    }
}

TEST(ProjectToLie, BracketOfLieElementsStaysLie) {
  std::mt19937_64 rng(22);
  const auto b = build_hall_basis(AlgebraParams(3, 4));
  for (int i = 0; i < 50; ++i) {
    const auto a = random_coords(b, rng), c = random_coords(b, rng);
    EXPECT_LE(project_to_lie(bracket(a.to_tensor(), c.to_tensor()), b).residual, 1e-12);
  }
}

TEST(Bch, ZeroInverseAndStepTwo) {
  std::mt19937_64 rng(23);
  const auto b3 = build_hall_basis(AlgebraParams(2, 3));
  const auto a = random_coords(b3, rng);
  EXPECT_LE((bch(a, LieCoordinates(b3)) - a).coeffs().norm(), 1e-13);
  EXPECT_LE(bch(a, -a).coeffs().norm(), 1e-13);

  const auto b2 = build_hall_basis(AlgebraParams(2, 2));
  const auto x = random_coords(b2, rng), y = random_coords(b2, rng);
  // Oracle: tensor-level exp/mul/log, independent of the Hall projection.
  const AlgebraElement tensor_bch = log(mul(exp(x.to_tensor()), exp(y.to_tensor())));
  const AlgebraElement formula = x.to_tensor() + y.to_tensor() + 0.5 * bracket(x.to_tensor(), y.to_tensor());
  EXPECT_LE(norm((tensor_bch - formula).tensor()), 1e-14);
  EXPECT_LE(norm((bch(x, y).to_tensor() - formula).tensor()), 1e-14);
}

TEST(Bch, Associative) {
  std::mt19937_64 rng(24);
  for (int k = 1; k <= 4; ++k) {
    const auto b = build_hall_basis(AlgebraParams(2, k));
    for (int i = 0; i < 30; ++i) {
      const auto a = random_coords(b, rng), c = random_coords(b, rng), e = random_coords(b, rng);
      EXPECT_LE((bch(bch(a, c), e) - bch(a, bch(c, e))).coeffs().norm(), 1e-11);
    }
  }
}

TEST(Bch, MismatchedBases) {
  const auto b1 = build_hall_basis(AlgebraParams(2, 2));
  const auto b2 = build_hall_basis(AlgebraParams(2, 3));
  EXPECT_THROW(bch(LieCoordinates(b1), LieCoordinates(b2)), ParamsMismatch);
}

TEST(RandomLie, DeterministicUnitAndProfile) {
  const auto b = build_hall_basis(AlgebraParams(3, 3));
  EXPECT_EQ(random_lie(b, 7).coeffs(), random_lie(b, 7).coeffs());
  EXPECT_NE(random_lie(b, 7).coeffs(), random_lie(b, 8).coeffs());
  for (std::uint64_t s = 0; s < 50; ++s) {
    EXPECT_NEAR(norm(random_unit_lie(b, s)), 1.0, 1e-14);
    EXPECT_NEAR(norm(random_unit_lie(b, s, 2)), 1.0, 1e-14);
  }
  const auto r = random_lie(b, 3, {1.0, 0.0, 0.0});
  const auto t = r.to_tensor();
  EXPECT_GT(t.level(1).norm(), 0.0);
  EXPECT_EQ(t.level(2).norm(), 0.0);
  EXPECT_EQ(t.level(3).norm(), 0.0);
  const auto h = random_unit_lie(b, 4, 3).to_tensor();
  EXPECT_EQ(h.level(1).norm(), 0.0);
  EXPECT_EQ(h.level(2).norm(), 0.0);
}

TEST(LieCoordinates, DilationMatchesTensorDilation) {
  std::mt19937_64 rng(25);
  const auto b = build_hall_basis(AlgebraParams(2, 4));
  const auto a = random_coords(b, rng);
  EXPECT_LE(norm((dilate(a, 0.3).to_tensor() - dilate(a.to_tensor(), 0.3)).tensor()), 1e-15);
}
