#include <gtest/gtest.h>

#include <filesystem>
#include <stdexcept>

#include "trunclog/experiments.hpp"

using namespace trunclog;

namespace {

ExperimentConfig small(json j) {
  if (!j.contains("samples")) j["samples"] = 4;
  if (!j.contains("tangent_samples")) j["tangent_samples"] = 4;
  if (!j.contains("cases")) j["cases"] = 20;
  if (!j.contains("lie_samples")) j["lie_samples"] = 20;
  return config_from_json(j);
}

const Check* find(const Report& r, const std::string& name) {
  for (const auto& c : r.checks)
    if (c.name == name) return &c;
  return nullptr;
}

std::string failures(const Report& r) {
  std::string s;
  for (const auto& c : r.checks)
    if (!c.passed) s += c.name + "=" + format_double(c.value) + " ";
  return s;
}

}  // namespace

TEST(ParallelMap, OrderedAndRethrows) {
  const auto v = detail::parallel_map<int>(100, 4, [](int i) { return i * i; });
  for (int i = 0; i < 100; ++i) EXPECT_EQ(v[static_cast<std::size_t>(i)], i * i);
  EXPECT_THROW(detail::parallel_map<int>(10, 3,
                                         [](int i) {
                                           if (i == 7) throw std::runtime_error("boom");
                                           return i;
                                         }),
               std::runtime_error);
}

TEST(Experiments, DilationOrderSlopes) {
  for (int k = 1; k <= 2; ++k) {
    const Report r = cmd_dilation_order(small({{"kappa", k}}));
    EXPECT_TRUE(r.passed()) << failures(r);
    ASSERT_TRUE(r.convergence && r.convergence->fit);
    EXPECT_GE(r.convergence->fit->slope, k + 1 - 0.3);
    EXPECT_EQ(r.table.rows.size(), r.convergence->lambdas.size());
  }
}

TEST(Experiments, BchOrderAndExactCases) {
  const Report r = cmd_bch_order(small({{"kappa", 2}}));
  EXPECT_TRUE(r.passed()) << failures(r);
  EXPECT_EQ(r.convergence->expectation, "order");

  const Report z = cmd_bch_order(small({{"kappa", 2}, {"B", {0.0, 0.0, 0.0}}}));
  EXPECT_TRUE(z.passed()) << failures(z);
  EXPECT_EQ(z.convergence->expectation, "exact");

  const Report h = cmd_bch_order(small({{"kappa", 2}, {"system", "heisenberg"}}));
  EXPECT_TRUE(h.passed()) << failures(h);
  EXPECT_EQ(h.convergence->expectation, "exact");
  EXPECT_NE(find(h, "distance_at_noise_floor"), nullptr);
}

TEST(Experiments, PushforwardOrderWithMatrixOracle) {
  const Report r = cmd_pushforward_order(small({{"kappa", 1}}));
  EXPECT_TRUE(r.passed()) << failures(r);
  const Check* c = find(r, "matrix_oracle_agreement");
  ASSERT_NE(c, nullptr);
  EXPECT_LE(c->value, 1e-9);
}

TEST(Experiments, PushforwardRejectsSphere) {
  EXPECT_THROW(cmd_pushforward_order(small({{"system", "so3"}})), ConfigError);
}

TEST(Experiments, MagnusCompareAgreement) {
  const Report r = cmd_magnus_compare(small({{"kappa", 3}, {"step_counts", {256, 512, 1024}}}));
  EXPECT_TRUE(r.passed()) << failures(r);
  EXPECT_LE(find(r, "three_way_agreement")->value, 1e-8);
}

TEST(Experiments, MagnusCompareHalvingOnSmoothPath) {
  const Report r = cmd_magnus_compare(small({{"kappa", 3},
                                             {"path", {{"kind", "two-segment"}, {"A", {0.8, -0.5, 0.3, 0.2, -0.4}},
                                                       {"B", {-0.6, 0.9, -0.2, 0.5, 0.1}}}},
                                             {"step_counts", {32, 64, 128, 256}}}));
  EXPECT_TRUE(r.passed()) << failures(r);
  int ratios = 0;
  for (const auto& c : r.checks)
    if (c.name.find("step_halving_ratio") != std::string::npos) {
      ++ratios;
      EXPECT_NEAR(c.value, 16.0, 16.0 * 0.3);
    }
  EXPECT_EQ(ratios, 2);
}

TEST(Experiments, AbelianMagnusIsIntegral) {
  const Report r = cmd_magnus_compare(small({{"kappa", 1}, {"step_counts", {64, 128}}}));
  EXPECT_TRUE(r.passed()) << failures(r);
  EXPECT_NE(find(r, "abelian_integral"), nullptr);
}

TEST(Experiments, WFieldConstantPathIsGenerator) {
  const Report r = cmd_w_field_check(small({{"path", {{"kind", "constant"}, {"T", 1.0}, {"value", {0.5, -0.3, 0.2}}}}}));
  EXPECT_TRUE(r.passed()) << failures(r);
  const Check* c = find(r, "w_equals_generator");
  ASSERT_NE(c, nullptr);
  EXPECT_LE(c->value, 1e-12);
}

TEST(Experiments, WFieldZeroPathHasZeroResidual) {
  const Report r = cmd_w_field_check(small({{"path", {{"kind", "constant"}, {"T", 1.0}, {"value", {0.0, 0.0, 0.0}}}}}));
  EXPECT_TRUE(r.passed()) << failures(r);
  EXPECT_EQ(find(r, "residual_over_floor")->value, 0.0);
}

TEST(Experiments, WFieldSecondOrderDifference) {
  const Report r = cmd_w_field_check(small({{"kappa", 2}}));
  EXPECT_TRUE(r.passed()) << failures(r);
  int ratios = 0;
  for (const auto& c : r.checks)
    if (c.name.rfind("halving_ratio", 0) == 0) {
      ++ratios;
      EXPECT_NEAR(c.value, 4.0, 0.8);
    }
  EXPECT_EQ(ratios, 2);
}

TEST(Experiments, IdentitySuitePasses) {
  for (const char* sys : {"linear", "polyquad", "so3"}) {
    const Report r = cmd_identity_suite(small({{"system", sys}, {"kappa", 2}}));
    EXPECT_TRUE(r.passed()) << sys << ": " << failures(r);
  }
}

TEST(Experiments, CorruptedPsiMinusIsDetected) {
  const Report r = cmd_identity_suite(small({{"kappa", 3}, {"test_hooks", {{"corrupt_psi_minus", true}}}}));
  EXPECT_FALSE(r.passed());
  EXPECT_FALSE(find(r, "psi_minus_inverts_psi")->passed);
  EXPECT_FALSE(find(r, "c_ode_vs_chen")->passed);
  EXPECT_TRUE(find(r, "group_ode_vs_chen")->passed);
}

TEST(Experiments, HallBasisAndNorms) {
  const Report h = cmd_hall_basis(small({{"d", 3}, {"kappa", 4}}));
  EXPECT_TRUE(h.passed());
  EXPECT_EQ(h.table.rows.size(), 3u + 3u + 8u + 18u);
  const Report n = cmd_norms(small({{"system", "polyquad"}, {"kappa", 3}}));
  EXPECT_TRUE(n.passed()) << failures(n);
  EXPECT_GT(n.details["norms"]["c0_bound"].get<double>(), 0.0);
}

TEST(Experiments, DeterministicAcrossRunsAndThreads) {
  const char* cmds[] = {"dilation-order", "bch-order", "identity-suite"};
  for (const char* c : cmds) {
    const Report a = run_command(c, small({{"seed", 5}, {"threads", 1}}));
    const Report b = run_command(c, small({{"seed", 5}, {"threads", 4}}));
    EXPECT_EQ(a.table.str(), b.table.str()) << c;
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump()) << c;
  }
  const Report x = run_command("dilation-order", small({{"seed", 5}}));
  const Report y = run_command("dilation-order", small({{"seed", 6}}));
  EXPECT_NE(x.table.str(), y.table.str());
}

TEST(Experiments, UnknownCommandAndKeys) {
  EXPECT_THROW(run_command("nope", small(json::object())), ConfigError);
  EXPECT_THROW(small({{"lambda", {0.5}}}), ConfigError);
}

TEST(Experiments, WriteReportFiles) {
  const std::filesystem::path dir = std::filesystem::path(::testing::TempDir()) / "trunclog_report";
  std::filesystem::create_directories(dir);
  const Report r = cmd_bch_order(small({{"kappa", 1}}));
  write_report(r, dir.string());
  for (const char* ext : {".json", ".csv", ".gp"}) EXPECT_TRUE(std::filesystem::exists(dir / ("bch-order" + std::string(ext))));
  const json j = json::parse(io::read_text((dir / "bch-order.json").string()));
  EXPECT_EQ(j["command"], "bch-order");
  EXPECT_EQ(j["passed"], r.passed());
  EXPECT_TRUE(j.contains("convergence"));
  const std::string csv = io::read_text((dir / "bch-order.csv").string());
  EXPECT_EQ(csv.rfind("lambda,distance,running_slope,ratio_to_order\n", 0), 0u);
}
