// Two-piece control on the polyquad system: Magnus log by three solvers, its
// BCH closed form, and the flow against the exponential of the log.

#include <cstdio>

#include "trunclog/flows.hpp"
#include "trunclog/magnus.hpp"
#include "trunclog/systems.hpp"

using namespace trunclog;

int main() {
  const auto basis = build_hall_basis(AlgebraParams(2, 3));
  for (std::size_t i = 0; i < basis->size(); ++i) std::printf("%2zu  %s\n", i, basis->bracket_string(static_cast<int>(i)).c_str());

  Eigen::VectorXd a(5), b(5);
  a << 0.3, -0.2, 0.1, 0.0, 0.05;
  b << -0.1, 0.4, 0.0, 0.1, 0.0;
  const LieCoordinates A(basis, a), B(basis, b);
  const ControlPath path = ControlPath::piecewise_constant({A, B});

  const LieCoordinates chen = magnus_log(path, 2.0, MagnusMethod::chen);
  const LieCoordinates ode = magnus_log(path, 2.0, MagnusMethod::ode, 2048);
  const LieCoordinates code =
      project_to_lie(c_ode_trajectory(path, 2.0, 2048, psi_minus_coeffs(3)).values.back(), basis).coords;
  const LieCoordinates closed = bch(A, B);
  std::printf("\nlog coordinates (chen):");
  for (Eigen::Index i = 0; i < chen.coeffs().size(); ++i) std::printf(" %.6f", chen.coeffs()[i]);
  std::printf("\n|ode - chen| = %.2e  |c-ode - chen| = %.2e  |bch - chen| = %.2e\n", (ode.coeffs() - chen.coeffs()).norm(),
              (code.coeffs() - chen.coeffs()).norm(), (closed.coeffs() - chen.coeffs()).norm());

  const DynamicalSystem sys = systems::polyquad(basis);
  const FlowConfig cfg;
  Eigen::VectorXd m(2);
  m << 0.4, -0.3;
  // The gap is the truncation error; it shrinks like lambda^4 under dilation.
  std::printf("\nlambda   |flow - exp(log)|\n");
  for (double lambda : {1.0, 0.5, 0.25, 0.125}) {
    const ControlPath p = dilate(path, lambda);
    const Eigen::VectorXd x = flow(sys, p, m, 0.0, 2.0, cfg);
    const Eigen::VectorXd y = exp_flow(sys, magnus_log(p, 2.0, MagnusMethod::chen), m, cfg);
    std::printf("%-8g %.3e\n", lambda, (x - y).norm());
  }
}
