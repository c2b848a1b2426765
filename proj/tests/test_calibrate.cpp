#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <sstream>

using namespace opcal;
using testing::perturbed;
using testing::realizable;


TEST_CASE("theta evaluates each block") {
  SUBCASE("zero operators without load") {
    const auto ops = RomOperators::zeros(3, true, true);
    CHECK(theta(ops, nullptr, Vector::Ones(3), {0.0, 0.0}).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("scalar linear") {
    auto ops = RomOperators::zeros(1, false, false);
    ops.a(0, 0) = -2.0;
    CHECK(theta(ops, nullptr, Vector::Constant(1, 3.0), {0.0, 0.0})(0) == -6.0);
  }
  SUBCASE("term-by-term reference") {
    std::mt19937_64 rng(1);
    auto ops = RomOperators::zeros(3, true, true);
    ops.a = testing::random_matrix(rng, 3, 3);
    ops.h = testing::random_matrix(rng, 3, 6);
    ops.b = testing::random_matrix(rng, 3, 1);
    const DeimOperators deim = testing::random_deim(rng, 3, 4, 1e-3);
    const Vector s = testing::random_matrix(rng, 3, 1);
    const Control u{0.8, -0.4};
    Vector quad(6);
    quad << s(0) * s(0), s(0) * s(1), s(0) * s(2), s(1) * s(1), s(1) * s(2), s(2) * s(2);
    const Vector t = deim.unscale_shift.array() + deim.unscale_scale.array() * (deim.p2 * s).array();
    const Vector arr = 0.8 * deim.arrhenius_prefactor * deim.p1 * (deim.arrhenius_exponent / t.array()).exp().matrix();
    const Vector expected = ops.a * s + ops.h * quad + ops.b * u.inflow_rate_derivative + arr;
    CHECK((theta(ops, &deim, s, u) - expected).cwiseAbs().maxCoeff() < 1e-12 * expected.cwiseAbs().maxCoeff());
    const Matrix jac = theta_jacobian(ops, &deim, s, u);
    for (Index c = 0; c < 3; ++c) {
      Vector sp = s;
      Vector sm = s;
      sp(c) += 1e-6;
      sm(c) -= 1e-6;
      const Vector fd = (theta(ops, &deim, sp, u) - theta(ops, &deim, sm, u)) / 2e-6;
      CHECK((jac.col(c) - fd).cwiseAbs().maxCoeff() < 1e-6 * (1.0 + fd.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("forward rollout") {
  const std::vector<Control> u(10, Control{0.0, 0.0});
  SUBCASE("zero right-hand side keeps the state") {
    const Vector s0 = (Vector(2) << 1.0, -3.0).finished();
    const Matrix traj = forward_rollout(RomOperators::zeros(2, false, false), nullptr, s0, u, 0.1, 10);
    CHECK(traj.cols() == 11);
    for (Index j = 0; j <= 10; ++j) CHECK(traj.col(j) == s0);
  }
  SUBCASE("scalar linear recursion is geometric") {
    auto ops = RomOperators::zeros(1, false, false);
    ops.a(0, 0) = -0.7;
    const Matrix traj = forward_rollout(ops, nullptr, Vector::Constant(1, 2.0), u, 0.1, 10);
    for (Index j = 0; j <= 10; ++j) {
      CHECK(traj(0, j) == doctest::Approx(2.0 * std::pow(1.0 - 0.07, static_cast<double>(j))).epsilon(1e-14));
    }
  }
  SUBCASE("the control of step j-1 drives step j") {
    auto ops = RomOperators::zeros(1, false, true);
    ops.b(0, 0) = 1.0;
    std::vector<Control> v{{0.0, 1.0}, {0.0, 10.0}, {0.0, 100.0}};
    const Matrix traj = forward_rollout(ops, nullptr, Vector::Zero(1), v, 1.0, 3);
    CHECK(traj(0, 1) == 1.0);
    CHECK(traj(0, 2) == 11.0);
    CHECK(traj(0, 3) == 111.0);
  }
  SUBCASE("blow-up names the step") {
    auto ops = RomOperators::zeros(1, true, false);
    ops.h(0, 0) = 1.0;
    try {
      forward_rollout(ops, nullptr, Vector::Constant(1, 10.0), u, 1.0, 10);
      FAIL("expected non-finite rollout");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
  }
  SUBCASE("too few controls") {
    CHECK_THROWS_AS(forward_rollout(RomOperators::zeros(1, false, false), nullptr, Vector::Zero(1), u, 1.0, 11),
                    DataError);
  }
}

TEST_CASE("objective") {
  SUBCASE("hand-computed scalar case") {
    // s~0 = 1, s~1 = 1 + dt a, s~2 = (1 + dt a)^2 with a = -1, dt = 0.5.
    CalibrationProblem p;
    p.dt = 0.5;
    p.reduced_trajectories = {(Matrix(1, 3) << 1.0, 0.4, 0.3).finished()};
    p.controls = {std::vector<Control>(2)};
    auto ops = RomOperators::zeros(1, false, false);
    ops.a(0, 0) = -1.0;
    CHECK(objective(ops, p) == doctest::Approx((0.5 - 0.4) * (0.5 - 0.4) + (0.25 - 0.3) * (0.25 - 0.3)));
  }
  std::mt19937_64 rng(2);
  auto rz = realizable(rng, 3, 30, 3, true, true, true);
  SUBCASE("generating operators give zero") {
    CHECK(objective(rz.truth, rz.problem) == 0.0);
  }
  SUBCASE("trajectory order does not matter") {
    const RomOperators other = perturbed(rz.truth, rng, 0.05);
    CalibrationProblem reversed = rz.problem;
    std::reverse(reversed.reduced_trajectories.begin(), reversed.reduced_trajectories.end());
    std::reverse(reversed.controls.begin(), reversed.controls.end());
    CHECK(objective(other, reversed) == doctest::Approx(objective(other, rz.problem)).epsilon(1e-13));
  }
  SUBCASE("failed rollouts give infinity and a diagnostic") {
    RomOperators bad = rz.truth;
    bad.a *= 1e6;
    std::string why;
    CHECK(std::isinf(objective(bad, rz.problem, &why)));
    CHECK(!why.empty());
  }
}

TEST_CASE("adjoint gradient matches central finite differences") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 3; ++trial) {
    auto rz = realizable(rng, 3, 40, 2, true, true, true);
    const RomOperators at = perturbed(rz.truth, rng, 0.1);
    CHECK(testing::adjoint_fd_error(at, rz.problem) < 1e-5);
  }
}

TEST_CASE("gradient properties") {
  std::mt19937_64 rng(4);
  auto rz = realizable(rng, 3, 25, 2, true, false, true);
  SUBCASE("vanishes at the generating operators") {
    CHECK(std::sqrt(adjoint_gradient(rz.truth, rz.problem).squared_norm()) < 1e-12);
  }
  SUBCASE("duplicating every trajectory doubles the gradient") {
    const RomOperators at = perturbed(rz.truth, rng, 0.05);
    CalibrationProblem doubled = rz.problem;
    for (std::size_t i = 0; i < rz.problem.reduced_trajectories.size(); ++i) {
      doubled.reduced_trajectories.push_back(rz.problem.reduced_trajectories[i]);
      doubled.controls.push_back(rz.problem.controls[i]);
    }
    const RomOperators g1 = adjoint_gradient(at, rz.problem);
    const RomOperators g2 = adjoint_gradient(at, doubled);
    CHECK(g2.a.isApprox(2.0 * g1.a, 1e-13));
    CHECK(g2.h.isApprox(2.0 * g1.h, 1e-13));
  }
  SUBCASE("one forward and one backward sweep per trajectory") {
    SweepCounts counts;
    adjoint_gradient(rz.truth, rz.problem, &counts);
    CHECK(counts.forward == 2);
    CHECK(counts.backward == 2);
    SweepCounts only_forward;
    objective(rz.truth, rz.problem, nullptr, &only_forward);
    CHECK(only_forward.forward == 2);
    CHECK(only_forward.backward == 0);
  }
}

TEST_CASE("calibration") {
  std::mt19937_64 rng(5);
  SUBCASE("starting at the generating operators stops immediately") {
    auto rz = realizable(rng, 3, 40, 2, true, true, true);
    const auto result = calibrate(rz.truth, rz.problem);
    CHECK(result.report.iterations == 0);
    CHECK(result.report.termination == Termination::kGradientTolerance);
  }
  SUBCASE("perturbed realizable problems are solved to high accuracy") {
    for (bool quadratic : {false, true}) {
      auto rz = realizable(rng, 3, 40, 2, quadratic, true, true);
      const RomOperators start = perturbed(rz.truth, rng, 0.01);
      const auto result = calibrate(start, rz.problem);
      const auto& h = result.report.history;
      REQUIRE(h.size() == static_cast<std::size_t>(result.report.iterations) + 1);
      for (std::size_t i = 1; i < h.size(); ++i) CHECK(h[i].objective <= h[i - 1].objective);
      CHECK(result.report.final_objective < 1e-6 * result.report.initial_objective);
      CHECK(result.report.final_objective == doctest::Approx(objective(result.operators, rz.problem)));
    }
  }
  SUBCASE("symmetric constraint keeps A symmetric") {
    auto rz = realizable(rng, 3, 30, 2, false, false, false);
    rz.problem.symmetric_linear = true;
    const RomOperators start = perturbed(rz.truth, rng, 0.05);
    OptimizerConfig opt;
    opt.max_iterations = 50;
    const auto result = calibrate(start, rz.problem, opt);
    CHECK((result.operators.a - result.operators.a.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(result.report.final_objective <= result.report.initial_objective);
  }
  SUBCASE("an unstable start point asks for more regularisation") {
    auto rz = realizable(rng, 3, 30, 2, false, false, false);
    RomOperators bad = rz.truth;
    bad.a = Matrix::Identity(3, 3) * 1e30;
    try {
      calibrate(bad, rz.problem);
      FAIL("expected a numeric error");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("lambda") != std::string::npos);
    }
  }
  SUBCASE("iteration budget") {
    auto rz = realizable(rng, 3, 30, 2, true, false, true);
    OptimizerConfig opt;
    opt.max_iterations = 3;
    const auto result = calibrate(perturbed(rz.truth, rng, 0.05), rz.problem, opt);
    CHECK(result.report.iterations <= 3);
    CHECK(result.report.history.size() == static_cast<std::size_t>(result.report.iterations) + 1);
  }
  SUBCASE("invalid optimizer settings") {
    OptimizerConfig opt;
    opt.line_search_shrink = 1.5;
    CHECK_THROWS_AS(opt.validate(), ConfigError);
  }
}

TEST_CASE("convergence report CSV") {
  ConvergenceReport report;
  report.history = {{0, 2.5, 1.0, 0.0}, {1, 1.25, 0.5, 0.125}};
  std::ostringstream out;
  write_convergence_csv(report, out);
  CHECK(out.str() == "iteration,objective,gradient_norm,step_length\n0,2.5,1,0\n1,1.25,0.5,0.125\n");
}
