#pragma once

#include "opcal/opcal.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace opcal::testing {

inline Matrix random_matrix(std::mt19937_64& rng, Index rows, Index cols, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  }
  return m;
}

inline Matrix random_orthonormal(std::mt19937_64& rng, Index rows, Index cols) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(rng, rows, cols));
  return qr.householderQ() * Matrix::Identity(rows, cols);
}

inline double relative_error(const Matrix& a, const Matrix& b) {
  const double den = b.norm();
  return den > 0.0 ? (a - b).norm() / den : (a - b).norm();
}

/// Stable random linear operator: -decay * I plus a small perturbation.
inline Matrix stable_matrix(std::mt19937_64& rng, Index r, double decay, double perturbation) {
  return -decay * Matrix::Identity(r, r) + random_matrix(rng, r, r, perturbation);
}

/// A random DEIM operator set whose sampled temperatures stay near 500 K for
/// reduced states of order one.
inline DeimOperators random_deim(std::mt19937_64& rng, Index r, Index s, double strength) {
  DeimOperators ops;
  ops.p1 = random_matrix(rng, r, s, strength);
  ops.p2 = random_matrix(rng, s, r, 1.0);
  ops.arrhenius_prefactor = 2.0;
  ops.arrhenius_exponent = 1500.0;
  ops.gain = 1.0;
  ops.unscale_shift = Vector::Constant(s, 500.0);
  ops.unscale_scale = Vector::Constant(s, 20.0);
  return ops;
}

/// Piecewise-constant heat load: `on` for the first half of k steps, 0 after.
inline std::vector<Control> switch_off_controls(Index k, double on, double inflow_rate = 0.0) {
  std::vector<Control> u(static_cast<std::size_t>(k));
  for (Index j = 0; j < k; ++j) u[static_cast<std::size_t>(j)] = {j < k / 2 ? on : 0.0, inflow_rate};
  return u;
}

/// Central finite difference of the objective w.r.t. one operator entry.
template <typename Accessor>
double finite_difference(RomOperators ops, const CalibrationProblem& problem, Accessor entry) {
  double& x = entry(ops);
  const double x0 = x;
  const double h = 1e-6 * (1.0 + std::abs(x0));
  x = x0 + h;
  const double plus = objective(ops, problem);
  x = x0 - h;
  const double minus = objective(ops, problem);
  x = x0;
  return (plus - minus) / (2.0 * h);
}

/// Random reduced states with exact derivatives from known operators.
struct Generated {
  RomOperators truth;
  DeimOperators deim;
  Matrix states;
  Matrix derivatives;
  std::vector<Control> controls;
};

inline Generated generate(std::mt19937_64& rng, Index r, Index m, bool quadratic, bool input, bool with_deim) {
  Generated g;
  g.truth = RomOperators::zeros(r, quadratic, input);
  g.truth.a = testing::random_matrix(rng, r, r);
  if (quadratic) g.truth.h = testing::random_matrix(rng, r, symmetric_kron_size(r), 0.3);
  if (input) g.truth.b = testing::random_matrix(rng, r, kInputChannels);
  g.deim = testing::random_deim(rng, r, r + 1, 1e-3);
  g.states = testing::random_matrix(rng, r, m);
  std::uniform_real_distribution<double> load(0.0, 2.0);
  std::normal_distribution<double> inflow(0.0, 1.0);
  g.derivatives.resize(r, m);
  for (Index j = 0; j < m; ++j) {
    const Control u{load(rng), inflow(rng)};
    g.controls.push_back(u);
    g.derivatives.col(j) = theta(g.truth, with_deim ? &g.deim : nullptr, g.states.col(j), u);
  }
  return g;
}

struct Realizable {
  RomOperators truth;
  CalibrationProblem problem;
};

// Trajectories produced by the Euler rollout of known operators, so the
// generating operators attain objective 0.
inline Realizable realizable(std::mt19937_64& rng, Index r, Index k, int l, bool quadratic, bool input, bool deim) {
  Realizable out;
  out.truth = RomOperators::zeros(r, quadratic, input);
  out.truth.a = testing::stable_matrix(rng, r, 0.5, 0.2);
  if (quadratic) out.truth.h = testing::random_matrix(rng, r, symmetric_kron_size(r), 0.05);
  if (input) out.truth.b = testing::random_matrix(rng, r, kInputChannels, 0.5);
  out.problem.dt = 0.05;
  out.problem.include_quadratic = quadratic;
  out.problem.include_input = input;
  if (deim) out.problem.deim = testing::random_deim(rng, r, r + 1, 2e-3);
  for (int i = 0; i < l; ++i) {
    auto u = testing::switch_off_controls(k, 0.5 + 0.5 * i, i % 2 ? 0.3 : -0.2);
    const Vector s0 = testing::random_matrix(rng, r, 1);
    out.problem.reduced_trajectories.push_back(
        forward_rollout(out.truth, out.problem.deim_ptr(), s0, u, out.problem.dt, k));
    out.problem.controls.push_back(std::move(u));
  }
  return out;
}

inline RomOperators perturbed(const RomOperators& ops, std::mt19937_64& rng, double relative) {
  std::normal_distribution<double> noise(0.0, relative);
  RomOperators p = ops;
  for (Matrix* m : {&p.a, &p.h, &p.b}) {
    for (Index i = 0; i < m->size(); ++i) m->data()[i] *= 1.0 + noise(rng);
  }
  return p;
}


inline double relative_operator_error(const RomOperators& got, const RomOperators& truth) {
  RomOperators diff = got;
  diff.a -= truth.a;
  diff.h -= truth.h;
  diff.b -= truth.b;
  return std::sqrt(diff.squared_norm() / truth.squared_norm());
}

/// Largest entry-wise relative difference between the adjoint gradient and
/// central finite differences of the objective.
inline double adjoint_fd_error(const RomOperators& at, const CalibrationProblem& problem) {
  const RomOperators grad = adjoint_gradient(at, problem);
  double worst = 0.0;
  auto compare = [&](const Matrix& g, auto pick) {
    for (Index i = 0; i < g.rows(); ++i) {
      for (Index j = 0; j < g.cols(); ++j) {
        const double fd = finite_difference(at, problem, [&](RomOperators& o) -> double& { return pick(o)(i, j); });
        worst = std::max(worst, std::abs(g(i, j) - fd) / std::max(std::abs(fd), 1e-8));
      }
    }
  };
  compare(grad.a, [](RomOperators& o) -> Matrix& { return o.a; });
  compare(grad.h, [](RomOperators& o) -> Matrix& { return o.h; });
  compare(grad.b, [](RomOperators& o) -> Matrix& { return o.b; });
  return worst;
}

/// Training data for the DEIM exactness check: a few FOM snapshots at mixed
/// heat loads, scaled, with an r-mode basis. The nonlinear snapshots are taken
/// on the lifted states U U^T x so that the reduced and full-space evaluations
/// see identical temperatures.
struct DeimScenario {
  FomConfig cfg;
  SnapshotSet lifted;  // scaled, data = U U^T x
  PodBasis basis;
  Matrix nonlinear;    // n x m, power density
  Matrix reduced;      // r x m, U^T x
};

inline DeimScenario deim_scenario(Index r) {
  DeimScenario sc;
  sc.cfg = FomConfig::reference();
  sc.cfg.grid_points = 60;
  sc.cfg.solid_mask = solid_region_mask(60, sc.cfg.domain_length, 1.0, 4.0);
  sc.cfg.dt = 5.0;
  sc.cfg.t_end = 6000.0;
  std::vector<FomTrajectory> trajs;
  for (double load : {0.5, 1.5}) {
    trajs.push_back(fom_integrate(sc.cfg, ControlSignal::heat_then_off(load, 3000.0), 200));
  }
  const SnapshotSet raw = assemble_snapshots(trajs);
  const ScalingSpec spec = fit_scaling(raw);
  SnapshotSet scaled = apply_scaling(raw, spec);
  sc.basis = compute_pod(scaled.data, r, spec);
  sc.reduced = project(sc.basis, scaled.data);
  scaled.data = lift(sc.basis, sc.reduced);
  sc.lifted = scaled;
  sc.nonlinear = nonlinearity_snapshots(sc.lifted, sc.cfg);
  return sc;
}

/// Number of singular values above 1e-12 times the largest.
inline Index numerical_rank(const Matrix& m) {
  Eigen::BDCSVD<Matrix> svd(m);
  const Vector& sv = svd.singularValues();
  Index rank = 0;
  while (rank < sv.size() && sv(rank) > 1e-12 * sv(0)) ++rank;
  return rank;
}

/// Galerkin reference U^T (gain * N(U s)) evaluated in full space.
inline Matrix galerkin_arrhenius(const DeimScenario& sc) {
  const double gain = source_gain(sc.cfg, &*sc.basis.scaling);
  return sc.basis.basis.transpose() * (gain * sc.nonlinear);
}

}  // namespace opcal::testing
