#include "opcal/calibrate.hpp"

#include "opcal/errors.hpp"
#include "opcal/text_io.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <ostream>

namespace opcal {

void CalibrationProblem::validate() const {
  if (reduced_trajectories.empty()) throw DataError("calibration problem has no trajectories");
  if (controls.size() != reduced_trajectories.size()) {
    throw DataError("calibration problem needs one control sequence per trajectory");
  }
  if (!(dt > 0.0)) throw ConfigError("calibration time step must be > 0");
  const Index r = reduced_trajectories.front().rows();
  for (std::size_t i = 0; i < reduced_trajectories.size(); ++i) {
    const auto& t = reduced_trajectories[i];
    if (t.rows() != r) throw DataError("calibration trajectories differ in reduced dimension");
    if (t.cols() < 2) throw DataError("calibration trajectories need at least two samples");
    if (static_cast<Index>(controls[i].size()) < t.cols() - 1) {
      throw DataError("trajectory " + std::to_string(i) + " has fewer controls than steps");
    }
  }
  if (deim && deim->rank() != r) throw DataError("DEIM operators have a different reduced dimension");
}

void OptimizerConfig::validate() const {
  if (max_iterations < 1 || !(gradient_tolerance > 0.0) || !(initial_step > 0.0) ||
      line_search_max_backtracks < 1 || history_size < 1) {
    throw ConfigError("optimizer settings must be positive");
  }
  if (!(line_search_shrink > 0.0 && line_search_shrink < 1.0)) {
    throw ConfigError("line_search_shrink must lie in (0, 1)");
  }
}

Vector theta(const RomOperators& ops, const DeimOperators* deim, const Vector& s, const Control& u) {
  Vector out = ops.a * s;
  if (ops.has_quadratic()) out.noalias() += ops.h * sym_kron(s);
  if (ops.has_input()) out += ops.b.col(0) * u.inflow_rate_derivative;
  if (deim) out += reduced_arrhenius(*deim, s, u.heat_load);
  return out;
}

Matrix theta_jacobian(const RomOperators& ops, const DeimOperators* deim, const Vector& s,
                      const Control& u) {
  Matrix jac = ops.a;
  if (ops.has_quadratic()) jac.noalias() += ops.h * sym_kron_jacobian(s);
  if (deim) jac += reduced_arrhenius_jacobian(*deim, s, u.heat_load);
  return jac;
}

Matrix forward_rollout(const RomOperators& ops, const DeimOperators* deim, const Vector& s0,
                       std::span<const Control> controls, double dt, Index k) {
  if (k < 1) throw DataError("forward_rollout: need k >= 1 steps");
  if (s0.size() != ops.r()) throw DataError("forward_rollout: initial state has wrong dimension");
  if (static_cast<Index>(controls.size()) < k) {
    throw DataError("forward_rollout: " + std::to_string(k) + " steps need as many controls, got " +
                    std::to_string(controls.size()));
  }
  Matrix traj(s0.size(), k + 1);
  traj.col(0) = s0;
  for (Index j = 1; j <= k; ++j) {
    const Vector prev = traj.col(j - 1);
    Vector rate;
    try {
      rate = theta(ops, deim, prev, controls[static_cast<std::size_t>(j - 1)]);
    } catch (const NumericError& e) {
      throw NumericError("ROM rollout failed at step " + std::to_string(j) + ": " + e.what());
    }
    traj.col(j) = prev + dt * rate;
    if (!traj.col(j).allFinite()) {
      throw NumericError("ROM rollout became non-finite at step " + std::to_string(j) +
                         " (unstable operators)");
    }
  }
  return traj;
}

double objective(const RomOperators& ops, const CalibrationProblem& problem, std::string* diagnostic,
                 SweepCounts* counts) {
  double total = 0.0;
  for (std::size_t i = 0; i < problem.reduced_trajectories.size(); ++i) {
    const auto& data = problem.reduced_trajectories[i];
    const Index k = data.cols() - 1;
    try {
      if (counts) ++counts->forward;
      const Matrix traj =
          forward_rollout(ops, problem.deim_ptr(), data.col(0), problem.controls[i], problem.dt, k);
      total += (traj - data).squaredNorm();
    } catch (const NumericError& e) {
      if (diagnostic) *diagnostic = "trajectory " + std::to_string(i) + ": " + e.what();
      return std::numeric_limits<double>::infinity();
    }
  }
  if (!std::isfinite(total)) {
    if (diagnostic) *diagnostic = "objective overflowed";
    return std::numeric_limits<double>::infinity();
  }
  return total;
}

ObjectiveGradient objective_and_gradient(const RomOperators& ops, const CalibrationProblem& problem,
                                         SweepCounts* counts) {
  const DeimOperators* deim = problem.deim_ptr();
  const Index r = ops.r();
  ObjectiveGradient out;
  out.gradient = RomOperators{Matrix::Zero(r, r), Matrix::Zero(r, ops.q()), Matrix::Zero(r, ops.p())};
  Matrix eye = Matrix::Identity(r, r);

  for (std::size_t i = 0; i < problem.reduced_trajectories.size(); ++i) {
    const auto& data = problem.reduced_trajectories[i];
    const auto& controls = problem.controls[i];
    const Index k = data.cols() - 1;
    if (counts) ++counts->forward;
    const Matrix traj = forward_rollout(ops, deim, data.col(0), controls, problem.dt, k);
    const Matrix residual = traj - data;
    out.value += residual.squaredNorm();

    // Discrete adjoint: mu holds dJ/ds~_{j+1} while step j is processed.
    if (counts) ++counts->backward;
    Vector mu = 2.0 * residual.col(k);
    for (Index j = k - 1; j >= 0; --j) {
      const Vector s = traj.col(j);
      const Control& u = controls[static_cast<std::size_t>(j)];
      const Vector w = problem.dt * mu;
      out.gradient.a.noalias() += w * s.transpose();
      if (ops.has_quadratic()) out.gradient.h.noalias() += w * sym_kron(s).transpose();
      if (ops.has_input()) out.gradient.b.col(0) += w * u.inflow_rate_derivative;
      if (j == 0) break;
      const Matrix step_jac = eye + problem.dt * theta_jacobian(ops, deim, s, u);
      mu = 2.0 * residual.col(j) + step_jac.transpose() * mu;
    }
  }
  return out;
}

RomOperators adjoint_gradient(const RomOperators& ops, const CalibrationProblem& problem,
                              SweepCounts* counts) {
  return objective_and_gradient(ops, problem, counts).gradient;
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::kGradientTolerance: return "gradient_tolerance";
    case Termination::kMaxIterations: return "max_iterations";
    case Termination::kLineSearchFailure: return "line_search_failure";
  }
  return "unknown";
}

namespace {

// Maps the optimised blocks of RomOperators to a flat parameter vector.
class ParameterLayout {
 public:
  ParameterLayout(const RomOperators& shape, const CalibrationProblem& problem)
      : shape_(shape),
        use_h_(problem.include_quadratic && shape.has_quadratic()),
        use_b_(problem.include_input && shape.has_input()),
        symmetric_(problem.symmetric_linear) {}

  Index size() const {
    return shape_.a.size() + (use_h_ ? shape_.h.size() : 0) + (use_b_ ? shape_.b.size() : 0);
  }

  Vector pack(const RomOperators& ops) const {
    Vector x(size());
    Index k = 0;
    auto put = [&](const Matrix& m) {
      x.segment(k, m.size()) = m.reshaped();
      k += m.size();
    };
    put(ops.a);
    if (use_h_) put(ops.h);
    if (use_b_) put(ops.b);
    return x;
  }

  // Unoptimised blocks are taken from `base`.
  RomOperators unpack(const Vector& x, const RomOperators& base) const {
    RomOperators ops = base;
    Index k = 0;
    auto take = [&](Matrix& m) {
      m = x.segment(k, m.size()).reshaped(m.rows(), m.cols());
      k += m.size();
    };
    take(ops.a);
    if (use_h_) take(ops.h);
    if (use_b_) take(ops.b);
    return ops;
  }

  // Projection onto the constraint set (identity unless A must be symmetric).
  void project(Vector& x) const {
    if (!symmetric_) return;
    const Index r = shape_.r();
    Matrix a = x.head(r * r).reshaped(r, r);
    a = 0.5 * (a + a.transpose()).eval();
    x.head(r * r) = a.reshaped();
  }

  // Diagonal variable scaling: dt * RMS of the feature each entry multiplies.
  Vector weights(const CalibrationProblem& problem) const {
    const Index r = shape_.r();
    const Index q = shape_.q();
    Vector sq_s = Vector::Zero(r);
    Vector sq_kron = Vector::Zero(q);
    double sq_u = 0.0;
    double count = 0.0;
    for (std::size_t i = 0; i < problem.reduced_trajectories.size(); ++i) {
      const auto& data = problem.reduced_trajectories[i];
      for (Index j = 0; j + 1 < data.cols(); ++j) {
        const Vector s = data.col(j);
        sq_s += s.cwiseAbs2();
        if (use_h_) sq_kron += sym_kron(s).cwiseAbs2();
        const double u = problem.controls[i][static_cast<std::size_t>(j)].inflow_rate_derivative;
        sq_u += u * u;
        count += 1.0;
      }
    }
    Vector rms_s = (sq_s / count).cwiseSqrt();
    if (symmetric_) rms_s.setConstant(std::sqrt(sq_s.sum() / (count * static_cast<double>(r))));
    Vector w(size());
    Index k = 0;
    for (Index col = 0; col < r; ++col) w.segment(k + col * r, r).setConstant(rms_s(col));
    k += r * r;
    if (use_h_) {
      const Vector rms_kron = (sq_kron / count).cwiseSqrt();
      for (Index col = 0; col < q; ++col) w.segment(k + col * r, r).setConstant(rms_kron(col));
      k += r * q;
    }
    if (use_b_) w.segment(k, r).setConstant(std::sqrt(sq_u / count));
    w *= problem.dt;
    const double wmax = w.maxCoeff();
    if (!(wmax > 0.0)) return Vector::Ones(size());
    return w.cwiseMax(1e-8 * wmax);
  }

 private:
  RomOperators shape_;
  bool use_h_;
  bool use_b_;
  bool symmetric_;
};

}  // namespace

CalibrationResult calibrate(const RomOperators& initial, const CalibrationProblem& problem,
                            const OptimizerConfig& opt) {
  problem.validate();
  opt.validate();
  initial.validate();
  if (initial.r() != problem.r()) throw DataError("initial operators have the wrong reduced dimension");

  const ParameterLayout layout(initial, problem);
  const Vector weight = layout.weights(problem);

  ConvergenceReport report;
  // Scaled coordinates z = weight .* theta.
  Vector x = layout.pack(initial);
  layout.project(x);
  RomOperators current = layout.unpack(x, initial);
  Vector z = x.cwiseProduct(weight);

  std::string diagnostic;
  const double f0 = objective(current, problem, &diagnostic);
  ++report.objective_evaluations;
  if (!std::isfinite(f0)) {
    throw NumericError("calibration start point has a non-finite objective (" + diagnostic +
                       "); increase the Tikhonov lambda of the operator-inference stage");
  }
  auto eval_gradient = [&](const RomOperators& ops, double& f) {
    ++report.gradient_evaluations;
    auto og = objective_and_gradient(ops, problem);
    f = og.value;
    Vector g = layout.pack(og.gradient);
    layout.project(g);
    return g;
  };
  double f = 0.0;
  Vector g_theta = eval_gradient(current, f);
  Vector g = g_theta.cwiseQuotient(weight);

  const double threshold = opt.gradient_tolerance * std::max(1.0, g.norm());
  report.initial_objective = f;
  report.history.push_back({0, f, g_theta.norm(), 0.0});

  std::deque<std::pair<Vector, Vector>> memory;  // (s, y) pairs in scaled coordinates
  report.termination = Termination::kMaxIterations;
  int iter = 0;
  if (g.norm() <= threshold || f == 0.0) report.termination = Termination::kGradientTolerance;

  while (report.termination == Termination::kMaxIterations && iter < opt.max_iterations) {
    // Two-loop recursion for d = -H g.
    Vector d;
    if (memory.empty()) {
      d = -g * (opt.initial_step / g.norm());
    } else {
      Vector q = g;
      std::vector<double> alpha(memory.size());
      for (std::size_t m = memory.size(); m-- > 0;) {
        const auto& [s, y] = memory[m];
        alpha[m] = s.dot(q) / y.dot(s);
        q -= alpha[m] * y;
      }
      const auto& [s_last, y_last] = memory.back();
      q *= s_last.dot(y_last) / y_last.squaredNorm();
      for (std::size_t m = 0; m < memory.size(); ++m) {
        const auto& [s, y] = memory[m];
        const double beta = y.dot(q) / y.dot(s);
        q += (alpha[m] - beta) * s;
      }
      d = -q;
    }
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      memory.clear();
      d = -g * (opt.initial_step / g.norm());
      slope = g.dot(d);
    }

    // Armijo backtracking; non-finite trial objectives count as rejections.
    constexpr double kArmijo = 1e-4;
    double step = 1.0;
    bool accepted = false;
    Vector z_new;
    RomOperators trial;
    double f_trial = 0.0;
    for (int bt = 0; bt <= opt.line_search_max_backtracks; ++bt) {
      z_new = z + step * d;
      Vector x_new = z_new.cwiseQuotient(weight);
      layout.project(x_new);
      z_new = x_new.cwiseProduct(weight);
      trial = layout.unpack(x_new, initial);
      f_trial = objective(trial, problem);
      ++report.objective_evaluations;
      if (std::isfinite(f_trial) && f_trial <= f + kArmijo * step * slope) {
        accepted = true;
        break;
      }
      step *= opt.line_search_shrink;
    }
    if (!accepted) {
      report.termination = Termination::kLineSearchFailure;
      break;
    }
    ++iter;
    double f_new = 0.0;
    const Vector g_theta_new = eval_gradient(trial, f_new);
    const Vector g_new = g_theta_new.cwiseQuotient(weight);

    Vector s_vec = z_new - z;
    Vector y_vec = g_new - g;
    if (s_vec.dot(y_vec) > 1e-12 * s_vec.norm() * y_vec.norm()) {
      memory.emplace_back(std::move(s_vec), std::move(y_vec));
      if (static_cast<int>(memory.size()) > opt.history_size) memory.pop_front();
    }
    const double step_length = (z_new - z).cwiseQuotient(weight).norm();
    z = z_new;
    g = g_new;
    g_theta = g_theta_new;
    f = f_new;
    current = std::move(trial);
    report.history.push_back({iter, f, g_theta.norm(), step_length});
    if (g.norm() <= threshold || f == 0.0) report.termination = Termination::kGradientTolerance;
  }

  report.iterations = iter;
  report.final_objective = f;
  report.final_gradient_norm = g_theta.norm();
  return {current, report};
}

void write_convergence_csv(const ConvergenceReport& report, std::ostream& out) {
  out << "iteration,objective,gradient_norm,step_length\n";
  for (const auto& rec : report.history) {
    out << rec.iteration << ',' << text::format_double(rec.objective) << ','
        << text::format_double(rec.gradient_norm) << ',' << text::format_double(rec.step_length)
        << '\n';
  }
}

}  // namespace opcal
