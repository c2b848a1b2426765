#pragma once

#include "opcal/deim.hpp"
#include "opcal/opinf.hpp"
#include "opcal/types.hpp"

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace opcal {

/// Trajectory-matching calibration of the polynomial ROM operators:
///
///   min_{A,H,B}  sum_i sum_{j=1..k_i} || s~_j^i - s_j^i ||^2
///   s~_j = s~_{j-1} + dt * Theta(s~_{j-1}, u_{j-1}),   s~_0 = s_0
///
/// The DEIM term inside Theta is held fixed.
struct CalibrationProblem {
  std::vector<Matrix> reduced_trajectories;       // r x (k_i + 1), projected data
  std::vector<std::vector<Control>> controls;     // >= k_i entries, u_j drives step j+1
  double dt = 0.0;
  std::optional<DeimOperators> deim;
  bool include_quadratic = false;
  bool include_input = false;
  /// Keep A symmetric (gradient and iterate projected onto symmetric matrices).
  bool symmetric_linear = false;

  Index r() const { return reduced_trajectories.empty() ? 0 : reduced_trajectories.front().rows(); }
  const DeimOperators* deim_ptr() const { return deim ? &*deim : nullptr; }
  void validate() const;
};

struct OptimizerConfig {
  int max_iterations = 500;
  double gradient_tolerance = 1e-8;  // relative to max(1, initial gradient norm)
  double initial_step = 1.0;         // length of the first (steepest-descent) trial step
  double line_search_shrink = 0.5;
  int line_search_max_backtracks = 40;
  int history_size = 10;

  void validate() const;
};

/// Counts sweeps over trajectories, for checking the cost of a gradient.
struct SweepCounts {
  std::size_t forward = 0;
  std::size_t backward = 0;
};

/// A s + H sym_kron(s) + B dv_I/dt + DEIM(s, R). `deim` may be null.
Vector theta(const RomOperators& ops, const DeimOperators* deim, const Vector& s, const Control& u);
/// d theta / d s.
Matrix theta_jacobian(const RomOperators& ops, const DeimOperators* deim, const Vector& s,
                      const Control& u);

/// Explicit Euler rollout of k steps; returns r x (k + 1). Throws NumericError
/// naming the first step whose state is non-finite.
Matrix forward_rollout(const RomOperators& ops, const DeimOperators* deim, const Vector& s0,
                       std::span<const Control> controls, double dt, Index k);

/// Sum of squared trajectory mismatches. Returns +infinity when a rollout
/// fails; the reason is written to `diagnostic` if given.
double objective(const RomOperators& ops, const CalibrationProblem& problem,
                 std::string* diagnostic = nullptr, SweepCounts* counts = nullptr);

struct ObjectiveGradient {
  double value = 0.0;
  RomOperators gradient;  // same shapes as the operators
};

/// Objective and its exact gradient from one forward and one backward
/// (discrete adjoint) sweep per trajectory.
ObjectiveGradient objective_and_gradient(const RomOperators& ops, const CalibrationProblem& problem,
                                         SweepCounts* counts = nullptr);
RomOperators adjoint_gradient(const RomOperators& ops, const CalibrationProblem& problem,
                              SweepCounts* counts = nullptr);

enum class Termination { kGradientTolerance, kMaxIterations, kLineSearchFailure };
std::string to_string(Termination t);

struct IterationRecord {
  int iteration = 0;
  double objective = 0.0;
  double gradient_norm = 0.0;
  double step_length = 0.0;
};

struct ConvergenceReport {
  std::vector<IterationRecord> history;  // entry 0 is the initial point
  Termination termination = Termination::kMaxIterations;
  int iterations = 0;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  double final_gradient_norm = 0.0;
  std::size_t objective_evaluations = 0;
  std::size_t gradient_evaluations = 0;
};

struct CalibrationResult {
  RomOperators operators;
  ConvergenceReport report;
};

/// Limited-memory quasi-Newton descent with Armijo backtracking, started from
/// `initial` (normally the operator-inference solution). Parameters are
/// rescaled by the RMS of the feature they multiply times dt before
/// optimizing, which equalises the curvature across reduced coordinates.
CalibrationResult calibrate(const RomOperators& initial, const CalibrationProblem& problem,
                            const OptimizerConfig& opt = {});

/// CSV: iteration,objective,gradient_norm,step_length
void write_convergence_csv(const ConvergenceReport& report, std::ostream& out);

}  // namespace opcal
