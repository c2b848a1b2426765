#pragma once

#include "opcal/calibrate.hpp"
#include "opcal/deim.hpp"
#include "opcal/fom.hpp"
#include "opcal/opinf.hpp"
#include "opcal/pod.hpp"
#include "opcal/snapshots.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace opcal {

/// Deployable reduced model ds/dt = A s + H s^(2) + B u + DEIM(s, R), stepped
/// with explicit Euler at `dt`. The basis and scaling are optional: a
/// "compact" model carries only the small operators.
struct RomModel {
  RomOperators operators;
  DeimOperators deim;
  std::optional<PodBasis> basis;
  std::optional<ScalingSpec> scaling;
  double dt = 0.0;

  Index r() const { return operators.r(); }
  void validate() const;
};

inline constexpr int kRomFileVersion = 1;
/// Default number of steps flagged around each heat-load discontinuity.
inline constexpr int kDefaultSwitchWindow = 5;

/// Same contract (and code path) as forward_rollout with the model's operators.
Matrix simulate_rom(const RomModel& model, const Vector& s0, std::span<const Control> controls, Index k);

/// U^T applied to the scaled physical states. Requires basis (and scaling if
/// the model was trained on scaled data).
Matrix project_states(const RomModel& model, const Matrix& physical_states);
/// Physical states U s, with the scaling inverted.
Matrix lift_states(const RomModel& model, const Matrix& reduced_states);

/// Flags the `width` steps centred on every change of R between consecutive
/// samples (the first sample after the change is the centre).
std::vector<std::uint8_t> switch_window(std::span<const Control> controls, int width);

struct ErrorReport {
  std::vector<double> errors;               // per step ||s~_j - s_j||^2 / ||s_j||^2
  std::vector<std::uint8_t> in_switch_window;
  double mean = 0.0;
  double mean_outside_window = 0.0;
};

/// Per-step relative squared error between a ROM trajectory and projected data.
ErrorReport relative_errors(const Matrix& rom, const Matrix& projected, std::span<const Control> controls,
                            int window_width = kDefaultSwitchWindow);

/// Simulates the model from the projected initial state of `trajectory` with
/// its controls and compares against the projected trajectory.
ErrorReport rom_vs_projected_error(const RomModel& model, const FomTrajectory& trajectory,
                                   int window_width = kDefaultSwitchWindow);

/// Mean of per-step errors outside the switch windows, pooled over reports.
double pooled_mean_outside_window(std::span<const ErrorReport> reports);

struct FieldStatistics {
  std::string name;
  Vector min;
  Vector mean;
  Vector max;
};

/// Min/mean/max per field of the lifted, unscaled states. When `solid_mask`
/// is given, the "Ts" field is restricted to the cells it marks.
std::vector<FieldStatistics> field_statistics(const RomModel& model, const Matrix& reduced_states,
                                              const std::vector<std::uint8_t>* solid_mask = nullptr);
/// Same statistics computed directly on physical states.
std::vector<FieldStatistics> field_statistics(const Matrix& physical_states,
                                              const std::vector<FieldRange>& fields,
                                              const std::vector<std::uint8_t>* solid_mask = nullptr);

void write_rom(const RomModel& model, std::ostream& out);
RomModel read_rom(std::istream& in, const std::string& source);
void save_rom(const RomModel& model, const std::filesystem::path& path);
RomModel load_rom(const std::filesystem::path& path);

}  // namespace opcal
