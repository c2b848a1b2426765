#pragma once

#include "opcal/fom.hpp"
#include "opcal/types.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace opcal {

/// Per-field affine standardisation x_scaled = (x - shift) / scale.
struct ScalingSpec {
  std::vector<FieldRange> fields;
  Vector shift;  // one entry per field
  Vector scale;  // one entry per field, > 0

  Index state_dim() const { return fields.empty() ? 0 : fields.back().end; }
  /// Expands the per-field values to one entry per state row.
  Vector row_shift() const;
  Vector row_scale() const;
  const FieldRange& field(const std::string& name) const;
  Index field_index(const std::string& name) const;

  Matrix apply(const Matrix& x) const;
  Matrix invert(const Matrix& x) const;
  /// Time derivatives carry no shift: dx_scaled/dt = (dx/dt) / scale.
  Matrix apply_to_derivatives(const Matrix& dx) const;
  Matrix invert_derivatives(const Matrix& dx) const;

  void validate() const;
};

/// The global snapshot matrix: l trajectories stacked column-wise,
/// trajectory-major then time-major.
struct SnapshotSet {
  Matrix data;                             // n x m
  std::vector<Index> trajectory_offsets;   // l + 1 entries, 0 ... m
  std::vector<std::vector<double>> times;  // per trajectory
  std::vector<Control> controls;           // per column
  std::optional<Matrix> derivatives;       // n x m
  std::optional<ScalingSpec> scaling;      // set when `data` is scaled
  std::vector<FieldRange> fields;

  Index state_dim() const { return data.rows(); }
  Index column_count() const { return data.cols(); }
  Index trajectory_count() const {
    return trajectory_offsets.empty() ? 0 : static_cast<Index>(trajectory_offsets.size()) - 1;
  }
  Index trajectory_begin(Index i) const { return trajectory_offsets[static_cast<std::size_t>(i)]; }
  Index trajectory_length(Index i) const {
    return trajectory_offsets[static_cast<std::size_t>(i) + 1] - trajectory_begin(i);
  }
  /// Uniform time step shared by all trajectories (0 if no trajectory has two samples).
  double time_step() const;

  void validate() const;
};

/// Columns ordered trajectory-major, then time. Throws DataError on mismatched n.
SnapshotSet assemble_snapshots(std::span<const FomTrajectory> trajectories);
/// Inverse of assemble_snapshots.
std::vector<FomTrajectory> split_trajectories(const SnapshotSet& set);
/// Concatenates sets with identical state layout.
SnapshotSet concatenate(std::span<const SnapshotSet> sets);

/// Mean / standard deviation per field block, std floored at 1e-12.
ScalingSpec fit_scaling(const SnapshotSet& set);
/// Returns a scaled copy (derivatives scaled by 1/scale only); records `spec`.
SnapshotSet apply_scaling(const SnapshotSet& set, const ScalingSpec& spec);
/// Undoes apply_scaling; no-op when the set carries no scaling.
SnapshotSet invert_scaling(const SnapshotSet& set);

/// Central differences inside each trajectory, second-order one-sided at its
/// ends. Requires >= 3 uniformly spaced samples per trajectory.
Matrix estimate_derivatives(const SnapshotSet& set);

void save_snapshots(const SnapshotSet& set, const std::filesystem::path& path);
SnapshotSet load_snapshots(const std::filesystem::path& path);
void write_snapshots(const SnapshotSet& set, std::ostream& out);
SnapshotSet read_snapshots(std::istream& in, const std::string& source);

}  // namespace opcal
