#pragma once

#include "opcal/snapshots.hpp"
#include "opcal/types.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace opcal {

/// Truncated left singular basis of a (scaled) snapshot matrix.
struct PodBasis {
  Matrix basis;             // n x r, orthonormal columns
  Vector singular_values;   // all min(n, m) values, non-increasing
  std::optional<ScalingSpec> scaling;

  Index rank() const { return basis.cols(); }
  Index state_dim() const { return basis.rows(); }
};

/// Top-r left singular vectors of `snapshots`. Each column's sign is fixed so
/// that its largest-magnitude entry is positive.
PodBasis compute_pod(const Matrix& snapshots, Index rank,
                     std::optional<ScalingSpec> scaling = std::nullopt);

/// U^T X
Matrix project(const PodBasis& basis, const Matrix& x);
/// U Y
Matrix lift(const PodBasis& basis, const Matrix& y);

struct ReconstructionErrorCurve {
  std::vector<double> training;    // entry r-1: max column MSE using r modes
  std::vector<double> validation;  // empty when no validation columns
};

/// For r = 1..r_max, the maximum over columns of the mean-squared error of the
/// rank-r reconstruction U_r U_r^T x. The basis is fitted on `training` only.
ReconstructionErrorCurve reconstruction_error_curve(const Matrix& training, const Matrix& validation,
                                                    Index r_max);

/// Text export: header `n= r=`, U column-major (one value per line), then the
/// singular values.
void save_basis(const PodBasis& basis, const std::filesystem::path& path);
PodBasis load_basis(const std::filesystem::path& path);

}  // namespace opcal
