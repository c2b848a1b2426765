#pragma once

#include "opcal/fom.hpp"
#include "opcal/pod.hpp"
#include "opcal/snapshots.hpp"
#include "opcal/types.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace opcal {

struct ArrheniusLaw {
  double prefactor = 5000.0;
  double exponent = 1500.0;
};

/// Sampled evaluation of the Arrhenius term in reduced coordinates:
///
///   gain * R * prefactor * P1 * exp(exponent / T(P2 s)),
///   T(y) = unscale_shift + unscale_scale .* y
///
/// P1 = U^T U_N (P^T U_N)^{-1} (r x s) and P2 = P^T U (s x r), with P the
/// selected rows. The affine map T() turns sampled reduced coordinates back
/// into physical temperature; `gain` converts the source into the units of
/// the scaled state equation (1 for unscaled models).
struct DeimOperators {
  std::vector<Index> indices;   // may be empty for imported operators
  Matrix nonlinearity_basis;    // U_N, n x s (empty for imported operators)
  Matrix p1;
  Matrix p2;
  double arrhenius_prefactor = 0.0;
  double arrhenius_exponent = 0.0;
  double gain = 1.0;
  Vector unscale_shift;
  Vector unscale_scale;
  double condition_number = 0.0;  // of P^T U_N, 0 when unknown

  Index rank() const { return p1.rows(); }
  Index samples() const { return p1.cols(); }
  /// Physical temperatures at the sample points.
  Vector sample_temperatures(const Vector& reduced_state) const;
  void validate() const;
};

/// Lowest sampled temperature accepted by reduced_arrhenius.
inline constexpr double kMinSampleTemperature = 1.0;

/// Columns of the nonlinear-term snapshot matrix: R * A * exp(B / T_s) on the
/// solid cells of the (unscaled) solid block, zero elsewhere.
Matrix nonlinearity_snapshots(const SnapshotSet& set, const FomConfig& cfg);

/// Leading `s` left singular vectors of the nonlinear snapshot matrix.
Matrix nonlinearity_basis(const Matrix& nonlinear_snapshots, Index s);

/// Greedy interpolation-point selection. Ties go to the lowest row index.
std::vector<Index> deim_points(const Matrix& basis);

/// 1 / (rho_cp_solid * scale of the "Ts" field): converts a power density
/// into a rate of the scaled solid temperature.
double source_gain(const FomConfig& cfg, const ScalingSpec* scaling);

DeimOperators build_deim_operators(const PodBasis& basis, const Matrix& nonlinear_basis,
                                   std::span<const Index> indices, const ArrheniusLaw& law,
                                   double gain = 1.0);

Vector reduced_arrhenius(const DeimOperators& ops, const Vector& reduced_state, double heat_load);
/// d reduced_arrhenius / d reduced_state (r x r).
Matrix reduced_arrhenius_jacobian(const DeimOperators& ops, const Vector& reduced_state,
                                  double heat_load);

void write_deim(const DeimOperators& ops, std::ostream& out);
DeimOperators read_deim(std::istream& in, const std::string& source);
void save_deim(const DeimOperators& ops, const std::filesystem::path& path);
DeimOperators load_deim(const std::filesystem::path& path);

}  // namespace opcal
