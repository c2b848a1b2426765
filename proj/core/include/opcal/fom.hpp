#pragma once

#include "opcal/types.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace opcal {

class KeyValueFile;

/// 1D two-field reactor model: coolant temperature T_c advected at constant
/// velocity and solid temperature T_s, coupled by volumetric heat exchange on
/// the solid region and heated there by an Arrhenius source.
///
/// Defaults use the coolant/solid properties and Arrhenius constants of the
/// reference tubular reactor; grid, domain length, velocity and exchange
/// coefficient are desk-scale choices.
struct FomConfig {
  int grid_points = 200;
  double domain_length = 5.0;                 // m
  double coolant_velocity = 0.005;            // m/s, >= 0 (flows towards +x)
  double rho_cp_coolant = 723.0 * 2590.0;     // J/(m^3 K)
  double rho_cp_solid = 3062.0 * 2000.0;      // J/(m^3 K)
  double conductivity_coolant = 0.132;        // W/(m K)
  double conductivity_solid = 0.2;            // W/(m K)
  double exchange_coefficient = 2000.0;       // h*A, W/(m^3 K)
  std::vector<std::uint8_t> solid_mask;       // one 0/1 entry per cell
  double arrhenius_prefactor = 5000.0;        // power density per unit R
  double arrhenius_exponent = 1500.0;         // K
  double inflow_temperature = 533.15;         // K
  double initial_temperature = 533.15;        // K
  double dt = 2.0;                            // s
  double t_end = 20000.0;                     // s

  /// Reference configuration with the solid occupying [1 m, 4 m].
  static FomConfig reference();

  double dx() const { return domain_length / grid_points; }
  Index state_dim() const { return 2 * static_cast<Index>(grid_points); }
  std::vector<FieldRange> fields() const;

  /// Explicit-scheme bound 0.4 * min(dx/v, dx^2 rho_cp / (2 K)) over both fields.
  double max_stable_dt() const;

  /// Throws ConfigError on any violated invariant, including the dt bound.
  void validate() const;
};

/// Marks cells whose centres lie in [start, end] (metres) as solid.
std::vector<std::uint8_t> solid_region_mask(int grid_points, double domain_length, double start,
                                            double end);

/// Piecewise-constant heat load R(t): R is the value of the last breakpoint
/// at or before t, and 0 before the first one. dv_I/dt is a constant.
struct ControlSignal {
  std::vector<std::pair<double, double>> breakpoints;  // (time, R)
  double inflow_rate_derivative = 0.0;

  static ControlSignal constant(double heat_load);
  /// R = load until `switch_off`, 0 afterwards.
  static ControlSignal heat_then_off(double load, double switch_off);

  Control at(double t) const;
  ControlSignal scaled(double factor) const;
  void validate() const;
};

struct FomTrajectory {
  std::vector<double> times;
  Matrix states;       // n x k, columns [T_c; T_s]
  Matrix derivatives;  // n x k, exact right-hand sides at the saved states
  std::vector<Control> controls;
  std::vector<FieldRange> fields;

  Index size() const { return states.cols(); }
};

/// Arrhenius heat generation R * A * exp(B / T), sign convention as published
/// (exp(+B/T)). Throws NumericError for T <= 0.
double arrhenius_source(double solid_temperature, double heat_load, const FomConfig& cfg);

/// Semi-discrete right-hand side dx/dt for state x = [T_c; T_s].
Vector fom_rhs(const Vector& state, const Control& control, const FomConfig& cfg);

/// Explicit Euler from the uniform initial state; stores every
/// `save_every`-th state together with its exact right-hand side.
FomTrajectory fom_integrate(const FomConfig& cfg, const ControlSignal& signal, int save_every);

/// Reads FomConfig keys from a flat config (missing keys keep `base` values).
/// `solid_region = a:b` (metres) or `solid_mask = 0011..` select the solid cells.
FomConfig fom_config_from(const KeyValueFile& kv, FomConfig base = FomConfig::reference());

/// Parses `t0:R0, t1:R1, ...`.
ControlSignal parse_heat_schedule(const std::string& text);

}  // namespace opcal
