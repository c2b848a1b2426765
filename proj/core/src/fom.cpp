#include "opcal/fom.hpp"

#include "opcal/errors.hpp"
#include "opcal/keyvalue.hpp"
#include "opcal/text_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <string>

namespace opcal {

FomConfig FomConfig::reference() {
  FomConfig cfg;
  cfg.solid_mask = solid_region_mask(cfg.grid_points, cfg.domain_length, 1.0, 4.0);
  return cfg;
}

std::vector<FieldRange> FomConfig::fields() const {
  const Index n = grid_points;
  return {{"Tc", 0, n}, {"Ts", n, 2 * n}};
}

double FomConfig::max_stable_dt() const {
  const double h = dx();
  double bound = std::numeric_limits<double>::infinity();
  if (coolant_velocity > 0.0) bound = std::min(bound, h / coolant_velocity);
  if (conductivity_coolant > 0.0) {
    bound = std::min(bound, h * h * rho_cp_coolant / (2.0 * conductivity_coolant));
  }
  if (conductivity_solid > 0.0) {
    bound = std::min(bound, h * h * rho_cp_solid / (2.0 * conductivity_solid));
  }
  return 0.4 * bound;
}

void FomConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid FOM configuration: " + what);
  };
  require(grid_points >= 3, "grid_points must be >= 3");
  require(domain_length > 0.0, "domain_length must be > 0");
  require(coolant_velocity >= 0.0, "coolant_velocity must be >= 0");
  require(rho_cp_coolant > 0.0 && rho_cp_solid > 0.0, "heat capacities must be > 0");
  require(conductivity_coolant >= 0.0 && conductivity_solid >= 0.0,
          "conductivities must be >= 0");
  require(exchange_coefficient >= 0.0, "exchange_coefficient must be >= 0");
  require(static_cast<int>(solid_mask.size()) == grid_points,
          "solid_mask needs one entry per grid point");
  require(std::all_of(solid_mask.begin(), solid_mask.end(), [](auto v) { return v <= 1; }),
          "solid_mask must be 0/1 valued");
  require(inflow_temperature > 0.0 && initial_temperature > 0.0, "temperatures must be > 0 K");
  require(dt > 0.0, "dt must be > 0");
  require(t_end > 0.0, "t_end must be > 0");
  const double bound = max_stable_dt();
  if (dt > bound) {
    throw ConfigError("dt = " + text::format_double(dt) + " s violates the explicit stability bound " +
                      text::format_double(bound) + " s");
  }
}

std::vector<std::uint8_t> solid_region_mask(int grid_points, double domain_length, double start,
                                            double end) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(std::max(grid_points, 0)), 0);
  const double h = domain_length / grid_points;
  for (int i = 0; i < grid_points; ++i) {
    const double x = (i + 0.5) * h;
    mask[static_cast<std::size_t>(i)] = (x >= start && x <= end) ? 1 : 0;
  }
  return mask;
}

ControlSignal ControlSignal::constant(double heat_load) {
  return ControlSignal{{{0.0, heat_load}}, 0.0};
}

ControlSignal ControlSignal::heat_then_off(double load, double switch_off) {
  return ControlSignal{{{0.0, load}, {switch_off, 0.0}}, 0.0};
}

Control ControlSignal::at(double t) const {
  double r = 0.0;
  for (const auto& [time, value] : breakpoints) {
    if (time > t) break;
    r = value;
  }
  return Control{r, inflow_rate_derivative};
}

ControlSignal ControlSignal::scaled(double factor) const {
  ControlSignal out = *this;
  for (auto& bp : out.breakpoints) bp.second *= factor;
  return out;
}

void ControlSignal::validate() const {
  for (std::size_t i = 0; i < breakpoints.size(); ++i) {
    if (!(breakpoints[i].second >= 0.0)) throw ConfigError("heat load R(t) must be >= 0");
    if (i > 0 && !(breakpoints[i].first > breakpoints[i - 1].first)) {
      throw ConfigError("heat schedule breakpoints must be strictly increasing in time");
    }
  }
}

double arrhenius_source(double solid_temperature, double heat_load, const FomConfig& cfg) {
  if (!(solid_temperature > 0.0)) {
    throw NumericError("Arrhenius source evaluated at non-positive temperature " +
                       text::format_double(solid_temperature) + " K");
  }
  return heat_load * cfg.arrhenius_prefactor * std::exp(cfg.arrhenius_exponent / solid_temperature);
}

Vector fom_rhs(const Vector& state, const Control& control, const FomConfig& cfg) {
  const Index n = cfg.grid_points;
  if (state.size() != 2 * n) {
    throw DataError("fom_rhs: state has dimension " + std::to_string(state.size()) + ", expected " +
                    std::to_string(2 * n));
  }
  if (static_cast<Index>(cfg.solid_mask.size()) != n) {
    throw DataError("fom_rhs: solid_mask size does not match grid_points");
  }
  const auto tc = state.head(n);
  const auto ts = state.tail(n);
  const double h = cfg.dx();
  const double v = cfg.coolant_velocity;
  const double t_in = cfg.inflow_temperature;
  const double dc = cfg.conductivity_coolant / (h * h);
  const double ds = cfg.conductivity_solid / (h * h);

  Vector out(2 * n);
  for (Index i = 0; i < n; ++i) {
    // Coolant: inflow Dirichlet value acts as the upstream/ghost cell at x = 0,
    // zero-gradient at the outlet.
    const double up = i == 0 ? t_in : tc(i - 1);
    const double left = i == 0 ? t_in : tc(i - 1);
    const double right = i == n - 1 ? tc(i) : tc(i + 1);
    double flux = dc * (left - 2.0 * tc(i) + right);

    // Solid: zero-gradient at both ends.
    const double sleft = i == 0 ? ts(i) : ts(i - 1);
    const double sright = i == n - 1 ? ts(i) : ts(i + 1);
    double sflux = ds * (sleft - 2.0 * ts(i) + sright);

    if (cfg.solid_mask[static_cast<std::size_t>(i)]) {
      const double exchange = cfg.exchange_coefficient * (ts(i) - tc(i));
      flux += exchange;
      sflux += -exchange + arrhenius_source(ts(i), control.heat_load, cfg);
    }
    out(i) = -v * (tc(i) - up) / h + flux / cfg.rho_cp_coolant;
    out(n + i) = sflux / cfg.rho_cp_solid;
  }
  return out;
}

FomTrajectory fom_integrate(const FomConfig& cfg, const ControlSignal& signal, int save_every) {
  cfg.validate();
  signal.validate();
  if (save_every < 1) throw ConfigError("save_every must be >= 1");

  const long long steps = std::llround(cfg.t_end / cfg.dt);
  const Index n = cfg.state_dim();
  const Index saved = static_cast<Index>(steps / save_every + 1);

  FomTrajectory traj;
  traj.states.resize(n, saved);
  traj.derivatives.resize(n, saved);
  traj.times.reserve(static_cast<std::size_t>(saved));
  traj.controls.reserve(static_cast<std::size_t>(saved));
  traj.fields = cfg.fields();

  Vector x = Vector::Constant(n, cfg.initial_temperature);
  Index col = 0;
  for (long long step = 0; step <= steps; ++step) {
    const double t = static_cast<double>(step) * cfg.dt;
    const Control u = signal.at(t);
    Vector f = fom_rhs(x, u, cfg);
    if (step % save_every == 0) {
      traj.states.col(col) = x;
      traj.derivatives.col(col) = f;
      traj.times.push_back(t);
      traj.controls.push_back(u);
      ++col;
    }
    if (step == steps) break;
    x += cfg.dt * f;
    if (!x.allFinite()) {
      throw NumericError("FOM state became non-finite at step " + std::to_string(step + 1));
    }
  }
  return traj;
}

FomConfig fom_config_from(const KeyValueFile& kv, FomConfig base) {
  FomConfig cfg = std::move(base);
  const int old_grid = cfg.grid_points;
  const double old_length = cfg.domain_length;
  cfg.grid_points = static_cast<int>(kv.get_int("grid_points", cfg.grid_points));
  cfg.domain_length = kv.get_double("domain_length", cfg.domain_length);
  cfg.coolant_velocity = kv.get_double("coolant_velocity", cfg.coolant_velocity);
  cfg.rho_cp_coolant = kv.get_double("rho_cp_coolant", cfg.rho_cp_coolant);
  cfg.rho_cp_solid = kv.get_double("rho_cp_solid", cfg.rho_cp_solid);
  cfg.conductivity_coolant = kv.get_double("conductivity_coolant", cfg.conductivity_coolant);
  cfg.conductivity_solid = kv.get_double("conductivity_solid", cfg.conductivity_solid);
  cfg.exchange_coefficient = kv.get_double("exchange_coefficient", cfg.exchange_coefficient);
  cfg.arrhenius_prefactor = kv.get_double("arrhenius_prefactor", cfg.arrhenius_prefactor);
  cfg.arrhenius_exponent = kv.get_double("arrhenius_exponent", cfg.arrhenius_exponent);
  cfg.inflow_temperature = kv.get_double("inflow_temperature", cfg.inflow_temperature);
  cfg.initial_temperature = kv.get_double("initial_temperature", cfg.initial_temperature);
  cfg.dt = kv.get_double("dt", cfg.dt);
  cfg.t_end = kv.get_double("t_end", cfg.t_end);
  if (cfg.grid_points < 3) throw ConfigError("grid_points must be >= 3");

  if (auto mask = kv.get("solid_mask")) {
    cfg.solid_mask.clear();
    for (char c : *mask) {
      if (c == '0' || c == '1') {
        cfg.solid_mask.push_back(static_cast<std::uint8_t>(c - '0'));
      } else if (c != ' ' && c != ',') {
        throw ConfigError("solid_mask must consist of 0/1 characters");
      }
    }
  } else if (auto region = kv.get("solid_region")) {
    auto parts = text::split(*region, ':');
    double a = 0.0;
    double b = 0.0;
    if (parts.size() != 2 ||
        std::from_chars(parts[0].data(), parts[0].data() + parts[0].size(), a).ec != std::errc{} ||
        std::from_chars(parts[1].data(), parts[1].data() + parts[1].size(), b).ec != std::errc{}) {
      throw ConfigError("solid_region must be 'start:end' in metres");
    }
    cfg.solid_mask = solid_region_mask(cfg.grid_points, cfg.domain_length, a, b);
  } else if (cfg.grid_points != old_grid || cfg.domain_length != old_length) {
    // Keep the reference solid fraction [0.2 L, 0.8 L] on a resized grid.
    cfg.solid_mask = solid_region_mask(cfg.grid_points, cfg.domain_length, 0.2 * cfg.domain_length,
                                       0.8 * cfg.domain_length);
  }
  return cfg;
}

ControlSignal parse_heat_schedule(const std::string& text) {
  ControlSignal signal;
  for (auto entry : text::split(text, ',')) {
    auto parts = text::split(entry, ':');
    double t = 0.0;
    double r = 0.0;
    if (parts.size() != 2 ||
        std::from_chars(parts[0].data(), parts[0].data() + parts[0].size(), t).ec != std::errc{} ||
        std::from_chars(parts[1].data(), parts[1].data() + parts[1].size(), r).ec != std::errc{}) {
      throw ConfigError("heat schedule entries must be 'time:R', got '" + std::string(entry) + "'");
    }
    signal.breakpoints.emplace_back(t, r);
  }
  signal.validate();
  return signal;
}

}  // namespace opcal
