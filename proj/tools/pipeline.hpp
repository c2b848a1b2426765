#pragma once

#include "opcal/opcal.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace opcal::pipeline {

/// Everything the command-line driver needs, read from a flat key-value
/// config. Every key can also be set through the environment as
/// OPCAL_<KEY> (upper case), which takes precedence over the file.
struct PipelineConfig {
  FomConfig fom;
  ControlSignal schedule;  // unit heat load; scaled by each case's R
  int save_every = 50;
  std::vector<double> training_loads{0.5, 1.0, 1.5};
  std::vector<double> validation_loads{0.75, 1.25};
  Index rank = 8;
  Index deim_rank = 8;
  double lambda = 1.0;
  bool include_quadratic = false;
  bool include_input = false;
  bool symmetric_linear = false;
  OptimizerConfig optimizer;
  int switch_window = kDefaultSwitchWindow;
  long long seed = 0;
  bool skip_calibration = false;

  std::filesystem::path fixture;
  double fixture_dt = 10.0;
  double fixture_switch_off = 36010.0;
  double fixture_t_end = 72000.0;

  void validate() const;
};

/// Keys understood by PipelineConfig (and thus by the environment override).
const std::vector<std::string>& known_keys();

/// Reads `config` (if given), then applies OPCAL_<KEY> variables looked up
/// through `getenv`. Unknown keys in the file are rejected.
KeyValueFile load_settings(const std::optional<std::filesystem::path>& config,
                           const std::function<const char*(const char*)>& getenv);
PipelineConfig make_config(const KeyValueFile& settings);

/// File name stem for one heat-load case, e.g. "train_R0.5".
std::string case_name(const std::string& split, double load);

struct Layout {
  std::filesystem::path root;
  std::filesystem::path snapshots() const { return root / "snapshots"; }
  std::filesystem::path snapshot_file(const std::string& split, double load) const {
    return snapshots() / (case_name(split, load) + ".snap");
  }
  std::filesystem::path oi_rom() const { return root / "rom_oi.rom"; }
  std::filesystem::path calibrated_rom() const { return root / "rom_calibrated.rom"; }
  std::filesystem::path compact_rom() const { return root / "rom_compact.rom"; }
};

struct TrainSummary {
  Index rank = 0;
  Index deim_rank = 0;
  double deim_condition = 0.0;
  double oi_objective = 0.0;
  std::optional<ConvergenceReport> calibration;
};

struct EvaluationSummary {
  double oi_error = 0.0;          // pooled mean outside switch windows
  std::optional<double> calibrated_error;
  std::optional<double> ratio;    // calibrated / OI
};

struct FixtureCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Progress messages go to `log` (may be null). Errors propagate as the
/// library's exception types, with the failing stage named in the message.
void generate(const PipelineConfig& cfg, const Layout& out, std::ostream* log);
TrainSummary train(const PipelineConfig& cfg, const Layout& out, std::ostream* log);
EvaluationSummary evaluate(const PipelineConfig& cfg, const Layout& out, std::ostream* log);
void export_rom(const PipelineConfig& cfg, const Layout& out, std::ostream* log);
std::vector<FixtureCheck> fixture_check(const PipelineConfig& cfg, const Layout& out, std::ostream* log);

}  // namespace opcal::pipeline
