#include "pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>

#ifndef OPCAL_DEFAULT_FIXTURE
#define OPCAL_DEFAULT_FIXTURE "data/published_8mode.rom"
#endif

namespace opcal::pipeline {

namespace {

void say(std::ostream* log, const std::string& msg) {
  if (log) *log << msg << '\n';
}

// Runs one pipeline stage, prefixing any library error with the stage name
// while keeping its category (and therefore the exit code).
template <typename F>
auto stage(const std::string& name, F&& body) -> decltype(body()) {
  const std::string prefix = "stage '" + name + "': ";
  try {
    return body();
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  } catch (const NumericError& e) {
    throw NumericError(prefix + e.what());
  }
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  return out;
}

std::string fmt(double v) { return text::format_double(v); }

struct Case {
  std::string split;
  double load;
};

std::vector<Case> all_cases(const PipelineConfig& cfg) {
  std::vector<Case> cases;
  for (double r : cfg.training_loads) cases.push_back({"train", r});
  for (double r : cfg.validation_loads) cases.push_back({"validation", r});
  return cases;
}

SnapshotSet load_cases(const Layout& out, const std::string& split, const std::vector<double>& loads) {
  std::vector<SnapshotSet> sets;
  for (double r : loads) {
    const auto path = out.snapshot_file(split, r);
    if (!std::filesystem::exists(path)) {
      throw DataError("missing snapshot file '" + path.string() + "'; run 'generate' first");
    }
    sets.push_back(load_snapshots(path));
  }
  return concatenate(sets);
}

CalibrationProblem calibration_problem(const SnapshotSet& scaled, const Matrix& reduced, const RomModel& model,
                                       const PipelineConfig& cfg) {
  CalibrationProblem problem;
  problem.dt = model.dt;
  problem.deim = model.deim;
  problem.include_quadratic = cfg.include_quadratic;
  problem.include_input = cfg.include_input;
  problem.symmetric_linear = cfg.symmetric_linear;
  for (Index i = 0; i < scaled.trajectory_count(); ++i) {
    const Index begin = scaled.trajectory_begin(i);
    const Index len = scaled.trajectory_length(i);
    problem.reduced_trajectories.push_back(reduced.middleCols(begin, len));
    problem.controls.emplace_back(scaled.controls.begin() + begin, scaled.controls.begin() + begin + len);
  }
  return problem;
}

}  // namespace

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "grid_points", "domain_length", "coolant_velocity", "rho_cp_coolant", "rho_cp_solid",
      "conductivity_coolant", "conductivity_solid", "exchange_coefficient", "solid_mask", "solid_region",
      "arrhenius_prefactor", "arrhenius_exponent", "inflow_temperature", "initial_temperature", "dt", "t_end",
      "heat_schedule", "save_every", "training_loads", "validation_loads", "rank", "deim_rank", "lambda",
      "include_quadratic", "include_input", "symmetric_linear", "max_iterations", "gradient_tolerance",
      "initial_step", "line_search_shrink", "line_search_max_backtracks", "history_size", "switch_window",
      "seed", "skip_calibration", "fixture", "fixture_dt", "fixture_switch_off", "fixture_t_end"};
  return keys;
}

void PipelineConfig::validate() const {
  fom.validate();
  schedule.validate();
  optimizer.validate();
  if (save_every < 1) throw ConfigError("save_every must be >= 1");
  if (training_loads.empty()) throw ConfigError("training_loads must not be empty");
  if (validation_loads.empty()) throw ConfigError("validation_loads must not be empty");
  const std::set<double> train(training_loads.begin(), training_loads.end());
  const std::set<double> valid(validation_loads.begin(), validation_loads.end());
  if (train.size() != training_loads.size() || valid.size() != validation_loads.size()) {
    throw ConfigError("heat loads must not repeat within training_loads or validation_loads");
  }
  for (double r : train) {
    if (!(r >= 0.0)) throw ConfigError("heat loads must be >= 0");
    if (valid.contains(r)) {
      throw ConfigError("heat load " + fmt(r) + " appears in both training_loads and validation_loads");
    }
  }
  for (double r : valid) {
    if (!(r >= 0.0)) throw ConfigError("heat loads must be >= 0");
  }
  if (rank < 1) throw ConfigError("rank must be >= 1");
  if (deim_rank < 1) throw ConfigError("deim_rank must be >= 1");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (switch_window < 0) throw ConfigError("switch_window must be >= 0");
  if (!(fixture_dt > 0.0) || !(fixture_t_end > fixture_dt)) {
    throw ConfigError("fixture_dt must be > 0 and smaller than fixture_t_end");
  }
}

KeyValueFile load_settings(const std::optional<std::filesystem::path>& config,
                           const std::function<const char*(const char*)>& getenv) {
  KeyValueFile kv;
  if (config) {
    kv = KeyValueFile::load(*config);
    const auto& keys = known_keys();
    for (const auto& key : kv.keys()) {
      if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
        throw ConfigError(config->string() + ": unknown key '" + key + "'");
      }
    }
  }
  for (const auto& key : known_keys()) {
    std::string var = "OPCAL_" + key;
    std::transform(var.begin(), var.end(), var.begin(), [](unsigned char c) { return std::toupper(c); });
    if (const char* value = getenv(var.c_str())) kv.set(key, value, "environment " + var);
  }
  return kv;
}

PipelineConfig make_config(const KeyValueFile& kv) {
  PipelineConfig cfg;
  cfg.fom = fom_config_from(kv);
  const double t_end = cfg.fom.t_end;
  cfg.schedule = parse_heat_schedule(kv.get_string("heat_schedule", "0:1, " + fmt(0.5 * t_end) + ":0"));
  cfg.save_every = static_cast<int>(kv.get_int("save_every", cfg.save_every));
  cfg.training_loads = kv.get_doubles("training_loads", cfg.training_loads);
  cfg.validation_loads = kv.get_doubles("validation_loads", cfg.validation_loads);
  cfg.rank = kv.get_int("rank", cfg.rank);
  cfg.deim_rank = kv.get_int("deim_rank", cfg.rank);
  cfg.lambda = kv.get_double("lambda", cfg.lambda);
  cfg.include_quadratic = kv.get_bool("include_quadratic", cfg.include_quadratic);
  cfg.include_input = kv.get_bool("include_input", cfg.include_input);
  cfg.symmetric_linear = kv.get_bool("symmetric_linear", cfg.symmetric_linear);
  auto& opt = cfg.optimizer;
  opt.max_iterations = static_cast<int>(kv.get_int("max_iterations", opt.max_iterations));
  opt.gradient_tolerance = kv.get_double("gradient_tolerance", opt.gradient_tolerance);
  opt.initial_step = kv.get_double("initial_step", opt.initial_step);
  opt.line_search_shrink = kv.get_double("line_search_shrink", opt.line_search_shrink);
  opt.line_search_max_backtracks =
      static_cast<int>(kv.get_int("line_search_max_backtracks", opt.line_search_max_backtracks));
  opt.history_size = static_cast<int>(kv.get_int("history_size", opt.history_size));
  cfg.switch_window = static_cast<int>(kv.get_int("switch_window", cfg.switch_window));
  cfg.seed = kv.get_int("seed", cfg.seed);
  cfg.skip_calibration = kv.get_bool("skip_calibration", cfg.skip_calibration);
  cfg.fixture = kv.get_string("fixture", OPCAL_DEFAULT_FIXTURE);
  cfg.fixture_dt = kv.get_double("fixture_dt", cfg.fixture_dt);
  cfg.fixture_switch_off = kv.get_double("fixture_switch_off", cfg.fixture_switch_off);
  cfg.fixture_t_end = kv.get_double("fixture_t_end", cfg.fixture_t_end);
  cfg.validate();
  return cfg;
}

std::string case_name(const std::string& split, double load) { return split + "_R" + fmt(load); }

void generate(const PipelineConfig& cfg, const Layout& out, std::ostream* log) {
  cfg.validate();
  std::filesystem::create_directories(out.snapshots());
  for (const auto& c : all_cases(cfg)) {
    const auto traj = stage("generate", [&] {
      return fom_integrate(cfg.fom, cfg.schedule.scaled(c.load), cfg.save_every);
    });
    const auto path = out.snapshot_file(c.split, c.load);
    save_snapshots(assemble_snapshots(std::span<const FomTrajectory>(&traj, 1)), path);
    say(log, "generate: " + path.string() + " (" + std::to_string(traj.size()) + " snapshots)");
  }
}

TrainSummary train(const PipelineConfig& cfg, const Layout& out, std::ostream* log) {
  cfg.validate();
  TrainSummary summary;
  std::filesystem::create_directories(out.root);

  SnapshotSet raw = stage("load", [&] { return load_cases(out, "train", cfg.training_loads); });
  if (!raw.derivatives) {
    say(log, "train: snapshots carry no derivatives, estimating them by finite differences");
    raw.derivatives = stage("derivatives", [&] { return estimate_derivatives(raw); });
  }
  const ScalingSpec spec = fit_scaling(raw);
  const SnapshotSet scaled = apply_scaling(raw, spec);

  const PodBasis basis = stage("pod", [&] { return compute_pod(scaled.data, cfg.rank, spec); });
  {
    auto csv = open_output(out.root / "pod_spectrum.csv");
    csv << "mode,singular_value\n";
    for (Index i = 0; i < basis.singular_values.size(); ++i) {
      csv << i + 1 << ',' << fmt(basis.singular_values(i)) << '\n';
    }
  }
  stage("pod", [&] {
    Matrix validation(scaled.state_dim(), 0);
    bool have_validation = true;
    for (double r : cfg.validation_loads) {
      have_validation = have_validation && std::filesystem::exists(out.snapshot_file("validation", r));
    }
    if (have_validation) validation = spec.apply(load_cases(out, "validation", cfg.validation_loads).data);
    const Index r_max = std::min<Index>(std::max<Index>(20, cfg.rank), std::min(scaled.state_dim(), scaled.column_count()));
    const auto curve = reconstruction_error_curve(scaled.data, validation, r_max);
    auto csv = open_output(out.root / "pod_error.csv");
    csv << "rank,training_max_mse,validation_max_mse\n";
    for (std::size_t i = 0; i < curve.training.size(); ++i) {
      csv << i + 1 << ',' << fmt(curve.training[i]) << ',' << (curve.validation.empty() ? "" : fmt(curve.validation[i]))
          << '\n';
    }
  });
  say(log, "train: pod rank " + std::to_string(cfg.rank) + ", captured energy " +
               fmt(basis.singular_values.head(cfg.rank).squaredNorm() / basis.singular_values.squaredNorm()));

  RomModel model;
  model.basis = basis;
  model.scaling = spec;
  model.dt = scaled.time_step();
  model.deim = stage("deim", [&] {
    const Matrix nl = nonlinearity_snapshots(scaled, cfg.fom);
    const Matrix un = nonlinearity_basis(nl, cfg.deim_rank);
    const auto indices = deim_points(un);
    return build_deim_operators(basis, un, indices, {cfg.fom.arrhenius_prefactor, cfg.fom.arrhenius_exponent},
                                source_gain(cfg.fom, &spec));
  });
  summary.rank = cfg.rank;
  summary.deim_rank = cfg.deim_rank;
  summary.deim_condition = model.deim.condition_number;
  say(log, "train: deim points " + text::join(std::span<const Index>(model.deim.indices)) + " (condition " +
               fmt(model.deim.condition_number) + ")");

  const Matrix reduced = project(basis, scaled.data);
  model.operators = stage("opinf", [&] {
    const Matrix dreduced = project(basis, *scaled.derivatives);
    const auto sys = assemble_regression(reduced, dreduced, scaled.controls, &model.deim,
                                         {cfg.lambda, cfg.include_quadratic, cfg.include_input});
    return solve_opinf(sys, cfg.lambda);
  });
  save_rom(model, out.oi_rom());

  const CalibrationProblem problem = calibration_problem(scaled, reduced, model, cfg);
  summary.oi_objective = objective(model.operators, problem);
  say(log, "train: operator inference (lambda " + fmt(cfg.lambda) + "), trajectory objective " +
               fmt(summary.oi_objective));

  if (cfg.skip_calibration) {
    if (std::filesystem::remove(out.calibrated_rom())) {
      say(log, "train: removed stale " + out.calibrated_rom().string());
    }
    std::filesystem::remove(out.root / "convergence.csv");
    return summary;
  }
  const auto result = stage("calibrate", [&] { return calibrate(model.operators, problem, cfg.optimizer); });
  {
    auto csv = open_output(out.root / "convergence.csv");
    write_convergence_csv(result.report, csv);
  }
  RomModel calibrated = model;
  calibrated.operators = result.operators;
  save_rom(calibrated, out.calibrated_rom());
  summary.calibration = result.report;
  say(log, "train: calibration " + to_string(result.report.termination) + " after " +
               std::to_string(result.report.iterations) + " iterations, objective " +
               fmt(result.report.initial_objective) + " -> " + fmt(result.report.final_objective));
  return summary;
}

EvaluationSummary evaluate(const PipelineConfig& cfg, const Layout& out, std::ostream* log) {
  cfg.validate();
  if (!std::filesystem::exists(out.oi_rom())) {
    throw DataError("missing '" + out.oi_rom().string() + "'; run 'train' first");
  }
  struct Named {
    std::string name;
    RomModel model;
  };
  std::vector<Named> models;
  models.push_back({"oi", load_rom(out.oi_rom())});
  if (std::filesystem::exists(out.calibrated_rom())) models.push_back({"calibrated", load_rom(out.calibrated_rom())});

  std::vector<std::vector<ErrorReport>> reports(models.size());
  auto summary_csv = open_output(out.root / "summary.csv");
  summary_csv << "case,split,heat_load,oi_error,calibrated_error,ratio\n";

  for (const auto& c : all_cases(cfg)) {
    const std::string name = case_name(c.split, c.load);
    const SnapshotSet set = load_snapshots(out.snapshot_file(c.split, c.load));
    const auto trajectories = split_trajectories(set);
    if (trajectories.size() != 1) throw DataError(name + ": expected one trajectory per snapshot file");
    const FomTrajectory& traj = trajectories.front();
    const Index k = traj.size();

    std::vector<ErrorReport> case_reports;
    std::vector<std::vector<FieldStatistics>> case_stats;
    for (std::size_t m = 0; m < models.size(); ++m) {
      const RomModel& model = models[m].model;
      stage("evaluate", [&] {
        const double spacing = traj.times.size() > 1 ? traj.times[1] - traj.times[0] : 0.0;
        if (std::abs(spacing - model.dt) > 1e-9 * model.dt) {
          throw DataError(name + ": snapshot spacing " + fmt(spacing) + " s differs from the ROM step " +
                          fmt(model.dt) + " s");
        }
      });
      const Matrix projected = stage("evaluate", [&] { return project_states(model, traj.states); });
      ErrorReport rep;
      std::vector<FieldStatistics> stats;
      try {
        const Matrix rom = simulate_rom(model, projected.col(0), traj.controls, k - 1);
        rep = relative_errors(rom, projected, traj.controls, cfg.switch_window);
        stats = stage("evaluate", [&] { return field_statistics(model, rom, &cfg.fom.solid_mask); });
      } catch (const NumericError& e) {
        say(log, "evaluate: " + models[m].name + " model failed on " + name + ": " + e.what());
        rep = relative_errors(Matrix::Constant(projected.rows(), k, std::numeric_limits<double>::infinity()),
                              projected, traj.controls, cfg.switch_window);
      }
      case_reports.push_back(rep);
      case_stats.push_back(std::move(stats));
      reports[m].push_back(rep);
    }

    {
      auto csv = open_output(out.root / ("errors_" + name + ".csv"));
      csv << "step,time,heat_load,in_switch_window";
      for (const auto& m : models) csv << ',' << m.name;
      csv << '\n';
      for (Index j = 0; j < k; ++j) {
        const auto idx = static_cast<std::size_t>(j);
        csv << j << ',' << fmt(traj.times[idx]) << ',' << fmt(traj.controls[idx].heat_load) << ','
            << int(case_reports.front().in_switch_window[idx]);
        for (const auto& rep : case_reports) csv << ',' << fmt(rep.errors[idx]);
        csv << '\n';
      }
    }
    {
      const auto fom_stats = field_statistics(traj.states, traj.fields, &cfg.fom.solid_mask);
      auto csv = open_output(out.root / ("stats_" + name + ".csv"));
      csv << "time";
      auto header = [&](const std::string& prefix, const std::vector<FieldStatistics>& stats) {
        for (const auto& f : stats) csv << ',' << prefix << '_' << f.name << "_min," << prefix << '_' << f.name
                                        << "_mean," << prefix << '_' << f.name << "_max";
      };
      header("fom", fom_stats);
      for (std::size_t m = 0; m < models.size(); ++m) {
        if (!case_stats[m].empty()) header(models[m].name, case_stats[m]);
      }
      csv << '\n';
      auto row = [&](const std::vector<FieldStatistics>& stats, Index j) {
        for (const auto& f : stats) csv << ',' << fmt(f.min(j)) << ',' << fmt(f.mean(j)) << ',' << fmt(f.max(j));
      };
      for (Index j = 0; j < k; ++j) {
        csv << fmt(traj.times[static_cast<std::size_t>(j)]);
        row(fom_stats, j);
        for (const auto& s : case_stats) {
          if (!s.empty()) row(s, j);
        }
        csv << '\n';
      }
    }

    const double oi = case_reports.front().mean_outside_window;
    summary_csv << name << ',' << c.split << ',' << fmt(c.load) << ',' << fmt(oi);
    if (models.size() > 1) {
      const double cal = case_reports.back().mean_outside_window;
      summary_csv << ',' << fmt(cal) << ',' << fmt(cal / oi);
    } else {
      summary_csv << ",,";
    }
    summary_csv << '\n';
    say(log, "evaluate: " + name + " oi " + fmt(oi) +
                 (models.size() > 1 ? " calibrated " + fmt(case_reports.back().mean_outside_window) : ""));
  }

  EvaluationSummary result;
  result.oi_error = pooled_mean_outside_window(reports.front());
  summary_csv << "all,all,," << fmt(result.oi_error);
  if (models.size() > 1) {
    result.calibrated_error = pooled_mean_outside_window(reports.back());
    result.ratio = *result.calibrated_error / result.oi_error;
    summary_csv << ',' << fmt(*result.calibrated_error) << ',' << fmt(*result.ratio);
  } else {
    summary_csv << ",,";
  }
  summary_csv << '\n';
  say(log, "evaluate: pooled error oi " + fmt(result.oi_error) +
               (result.ratio ? ", calibrated " + fmt(*result.calibrated_error) + ", ratio " + fmt(*result.ratio) : ""));
  return result;
}

void export_rom(const PipelineConfig& cfg, const Layout& out, std::ostream* log) {
  cfg.validate();
  const bool calibrated = std::filesystem::exists(out.calibrated_rom());
  const auto source = calibrated ? out.calibrated_rom() : out.oi_rom();
  if (!std::filesystem::exists(source)) throw DataError("no trained ROM in '" + out.root.string() + "'");
  RomModel model = load_rom(source);
  model.basis.reset();
  model.scaling.reset();
  save_rom(model, out.compact_rom());
  say(log, "export-rom: " + out.compact_rom().string() + " from " + source.filename().string());
}

std::vector<FixtureCheck> fixture_check(const PipelineConfig& cfg, const Layout& out, std::ostream* log) {
  std::vector<FixtureCheck> checks;
  auto record = [&](std::string name, bool ok, std::string detail) {
    say(log, std::string(ok ? "PASS " : "FAIL ") + name + (detail.empty() ? "" : " (" + detail + ")"));
    checks.push_back({std::move(name), ok, std::move(detail)});
  };

  RomModel model = load_rom(cfg.fixture);
  const bool shapes = model.operators.a.rows() == 8 && model.operators.a.cols() == 8 && model.deim.p1.rows() == 8 &&
                      model.deim.p1.cols() == 8 && model.deim.p2.rows() == 8 && model.deim.p2.cols() == 8;
  record("shapes 8x8", shapes, "");
  if (!shapes) return checks;
  auto entry = [&](const std::string& name, double got, double expected) {
    record(name + " = " + fmt(expected), std::abs(got - expected) <= 1e-12 * std::abs(expected), "got " + fmt(got));
  };
  entry("P1[1,1]", model.deim.p1(0, 0), -0.840);
  entry("P2[1,1]", model.deim.p2(0, 0), -0.00588);
  entry("A[1,1]", model.operators.a(0, 0), -3.3e-6);
  entry("P1[2,3]", model.deim.p1(1, 2), 29.940);

  // Reduced state whose sampled temperatures equal the initial temperature.
  const Vector target = (Vector::Constant(8, cfg.fom.initial_temperature) - model.deim.unscale_shift)
                            .cwiseQuotient(model.deim.unscale_scale);
  const Vector s0 = model.deim.p2.colPivHouseholderQr().solve(target);
  try {
    const Vector term = reduced_arrhenius(model.deim, s0, 1.0);
    record("Arrhenius term at " + fmt(cfg.fom.initial_temperature) + " K is finite", term.allFinite(),
           "max |entry| " + fmt(term.cwiseAbs().maxCoeff()));
  } catch (const Error& e) {
    record("Arrhenius term at " + fmt(cfg.fom.initial_temperature) + " K is finite", false, e.what());
  }

  model.dt = cfg.fixture_dt;
  const auto k = static_cast<Index>(std::llround(cfg.fixture_t_end / cfg.fixture_dt));
  const ControlSignal signal = ControlSignal::heat_then_off(1.0, cfg.fixture_switch_off);
  std::vector<Control> controls;
  for (Index j = 0; j < k; ++j) controls.push_back(signal.at(static_cast<double>(j) * cfg.fixture_dt));
  const std::string sim_name = "bounded simulation over " + std::to_string(k) + " steps";
  try {
    const Matrix traj = simulate_rom(model, s0, controls, k);
    const bool finite = traj.allFinite();
    record(sim_name, finite, "max |s| " + fmt(traj.cwiseAbs().maxCoeff()));
    std::filesystem::create_directories(out.root);
    auto csv = open_output(out.root / "fixture_trajectory.csv");
    csv << "time";
    for (Index i = 0; i < traj.rows(); ++i) csv << ",s" << i + 1;
    csv << '\n';
    for (Index j = 0; j < traj.cols(); ++j) {
      csv << fmt(static_cast<double>(j) * cfg.fixture_dt);
      for (Index i = 0; i < traj.rows(); ++i) csv << ',' << fmt(traj(i, j));
      csv << '\n';
    }
  } catch (const NumericError& e) {
    record(sim_name, false, e.what());
  }
  return checks;
}

}  // namespace opcal::pipeline
