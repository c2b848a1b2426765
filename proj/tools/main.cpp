#include "pipeline.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kNumeric = 4 };

}  // namespace

int main(int argc, char** argv) {
  using namespace opcal;
  CLI::App app{"opcal: reduced-order models by POD, DEIM, operator inference and operator calibration"};
  app.require_subcommand(1, 0);
  app.fallthrough();

  std::string config_path;
  std::string out_dir = "opcal_out";
  std::optional<long long> seed;
  bool skip_calibration = false;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--seed", seed, "seed recorded with the run (the pipeline itself is deterministic)");
  app.add_flag("--skip-calibration", skip_calibration, "train: stop after operator inference");
  app.add_option("--set", overrides, "override a config key, key=value (repeatable)");

  auto* generate = app.add_subcommand("generate", "simulate the full-order model for every heat load");
  auto* train = app.add_subcommand("train", "POD, DEIM, operator inference and calibration on training data");
  auto* evaluate = app.add_subcommand("evaluate", "error curves and temperature statistics for all cases");
  auto* export_rom = app.add_subcommand("export-rom", "write the compact ROM without basis and scaling");
  auto* fixture = app.add_subcommand("fixture-check", "validate the published reduced operators");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    std::optional<std::filesystem::path> config;
    if (!config_path.empty()) config = config_path;
    KeyValueFile settings = pipeline::load_settings(config, [](const char* name) { return std::getenv(name); });
    for (const auto& item : overrides) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + item + "'");
      settings.set(std::string(text::trim(item.substr(0, eq))), std::string(text::trim(item.substr(eq + 1))),
                   "--set");
    }
    if (seed) settings.set("seed", std::to_string(*seed), "--seed");
    if (skip_calibration) settings.set("skip_calibration", "true", "--skip-calibration");
    const pipeline::PipelineConfig cfg = pipeline::make_config(settings);
    const pipeline::Layout layout{out_dir};

    if (*generate) pipeline::generate(cfg, layout, &std::cerr);
    if (*train) pipeline::train(cfg, layout, &std::cerr);
    if (*evaluate) pipeline::evaluate(cfg, layout, &std::cerr);
    if (*export_rom) pipeline::export_rom(cfg, layout, &std::cerr);
    if (*fixture) {
      const auto checks = pipeline::fixture_check(cfg, layout, &std::cout);
      for (const auto& c : checks) {
        if (!c.passed) return c.name.rfind("bounded", 0) == 0 || c.name.rfind("Arrhenius", 0) == 0 ? kNumeric : kData;
      }
    }
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
}
