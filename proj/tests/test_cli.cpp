#include "pipeline.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <sys/wait.h>

using namespace opcal;

namespace {

const std::filesystem::path kScratch = std::filesystem::temp_directory_path() / "opcal_cli_tests";

struct Run {
  int code;
  std::string output;
};

Run run_cli(const std::string& args, const std::string& env = "") {
  std::filesystem::create_directories(kScratch);
  const auto log = kScratch / "cli_output.txt";
  const std::string cmd = env + " \"" OPCAL_CLI_PATH "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream text;
  text << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, text.str()};
}

std::filesystem::path small_config(const std::string& extra = "") {
  std::filesystem::create_directories(kScratch);
  const auto path = kScratch / "small.cfg";
  std::ofstream out(path);
  out << "# coarse reactor for fast CLI tests\n"
         "grid_points = 30\n"
         "dt = 10\n"
         "t_end = 4000\n"
         "save_every = 10\n"
         "training_loads = 0.5, 1.5\n"
         "validation_loads = 1.0\n"
         "rank = 4\n"
         "max_iterations = 30\n"
      << extra;
  return path;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::function<const char*(const char*)> fake_env(std::map<std::string, std::string> vars) {
  return [vars = std::move(vars)](const char* name) -> const char* {
    auto it = vars.find(name);
    return it == vars.end() ? nullptr : it->second.c_str();
  };
}

}  // namespace

TEST_CASE("pipeline configuration") {
  SUBCASE("defaults follow the reference experiment") {
    const auto cfg = pipeline::make_config(KeyValueFile{});
    CHECK(cfg.training_loads == std::vector<double>{0.5, 1.0, 1.5});
    CHECK(cfg.validation_loads == std::vector<double>{0.75, 1.25});
    CHECK(cfg.rank == 8);
    CHECK(cfg.deim_rank == 8);
    CHECK(cfg.lambda == 1.0);
    CHECK(cfg.fom.state_dim() == 400);
    CHECK(cfg.schedule.at(9999.0).heat_load == 1.0);
    CHECK(cfg.schedule.at(10000.0).heat_load == 0.0);
  }
  SUBCASE("environment overrides the file") {
    const auto path = small_config();
    const auto kv = pipeline::load_settings(path, fake_env({{"OPCAL_RANK", "3"}, {"OPCAL_LAMBDA", "0.5"}}));
    const auto cfg = pipeline::make_config(kv);
    CHECK(cfg.rank == 3);
    CHECK(cfg.deim_rank == 3);
    CHECK(cfg.lambda == 0.5);
    CHECK(cfg.fom.grid_points == 30);
  }
  SUBCASE("training and validation loads must be disjoint") {
    KeyValueFile kv;
    kv.set("validation_loads", "0.5, 0.75");
    CHECK_THROWS_AS(pipeline::make_config(kv), ConfigError);
  }
  SUBCASE("unknown keys are rejected") {
    const auto path = small_config("ranks = 4\n");
    CHECK_THROWS_AS(pipeline::load_settings(path, fake_env({})), ConfigError);
  }
  SUBCASE("case names") {
    CHECK(pipeline::case_name("train", 0.5) == "train_R0.5");
    CHECK(pipeline::case_name("validation", 1.25) == "validation_R1.25");
  }
}

TEST_CASE("command-line pipeline") {
  std::filesystem::remove_all(kScratch);
  const auto cfg = small_config();
  const auto out = kScratch / "nested" / "run";
  const std::string base = "--config \"" + cfg.string() + "\" --out \"" + out.string() + "\" ";

  auto gen = run_cli(base + "generate");
  REQUIRE(gen.code == 0);
  CHECK(std::filesystem::exists(out / "snapshots" / "train_R0.5.snap"));
  CHECK(std::filesystem::exists(out / "snapshots" / "train_R1.5.snap"));
  CHECK(std::filesystem::exists(out / "snapshots" / "validation_R1.snap"));
  CHECK(load_snapshots(out / "snapshots" / "train_R0.5.snap").derivatives.has_value());

  SUBCASE("train, evaluate and export") {
    REQUIRE(run_cli(base + "train").code == 0);
    const RomModel rom = load_rom(out / "rom_calibrated.rom");
    CHECK(rom.operators.a.rows() == 4);
    CHECK(std::filesystem::exists(out / "rom_oi.rom"));
    CHECK(std::filesystem::exists(out / "pod_spectrum.csv"));
    CHECK(std::filesystem::exists(out / "pod_error.csv"));
    CHECK(slurp(out / "convergence.csv").rfind("iteration,objective,gradient_norm,step_length\n", 0) == 0);

    REQUIRE(run_cli(base + "evaluate").code == 0);
    const std::string errors = slurp(out / "errors_train_R0.5.csv");
    CHECK(std::count(errors.begin(), errors.end(), '\n') == 1 + 41);
    CHECK(errors.rfind("step,time,heat_load,in_switch_window,oi,calibrated\n", 0) == 0);
    CHECK(std::filesystem::exists(out / "stats_validation_R1.csv"));
    const std::string summary = slurp(out / "summary.csv");
    CHECK(summary.find("case,split,heat_load,oi_error,calibrated_error,ratio") == 0);
    CHECK(summary.find("\nall,all,,") != std::string::npos);

    REQUIRE(run_cli(base + "export-rom").code == 0);
    const RomModel compact = load_rom(out / "rom_compact.rom");
    CHECK(!compact.basis.has_value());
    CHECK(compact.operators.a == rom.operators.a);
  }
  SUBCASE("skipping calibration gives an operator-inference baseline") {
    REQUIRE(run_cli(base + "--skip-calibration train").code == 0);
    CHECK(!std::filesystem::exists(out / "rom_calibrated.rom"));
    REQUIRE(run_cli(base + "evaluate").code == 0);
    CHECK(slurp(out / "errors_train_R1.5.csv").find(",oi\n") != std::string::npos);
  }
  SUBCASE("unregularised inference on rank-deficient data is a numeric error naming the stage") {
    const auto r = run_cli(base + "--set lambda=0 --set include_input=true train");
    CHECK(r.code == 4);
    CHECK(r.output.find("stage 'opinf'") != std::string::npos);
    CHECK(r.output.find("lambda > 0") != std::string::npos);
  }
  SUBCASE("a ROM and snapshots of different dimension are a data error") {
    REQUIRE(run_cli(base + "train").code == 0);
    const auto other = kScratch / "other";
    REQUIRE(run_cli("--config \"" + cfg.string() + "\" --out \"" + other.string() + "\" --set grid_points=20 generate").code == 0);
    std::filesystem::copy(out / "rom_oi.rom", other / "rom_oi.rom");
    CHECK(run_cli("--config \"" + cfg.string() + "\" --out \"" + other.string() + "\" evaluate").code == 3);
  }
}

TEST_CASE("command-line errors map to exit codes") {
  std::filesystem::remove_all(kScratch);
  const auto cfg = small_config();
  const std::string base = "--config \"" + cfg.string() + "\" --out \"" + (kScratch / "empty").string() + "\" ";
  CHECK(run_cli(base + "evaluate").code == 3);
  CHECK(run_cli(base + "train").code == 3);
  CHECK(run_cli(base + "--set dt=100 generate").code == 2);
  CHECK(run_cli(base + "generate", "OPCAL_RANK=many").code == 2);
  CHECK(run_cli("--out x").code == 2);
  CHECK(run_cli("--help").code == 0);
  CHECK(run_cli(base + "--set fixture=/nonexistent.rom fixture-check").code == 3);
}

TEST_CASE("fixture check reports the published spot entries") {
  const auto r = run_cli("--out \"" + (kScratch / "fixture").string() + "\" fixture-check");
  CHECK((r.code == 0 || r.code == 4));
  for (const char* line : {"PASS shapes 8x8", "PASS P1[1,1] = ", "PASS P2[1,1] = ", "PASS A[1,1] = ",
                           "PASS P1[2,3] = "}) {
    CHECK(r.output.find(line) != std::string::npos);
  }
}

TEST_CASE("bundled example config matches the defaults") {
  const auto path = std::filesystem::path(OPCAL_DATA_DIR).parent_path() / "configs" / "reactor.cfg";
  const auto from_file = pipeline::make_config(pipeline::load_settings(path, fake_env({})));
  const auto defaults = pipeline::make_config(KeyValueFile{});
  CHECK(from_file.fom.solid_mask == defaults.fom.solid_mask);
  CHECK(from_file.fom.state_dim() == defaults.fom.state_dim());
  CHECK(from_file.schedule.breakpoints == defaults.schedule.breakpoints);
  CHECK(from_file.training_loads == defaults.training_loads);
  CHECK(from_file.rank == defaults.rank);
  CHECK(from_file.optimizer.max_iterations == defaults.optimizer.max_iterations);
}
