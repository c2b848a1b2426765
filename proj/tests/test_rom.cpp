#include "support.hpp"

#include <doctest.h>

#include <filesystem>
#include <sstream>

using namespace opcal;

namespace {

// Small trained model on a 1D reactor at coarse resolution.
struct SmallPipeline {
  FomConfig cfg;
  FomTrajectory trajectory;
  RomModel model;
};

SmallPipeline small_pipeline() {
  SmallPipeline p;
  p.cfg = FomConfig::reference();
  p.cfg.grid_points = 40;
  p.cfg.solid_mask = solid_region_mask(40, p.cfg.domain_length, 1.0, 4.0);
  p.cfg.dt = 10.0;
  p.cfg.t_end = 8000.0;
  p.trajectory = fom_integrate(p.cfg, ControlSignal::heat_then_off(1.0, 4000.0), 10);
  const SnapshotSet raw = assemble_snapshots(std::span<const FomTrajectory>(&p.trajectory, 1));
  const ScalingSpec spec = fit_scaling(raw);
  const SnapshotSet scaled = apply_scaling(raw, spec);
  const PodBasis basis = compute_pod(scaled.data, 4, spec);
  const Matrix un = nonlinearity_basis(nonlinearity_snapshots(scaled, p.cfg), 4);
  p.model.deim = build_deim_operators(basis, un, deim_points(un), {p.cfg.arrhenius_prefactor, p.cfg.arrhenius_exponent},
                                      source_gain(p.cfg, &spec));
  const Matrix reduced = project(basis, scaled.data);
  const Matrix dreduced = project(basis, *scaled.derivatives);
  const auto sys = assemble_regression(reduced, dreduced, scaled.controls, &p.model.deim, {1e-6, false, false});
  p.model.operators = solve_opinf(sys, 1e-6);
  p.model.basis = basis;
  p.model.scaling = spec;
  p.model.dt = 100.0;
  return p;
}

}  // namespace

TEST_CASE("simulate_rom is the calibration rollout") {
  std::mt19937_64 rng(1);
  RomModel model;
  model.operators = RomOperators::zeros(3, true, false);
  model.operators.a = testing::stable_matrix(rng, 3, 0.1, 0.05);
  model.operators.h = testing::random_matrix(rng, 3, 6, 0.01);
  model.deim = testing::random_deim(rng, 3, 3, 1e-3);
  model.dt = 0.5;
  const auto u = testing::switch_off_controls(20, 1.0);
  const Vector s0 = testing::random_matrix(rng, 3, 1);
  const Matrix a = simulate_rom(model, s0, u, 20);
  const Matrix b = forward_rollout(model.operators, &model.deim, s0, u, 0.5, 20);
  CHECK(a == b);

  RomModel zero = model;
  zero.operators = RomOperators::zeros(3, false, false);
  const Matrix flat = simulate_rom(zero, s0, std::vector<Control>(5), 5);
  for (Index j = 0; j < 6; ++j) CHECK(flat.col(j) == s0);
}

TEST_CASE("switch window flags steps around each change of heat load") {
  std::vector<Control> u(12, Control{1.0, 0.0});
  for (std::size_t j = 6; j < 12; ++j) u[j].heat_load = 0.0;
  const auto flags = switch_window(u, 5);
  const std::vector<std::uint8_t> expected{0, 0, 0, 0, 1, 1, 1, 1, 1, 0, 0, 0};
  CHECK(flags == expected);
  CHECK(switch_window(u, 0) == std::vector<std::uint8_t>(12, 0));
  CHECK(switch_window(std::vector<Control>(4, Control{1.0, 0.0}), 5) == std::vector<std::uint8_t>(4, 0));
}

TEST_CASE("relative errors") {
  std::mt19937_64 rng(2);
  const Matrix proj = testing::random_matrix(rng, 3, 8);
  const std::vector<Control> u = testing::switch_off_controls(8, 1.0);
  SUBCASE("identical trajectories") {
    const auto rep = relative_errors(proj, proj, u);
    for (double e : rep.errors) CHECK(e == 0.0);
    CHECK(rep.mean == 0.0);
  }
  SUBCASE("invariant under a common scale factor") {
    const Matrix rom = proj + testing::random_matrix(rng, 3, 8, 0.1);
    const auto a = relative_errors(rom, proj, u);
    const auto b = relative_errors(7.5 * rom, 7.5 * proj, u);
    for (std::size_t j = 0; j < a.errors.size(); ++j) CHECK(b.errors[j] == doctest::Approx(a.errors[j]).epsilon(1e-13));
  }
  SUBCASE("scalar case by hand") {
    const Matrix p = (Matrix(1, 4) << 2.0, 4.0, -1.0, 0.5).finished();
    const Matrix r = (Matrix(1, 4) << 2.0, 3.0, -1.5, 0.5).finished();
    const std::vector<Control> c{{1, 0}, {1, 0}, {1, 0}, {0, 0}};
    const auto rep = relative_errors(r, p, c, 1);
    CHECK(rep.errors == std::vector<double>{0.0, 1.0 / 16.0, 0.25, 0.0});
    CHECK(rep.in_switch_window == std::vector<std::uint8_t>{0, 0, 0, 1});
    CHECK(rep.mean == doctest::Approx((1.0 / 16.0 + 0.25) / 4.0));
    CHECK(rep.mean_outside_window == doctest::Approx((1.0 / 16.0 + 0.25) / 3.0));
    const std::vector<ErrorReport> both{rep, rep};
    CHECK(pooled_mean_outside_window(both) == doctest::Approx(rep.mean_outside_window));
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(relative_errors(proj, proj.leftCols(4), u), DataError);
  }
}

TEST_CASE("ROM against projected full-order data") {
  const auto p = small_pipeline();
  const auto rep = rom_vs_projected_error(p.model, p.trajectory);
  CHECK(rep.errors.size() == static_cast<std::size_t>(p.trajectory.size()));
  CHECK(rep.errors[0] == 0.0);
  for (double e : rep.errors) CHECK(e >= 0.0);
  CHECK(rep.mean_outside_window < 1e-2);
  RomModel wrong_dt = p.model;
  wrong_dt.dt = 50.0;
  CHECK_THROWS_AS(rom_vs_projected_error(wrong_dt, p.trajectory), DataError);
}

TEST_CASE("field statistics") {
  const auto p = small_pipeline();
  const Matrix reduced = project_states(p.model, p.trajectory.states);
  const auto stats = field_statistics(p.model, reduced, &p.cfg.solid_mask);
  REQUIRE(stats.size() == 2);
  CHECK(stats[0].name == "Tc");
  CHECK(stats[1].name == "Ts");
  for (const auto& f : stats) {
    for (Index j = 0; j < reduced.cols(); ++j) {
      CHECK(f.min(j) <= f.mean(j));
      CHECK(f.mean(j) <= f.max(j));
    }
  }
  // Lifting the projection stays within the reconstruction error of the raw data.
  const auto raw = field_statistics(p.trajectory.states, p.cfg.fields(), &p.cfg.solid_mask);
  const Matrix lifted = lift_states(p.model, reduced);
  const double recon = (lifted - p.trajectory.states).cwiseAbs().maxCoeff();
  for (std::size_t f = 0; f < 2; ++f) {
    CHECK((stats[f].min - raw[f].min).cwiseAbs().maxCoeff() <= recon + 1e-9);
    CHECK((stats[f].mean - raw[f].mean).cwiseAbs().maxCoeff() <= recon + 1e-9);
    CHECK((stats[f].max - raw[f].max).cwiseAbs().maxCoeff() <= recon + 1e-9);
  }
  const Matrix constant = Matrix::Constant(p.cfg.state_dim(), 3, 540.0);
  const auto flat = field_statistics(constant, p.cfg.fields(), &p.cfg.solid_mask);
  CHECK(flat[1].min == flat[1].max);
  CHECK(flat[1].mean == flat[1].max);
}

TEST_CASE("ROM files") {
  const auto p = small_pipeline();
  SUBCASE("full model round-trips") {
    std::stringstream buffer;
    write_rom(p.model, buffer);
    const RomModel back = read_rom(buffer, "memory");
    CHECK(back.operators.a == p.model.operators.a);
    CHECK(back.operators.h.cols() == 0);
    CHECK(back.deim.p1 == p.model.deim.p1);
    CHECK(back.deim.p2 == p.model.deim.p2);
    CHECK(back.deim.indices == p.model.deim.indices);
    CHECK(back.deim.gain == p.model.deim.gain);
    CHECK(back.deim.unscale_shift == p.model.deim.unscale_shift);
    CHECK(back.deim.unscale_scale == p.model.deim.unscale_scale);
    CHECK(back.basis->basis == p.model.basis->basis);
    CHECK(back.basis->singular_values == p.model.basis->singular_values);
    CHECK(back.scaling->shift == p.model.scaling->shift);
    CHECK(back.scaling->scale == p.model.scaling->scale);
    CHECK(back.scaling->fields == p.model.scaling->fields);
    CHECK(back.dt == p.model.dt);
    std::stringstream again;
    write_rom(back, again);
    std::stringstream first;
    write_rom(p.model, first);
    CHECK(again.str() == first.str());
  }
  SUBCASE("compact model without basis") {
    RomModel compact = p.model;
    compact.basis.reset();
    compact.scaling.reset();
    std::stringstream buffer;
    write_rom(compact, buffer);
    const RomModel back = read_rom(buffer, "memory");
    CHECK(!back.basis.has_value());
    CHECK(back.operators.a == compact.operators.a);
  }
  SUBCASE("version mismatch") {
    std::stringstream buffer;
    write_rom(p.model, buffer);
    std::string text = buffer.str();
    text.replace(text.find("version = 1"), 11, "version = 7");
    std::istringstream in(text);
    try {
      read_rom(in, "future.rom");
      FAIL("expected version error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
  }
  SUBCASE("malformed content") {
    std::istringstream unknown("[meta]\nversion = 1\n[Q]\n");
    CHECK_THROWS_AS(read_rom(unknown, "bad.rom"), ParseError);
    std::istringstream short_rows("[meta]\nversion = 1\nr = 2\ns = 2\np = 0\ndt = 1\n[A]\n2 2\n1 2\n");
    CHECK_THROWS_AS(read_rom(short_rows, "short.rom"), ParseError);
    CHECK_THROWS_AS(load_rom("/nonexistent/model.rom"), DataError);
  }
}

TEST_CASE("published reduced operators load with their printed factors") {
  const RomModel fixture = load_rom(std::filesystem::path(OPCAL_DATA_DIR) / "published_8mode.rom");
  CHECK(fixture.operators.a.rows() == 8);
  CHECK(fixture.operators.a.cols() == 8);
  CHECK(fixture.deim.p1.rows() == 8);
  CHECK(fixture.deim.p1.cols() == 8);
  CHECK(fixture.deim.p2.rows() == 8);
  CHECK(fixture.deim.p2.cols() == 8);
  CHECK(fixture.deim.p1(0, 0) == doctest::Approx(-0.840).epsilon(1e-12));
  CHECK(fixture.deim.p1(1, 2) == doctest::Approx(29.940).epsilon(1e-12));
  CHECK(fixture.deim.p2(0, 0) == doctest::Approx(-0.00588).epsilon(1e-12));
  CHECK(fixture.operators.a(0, 0) == doctest::Approx(-3.3e-6).epsilon(1e-12));
  CHECK(fixture.deim.arrhenius_prefactor == 5000.0);
  CHECK(fixture.deim.arrhenius_exponent == 1500.0);
  CHECK(!fixture.basis.has_value());
}
