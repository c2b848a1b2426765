#include "opcal/rom.hpp"

#include "opcal/errors.hpp"
#include "opcal/text_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <algorithm>
#include <map>
#include <set>
#include <ostream>

namespace opcal {

void RomModel::validate() const {
  operators.validate();
  deim.validate();
  if (deim.rank() != operators.r()) {
    throw DataError("ROM: DEIM operators act on r=" + std::to_string(deim.rank()) +
                    " but A is " + std::to_string(operators.r()) + "x" + std::to_string(operators.r()));
  }
  if (basis && basis->rank() != operators.r()) throw DataError("ROM: basis rank does not match r");
  if (basis && scaling && scaling->state_dim() != basis->state_dim()) {
    throw DataError("ROM: scaling does not match the basis dimension");
  }
  if (!(dt > 0.0)) throw DataError("ROM: dt must be > 0");
}

Matrix simulate_rom(const RomModel& model, const Vector& s0, std::span<const Control> controls, Index k) {
  return forward_rollout(model.operators, &model.deim, s0, controls, model.dt, k);
}

Matrix project_states(const RomModel& model, const Matrix& physical_states) {
  if (!model.basis) throw DataError("ROM has no basis; cannot project full-order states");
  const Matrix scaled = model.scaling ? model.scaling->apply(physical_states) : physical_states;
  return project(*model.basis, scaled);
}

Matrix lift_states(const RomModel& model, const Matrix& reduced_states) {
  if (!model.basis) throw DataError("ROM has no basis; cannot lift reduced states");
  const Matrix full = lift(*model.basis, reduced_states);
  return model.scaling ? model.scaling->invert(full) : full;
}

std::vector<std::uint8_t> switch_window(std::span<const Control> controls, int width) {
  std::vector<std::uint8_t> flags(controls.size(), 0);
  if (width <= 0) return flags;
  const auto before = static_cast<std::ptrdiff_t>((width - 1) / 2);
  const auto after = static_cast<std::ptrdiff_t>(width - 1) - before;
  const auto n = static_cast<std::ptrdiff_t>(controls.size());
  for (std::ptrdiff_t j = 1; j < n; ++j) {
    if (controls[static_cast<std::size_t>(j)].heat_load == controls[static_cast<std::size_t>(j - 1)].heat_load) {
      continue;
    }
    for (auto i = std::max<std::ptrdiff_t>(0, j - before); i <= std::min(n - 1, j + after); ++i) {
      flags[static_cast<std::size_t>(i)] = 1;
    }
  }
  return flags;
}

ErrorReport relative_errors(const Matrix& rom, const Matrix& projected, std::span<const Control> controls,
                            int window_width) {
  if (rom.rows() != projected.rows() || rom.cols() != projected.cols()) {
    throw DataError("relative_errors: ROM and projected trajectories differ in shape");
  }
  if (static_cast<Index>(controls.size()) != rom.cols()) {
    throw DataError("relative_errors: need one control per step");
  }
  ErrorReport report;
  report.in_switch_window = switch_window(controls, window_width);
  double sum = 0.0;
  double sum_out = 0.0;
  std::size_t count_out = 0;
  for (Index j = 0; j < rom.cols(); ++j) {
    const double num = (rom.col(j) - projected.col(j)).squaredNorm();
    const double den = projected.col(j).squaredNorm();
    const double e = den > 0.0 ? num / den : (num > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    report.errors.push_back(e);
    sum += e;
    if (!report.in_switch_window[static_cast<std::size_t>(j)]) {
      sum_out += e;
      ++count_out;
    }
  }
  report.mean = rom.cols() ? sum / static_cast<double>(rom.cols()) : 0.0;
  report.mean_outside_window = count_out ? sum_out / static_cast<double>(count_out) : 0.0;
  return report;
}

ErrorReport rom_vs_projected_error(const RomModel& model, const FomTrajectory& trajectory, int window_width) {
  const Index k = trajectory.states.cols();
  if (k < 2) throw DataError("rom_vs_projected_error: trajectory needs at least two samples");
  const double spacing = trajectory.times[1] - trajectory.times[0];
  if (std::abs(spacing - model.dt) > 1e-9 * std::max(1.0, model.dt)) {
    throw DataError("rom_vs_projected_error: trajectory spacing " + text::format_double(spacing) +
                    " s differs from the ROM step " + text::format_double(model.dt) + " s");
  }
  const Matrix projected = project_states(model, trajectory.states);
  const Matrix rom = simulate_rom(model, projected.col(0), trajectory.controls, k - 1);
  return relative_errors(rom, projected, trajectory.controls, window_width);
}

double pooled_mean_outside_window(std::span<const ErrorReport> reports) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& r : reports) {
    for (std::size_t j = 0; j < r.errors.size(); ++j) {
      if (r.in_switch_window[j]) continue;
      sum += r.errors[j];
      ++count;
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

std::vector<FieldStatistics> field_statistics(const Matrix& physical_states,
                                              const std::vector<FieldRange>& fields,
                                              const std::vector<std::uint8_t>* solid_mask) {
  check_partition(fields, physical_states.rows());
  std::vector<FieldStatistics> out;
  for (const auto& f : fields) {
    std::vector<Index> rows;
    const bool masked = solid_mask && f.name == "Ts";
    if (masked && static_cast<Index>(solid_mask->size()) != f.size()) {
      throw DataError("field_statistics: solid mask size does not match the Ts field");
    }
    for (Index i = 0; i < f.size(); ++i) {
      if (!masked || (*solid_mask)[static_cast<std::size_t>(i)]) rows.push_back(f.start + i);
    }
    if (rows.empty()) throw DataError("field_statistics: field '" + f.name + "' has no cells");
    FieldStatistics stats{f.name, Vector(physical_states.cols()), Vector(physical_states.cols()),
                          Vector(physical_states.cols())};
    for (Index j = 0; j < physical_states.cols(); ++j) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      double sum = 0.0;
      for (Index row : rows) {
        const double v = physical_states(row, j);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
      }
      // Clamp guards the mean against last-bit rounding outside [lo, hi].
      stats.min(j) = lo;
      stats.max(j) = hi;
      stats.mean(j) = std::clamp(sum / static_cast<double>(rows.size()), lo, hi);
    }
    out.push_back(std::move(stats));
  }
  return out;
}

std::vector<FieldStatistics> field_statistics(const RomModel& model, const Matrix& reduced_states,
                                              const std::vector<std::uint8_t>* solid_mask) {
  const Matrix physical = lift_states(model, reduced_states);
  std::vector<FieldRange> fields;
  if (model.scaling) fields = model.scaling->fields;
  else fields = {{"state", 0, physical.rows()}};
  return field_statistics(physical, fields, solid_mask);
}

// ---------------------------------------------------------------------------
// File format

namespace {

void write_matrix_section(std::ostream& out, const std::string& name, const Matrix& m) {
  out << '[' << name << "]\n" << m.rows() << ' ' << m.cols() << '\n';
  text::write_rows(out, m);
}

std::string join_vector(const Vector& v) {
  return text::join(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace

void write_rom(const RomModel& model, std::ostream& out) {
  model.validate();
  out << "# opcal reduced-order model\n";
  out << "[meta]\n";
  out << "version = " << kRomFileVersion << '\n';
  out << "r = " << model.r() << '\n';
  out << "s = " << model.deim.samples() << '\n';
  out << "p = " << model.operators.p() << '\n';
  out << "dt = " << text::format_double(model.dt) << '\n';
  write_matrix_section(out, "A", model.operators.a);
  write_matrix_section(out, "H", model.operators.h);
  write_matrix_section(out, "B", model.operators.b);
  write_matrix_section(out, "P1", model.deim.p1);
  write_matrix_section(out, "P2", model.deim.p2);
  out << "[deim]\n";
  if (!model.deim.indices.empty()) {
    out << "indices = " << text::join(std::span<const Index>(model.deim.indices)) << '\n';
  }
  out << "A = " << text::format_double(model.deim.arrhenius_prefactor) << '\n';
  out << "B = " << text::format_double(model.deim.arrhenius_exponent) << '\n';
  out << "gain = " << text::format_double(model.deim.gain) << '\n';
  out << "unscale_shift = " << join_vector(model.deim.unscale_shift) << '\n';
  out << "unscale_scale = " << join_vector(model.deim.unscale_scale) << '\n';
  if (model.scaling) {
    out << "[scaling]\n";
    std::string fields;
    for (std::size_t f = 0; f < model.scaling->fields.size(); ++f) {
      const auto& fr = model.scaling->fields[f];
      if (f) fields += ',';
      fields += fr.name + ":" + std::to_string(fr.start) + ":" + std::to_string(fr.end);
    }
    out << "fields = " << fields << '\n';
    out << "shift = " << join_vector(model.scaling->shift) << '\n';
    out << "scale = " << join_vector(model.scaling->scale) << '\n';
  }
  if (model.basis) {
    write_matrix_section(out, "basis", model.basis->basis);
    out << "singular_values = " << join_vector(model.basis->singular_values) << '\n';
  }
}

RomModel read_rom(std::istream& in, const std::string& source) {
  text::LineReader reader(in, source);
  std::map<std::string, Matrix> matrices;
  std::map<std::string, std::map<std::string, std::string>> keyed;
  std::map<std::string, std::size_t> key_lines;
  std::string section;
  std::string line;
  const std::set<std::string> matrix_sections = {"A", "H", "B", "P1", "P2", "basis"};
  const std::set<std::string> keyed_sections = {"meta", "deim", "scaling"};

  while (reader.next(line)) {
    if (line.front() == '[') {
      if (line.back() != ']') reader.fail("malformed section header");
      section = line.substr(1, line.size() - 2);
      if (matrix_sections.contains(section)) {
        if (matrices.contains(section)) reader.fail("duplicate section [" + section + "]");
        const std::string shape = reader.expect_line("matrix shape");
        auto tokens = text::split(shape, ' ');
        if (tokens.size() != 2 && tokens.size() != 3) reader.fail("expected 'rows cols [factor]'");
        const auto rows = reader.to_integer(tokens[0]);
        const auto cols = reader.to_integer(tokens[1]);
        if (rows < 0 || cols < 0) reader.fail("negative matrix dimension");
        const double factor = tokens.size() == 3 ? reader.to_double(tokens[2]) : 1.0;
        matrices[section] = text::read_rows(reader, rows, cols) * factor;
      } else if (!keyed_sections.contains(section)) {
        reader.fail("unknown section [" + section + "]");
      }
      continue;
    }
    if (section.empty()) reader.fail("content before the first section");
    auto eq = line.find('=');
    if (eq == std::string::npos) reader.fail("expected 'key = value' in section [" + section + "]");
    const std::string key(text::trim(std::string_view(line).substr(0, eq)));
    const std::string value(text::trim(std::string_view(line).substr(eq + 1)));
    const std::string target = section == "basis" ? "basis" : section;
    if (!keyed_sections.contains(target) && target != "basis") {
      reader.fail("unexpected key in matrix section [" + section + "]");
    }
    keyed[target][key] = value;
    key_lines[target + "." + key] = reader.line_number();
  }

  auto need = [&](const std::string& sec, const std::string& key) -> std::string {
    auto s = keyed.find(sec);
    if (s == keyed.end() || !s->second.contains(key)) {
      throw ParseError(source, reader.line_number(), "missing '" + key + "' in section [" + sec + "]");
    }
    return s->second.at(key);
  };
  auto opt = [&](const std::string& sec, const std::string& key) -> std::optional<std::string> {
    auto s = keyed.find(sec);
    if (s == keyed.end() || !s->second.contains(key)) return std::nullopt;
    return s->second.at(key);
  };
  auto matrix = [&](const std::string& name) -> Matrix& {
    auto it = matrices.find(name);
    if (it == matrices.end()) throw ParseError(source, reader.line_number(), "missing section [" + name + "]");
    return it->second;
  };

  const auto version = reader.to_integer(need("meta", "version"));
  if (version != kRomFileVersion) {
    throw DataError(source + ": unsupported ROM file version " + std::to_string(version) +
                    " (expected " + std::to_string(kRomFileVersion) + ")");
  }
  const auto r = reader.to_integer(need("meta", "r"));
  const auto s = reader.to_integer(need("meta", "s"));
  const auto p = reader.to_integer(need("meta", "p"));

  RomModel model;
  model.dt = reader.to_double(need("meta", "dt"));
  model.operators.a = matrix("A");
  model.operators.h = matrices.contains("H") ? matrices["H"] : Matrix(r, 0);
  model.operators.b = matrices.contains("B") ? matrices["B"] : Matrix(r, 0);
  model.deim.p1 = matrix("P1");
  model.deim.p2 = matrix("P2");
  if (model.operators.a.rows() != r || model.deim.p1.cols() != s || model.operators.b.cols() != p) {
    throw ParseError(source, reader.line_number(), "matrix shapes do not match [meta] r, s, p");
  }
  if (auto idx = opt("deim", "indices")) model.deim.indices = reader.to_indices(*idx, ',');
  model.deim.arrhenius_prefactor = reader.to_double(need("deim", "A"));
  model.deim.arrhenius_exponent = reader.to_double(need("deim", "B"));
  model.deim.gain = opt("deim", "gain") ? reader.to_double(*opt("deim", "gain")) : 1.0;
  model.deim.unscale_shift = opt("deim", "unscale_shift")
                                 ? to_vector(reader.to_doubles(*opt("deim", "unscale_shift"), ','))
                                 : Vector::Zero(s);
  model.deim.unscale_scale = opt("deim", "unscale_scale")
                                 ? to_vector(reader.to_doubles(*opt("deim", "unscale_scale"), ','))
                                 : Vector::Ones(s);
  if (keyed.contains("scaling")) {
    ScalingSpec spec;
    const std::string field_list = need("scaling", "fields");
    for (auto f : text::split(field_list, ',')) {
      auto parts = text::split(f, ':');
      if (parts.size() != 3) throw ParseError(source, key_lines["scaling.fields"], "fields must be name:start:end");
      spec.fields.push_back({std::string(parts[0]), static_cast<Index>(reader.to_integer(parts[1])),
                             static_cast<Index>(reader.to_integer(parts[2]))});
    }
    spec.shift = to_vector(reader.to_doubles(need("scaling", "shift"), ','));
    spec.scale = to_vector(reader.to_doubles(need("scaling", "scale"), ','));
    model.scaling = spec;
  }
  if (matrices.contains("basis")) {
    PodBasis basis;
    basis.basis = matrices["basis"];
    if (auto sv = opt("basis", "singular_values")) basis.singular_values = to_vector(reader.to_doubles(*sv, ','));
    basis.scaling = model.scaling;
    model.basis = std::move(basis);
  }
  try {
    model.validate();
  } catch (const Error& e) {
    throw ParseError(source, reader.line_number(), e.what());
  }
  return model;
}

void save_rom(const RomModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  write_rom(model, out);
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

RomModel load_rom(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ROM file '" + path.string() + "'");
  return read_rom(in, path.string());
}

}  // namespace opcal
