#include "opcal/snapshots.hpp"

#include "opcal/errors.hpp"
#include "opcal/text_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace opcal {

namespace {

constexpr double kMinScale = 1e-12;
constexpr double kSpacingTolerance = 1e-9;

Vector expand(const std::vector<FieldRange>& fields, const Vector& per_field) {
  Vector out(fields.empty() ? 0 : fields.back().end);
  for (std::size_t f = 0; f < fields.size(); ++f) {
    out.segment(fields[f].start, fields[f].size()).setConstant(per_field(static_cast<Index>(f)));
  }
  return out;
}

std::vector<FieldRange> default_fields(Index n) { return {{"state", 0, n}}; }

}  // namespace

Vector ScalingSpec::row_shift() const { return expand(fields, shift); }
Vector ScalingSpec::row_scale() const { return expand(fields, scale); }

Index ScalingSpec::field_index(const std::string& name) const {
  for (std::size_t f = 0; f < fields.size(); ++f) {
    if (fields[f].name == name) return static_cast<Index>(f);
  }
  throw DataError("scaling has no field named '" + name + "'");
}

const FieldRange& ScalingSpec::field(const std::string& name) const {
  return fields[static_cast<std::size_t>(field_index(name))];
}

void ScalingSpec::validate() const {
  check_partition(fields, state_dim());
  if (shift.size() != static_cast<Index>(fields.size()) ||
      scale.size() != static_cast<Index>(fields.size())) {
    throw DataError("scaling needs one shift and one scale per field");
  }
  if (!(scale.array() > 0.0).all()) throw DataError("scaling factors must be positive");
}

Matrix ScalingSpec::apply(const Matrix& x) const {
  if (x.rows() != state_dim()) throw DataError("apply_scaling: row count does not match fields");
  return (x.colwise() - row_shift()).array().colwise() / row_scale().array();
}

Matrix ScalingSpec::invert(const Matrix& x) const {
  if (x.rows() != state_dim()) throw DataError("invert_scaling: row count does not match fields");
  return (x.array().colwise() * row_scale().array()).matrix().colwise() + row_shift();
}

Matrix ScalingSpec::apply_to_derivatives(const Matrix& dx) const {
  if (dx.rows() != state_dim()) throw DataError("apply_scaling: row count does not match fields");
  return dx.array().colwise() / row_scale().array();
}

Matrix ScalingSpec::invert_derivatives(const Matrix& dx) const {
  if (dx.rows() != state_dim()) throw DataError("invert_scaling: row count does not match fields");
  return dx.array().colwise() * row_scale().array();
}

double SnapshotSet::time_step() const {
  for (const auto& t : times) {
    if (t.size() >= 2) return t[1] - t[0];
  }
  return 0.0;
}

void SnapshotSet::validate() const {
  const Index m = data.cols();
  if (trajectory_offsets.size() < 2 || trajectory_offsets.front() != 0 ||
      trajectory_offsets.back() != m) {
    throw DataError("trajectory offsets must start at 0 and end at the column count");
  }
  for (std::size_t i = 1; i < trajectory_offsets.size(); ++i) {
    if (trajectory_offsets[i] <= trajectory_offsets[i - 1]) {
      throw DataError("trajectory offsets must be strictly increasing");
    }
  }
  if (times.size() + 1 != trajectory_offsets.size()) {
    throw DataError("need one time vector per trajectory");
  }
  for (Index i = 0; i < trajectory_count(); ++i) {
    const auto& t = times[static_cast<std::size_t>(i)];
    if (static_cast<Index>(t.size()) != trajectory_length(i)) {
      throw DataError("trajectory " + std::to_string(i) + " has mismatched time vector");
    }
    for (std::size_t j = 1; j < t.size(); ++j) {
      if (!(t[j] > t[j - 1])) throw DataError("times must be strictly increasing");
    }
  }
  if (static_cast<Index>(controls.size()) != m) throw DataError("need one control per column");
  if (derivatives && (derivatives->rows() != data.rows() || derivatives->cols() != m)) {
    throw DataError("derivatives must match the data shape");
  }
  check_partition(fields, data.rows());
  if (scaling) scaling->validate();
}

SnapshotSet assemble_snapshots(std::span<const FomTrajectory> trajectories) {
  if (trajectories.empty()) throw DataError("assemble_snapshots: no trajectories");
  const Index n = trajectories.front().states.rows();
  bool all_derivs = true;
  Index m = 0;
  for (const auto& t : trajectories) {
    if (t.states.rows() != n) {
      throw DataError("assemble_snapshots: trajectories have state dimensions " + std::to_string(n) +
                      " and " + std::to_string(t.states.rows()));
    }
    if (t.states.cols() == 0) throw DataError("assemble_snapshots: empty trajectory");
    if (static_cast<Index>(t.controls.size()) != t.states.cols() ||
        static_cast<Index>(t.times.size()) != t.states.cols()) {
      throw DataError("assemble_snapshots: trajectory times/controls misaligned with states");
    }
    all_derivs = all_derivs && t.derivatives.cols() == t.states.cols() && t.derivatives.rows() == n;
    m += t.states.cols();
  }

  SnapshotSet set;
  set.data.resize(n, m);
  if (all_derivs) set.derivatives = Matrix(n, m);
  set.trajectory_offsets.push_back(0);
  set.fields = trajectories.front().fields.empty() ? default_fields(n) : trajectories.front().fields;
  Index col = 0;
  for (const auto& t : trajectories) {
    if (!t.fields.empty() && t.fields != set.fields) {
      throw DataError("assemble_snapshots: trajectories have different field layouts");
    }
    const Index k = t.states.cols();
    set.data.middleCols(col, k) = t.states;
    if (all_derivs) set.derivatives->middleCols(col, k) = t.derivatives;
    set.controls.insert(set.controls.end(), t.controls.begin(), t.controls.end());
    set.times.push_back(t.times);
    col += k;
    set.trajectory_offsets.push_back(col);
  }
  set.validate();
  return set;
}

std::vector<FomTrajectory> split_trajectories(const SnapshotSet& set) {
  std::vector<FomTrajectory> out;
  for (Index i = 0; i < set.trajectory_count(); ++i) {
    const Index b = set.trajectory_begin(i);
    const Index k = set.trajectory_length(i);
    FomTrajectory t;
    t.times = set.times[static_cast<std::size_t>(i)];
    t.states = set.data.middleCols(b, k);
    if (set.derivatives) t.derivatives = set.derivatives->middleCols(b, k);
    t.controls.assign(set.controls.begin() + b, set.controls.begin() + b + k);
    t.fields = set.fields;
    out.push_back(std::move(t));
  }
  return out;
}

SnapshotSet concatenate(std::span<const SnapshotSet> sets) {
  std::vector<FomTrajectory> all;
  std::optional<ScalingSpec> scaling;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (i == 0) scaling = sets[i].scaling;
    if (static_cast<bool>(scaling) != static_cast<bool>(sets[i].scaling)) {
      throw DataError("concatenate: mixing scaled and unscaled snapshot sets");
    }
    auto parts = split_trajectories(sets[i]);
    all.insert(all.end(), std::make_move_iterator(parts.begin()), std::make_move_iterator(parts.end()));
  }
  auto out = assemble_snapshots(all);
  out.scaling = scaling;
  return out;
}

ScalingSpec fit_scaling(const SnapshotSet& set) {
  if (set.data.size() == 0) throw DataError("fit_scaling: empty snapshot set");
  ScalingSpec spec;
  spec.fields = set.fields.empty() ? default_fields(set.data.rows()) : set.fields;
  const auto nf = static_cast<Index>(spec.fields.size());
  spec.shift.resize(nf);
  spec.scale.resize(nf);
  for (Index f = 0; f < nf; ++f) {
    const auto& range = spec.fields[static_cast<std::size_t>(f)];
    auto block = set.data.middleRows(range.start, range.size());
    const double mean = block.mean();
    const double var = (block.array() - mean).square().mean();
    spec.shift(f) = mean;
    spec.scale(f) = std::max(std::sqrt(var), kMinScale);
  }
  return spec;
}

SnapshotSet apply_scaling(const SnapshotSet& set, const ScalingSpec& spec) {
  if (set.scaling) throw DataError("apply_scaling: snapshot set is already scaled");
  spec.validate();
  SnapshotSet out = set;
  out.data = spec.apply(set.data);
  if (set.derivatives) out.derivatives = spec.apply_to_derivatives(*set.derivatives);
  out.scaling = spec;
  return out;
}

SnapshotSet invert_scaling(const SnapshotSet& set) {
  if (!set.scaling) return set;
  SnapshotSet out = set;
  out.data = set.scaling->invert(set.data);
  if (set.derivatives) out.derivatives = set.scaling->invert_derivatives(*set.derivatives);
  out.scaling.reset();
  return out;
}

Matrix estimate_derivatives(const SnapshotSet& set) {
  Matrix d(set.data.rows(), set.data.cols());
  for (Index i = 0; i < set.trajectory_count(); ++i) {
    const auto& t = set.times[static_cast<std::size_t>(i)];
    const Index b = set.trajectory_begin(i);
    const Index k = set.trajectory_length(i);
    if (k < 3) {
      throw DataError("estimate_derivatives: trajectory " + std::to_string(i) +
                      " has fewer than 3 samples");
    }
    const double h = t[1] - t[0];
    for (std::size_t j = 1; j < t.size(); ++j) {
      if (std::abs((t[j] - t[j - 1]) - h) > kSpacingTolerance * std::max(1.0, std::abs(h))) {
        throw DataError("estimate_derivatives: trajectory " + std::to_string(i) +
                        " has non-uniform time spacing");
      }
    }
    auto x = set.data.middleCols(b, k);
    auto dx = d.middleCols(b, k);
    dx.col(0) = (-3.0 * x.col(0) + 4.0 * x.col(1) - x.col(2)) / (2.0 * h);
    for (Index j = 1; j + 1 < k; ++j) dx.col(j) = (x.col(j + 1) - x.col(j - 1)) / (2.0 * h);
    dx.col(k - 1) = (3.0 * x.col(k - 1) - 4.0 * x.col(k - 2) + x.col(k - 3)) / (2.0 * h);
  }
  return d;
}

// ---------------------------------------------------------------------------
// File format

void write_snapshots(const SnapshotSet& set, std::ostream& out) {
  set.validate();
  if (set.scaling) {
    throw DataError("save_snapshots: snapshot files hold physical (unscaled) data; invert first");
  }
  const double dt = set.time_step();
  std::vector<double> t0;
  for (Index i = 0; i < set.trajectory_count(); ++i) {
    const auto& t = set.times[static_cast<std::size_t>(i)];
    t0.push_back(t.front());
    for (std::size_t j = 0; j < t.size(); ++j) {
      const double expected = t.front() + static_cast<double>(j) * dt;
      if (std::abs(t[j] - expected) > kSpacingTolerance * std::max(1.0, std::abs(t[j]))) {
        throw DataError("save_snapshots: snapshot files require a uniform time step");
      }
    }
  }
  std::string fields;
  for (std::size_t f = 0; f < set.fields.size(); ++f) {
    if (f) fields += ',';
    fields += set.fields[f].name + ":" + std::to_string(set.fields[f].start) + ":" +
              std::to_string(set.fields[f].end);
  }
  out << "# opcal snapshot set\n";
  out << "n=" << set.data.rows() << '\n';
  out << "m=" << set.data.cols() << '\n';
  out << "l=" << set.trajectory_count() << '\n';
  out << "offsets=" << text::join(std::span<const Index>(set.trajectory_offsets)) << '\n';
  out << "dt=" << text::format_double(dt) << '\n';
  out << "t0=" << text::join(std::span<const double>(t0)) << '\n';
  out << "fields=" << fields << '\n';
  out << "has_derivatives=" << (set.derivatives ? 1 : 0) << '\n';
  out << "data\n";
  text::write_rows(out, set.data.transpose());
  if (set.derivatives) {
    out << "derivatives\n";
    text::write_rows(out, set.derivatives->transpose());
  }
  out << "controls\n";
  for (const auto& u : set.controls) {
    out << text::format_double(u.heat_load) << ' ' << text::format_double(u.inflow_rate_derivative)
        << '\n';
  }
}

SnapshotSet read_snapshots(std::istream& in, const std::string& source) {
  text::LineReader reader(in, source);
  std::optional<long long> n, m, l, has_derivs;
  std::optional<double> dt;
  std::vector<Index> offsets;
  std::vector<double> t0;
  std::vector<FieldRange> fields;

  std::string line;
  for (;;) {
    line = reader.expect_line("header or 'data'");
    if (line == "data") break;
    auto eq = line.find('=');
    if (eq == std::string::npos) reader.fail("expected 'key=value' header line or 'data'");
    const auto key = text::trim(std::string_view(line).substr(0, eq));
    const auto value = text::trim(std::string_view(line).substr(eq + 1));
    if (key == "n") {
      n = reader.to_integer(value);
    } else if (key == "m") {
      m = reader.to_integer(value);
    } else if (key == "l") {
      l = reader.to_integer(value);
    } else if (key == "offsets") {
      offsets = reader.to_indices(value, ',');
    } else if (key == "dt") {
      dt = reader.to_double(value);
    } else if (key == "t0") {
      t0 = reader.to_doubles(value, ',');
    } else if (key == "fields") {
      for (auto f : text::split(value, ',')) {
        auto parts = text::split(f, ':');
        if (parts.size() != 3) reader.fail("field entries must be name:start:end");
        fields.push_back({std::string(parts[0]), static_cast<Index>(reader.to_integer(parts[1])),
                          static_cast<Index>(reader.to_integer(parts[2]))});
      }
    } else if (key == "has_derivatives") {
      has_derivs = reader.to_integer(value);
    } else {
      reader.fail("unknown header key '" + std::string(key) + "'");
    }
  }
  if (!n || !m || !l || !dt || !has_derivs || offsets.empty()) {
    reader.fail("header is missing one of n, m, l, offsets, dt, has_derivatives");
  }
  if (*n <= 0 || *m <= 0 || *l <= 0) reader.fail("n, m and l must be positive");
  if (static_cast<long long>(offsets.size()) != *l + 1 || offsets.front() != 0 ||
      offsets.back() != *m) {
    reader.fail("offsets must have l+1 entries running from 0 to m");
  }
  if (t0.empty()) t0.assign(static_cast<std::size_t>(*l), 0.0);
  if (static_cast<long long>(t0.size()) != *l) reader.fail("t0 must have l entries");
  if (fields.empty()) fields = default_fields(*n);

  SnapshotSet set;
  set.trajectory_offsets = offsets;
  set.fields = fields;
  set.data = text::read_rows(reader, *m, *n).transpose();
  if (*has_derivs) {
    if (reader.expect_line("'derivatives'") != "derivatives") reader.fail("expected 'derivatives'");
    set.derivatives = text::read_rows(reader, *m, *n).transpose();
  }
  if (reader.expect_line("'controls'") != "controls") reader.fail("expected 'controls'");
  Matrix u = text::read_rows(reader, *m, 2);
  for (Index j = 0; j < *m; ++j) set.controls.push_back({u(j, 0), u(j, 1)});
  if (reader.next(line)) reader.fail("trailing content after controls section");

  for (Index i = 0; i < *l; ++i) {
    const Index k = offsets[static_cast<std::size_t>(i) + 1] - offsets[static_cast<std::size_t>(i)];
    std::vector<double> t(static_cast<std::size_t>(std::max<Index>(k, 0)));
    for (Index j = 0; j < k; ++j) {
      t[static_cast<std::size_t>(j)] = t0[static_cast<std::size_t>(i)] + static_cast<double>(j) * *dt;
    }
    set.times.push_back(std::move(t));
  }
  try {
    set.validate();
  } catch (const DataError& e) {
    reader.fail(e.what());
  }
  return set;
}

void save_snapshots(const SnapshotSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  write_snapshots(set, out);
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

SnapshotSet load_snapshots(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open snapshot file '" + path.string() + "'");
  return read_snapshots(in, path.string());
}

}  // namespace opcal
