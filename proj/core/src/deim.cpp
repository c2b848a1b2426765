#include "opcal/deim.hpp"

#include "opcal/errors.hpp"
#include "opcal/text_io.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace opcal {

Vector DeimOperators::sample_temperatures(const Vector& reduced_state) const {
  if (reduced_state.size() != p2.cols()) {
    throw DataError("reduced state has dimension " + std::to_string(reduced_state.size()) +
                    ", DEIM operators expect " + std::to_string(p2.cols()));
  }
  return unscale_shift + unscale_scale.cwiseProduct(p2 * reduced_state);
}

void DeimOperators::validate() const {
  const Index s = samples();
  if (p2.rows() != s || p2.cols() != p1.rows()) {
    throw DataError("DEIM operators: P1 is " + std::to_string(p1.rows()) + "x" +
                    std::to_string(p1.cols()) + " but P2 is " + std::to_string(p2.rows()) + "x" +
                    std::to_string(p2.cols()));
  }
  if (unscale_shift.size() != s || unscale_scale.size() != s) {
    throw DataError("DEIM operators: unscale map needs one shift and scale per sample point");
  }
  if (!indices.empty()) {
    if (static_cast<Index>(indices.size()) != s) throw DataError("DEIM operators: need s indices");
    if (std::set<Index>(indices.begin(), indices.end()).size() != indices.size()) {
      throw DataError("DEIM operators: interpolation indices must be distinct");
    }
  }
  if (!p1.allFinite() || !p2.allFinite()) throw NumericError("DEIM operators contain non-finite entries");
}

Matrix nonlinearity_snapshots(const SnapshotSet& set, const FomConfig& cfg) {
  const Index n = cfg.grid_points;
  if (set.state_dim() != 2 * n) {
    throw DataError("nonlinearity_snapshots: snapshot dimension " + std::to_string(set.state_dim()) +
                    " does not match the FOM (" + std::to_string(2 * n) + ")");
  }
  if (static_cast<Index>(set.controls.size()) != set.column_count()) {
    throw DataError("nonlinearity_snapshots: controls missing");
  }
  const Matrix physical = set.scaling ? set.scaling->invert(set.data) : set.data;
  Matrix out = Matrix::Zero(physical.rows(), physical.cols());
  for (Index j = 0; j < physical.cols(); ++j) {
    const double r = set.controls[static_cast<std::size_t>(j)].heat_load;
    for (Index i = 0; i < n; ++i) {
      if (!cfg.solid_mask[static_cast<std::size_t>(i)]) continue;
      out(n + i, j) = arrhenius_source(physical(n + i, j), r, cfg);
    }
  }
  return out;
}

Matrix nonlinearity_basis(const Matrix& nonlinear_snapshots, Index s) {
  const Index full = std::min(nonlinear_snapshots.rows(), nonlinear_snapshots.cols());
  if (s < 1 || s > full) {
    throw ConfigError("DEIM rank " + std::to_string(s) + " outside [1, " + std::to_string(full) + "]");
  }
  Eigen::BDCSVD<Matrix> svd(nonlinear_snapshots, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  if (!(sv(s - 1) > sv(0) * 1e-13)) {
    throw NumericError("DEIM rank " + std::to_string(s) +
                       " exceeds the numerical rank of the nonlinear snapshots");
  }
  Matrix u = svd.matrixU().leftCols(s);
  for (Index j = 0; j < s; ++j) {
    Index imax = 0;
    u.col(j).cwiseAbs().maxCoeff(&imax);
    if (u(imax, j) < 0.0) u.col(j) *= -1.0;
  }
  return u;
}

std::vector<Index> deim_points(const Matrix& basis) {
  const Index n = basis.rows();
  const Index s = basis.cols();
  if (s < 1 || s > n) throw DataError("deim_points: basis must have 1 <= s <= n columns");

  auto argmax_abs = [n](const Vector& v) {
    Index best = 0;
    for (Index i = 1; i < n; ++i) {
      if (std::abs(v(i)) > std::abs(v(best))) best = i;
    }
    return best;
  };
  auto check = [&](const Vector& residual, Index best, Index step) {
    const double ref = basis.col(step).cwiseAbs().maxCoeff();
    if (!(std::abs(residual(best)) > 1e-12 * ref)) {
      throw NumericError("deim_points: selected-row block is singular at step " +
                         std::to_string(step) + " (basis column " + std::to_string(step) +
                         " is interpolated exactly by the previous ones)");
    }
  };

  std::vector<Index> indices;
  indices.reserve(static_cast<std::size_t>(s));
  Vector first = basis.col(0);
  check(first, argmax_abs(first), 0);
  indices.push_back(argmax_abs(first));
  for (Index j = 1; j < s; ++j) {
    Matrix block(j, j);
    Vector rhs(j);
    for (Index a = 0; a < j; ++a) {
      block.row(a) = basis.row(indices[static_cast<std::size_t>(a)]).head(j);
      rhs(a) = basis(indices[static_cast<std::size_t>(a)], j);
    }
    const Vector coeffs = block.partialPivLu().solve(rhs);
    const Vector residual = basis.col(j) - basis.leftCols(j) * coeffs;
    const Index best = argmax_abs(residual);
    check(residual, best, j);
    indices.push_back(best);
  }
  return indices;
}

double source_gain(const FomConfig& cfg, const ScalingSpec* scaling) {
  double scale = 1.0;
  if (scaling) scale = scaling->scale(scaling->field_index("Ts"));
  return 1.0 / (cfg.rho_cp_solid * scale);
}

DeimOperators build_deim_operators(const PodBasis& basis, const Matrix& nonlinear_basis,
                                   std::span<const Index> indices, const ArrheniusLaw& law,
                                   double gain) {
  const Index s = nonlinear_basis.cols();
  if (nonlinear_basis.rows() != basis.state_dim()) {
    throw DataError("build_deim_operators: nonlinear basis and POD basis have different row counts");
  }
  if (static_cast<Index>(indices.size()) != s) {
    throw DataError("build_deim_operators: need exactly one index per nonlinear basis column");
  }
  Matrix sampled(s, s);
  DeimOperators ops;
  ops.p2.resize(s, basis.rank());
  ops.unscale_shift.resize(s);
  ops.unscale_scale.resize(s);
  const Vector row_shift = basis.scaling ? basis.scaling->row_shift() : Vector::Zero(basis.state_dim());
  const Vector row_scale = basis.scaling ? basis.scaling->row_scale() : Vector::Ones(basis.state_dim());
  for (Index a = 0; a < s; ++a) {
    const Index row = indices[static_cast<std::size_t>(a)];
    if (row < 0 || row >= basis.state_dim()) throw DataError("build_deim_operators: index out of range");
    sampled.row(a) = nonlinear_basis.row(row);
    ops.p2.row(a) = basis.basis.row(row);
    ops.unscale_shift(a) = row_shift(row);
    ops.unscale_scale(a) = row_scale(row);
  }
  Eigen::JacobiSVD<Matrix> svd(sampled);
  const auto& sv = svd.singularValues();
  if (!(sv(s - 1) > 0.0) || !std::isfinite(sv(0) / sv(s - 1)) || sv(0) / sv(s - 1) > 1e14) {
    throw NumericError("build_deim_operators: interpolation block is singular");
  }
  ops.condition_number = sv(0) / sv(s - 1);
  // P1 = U^T U_N (P^T U_N)^{-1}, via a solve with the transposed block.
  const Matrix projected = basis.basis.transpose() * nonlinear_basis;
  ops.p1 = sampled.transpose().partialPivLu().solve(projected.transpose()).transpose();
  ops.indices.assign(indices.begin(), indices.end());
  ops.nonlinearity_basis = nonlinear_basis;
  ops.arrhenius_prefactor = law.prefactor;
  ops.arrhenius_exponent = law.exponent;
  ops.gain = gain;
  ops.validate();
  return ops;
}

namespace {

Vector checked_temperatures(const DeimOperators& ops, const Vector& reduced_state) {
  Vector t = ops.sample_temperatures(reduced_state);
  for (Index i = 0; i < t.size(); ++i) {
    if (!(t(i) > kMinSampleTemperature)) {
      throw NumericError("reduced Arrhenius term: sampled temperature " + text::format_double(t(i)) +
                         " K at sample point " + std::to_string(i) + " is not above " +
                         text::format_double(kMinSampleTemperature) + " K");
    }
  }
  return t;
}

}  // namespace

Vector reduced_arrhenius(const DeimOperators& ops, const Vector& reduced_state, double heat_load) {
  const Vector t = checked_temperatures(ops, reduced_state);
  const Vector e = (ops.arrhenius_exponent / t.array()).exp();
  return (ops.gain * heat_load * ops.arrhenius_prefactor) * (ops.p1 * e);
}

Matrix reduced_arrhenius_jacobian(const DeimOperators& ops, const Vector& reduced_state,
                                  double heat_load) {
  const Vector t = checked_temperatures(ops, reduced_state);
  const double b = ops.arrhenius_exponent;
  // d/ds exp(B / T(s)) = exp(B/T) * (-B / T^2) * unscale_scale .* P2
  const Vector weight = (b / t.array()).exp() * (-b / t.array().square()) * ops.unscale_scale.array();
  return (ops.gain * heat_load * ops.arrhenius_prefactor) * (ops.p1 * weight.asDiagonal() * ops.p2);
}

// ---------------------------------------------------------------------------
// File format

void write_deim(const DeimOperators& ops, std::ostream& out) {
  ops.validate();
  out << "# opcal DEIM operators\n";
  out << "s=" << ops.samples() << '\n';
  out << "r=" << ops.rank() << '\n';
  if (!ops.indices.empty()) out << "indices=" << text::join(std::span<const Index>(ops.indices)) << '\n';
  out << "arrhenius_prefactor=" << text::format_double(ops.arrhenius_prefactor) << '\n';
  out << "arrhenius_exponent=" << text::format_double(ops.arrhenius_exponent) << '\n';
  out << "gain=" << text::format_double(ops.gain) << '\n';
  out << "unscale_shift="
      << text::join(std::span<const double>(ops.unscale_shift.data(), static_cast<std::size_t>(ops.samples())))
      << '\n';
  out << "unscale_scale="
      << text::join(std::span<const double>(ops.unscale_scale.data(), static_cast<std::size_t>(ops.samples())))
      << '\n';
  out << "P1 " << ops.p1.rows() << ' ' << ops.p1.cols() << '\n';
  text::write_rows(out, ops.p1);
  out << "P2 " << ops.p2.rows() << ' ' << ops.p2.cols() << '\n';
  text::write_rows(out, ops.p2);
}

DeimOperators read_deim(std::istream& in, const std::string& source) {
  text::LineReader reader(in, source);
  DeimOperators ops;
  long long s = -1;
  long long r = -1;
  bool have_a = false;
  bool have_b = false;
  bool have_p1 = false;
  bool have_p2 = false;
  std::vector<double> shift;
  std::vector<double> scale;
  std::string line;
  while (reader.next(line)) {
    if (line.starts_with("P1") || line.starts_with("P2")) {
      auto tokens = text::split(line, ' ');
      if (tokens.size() != 3 && tokens.size() != 4) reader.fail("expected 'P1 rows cols [factor]'");
      const auto rows = reader.to_integer(tokens[1]);
      const auto cols = reader.to_integer(tokens[2]);
      const double factor = tokens.size() == 4 ? reader.to_double(tokens[3]) : 1.0;
      Matrix m = text::read_rows(reader, rows, cols) * factor;
      if (tokens[0] == "P1") {
        ops.p1 = std::move(m);
        have_p1 = true;
      } else if (tokens[0] == "P2") {
        ops.p2 = std::move(m);
        have_p2 = true;
      } else {
        reader.fail("unknown matrix '" + std::string(tokens[0]) + "'");
      }
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) reader.fail("expected 'key=value' or a matrix header");
    const auto key = text::trim(std::string_view(line).substr(0, eq));
    const auto value = text::trim(std::string_view(line).substr(eq + 1));
    if (key == "s") s = reader.to_integer(value);
    else if (key == "r") r = reader.to_integer(value);
    else if (key == "indices") ops.indices = reader.to_indices(value, ',');
    else if (key == "arrhenius_prefactor") { ops.arrhenius_prefactor = reader.to_double(value); have_a = true; }
    else if (key == "arrhenius_exponent") { ops.arrhenius_exponent = reader.to_double(value); have_b = true; }
    else if (key == "gain") ops.gain = reader.to_double(value);
    else if (key == "unscale_shift") shift = reader.to_doubles(value, ',');
    else if (key == "unscale_scale") scale = reader.to_doubles(value, ',');
    else reader.fail("unknown key '" + std::string(key) + "'");
  }
  if (s < 1 || r < 1 || !have_a || !have_b || !have_p1 || !have_p2) {
    reader.fail("DEIM file needs s, r, arrhenius_prefactor, arrhenius_exponent, P1 and P2");
  }
  if (ops.p1.rows() != r || ops.p1.cols() != s || ops.p2.rows() != s || ops.p2.cols() != r) {
    reader.fail("P1/P2 shapes do not match s and r");
  }
  ops.unscale_shift = shift.empty() ? Vector(Vector::Zero(s)) : Vector(Eigen::Map<const Vector>(shift.data(), static_cast<Index>(shift.size())));
  ops.unscale_scale = scale.empty() ? Vector(Vector::Ones(s)) : Vector(Eigen::Map<const Vector>(scale.data(), static_cast<Index>(scale.size())));
  try {
    ops.validate();
  } catch (const Error& e) {
    reader.fail(e.what());
  }
  return ops;
}

void save_deim(const DeimOperators& ops, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  write_deim(ops, out);
}

DeimOperators load_deim(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open DEIM file '" + path.string() + "'");
  return read_deim(in, path.string());
}

}  // namespace opcal
