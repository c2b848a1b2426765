#include "opcal/pod.hpp"

#include "opcal/errors.hpp"
#include "opcal/text_io.hpp"

#include <Eigen/SVD>

#include <fstream>
#include <string>

namespace opcal {

namespace {

void fix_signs(Matrix& u) {
  for (Index j = 0; j < u.cols(); ++j) {
    Index imax = 0;
    u.col(j).cwiseAbs().maxCoeff(&imax);
    if (u(imax, j) < 0.0) u.col(j) *= -1.0;
  }
}

}  // namespace

PodBasis compute_pod(const Matrix& snapshots, Index rank, std::optional<ScalingSpec> scaling) {
  const Index full = std::min(snapshots.rows(), snapshots.cols());
  if (rank < 1 || rank > full) {
    throw ConfigError("POD rank " + std::to_string(rank) + " outside [1, " + std::to_string(full) +
                      "]");
  }
  if (!snapshots.allFinite()) throw NumericError("compute_pod: snapshot matrix has non-finite entries");
  Eigen::BDCSVD<Matrix> svd(snapshots, Eigen::ComputeThinU);
  PodBasis pod;
  pod.basis = svd.matrixU().leftCols(rank);
  fix_signs(pod.basis);
  pod.singular_values = svd.singularValues();
  pod.scaling = std::move(scaling);
  return pod;
}

Matrix project(const PodBasis& basis, const Matrix& x) {
  if (x.rows() != basis.state_dim()) {
    throw DataError("project: data has " + std::to_string(x.rows()) + " rows, basis has " +
                    std::to_string(basis.state_dim()));
  }
  return basis.basis.transpose() * x;
}

Matrix lift(const PodBasis& basis, const Matrix& y) {
  if (y.rows() != basis.rank()) {
    throw DataError("lift: reduced data has " + std::to_string(y.rows()) + " rows, basis rank is " +
                    std::to_string(basis.rank()));
  }
  return basis.basis * y;
}

ReconstructionErrorCurve reconstruction_error_curve(const Matrix& training, const Matrix& validation,
                                                    Index r_max) {
  const Index full = std::min(training.rows(), training.cols());
  if (r_max < 1 || r_max > full) throw ConfigError("r_max outside [1, min(n, m)]");
  if (validation.size() > 0 && validation.rows() != training.rows()) {
    throw DataError("validation snapshots have a different state dimension");
  }
  const PodBasis pod = compute_pod(training, r_max);
  const auto n = static_cast<double>(training.rows());

  // Residuals shrink as modes are added; track them incrementally.
  auto curve = [&](const Matrix& x) {
    std::vector<double> out;
    if (x.size() == 0) return out;
    Matrix residual = x;
    for (Index r = 0; r < r_max; ++r) {
      const auto u = pod.basis.col(r);
      residual -= u * (u.transpose() * x);
      out.push_back(residual.colwise().squaredNorm().maxCoeff() / n);
    }
    return out;
  };
  return {curve(training), curve(validation)};
}

void save_basis(const PodBasis& basis, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << "n=" << basis.state_dim() << " r=" << basis.rank() << '\n';
  for (Index j = 0; j < basis.rank(); ++j) {
    for (Index i = 0; i < basis.state_dim(); ++i) out << text::format_double(basis.basis(i, j)) << '\n';
  }
  out << "singular_values=" << basis.singular_values.size() << '\n';
  for (Index i = 0; i < basis.singular_values.size(); ++i) {
    out << text::format_double(basis.singular_values(i)) << '\n';
  }
}

PodBasis load_basis(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open basis file '" + path.string() + "'");
  text::LineReader reader(in, path.string());
  auto header = reader.expect_line("'n= r=' header");
  long long n = -1;
  long long r = -1;
  for (auto tok : text::split(header, ' ')) {
    if (tok.starts_with("n=")) n = reader.to_integer(tok.substr(2));
    else if (tok.starts_with("r=")) r = reader.to_integer(tok.substr(2));
    else reader.fail("unexpected header token '" + std::string(tok) + "'");
  }
  if (n <= 0 || r <= 0 || r > n) reader.fail("invalid basis dimensions");
  PodBasis pod;
  pod.basis.resize(n, r);
  for (Index j = 0; j < r; ++j) {
    for (Index i = 0; i < n; ++i) pod.basis(i, j) = reader.to_double(reader.expect_line("basis value"));
  }
  auto sv = reader.expect_line("'singular_values=' line");
  if (!sv.starts_with("singular_values=")) reader.fail("expected 'singular_values='");
  const auto count = reader.to_integer(std::string_view(sv).substr(16));
  pod.singular_values.resize(count);
  for (Index i = 0; i < count; ++i) pod.singular_values(i) = reader.to_double(reader.expect_line("singular value"));
  return pod;
}

}  // namespace opcal
