#include "opcal/opinf.hpp"

#include "opcal/errors.hpp"

#include <Eigen/QR>

#include <cmath>
#include <string>

namespace opcal {

RomOperators RomOperators::zeros(Index r, bool quadratic, bool input) {
  return {Matrix::Zero(r, r), Matrix::Zero(r, quadratic ? symmetric_kron_size(r) : 0),
          Matrix::Zero(r, input ? kInputChannels : 0)};
}

void RomOperators::validate() const {
  const Index n = r();
  if (a.cols() != n || h.rows() != n || b.rows() != n) {
    throw DataError("ROM operators: A, H and B must all have r rows (A square)");
  }
  if (h.cols() != 0 && h.cols() != symmetric_kron_size(n)) {
    throw DataError("ROM operators: H must have r(r+1)/2 columns");
  }
  if (!a.allFinite() || !h.allFinite() || !b.allFinite()) {
    throw NumericError("ROM operators contain non-finite entries");
  }
}

Vector sym_kron(const Vector& x) {
  const Index r = x.size();
  Vector out(symmetric_kron_size(r));
  Index k = 0;
  for (Index i = 0; i < r; ++i) {
    for (Index j = i; j < r; ++j) out(k++) = x(i) * x(j);
  }
  return out;
}

Matrix sym_kron_jacobian(const Vector& x) {
  const Index r = x.size();
  Matrix jac = Matrix::Zero(symmetric_kron_size(r), r);
  Index k = 0;
  for (Index i = 0; i < r; ++i) {
    for (Index j = i; j < r; ++j, ++k) {
      jac(k, i) += x(j);
      jac(k, j) += x(i);
    }
  }
  return jac;
}

RegressionSystem assemble_regression(const Matrix& reduced_states, const Matrix& reduced_derivatives,
                                     std::span<const Control> controls, const DeimOperators* deim,
                                     const OpinfConfig& cfg) {
  const Index r = reduced_states.rows();
  const Index m = reduced_states.cols();
  if (reduced_derivatives.size() == 0) {
    throw DataError("operator inference needs time derivatives: supply exact derivatives or run "
                    "estimate_derivatives on the snapshots");
  }
  if (reduced_derivatives.rows() != r || reduced_derivatives.cols() != m) {
    throw DataError("reduced derivatives must match the reduced state shape");
  }
  if (static_cast<Index>(controls.size()) != m) throw DataError("need one control per reduced state");
  if (deim && deim->rank() != r) throw DataError("DEIM operators have a different reduced dimension");

  const Index q = cfg.include_quadratic ? symmetric_kron_size(r) : 0;
  const Index p = cfg.include_input ? kInputChannels : 0;
  RegressionSystem sys;
  sys.r = r;
  sys.include_quadratic = cfg.include_quadratic;
  sys.include_input = cfg.include_input;
  sys.design.resize(m, r + q + p);
  sys.target.resize(m, r);
  for (Index j = 0; j < m; ++j) {
    const Vector s = reduced_states.col(j);
    const auto& u = controls[static_cast<std::size_t>(j)];
    sys.design.row(j).head(r) = s.transpose();
    if (q) sys.design.row(j).segment(r, q) = sym_kron(s).transpose();
    if (p) sys.design(j, r + q) = u.inflow_rate_derivative;
    Vector t = reduced_derivatives.col(j);
    if (deim) t -= reduced_arrhenius(*deim, s, u.heat_load);
    sys.target.row(j) = t.transpose();
  }
  return sys;
}

RomOperators solve_opinf(const RegressionSystem& system, double lambda) {
  const Matrix& d = system.design;
  if (d.rows() < 1) throw DataError("solve_opinf: empty regression system");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("Tikhonov lambda must be >= 0");
  const Index cols = d.cols();

  Matrix solution;  // d x r, i.e. O^T
  if (lambda > 0.0) {
    // Stacked form [D; sqrt(lambda) I] O^T = [T; 0] avoids squaring cond(D).
    Matrix stacked(d.rows() + cols, cols);
    stacked << d, std::sqrt(lambda) * Matrix::Identity(cols, cols);
    Matrix rhs(d.rows() + cols, system.target.cols());
    rhs << system.target, Matrix::Zero(cols, system.target.cols());
    solution = stacked.colPivHouseholderQr().solve(rhs);
  } else {
    Eigen::ColPivHouseholderQR<Matrix> qr(d);
    qr.setThreshold(1e-12);
    if (qr.rank() < cols) {
      throw NumericError("operator inference system is rank deficient (rank " +
                         std::to_string(qr.rank()) + " < " + std::to_string(cols) +
                         "); use Tikhonov regularization lambda > 0");
    }
    solution = qr.solve(system.target);
  }
  if (!solution.allFinite()) throw NumericError("operator inference produced non-finite operators");

  const Index r = system.r;
  const Index q = system.include_quadratic ? symmetric_kron_size(r) : 0;
  const Index p = system.include_input ? kInputChannels : 0;
  RomOperators ops;
  ops.a = solution.topRows(r).transpose();
  ops.h = solution.middleRows(r, q).transpose();
  ops.b = solution.middleRows(r + q, p).transpose();
  return ops;
}

}  // namespace opcal
