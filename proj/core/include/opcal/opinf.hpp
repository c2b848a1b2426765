#pragma once

#include "opcal/deim.hpp"
#include "opcal/types.hpp"

#include <span>

namespace opcal {

/// Polynomial part of the reduced model ds/dt = A s + H s^(2) + B u_in.
/// s^(2) is the symmetric Kronecker product (q = r(r+1)/2 unique monomials);
/// H and B have zero columns when the corresponding term is disabled.
struct RomOperators {
  Matrix a;  // r x r
  Matrix h;  // r x q, or r x 0
  Matrix b;  // r x p, or r x 0

  Index r() const { return a.rows(); }
  Index q() const { return h.cols(); }
  Index p() const { return b.cols(); }
  bool has_quadratic() const { return h.cols() > 0; }
  bool has_input() const { return b.cols() > 0; }

  static RomOperators zeros(Index r, bool quadratic, bool input);
  void validate() const;
  double squared_norm() const { return a.squaredNorm() + h.squaredNorm() + b.squaredNorm(); }
};

struct OpinfConfig {
  double tikhonov_lambda = 1.0;
  bool include_quadratic = false;
  bool include_input = false;
};

/// Number of input channels acting through B (dv_I/dt).
inline constexpr Index kInputChannels = 1;

inline Index symmetric_kron_size(Index r) { return r * (r + 1) / 2; }
/// (x_0 x_0, x_0 x_1, ..., x_0 x_{r-1}, x_1 x_1, ..., x_{r-1} x_{r-1})
Vector sym_kron(const Vector& x);
/// d sym_kron(x) / dx, q x r.
Matrix sym_kron_jacobian(const Vector& x);

struct RegressionSystem {
  Matrix design;  // m x d, rows [s^T, sym_kron(s)^T, u^T]
  Matrix target;  // m x r, rows (ds/dt - DEIM term)^T
  Index r = 0;
  bool include_quadratic = false;
  bool include_input = false;
};

/// `deim` may be null, in which case no known term is subtracted.
RegressionSystem assemble_regression(const Matrix& reduced_states, const Matrix& reduced_derivatives,
                                     std::span<const Control> controls, const DeimOperators* deim,
                                     const OpinfConfig& cfg);

/// argmin ||D O^T - T||_F^2 + lambda ||O||_F^2 with O = [A H B].
RomOperators solve_opinf(const RegressionSystem& system, double lambda);

}  // namespace opcal
