#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

namespace opcal {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Control input u = (R, dv_I/dt) at one time instant.
struct Control {
  double heat_load = 0.0;
  double inflow_rate_derivative = 0.0;

  friend bool operator==(const Control&, const Control&) = default;
};

/// Named contiguous row block [start, end) of the state vector.
struct FieldRange {
  std::string name;
  Index start = 0;
  Index end = 0;

  Index size() const noexcept { return end - start; }
  friend bool operator==(const FieldRange&, const FieldRange&) = default;
};

/// Throws DataError unless `fields` partitions [0, n) in order.
void check_partition(const std::vector<FieldRange>& fields, Index n);

}  // namespace opcal
