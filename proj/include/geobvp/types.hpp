#pragma once

#include <Eigen/Dense>

#include <vector>

namespace geobvp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Chart coordinates of a point of M.
using Point = Eigen::VectorXd;

/// One (lo, hi) pair per coordinate; infinite bounds are allowed.
struct Box {
  Vector lo;
  Vector hi;

  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(const Vector& x) const;
  Vector clamp(const Vector& x) const;
  Vector center() const;
};

}  // namespace geobvp
