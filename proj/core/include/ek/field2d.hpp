#pragma once

#include <Eigen/Dense>

namespace ek {

/// (rho, phi) sampled on [-X, X) x [0, Ly). Row i is x_i, column j is y_j.
struct Field2D {
  int nx = 0, ny = 0;
  double half_length = 0.0;  // X
  double ly = 0.0;
  Eigen::MatrixXd rho, phi;

  Field2D() = default;
  Field2D(int nx_, int ny_, double X, double ly_)
      : nx(nx_), ny(ny_), half_length(X), ly(ly_), rho(Eigen::MatrixXd::Zero(nx_, ny_)),
        phi(Eigen::MatrixXd::Zero(nx_, ny_)) {}

  double dx() const noexcept { return 2.0 * half_length / nx; }
  double dy() const noexcept { return ly / ny; }
  double x(int i) const noexcept { return -half_length + i * dx(); }
  double y(int j) const noexcept { return j * dy(); }
};

}  // namespace ek
