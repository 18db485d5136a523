#include "ek/cli/nls_oracle.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <complex>

#include "ek/error.hpp"

namespace ek::oracle {

double nls_growth_rate(const Grid1D& g, double c, double k) {
  if (!(std::abs(c) < 1)) throw ValidationError("nls oracle: need |c| < 1");
  using cd = std::complex<double>;
  const int n = g.n();
  const double s = std::sqrt(1.0 - c * c), X = g.half_length();
  // psi = e^{i beta x} psi~ with psi~ continuous across the periodic seam.
  const double beta = (2.0 * std::atan2(c, s) - M_PI) / (2.0 * X);

  Eigen::MatrixXd D = diff_matrix(g), D2(n, n);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e[j] = 1.0;
    D2.col(j) = derivative(g, e, 2);
  }
  Eigen::VectorXcd psi(n);
  for (int i = 0; i < n; ++i) {
    const double x = g.x(i);
    psi[i] = std::polar(1.0, -beta * x) * cd(s * std::tanh(s * x), c);
  }
  // w~_t = -i (A w~ + B conj(w~)),
  // A = i (c - beta) D + (-c beta + (beta^2 + k^2) / 2) - D2 / 2 + 2|psi|^2 - 1, B = psi^2.
  Eigen::MatrixXd Ar = -0.5 * D2, Ai = (c - beta) * D;
  Ar.diagonal().array() += -c * beta + 0.5 * (beta * beta + k * k);
  for (int i = 0; i < n; ++i) Ar(i, i) += 2.0 * std::norm(psi[i]) - 1.0;
  const Eigen::VectorXcd b = psi.array().square();

  Eigen::MatrixXd J(2 * n, 2 * n);
  J.topLeftCorner(n, n) = Ai;
  J.topRightCorner(n, n) = Ar;
  J.bottomLeftCorner(n, n) = -Ar;
  J.bottomRightCorner(n, n) = Ai;
  for (int i = 0; i < n; ++i) {
    J(i, i) += b[i].imag();
    J(i, n + i) -= b[i].real();
    J(n + i, i) -= b[i].real();
    J(n + i, n + i) -= b[i].imag();
  }
  Eigen::EigenSolver<Eigen::MatrixXd> es(J, false);
  if (es.info() != Eigen::Success) throw NumericalError("nls oracle: eigensolver failed");
  return es.eigenvalues().real().maxCoeff();
}

double grey_soliton_density(double c, double z) {
  const double s = std::sqrt(1.0 - c * c), sech = 1.0 / std::cosh(s * z);
  return 1.0 - s * s * sech * sech;
}

}  // namespace ek::oracle
