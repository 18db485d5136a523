#pragma once

#include <Eigen/Dense>

namespace ek {

/// Uniform periodic grid on [-X, X) with N nodes, N a power of two >= 64.
/// Node N/2 sits at x = 0, and nodes i and N-i are mirror images.
class Grid1D {
 public:
  Grid1D(int n, double half_length);

  int n() const noexcept { return n_; }
  double half_length() const noexcept { return X_; }
  double length() const noexcept { return 2.0 * X_; }
  double dx() const noexcept { return 2.0 * X_ / n_; }
  double x(int i) const noexcept { return -X_ + i * dx(); }
  Eigen::VectorXd nodes() const;

  /// Angular wavenumber of real-FFT bin m, 0 <= m <= N/2.
  double wavenumber(int m) const noexcept { return M_PI * m / X_; }
  /// Signed wavenumbers in FFT order (length N), Nyquist reported positive.
  Eigen::VectorXd wavenumbers() const;

  bool operator==(const Grid1D& o) const noexcept { return n_ == o.n_ && X_ == o.X_; }

 private:
  int n_;
  double X_;
};

/// Transverse Fourier mode (density, potential) at wavenumber k.
struct ModePair {
  Eigen::VectorXcd u1, u2;
  double k = 0.0;

  static ModePair zero(int n, double k) {
    return {Eigen::VectorXcd::Zero(n), Eigen::VectorXcd::Zero(n), k};
  }
};

/// Spectral derivative of order 1 or 2. The first derivative drops the Nyquist
/// mode so that it agrees with the antisymmetric differentiation matrix.
Eigen::VectorXd derivative(const Grid1D& g, const Eigen::VectorXd& f, int order);
Eigen::VectorXcd derivative(const Grid1D& g, const Eigen::VectorXcd& f, int order);

/// Dense first-derivative matrix (real, antisymmetric, Nyquist mode removed).
Eigen::MatrixXd diff_matrix(const Grid1D& g);

/// Sobolev norm with multiplier (1 + xi^2)^(s/2), flat measure dx.
double hs_norm(const Grid1D& g, const Eigen::VectorXd& f, int s);
double hs_norm(const Grid1D& g, const Eigen::VectorXcd& f, int s);
/// sqrt(|U1|_s^2 + |U2|_s^2).
double hs_norm(const Grid1D& g, const ModePair& u, int s);

/// |U1|^2_{H^{j+1}} + |dx U2|^2_{H^j} + k^2 |U|^2_{H^j}. Note: this is the squared
/// semi-norm; xjk_norm returns its square root.
double xjk_norm2(const Grid1D& g, const ModePair& u, int j);
double xjk_norm(const Grid1D& g, const ModePair& u, int j);

}  // namespace ek
