#include "ek/grid.hpp"

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "ek/error.hpp"
#include "ek/fft.hpp"

namespace ek {

using fft::cplx;

Grid1D::Grid1D(int n, double half_length) : n_(n), X_(half_length) {
  if (n < 64 || (n & (n - 1)) != 0)
    throw ValidationError("grid.n must be a power of two >= 64, got " + std::to_string(n));
  if (!(half_length > 0) || !std::isfinite(half_length))
    throw ValidationError("grid.half_length must be positive");
}

Eigen::VectorXd Grid1D::nodes() const {
  Eigen::VectorXd x(n_);
  for (int i = 0; i < n_; ++i) x[i] = this->x(i);
  return x;
}

Eigen::VectorXd Grid1D::wavenumbers() const {
  Eigen::VectorXd xi(n_);
  for (int m = 0; m < n_; ++m) xi[m] = wavenumber(m <= n_ / 2 ? m : m - n_);
  return xi;
}

Eigen::VectorXd derivative(const Grid1D& g, const Eigen::VectorXd& f, int order) {
  if (order != 1 && order != 2) throw ValidationError("derivative order must be 1 or 2");
  const int n = g.n();
  if (f.size() != n) throw ValidationError("derivative: field length does not match grid");
  // Removing f[0] first makes constants differentiate to exactly zero.
  Eigen::VectorXd h = f.array() - f[0];
  std::vector<cplx> c(n / 2 + 1);
  fft::r2c(n, h.data(), c.data());
  for (int m = 0; m <= n / 2; ++m) {
    const double xi = g.wavenumber(m);
    if (order == 1)
      c[m] *= (m == n / 2) ? cplx(0.0) : cplx(0.0, xi);
    else
      c[m] *= -xi * xi;
  }
  Eigen::VectorXd out(n);
  fft::c2r(n, c.data(), out.data());
  return out;
}

Eigen::VectorXcd derivative(const Grid1D& g, const Eigen::VectorXcd& f, int order) {
  const Eigen::VectorXd re = derivative(g, Eigen::VectorXd(f.real()), order);
  const Eigen::VectorXd im = derivative(g, Eigen::VectorXd(f.imag()), order);
  Eigen::VectorXcd out(f.size());
  out.real() = re;
  out.imag() = im;
  return out;
}

Eigen::MatrixXd diff_matrix(const Grid1D& g) {
  const int n = g.n();
  const double scale = M_PI / g.half_length();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const int k = i - j;
      const double sign = (k % 2 == 0) ? 1.0 : -1.0;
      d(i, j) = scale * 0.5 * sign / std::tan(k * M_PI / n);
    }
  }
  return d;
}

namespace {

// Sum over the full spectrum of w(xi) |f_hat|^2, scaled so that w = 1 gives
// the squared L2 norm with measure dx.
template <class Weight>
double spectral_sum(const Grid1D& g, const Eigen::VectorXd& f, Weight w) {
  const int n = g.n();
  std::vector<cplx> c(n / 2 + 1);
  fft::r2c(n, f.data(), c.data());
  double acc = 0.0;
  for (int m = 0; m <= n / 2; ++m) {
    const double mult = (m == 0 || m == n / 2) ? 1.0 : 2.0;
    acc += mult * w(g.wavenumber(m)) * std::norm(c[m]);
  }
  return acc * g.dx() / n;
}

double hs2(const Grid1D& g, const Eigen::VectorXd& f, int s) {
  return spectral_sum(g, f, [s](double xi) { return std::pow(1.0 + xi * xi, s); });
}

double hs2(const Grid1D& g, const Eigen::VectorXcd& f, int s) {
  return hs2(g, Eigen::VectorXd(f.real()), s) + hs2(g, Eigen::VectorXd(f.imag()), s);
}

double dx_hs2(const Grid1D& g, const Eigen::VectorXcd& f, int s) {
  auto w = [s](double xi) { return xi * xi * std::pow(1.0 + xi * xi, s); };
  return spectral_sum(g, Eigen::VectorXd(f.real()), w) + spectral_sum(g, Eigen::VectorXd(f.imag()), w);
}

void check_sobolev_index(int s) {
  if (s < 0) throw ValidationError("Sobolev index must be a whole number");
}

}  // namespace

double hs_norm(const Grid1D& g, const Eigen::VectorXd& f, int s) {
  check_sobolev_index(s);
  return std::sqrt(hs2(g, f, s));
}

double hs_norm(const Grid1D& g, const Eigen::VectorXcd& f, int s) {
  check_sobolev_index(s);
  return std::sqrt(hs2(g, f, s));
}

double hs_norm(const Grid1D& g, const ModePair& u, int s) {
  check_sobolev_index(s);
  return std::sqrt(hs2(g, u.u1, s) + hs2(g, u.u2, s));
}

double xjk_norm2(const Grid1D& g, const ModePair& u, int j) {
  check_sobolev_index(j);
  const double k2 = u.k * u.k;
  double v = hs2(g, u.u1, j + 1) + dx_hs2(g, u.u2, j);
  if (k2 > 0) v += k2 * (hs2(g, u.u1, j) + hs2(g, u.u2, j));
  return v;
}

double xjk_norm(const Grid1D& g, const ModePair& u, int j) { return std::sqrt(xjk_norm2(g, u, j)); }

}  // namespace ek
