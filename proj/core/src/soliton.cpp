#include "ek/soliton.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <sstream>
#include <vector>

#include "ek/error.hpp"

namespace ek {

namespace {

// Table panels are short compared with the scale on which the integrands vary,
// so one fixed 20-point Gauss-Legendre rule per panel is at roundoff level.
template <class F>
double integrate(F&& f, double a, double b) {
  if (a == b) return 0.0;
  return boost::math::quadrature::gauss<double, 20>::integrate(f, a, b);
}

// Monotone sign walk along `rhos` starting next to rho_inf, then bisection.
std::optional<double> bracket_root(const EffectivePotential& pot, const std::vector<double>& rhos) {
  double prev = pot.endstate().rho_inf;
  for (double r : rhos) {
    double w;
    try {
      w = pot.W(r);
    } catch (const DomainError&) {
      return std::nullopt;
    }
    if (!(w > 0.0)) {
      double a = prev, b = r;  // W(a) > 0 (or a = rho_inf), W(b) <= 0
      for (int it = 0; it < 300 && std::abs(b - a) > 1e-16 * std::max(1.0, std::abs(b)); ++it) {
        const double m = 0.5 * (a + b);
        if (m == a || m == b) break;
        if (pot.W(m) > 0.0) a = m;
        else b = m;
      }
      return std::abs(pot.W(a)) < std::abs(pot.W(b)) ? a : b;
    }
    prev = r;
  }
  return std::nullopt;
}

std::vector<double> depression_samples(double rho_inf, double lo) {
  std::vector<double> f;
  for (double q = 1e-8; q < 1.0; q *= 1.1) f.push_back(q);
  for (int i = 1; i <= 400; ++i) f.push_back(1.0 - std::exp2(-i / 8.0));
  std::sort(f.begin(), f.end());
  std::vector<double> out;
  for (double q : f) {
    const double r = rho_inf - (rho_inf - lo) * q;
    if (r > lo && (out.empty() || r < out.back())) out.push_back(r);
  }
  return out;
}

std::vector<double> elevation_samples(double rho_inf, double hi) {
  std::vector<double> out;
  for (double d = 1e-8 * rho_inf; rho_inf + d < hi; d *= 1.1) out.push_back(rho_inf + d);
  return out;
}

}  // namespace

double find_turning_point(const EffectivePotential& pot, const Endstate& end) {
  const Interval& adm = pot.model().admissible();
  std::optional<double> root = bracket_root(pot, depression_samples(end.rho_inf, adm.lo));
  if (!root) root = bracket_root(pot, elevation_samples(end.rho_inf, adm.hi));
  if (!root)
    throw NumericalError("no homoclinic orbit in admissible interval: W has no zero on either side of rho_inf");
  const double rs = *root;
  const double slope = pot.dW(rs);
  const double scale = std::abs(pot.d2W(end.rho_inf)) * std::abs(rs - end.rho_inf);
  if (std::abs(slope) <= 1e-10 * std::max(scale, 1e-300)) {
    std::ostringstream os;
    os << "degenerate turning point rho* = " << rs << " (W'(rho*) = " << slope
       << "): heteroclinic orbit (kink), not supported";
    throw NumericalError(os.str());
  }
  return rs;
}

ProfileCurve::ProfileCurve(EffectivePotential pot, double rho_star)
    : pot_(std::move(pot)), rho_star_(rho_star) {
  const Endstate& e = pot_.endstate();
  amp_ = rho_star_ - e.rho_inf;
  sign_ = amp_ < 0 ? -1.0 : 1.0;
  kappa_ = std::sqrt(pot_.d2W(e.rho_inf) / pot_.model().K(e.rho_inf));
  delta_mid_ = 0.5 * amp_;
  s_mid_ = std::sqrt(0.5 * std::abs(amp_));

  constexpr int kInner = 32;
  s_nodes_.resize(kInner + 1);
  z_inner_.resize(kInner + 1);
  z_inner_[0] = 0.0;
  for (int i = 0; i <= kInner; ++i) s_nodes_[i] = s_mid_ * i / kInner;
  auto fi = [this](double s) { return inner_integrand(s); };
  for (int i = 0; i < kInner; ++i) z_inner_[i + 1] = z_inner_[i] + integrate(fi, s_nodes_[i], s_nodes_[i + 1]);

  // Past |delta| ~ 1e-20 |amp| the tail is exp(-kappa z) to within O(delta), so the
  // table stops there and delta() extrapolates.
  const double tau_max = std::log(0.5e20);
  const int n_outer = static_cast<int>(std::ceil(tau_max / 0.25));
  tau_nodes_.resize(n_outer + 1);
  z_outer_.resize(n_outer + 1);
  z_outer_[0] = z_inner_[kInner];
  auto fo = [this](double t) { return outer_integrand(t); };
  for (int i = 0; i <= n_outer; ++i) tau_nodes_[i] = 0.25 * i;
  for (int i = 0; i < n_outer; ++i)
    z_outer_[i + 1] = z_outer_[i] + integrate(fo, tau_nodes_[i], tau_nodes_[i + 1]);
}

double ProfileCurve::W_inner(double s) const {
  // W(rho* - sign s^2) = int_{rho*}^{rho} W'; exact zero at the turning point.
  const double rho = rho_star_ - sign_ * s * s;
  if (s == 0.0) return 0.0;
  return boost::math::quadrature::gauss<double, 20>::integrate([this](double r) { return pot_.dW(r); },
                                                              rho_star_, rho);
}

double ProfileCurve::inner_integrand(double s) const {
  const double rho = rho_star_ - sign_ * s * s;
  const double K = pot_.model().K(rho);
  if (s == 0.0) return 2.0 * std::sqrt(K / (2.0 * std::abs(pot_.dW(rho_star_))));
  return 2.0 * s * std::sqrt(K / (2.0 * W_inner(s)));
}

double ProfileCurve::outer_integrand(double tau) const {
  const double d = delta_mid_ * std::exp(-tau);
  const double rho = pot_.endstate().rho_inf + d;
  return std::abs(d) * std::sqrt(pot_.model().K(rho) / (2.0 * pot_.W_delta(d)));
}

double ProfileCurve::W(double delta) const {
  const double off = std::abs(delta - amp_);
  if (off <= 0.5 * std::abs(amp_)) return W_inner(std::sqrt(off));
  return pot_.W_delta(delta);
}

namespace {

// Solves Z(t) = z for t in the table panel containing z, Z' = f > 0.
template <class F>
double invert_panel(const Eigen::VectorXd& t, const Eigen::VectorXd& Z, F&& f, double z) {
  const auto* it = std::upper_bound(Z.data(), Z.data() + Z.size(), z);
  int i = static_cast<int>(it - Z.data()) - 1;
  i = std::clamp(i, 0, static_cast<int>(Z.size()) - 2);
  double lo = t[i], hi = t[i + 1];
  double x = lo + (z - Z[i]) / (Z[i + 1] - Z[i]) * (hi - lo);
  for (int iter = 0; iter < 60; ++iter) {
    const double r = Z[i] + integrate(f, t[i], x) - z;
    if (r > 0) hi = x;
    else lo = x;
    double nx = x - r / f(x);
    if (!(nx > lo && nx < hi)) nx = 0.5 * (lo + hi);
    const bool done = std::abs(nx - x) <= 4e-16 * std::max(1.0, std::abs(x));
    x = nx;
    if (done) break;
  }
  return x;
}

}  // namespace

double ProfileCurve::delta(double z) const {
  z = std::abs(z);
  const int ni = static_cast<int>(z_inner_.size()) - 1;
  if (z <= z_inner_[ni]) {
    const double s = invert_panel(s_nodes_, z_inner_, [this](double v) { return inner_integrand(v); }, z);
    return amp_ - sign_ * s * s;
  }
  const int no = static_cast<int>(z_outer_.size()) - 1;
  if (z >= z_outer_[no]) return delta_mid_ * std::exp(-tau_nodes_[no]) * std::exp(-kappa_ * (z - z_outer_[no]));
  const double tau =
      invert_panel(tau_nodes_, z_outer_, [this](double v) { return outer_integrand(v); }, z);
  return delta_mid_ * std::exp(-tau);
}

namespace {

void fill_profile(SolitonProfile& p) {
  const Grid1D& g = p.grid;
  const int n = g.n();
  p.z = g.nodes();
  p.rho.resize(n);
  p.drho.resize(n);
  p.ddrho.resize(n);
  p.u.resize(n);
  p.du.resize(n);
  const double ri = p.end.rho_inf;
  const double j = p.end.flux();
  if (!p.curve) {
    p.rho.setConstant(ri);
    p.drho.setZero();
    p.ddrho.setZero();
    p.u.setConstant(p.end.u_inf);
    p.du.setZero();
    return;
  }
  const ProfileCurve& cv = *p.curve;
  const EffectivePotential& pot = cv.potential();
  const double branch = (p.rho_star < ri) ? 1.0 : -1.0;  // sign of rho' for z > 0
  auto eval_at = [&](int i) {
    const double z = p.z[i];
    const double d = cv.delta(z);
    const double rho = ri + d;
    const Jet3 k = pot.model().capillarity_jet(rho);
    const double W = std::max(cv.W(d), 0.0);
    const double side = z > 0 ? 1.0 : (z < 0 ? -1.0 : 0.0);
    const double r1 = side * branch * std::sqrt(2.0 * W / k.f);
    p.rho[i] = rho;
    p.drho[i] = r1;
    p.ddrho[i] = (pot.dW(rho) - k.d1 * W / k.f) / k.f;
    p.u[i] = p.c + j / rho;
    p.du[i] = -j * r1 / (rho * rho);
  };
  eval_at(0);
  for (int i = n / 2; i < n; ++i) {
    eval_at(i);
    if (i > n / 2) {
      const int m = n - i;
      p.rho[m] = p.rho[i];
      p.drho[m] = -p.drho[i];
      p.ddrho[m] = p.ddrho[i];
      p.u[m] = p.u[i];
      p.du[m] = -p.du[i];
    }
  }
}

}  // namespace

SolitonProfile SolitonProfile::resample(const Grid1D& g) const {
  SolitonProfile p(g);
  p.c = c;
  p.end = end;
  p.rho_star = rho_star;
  p.kappa_d = kappa_d;
  p.tol = tol;
  p.curve = curve;
  fill_profile(p);
  return p;
}

SolitonProfile compute_profile(const ModelSpec& model, const Endstate& end, int resolution, double tol) {
  if (!(tol > 0.0 && tol < 1.0)) throw ValidationError("profile truncation tolerance must lie in (0, 1)");
  EffectivePotential pot = effective_potential(model, end);
  const double rs = find_turning_point(pot, end);
  auto curve = std::make_shared<const ProfileCurve>(pot, rs);
  const double kappa = curve->kappa();

  double X = std::log(std::abs(rs - end.rho_inf) / tol) / kappa;
  for (int it = 0; it < 8; ++it) {
    const double d = std::abs(curve->delta(X));
    if (d < tol) break;
    X += std::log(d / tol) / kappa + 0.05 / kappa;
  }
  const double per_decay = resolution / (2.0 * X * kappa);
  if (per_decay < 16.0) {
    std::ostringstream os;
    os << "resolution " << resolution << " gives " << per_decay
       << " points per decay length 1/kappa_d on half-length " << X << " (need >= 16)";
    throw NumericalError(os.str());
  }
  SolitonProfile p(Grid1D(resolution, X));
  p.c = end.c;
  p.end = end;
  p.rho_star = rs;
  p.kappa_d = kappa;
  p.tol = tol;
  p.curve = std::move(curve);
  fill_profile(p);
  return p;
}

SolitonProfile constant_profile(const Endstate& end, const Grid1D& g) {
  SolitonProfile p(g);
  p.c = end.c;
  p.end = end;
  p.rho_star = end.rho_inf;
  fill_profile(p);
  return p;
}

ProfileResidual profile_residual(const SolitonProfile& p, const ModelSpec& model) {
  const EffectivePotential pot(model, p.end);
  const Eigen::VectorXd r1 = derivative(p.grid, p.rho, 1);
  const Eigen::VectorXd r2 = derivative(p.grid, p.rho, 2);
  const double j = p.end.flux();
  ProfileResidual res;
  for (int i = 0; i < p.grid.n(); ++i) {
    const Jet3 k = model.capillarity_jet(p.rho[i]);
    const double ode = k.f * r2[i] + 0.5 * k.d1 * r1[i] * r1[i] - pot.dW(p.rho[i]);
    const double fl = p.rho[i] * (p.u[i] - p.c) - j;
    res.ode = std::max(res.ode, std::abs(ode));
    res.flux = std::max(res.flux, std::abs(fl) / (j != 0.0 ? std::abs(j) : 1.0));
  }
  return res;
}

}  // namespace ek
