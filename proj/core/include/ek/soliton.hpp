#pragma once

#include <Eigen/Dense>
#include <memory>

#include "ek/grid.hpp"
#include "ek/model.hpp"

namespace ek {

/// Turning density rho*: W(rho*) = 0 with W > 0 strictly between rho* and rho_inf.
/// The depression side (rho < rho_inf) is searched first. Throws NumericalError
/// when no homoclinic orbit exists in the admissible interval or when the root is
/// degenerate (W'(rho*) = 0, a kink).
double find_turning_point(const EffectivePotential& pot, const Endstate& end);

/// Exact evaluator of the half-profile z -> rho(z) - rho_inf, obtained by inverting
/// z = int_{rho*}^{rho} sqrt(K / 2W). Near rho* the integral uses rho = rho* + s^2,
/// near rho_inf the logarithmic variable tau = -ln|rho - rho_inf|.
class ProfileCurve {
 public:
  ProfileCurve(EffectivePotential pot, double rho_star);

  /// rho(z) - rho_inf; even in z.
  double delta(double z) const;
  /// W evaluated without cancellation on either end of the orbit.
  double W(double delta) const;
  const EffectivePotential& potential() const noexcept { return pot_; }
  double rho_star() const noexcept { return rho_star_; }
  double kappa() const noexcept { return kappa_; }

 private:
  double inner_integrand(double s) const;
  double outer_integrand(double tau) const;
  double W_inner(double s) const;

  EffectivePotential pot_;
  double rho_star_, amp_, sign_, kappa_;
  double s_mid_, delta_mid_;
  Eigen::VectorXd s_nodes_, z_inner_, tau_nodes_, z_outer_;
};

struct SolitonProfile {
  explicit SolitonProfile(const Grid1D& g) : grid(g) {}

  Grid1D grid;
  Eigen::VectorXd z, rho, drho, ddrho, u, du;
  double c = 0.0;
  Endstate end;
  double rho_star = 0.0;
  double kappa_d = 0.0;
  double tol = 0.0;
  std::shared_ptr<const ProfileCurve> curve;  // null for the constant state

  double flux() const noexcept { return end.flux(); }
  /// Same profile sampled on another grid (no resolution check).
  SolitonProfile resample(const Grid1D& g) const;
};

/// Soliton profile on [-X, X) with X chosen so |rho(+-X) - rho_inf| < tol. Throws
/// NumericalError when fewer than 16 nodes cover a decay length 1/kappa_d.
SolitonProfile compute_profile(const ModelSpec& model, const Endstate& end, int resolution,
                               double tol = 1e-12);

/// The endstate itself, rho = rho_inf and u = u_inf, as a degenerate profile.
SolitonProfile constant_profile(const Endstate& end, const Grid1D& g);

struct ProfileResidual {
  double ode = 0.0;   // max |K rho'' + K' rho'^2 / 2 - W'(rho)| with spectral derivatives
  double flux = 0.0;  // max |rho (u - c) - j| / |j|  (absolute when j = 0)
  double value() const noexcept { return ode > flux ? ode : flux; }
};

ProfileResidual profile_residual(const SolitonProfile& p, const ModelSpec& model);

}  // namespace ek
