#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ek/evolution.hpp"
#include "ek/field2d.hpp"
#include "ek/model.hpp"
#include "ek/soliton.hpp"

namespace ek {

/// Nonlinear Euler-Korteweg system in potential form, frame moving at speed c,
/// on [-X, X) x [0, Ly) with periodic boundaries. The potential is stored as
/// phi = phi_bg(x) + psi where phi_bg' is the background profile velocity (the
/// soliton phase jump makes phi itself non-periodic); Field2D::phi holds psi. The
/// far-field Bernoulli constant is removed so the travelling wave is a fixed point.
class Sim2D {
 public:
  Sim2D(ModelSpec model, const SolitonProfile& background, int ny, double ly, double vacuum_floor = 1e-6);

  const ModelSpec& model() const noexcept { return model_; }
  const SolitonProfile& background() const noexcept { return bg_; }
  int nx() const noexcept { return nx_; }
  int ny() const noexcept { return ny_; }
  double ly() const noexcept { return ly_; }
  double dx() const noexcept { return bg_.grid.dx(); }
  double dy() const noexcept { return ly_ / ny_; }
  double y(int j) const noexcept { return j * dy(); }
  double vacuum_floor() const noexcept { return vacuum_floor_; }

  /// The background profile extended constantly in y (psi = 0).
  Field2D base_state() const;
  /// base + eps Re[(v.u1, v.u2)(x) e^{i k y}].
  Field2D perturbed_state(const ModePair& v, double eps) const;

  /// Time derivative (rho_t, psi_t). Throws NumericalError when min rho <= floor.
  Field2D rhs(const Field2D& s) const;
  /// One Lawson IF-RK4 step; the endstate linearization is integrated exactly.
  void step(Field2D& s, double dt) const;
  /// 2 / (stiffness of the explicit remainder), a safe default step.
  double default_dt() const;

  /// Velocity u = grad phi including the background.
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> velocity(const Field2D& s) const;
  double mass(const Field2D& s) const;  // int (rho - rho_inf)

  /// Spectral first derivatives along x and y (Nyquist removed).
  Eigen::MatrixXd ddx(const Eigen::MatrixXd& f) const;
  Eigen::MatrixXd ddy(const Eigen::MatrixXd& f) const;

 private:
  struct Flow;
  Flow flow(double h) const;
  void apply_flow(const Flow& P, const Field2D& in, Field2D& out) const;

  ModelSpec model_;
  SolitonProfile bg_;
  int nx_, ny_;
  double ly_, vacuum_floor_;
  double bernoulli_;
  Eigen::VectorXd xi_, eta_;  // first-derivative symbols (Nyquist zero)
  Eigen::VectorXd xi2_, eta2_;  // second-derivative symbols (full)
};

/// Smooth band function: 1 for ||k| - k0| <= k0/4, 0 for ||k| - k0| >= k0/2.
std::function<double(double)> default_band(double k0);

/// Pi(U - Q_c): y-Fourier multiplier f on the deviation from the background; the
/// k = 0 component is removed exactly.
Field2D pi_project(const Sim2D& sim, const Field2D& s, const std::function<double(double)>& band);

/// L2 norm of (rho, grad psi) over the domain.
double perturbation_norm(const Sim2D& sim, const Field2D& d);

/// inf_a |U - Q_c(. - a)|_{L2} with U = (rho, u), and the minimizing shift a.
std::pair<double, double> orbital_distance(const Sim2D& sim, const Field2D& s);

/// |Q_c - Q_inf|_{L2} over the domain.
double soliton_norm(const Sim2D& sim);

struct MadelungFields {
  Eigen::MatrixXd G, wx, wy;
  Eigen::MatrixXcd zx, zy;  // z = u + i w
  double gauge_norm = 0.0;  // |A(rho)^{s/2} Lambda^s (z - z_inf)|_{L2}
};

/// G = int_{rho_inf}^{rho} sqrt(K / r) dr; A(rho) = sqrt(rho K(rho)).
double madelung_G(const ModelSpec& model, double rho, double rho_inf);
double madelung_A(const ModelSpec& model, double rho);
MadelungFields madelung_diagnostics(const Sim2D& sim, const Field2D& s, double order);

struct RunOptions {
  double T = 0.0;
  double dt = 0.0;  // 0: default_dt
  int sample_every = 20;
  double delta_stop = std::numeric_limits<double>::infinity();
  double sigma0 = 0.0;  // blow-up guard: growth > e^{10 sigma0 dt} per step aborts
  std::function<double(double)> band;
  double madelung_order = 1.0;
};

struct RunRecord {
  std::vector<double> t, mass_defect, pi_norm, orbital, shift, min_rho, madelung;
  bool escaped = false;
  double escape_time = std::numeric_limits<double>::quiet_NaN();
  double dt = 0.0;
  Field2D final_state;
};

RunRecord simulate(const Sim2D& sim, Field2D state, const RunOptions& opts);

struct InstabilityConfig {
  std::vector<double> eps{1e-3, 3e-4, 1e-4};
  int nx = 256, ny = 32;
  int torus_multiple = 1;  // L = 2 pi m / k0
  double dt = 0.0;         // 0: automatic
  double kappa = 0.1;
  double delta_stop = 0.0;  // 0: 0.05 |Q_c - Q_inf|
  double t_cap = 0.0;       // 0: t_star(eps, kappa, sigma0) + 10 / sigma0
  int sample_every = 20;
  double fit_lo = 2.0;      // fit window pi_norm in [fit_lo eps, fit_hi]
  double fit_hi = 0.01;
  double vacuum_floor = 1e-6;
  int jobs = 0;
};

struct EpsilonRun {
  double eps = 0.0;
  double rate = std::numeric_limits<double>::quiet_NaN();
  double fit_residual = std::numeric_limits<double>::quiet_NaN();  // max |residual| of ln pi_norm
  bool fit_ok = false;
  double escape_time = std::numeric_limits<double>::quiet_NaN();
  bool censored = false;
  double t_cap = 0.0;
  double max_mass_defect = 0.0;
  double wall_seconds = 0.0;
  RunRecord record;
};

struct InstabilityReport {
  double k0 = 0.0, sigma0 = 0.0, sigma_ref = 0.0, ly = 0.0, dt = 0.0, delta_stop = 0.0;
  int nx = 0, ny = 0;
  std::vector<EpsilonRun> runs;
  double slope = std::numeric_limits<double>::quiet_NaN();  // T_eps against ln(1/eps)
  bool monotone = false;
};

/// Single-mode instability sweep: U0 = Q_c + eps Re[v1(k0, x) e^{i k0 y}] on a torus
/// of length 2 pi m / k0. The profile is resampled onto nx nodes.
InstabilityReport run_instability_experiment(const SolitonProfile& profile, const ModelSpec& model, double k0,
                                             double sigma0, const InstabilityConfig& cfg);

/// Least-squares slope and max |residual| of ln(y) against t on samples with y in [lo, hi].
std::pair<double, double> fit_log_window(const std::vector<double>& t, const std::vector<double>& y, double lo,
                                         double hi);

}  // namespace ek
