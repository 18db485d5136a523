#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "ek/field2d.hpp"
#include "ek/linop.hpp"

namespace ek {

/// Source term of dU/dt = JL(k) U + F. eval(t, m) returns the m-th time
/// derivative of F as a 2N vector (density block first).
struct Forcing {
  std::function<Eigen::VectorXcd(double t, int order)> eval;
  std::string description = "none";

  explicit operator bool() const { return static_cast<bool>(eval); }
};

/// F(t) = e^{gamma t} (1 + t)^{-n} shape.
Forcing power_exponential_forcing(const ModePair& shape, double gamma, double n);

struct PropagationOptions {
  std::vector<int> xjk_orders{0};
  int hs_order = 1;
  int sample_every = 1;
  bool keep_snapshots = false;
  int expm_max_dim = 512;  // 2N at or below this uses the dense exponential
  /// Called at every sample with (t, U) where U stacks the two components.
  std::function<void(double, const Eigen::VectorXcd&)> observer;
};

struct ModeTrajectory {
  double k = 0.0;
  std::string method;   // "expm" or "ifrk4"
  std::string forcing;
  std::vector<double> t;
  std::vector<double> l2, hs;
  std::vector<int> xjk_orders;
  std::vector<std::vector<double>> xjk;  // xjk[o][sample] for xjk_orders[o]
  std::vector<ModePair> snapshots;
};

/// Linear propagation of one transverse mode. With the dense exponential any dt is
/// exact for F = 0 and the forcing enters through Simpson quadrature of the
/// Duhamel integral. The IF-RK4 path integrates the endstate symbol exactly and
/// requires dt * rho(JL - JL_inf) < 2.5.
ModeTrajectory propagate_mode(const SolitonProfile& p, const ModelSpec& model, const Grid1D& g, double k,
                              const ModePair& u0, const Forcing& f, double T, double dt,
                              const PropagationOptions& opts = {});

/// Least-squares slope of log(y) against t over t in [t0, t1].
double fit_rate(const std::vector<double>& t, const std::vector<double>& y, double t0, double t1);

struct ResolventResult {
  double k = 0.0, gamma = 0.0, n = 0.0, sigma0 = 0.0, T = 0.0;
  int s = 0;
  std::vector<double> t;
  std::vector<std::vector<double>> ratio;  // ratio[j][sample], j = 0..s
  std::vector<double> sup_ratio, trend;
  std::vector<double> peak_time;  // where each ratio attains its sup
  bool bounded = false;
};

struct ResolventOptions {
  double dt = 0.05;
  int sample_every = 4;
  double trend_limit = 1.05;
};

/// Drives U(0) = 0 with F = e^{gamma t}(1+t)^{-n} g, g a fixed smooth localized
/// pair, and records |d_t^{s-j} U|_{X^j_k} (1+t)^n e^{-gamma t} for j <= s. Time
/// derivatives come from the equation itself. Throws ValidationError if
/// gamma <= sigma0.
ResolventResult resolvent_experiment(const SolitonProfile& p, const ModelSpec& model, double k, double gamma,
                                     double n, int s, double T, double sigma0,
                                     const ResolventOptions& opts = {});

/// Wavepacket of unstable modes on a y-torus of length 2 pi / dk. Nodes are the
/// positive multiples of dk inside the support; the negative ones are implied.
struct WavepacketSpec {
  double k0 = 0.0, sigma0 = 0.0;
  double plateau = 0.0, support = 0.0;  // radii about k0
  double dk = 0.0;
  std::vector<int> node_index;          // m with k_m = m dk
  std::vector<double> k_nodes, f1;

  double ly() const { return 2.0 * M_PI / dk; }
};

/// Smooth even cutoff: 1 for |k - k0| <= plateau, 0 beyond support, C-infinity.
double bump(const WavepacketSpec& spec, double k);

/// Support = largest symmetric interval about k0 inside {sigma~ > 3 sigma0 / 4},
/// plateau = half of it, nodes_per_radius nodes across one support radius.
WavepacketSpec make_wavepacket_spec(const GrowthCurve& curve, int nodes_per_radius = 16);

/// v1(k, .) at every node, sign-aligned along k. Throws NumericalError when
/// adjacent eigenvectors overlap by less than 0.9.
struct WavepacketModes {
  WavepacketSpec spec;
  std::vector<double> sigma;
  std::vector<ModePair> v1;
};

WavepacketModes wavepacket_modes(const WavepacketSpec& spec, const SolitonProfile& p, const ModelSpec& model,
                                 const GrowthOptions& growth = {});

/// Real field V1(t) sampled on the profile grid times ny points in y.
Field2D build_wavepacket(const WavepacketModes& modes, const Grid1D& g, double t, int ny);
/// |V1(t)|_{L2} by Parseval over the nodes.
double wavepacket_norm(const WavepacketModes& modes, const Grid1D& g, double t);

struct WavepacketFit {
  std::vector<double> t, l2, compensated;
  double rate = 0.0;              // slope of ln|V1| on [T/2, T]
  double compensated_rate = 0.0;  // slope of ln(|V1| (1+t)^{1/4}) on [T/2, T]
  double band = 0.0;              // max/min of the compensated amplitude on [0, T]
};

WavepacketFit wavepacket_history(const WavepacketModes& modes, const Grid1D& g, double T, int samples = 401);

/// Quadratic part of the (rho, phi) equations in the moving frame for the ordered
/// pair of transverse modes (a at ka, b at kb); the result lives at ka + kb.
ModePair quadratic_source(const SolitonProfile& p, const ModelSpec& model, const ModePair& a,
                          const ModePair& b);

struct CorrectionResult {
  std::vector<double> t, l2;
  std::vector<int> totals;              // total index M >= 0 propagated
  std::vector<ModePair> final_modes;    // v_M(T)
  double rate = 0.0;                    // slope of ln|V2| on [T/2, T]
  double shape_max = 0.0;               // max of ln|V2| - 2 sigma0 t + ln(1+t)/2
};

/// Second-order correction V2: dV2/dt = JL V2 + R2(V1, V1), V2(0) = 0.
CorrectionResult build_correction_v2(const WavepacketModes& modes, const SolitonProfile& p,
                                     const ModelSpec& model, double T, double dt, int jobs = 0);

/// |v(t)| for dv/dt = JL(k1+k2) v + Q(e^{s1 t} w1, e^{s2 t} w2) + Q(e^{s2 t} w2, e^{s1 t} w1), v(0) = 0.
ModeTrajectory propagate_pair(const SolitonProfile& p, const ModelSpec& model, const ModePair& w1, double s1,
                              const ModePair& w2, double s2, double T, double dt);

/// Root of eps e^{sigma0 T} (1+T)^{-1/4} = kappa. Requires 0 < eps < kappa < 1.
double t_star(double eps, double kappa, double sigma0);

}  // namespace ek
