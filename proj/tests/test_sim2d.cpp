

#include <doctest.h>

#include <cmath>
#include <map>

#include "ek/error.hpp"
#include "ek/fft.hpp"
#include "ek/sim2d.hpp"

using namespace ek;
using doctest::Approx;

namespace {

const Endstate kEnd = make_endstate(1, 0, 0.5);
constexpr double kK0 = 0.51300250;

const SolitonProfile& profile(int n) {
  static const SolitonProfile base = compute_profile(madelung_model(), kEnd, 1024);
  static std::map<int, SolitonProfile> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, base.resample(Grid1D(n, base.grid.half_length()))).first;
  return it->second;
}

// f(x - a) by spectral interpolation, Nyquist kept (real part of the symmetric split).
Eigen::VectorXd shift(const Grid1D& g, const Eigen::VectorXd& f, double a) {
  const int n = g.n();
  Eigen::VectorXcd h(n / 2 + 1);
  fft::r2c(n, f.data(), h.data());
  for (int m = 0; m <= n / 2; ++m) {
    const std::complex<double> e = std::exp(std::complex<double>(0, -g.wavenumber(m) * a));
    h[m] *= (m == n / 2) ? std::complex<double>(e.real(), 0) : e;
  }
  Eigen::VectorXd out(n);
  fft::c2r(n, h.data(), out.data());
  return out;
}

// Zero-mean periodic antiderivative.
Eigen::VectorXd antiderivative(const Grid1D& g, const Eigen::VectorXd& f) {
  const int n = g.n();
  Eigen::VectorXcd h(n / 2 + 1);
  fft::r2c(n, f.data(), h.data());
  h[0] = 0;
  h[n / 2] = 0;
  for (int m = 1; m < n / 2; ++m) h[m] /= std::complex<double>(0, g.wavenumber(m));
  Eigen::VectorXd out(n);
  fft::c2r(n, h.data(), out.data());
  return out;
}

double l2(const Field2D& a) { return std::sqrt(a.dx() * a.dy() * (a.rho.squaredNorm() + a.phi.squaredNorm())); }

}  // namespace

TEST_CASE("endstate in a moving frame is a fixed point") {
  const auto end = make_endstate(1.2, 0.2, 0.5);
  const auto p = constant_profile(end, Grid1D(64, 10.0));
  const Sim2D sim(madelung_model(), p, 8, 6.0);
  const Field2D s = sim.base_state();
  const Field2D r = sim.rhs(s);
  CHECK(r.rho.cwiseAbs().maxCoeff() < 1e-14);
  CHECK(r.phi.cwiseAbs().maxCoeff() - r.phi.cwiseAbs().minCoeff() < 1e-14);

  Field2D t = s;
  for (int i = 0; i < 100; ++i) sim.step(t, 0.05);
  CHECK((t.rho - s.rho).cwiseAbs().maxCoeff() < 1e-10);
  const Eigen::MatrixXd dphi = t.phi.array() - t.phi.mean();
  CHECK(dphi.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("embedded soliton is steady to discretization accuracy") {
  const Sim2D sim(madelung_model(), profile(256), 8, 2 * M_PI / kK0);
  const Field2D r = sim.rhs(sim.base_state());
  CHECK(r.rho.cwiseAbs().maxCoeff() < 1e-8);
  CHECK(sim.ddx(r.phi).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("vacuum floor aborts the right-hand side") {
  const Sim2D sim(madelung_model(), profile(256), 8, 2 * M_PI / kK0);
  Field2D s = sim.base_state();
  s.rho(128, 3) = 1e-7;
  CHECK_THROWS_AS(sim.rhs(s), NumericalError);
}

TEST_CASE("mass is conserved by the step") {
  const auto& p = profile(256);
  const Sim2D sim(madelung_model(), p, 8, 2 * M_PI / kK0);
  Field2D s = sim.base_state();
  for (int i = 0; i < s.nx; ++i)
    for (int j = 0; j < s.ny; ++j) {
      const double x = s.x(i), y = sim.y(j);
      s.rho(i, j) += 1e-2 * std::exp(-x * x) * std::cos(kK0 * y) + 3e-3 * std::exp(-(x - 1) * (x - 1));
      s.phi(i, j) += 2e-3 * std::exp(-x * x / 2) * std::sin(2 * kK0 * y);
    }
  const double m0 = sim.mass(s), total = p.rho.sum() * sim.dx() * sim.ly();
  const double dt = sim.default_dt();
  for (int i = 0; i < 200; ++i) sim.step(s, dt);
  CHECK(std::abs(sim.mass(s) - m0) / total < 1e-10);
}

TEST_CASE("dt halving shows high-order self-convergence") {
  const auto& p = profile(256);
  const Sim2D sim(madelung_model(), p, 8, 2 * M_PI / kK0);
  Field2D s0 = sim.base_state();
  for (int i = 0; i < s0.nx; ++i)
    for (int j = 0; j < s0.ny; ++j) {
      const double x = s0.x(i), y = sim.y(j);
      s0.rho(i, j) += 1e-2 * std::exp(-x * x) * (std::cos(kK0 * y) + 0.5 * std::sin(3 * kK0 * y + 0.4 * x));
    }
  const double T = 1.0, dt = sim.default_dt();
  auto run = [&](double h) {
    Field2D s = s0;
    const int steps = static_cast<int>(std::lround(T / h));
    for (int i = 0; i < steps; ++i) sim.step(s, h);
    return s;
  };
  const double h = T / std::ceil(T / dt);
  const Field2D a = run(h), b = run(h / 2), c = run(h / 4);
  Field2D ab = a, bc = b;
  ab.rho -= b.rho, ab.phi -= b.phi;
  bc.rho -= c.rho, bc.phi -= c.phi;
  const double order = std::log2(l2(ab) / l2(bc));
  CAPTURE(l2(ab));
  CAPTURE(l2(bc));
  CHECK(order >= 2.0);
}

TEST_CASE("unperturbed soliton keeps a negligible projected perturbation") {
  const auto& p = profile(256);
  const Sim2D sim(madelung_model(), p, 8, 2 * M_PI / kK0);
  RunOptions o;
  o.T = 1.0 / 0.1596;
  o.sample_every = 50;
  o.sigma0 = 0.1596;
  o.band = default_band(kK0);
  const RunRecord r = simulate(sim, sim.base_state(), o);
  for (double v : r.pi_norm) CHECK(v < 1e-9);
  for (double v : r.mass_defect) CHECK(v < 1e-10);
  CHECK_FALSE(r.escaped);
}

TEST_CASE("Pi projection") {
  const auto& p = profile(256);
  const double ly = 2 * M_PI / (kK0 / 2);  // k0 is the second torus harmonic
  const Sim2D sim(madelung_model(), p, 16, ly);
  const auto band = default_band(kK0);
  CHECK(band(0.0) == 0.0);
  CHECK(band(kK0) == 1.0);
  CHECK(band(-kK0) == 1.0);
  CHECK(band(kK0 / 2) == 0.0);

  Field2D flat = sim.base_state();
  for (int i = 0; i < flat.nx; ++i) flat.rho.row(i).array() += 1e-2 * std::exp(-flat.x(i) * flat.x(i));
  const Field2D z = pi_project(sim, flat, band);
  CHECK(z.rho.cwiseAbs().maxCoeff() < 1e-15);
  CHECK(z.phi.cwiseAbs().maxCoeff() < 1e-15);

  Field2D pass = sim.base_state(), stop = sim.base_state();
  Eigen::MatrixXd g0(flat.nx, flat.ny), g1(flat.nx, flat.ny);
  for (int i = 0; i < flat.nx; ++i)
    for (int j = 0; j < flat.ny; ++j) {
      const double gx = std::exp(-flat.x(i) * flat.x(i) / 3);
      g0(i, j) = gx * std::cos(kK0 * sim.y(j));
      g1(i, j) = gx * std::cos(kK0 / 2 * sim.y(j));
    }
  pass.rho += g0;
  pass.phi += 0.5 * g0;
  stop.rho += g1;
  stop.phi += g1;
  const Field2D a = pi_project(sim, pass, band), b = pi_project(sim, stop, band);
  CHECK((a.rho - g0).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((a.phi - 0.5 * g0).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(b.rho.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(b.phi.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("orbital distance recovers a shifted soliton") {
  const auto& p = profile(512);  // at 256 the profile is band-limited only to ~1e-6
  const Sim2D sim(madelung_model(), p, 8, 2 * M_PI / kK0);
  const double a = 3.7 * sim.dx();
  const Eigen::VectorXd rho = shift(p.grid, p.rho, a);
  const Eigen::VectorXd psi = antiderivative(p.grid, Eigen::VectorXd(shift(p.grid, p.u, a) - p.u));
  Field2D s = sim.base_state();
  s.rho = rho.replicate(1, 8);
  s.phi = psi.replicate(1, 8);
  const auto [d, shift_found] = orbital_distance(sim, s);
  CHECK(d < 1e-10);
  CHECK(std::abs(shift_found - a) < 1e-6);

  const auto [d0, a0] = orbital_distance(sim, sim.base_state());
  CHECK(d0 < 1e-12);
  CHECK(std::abs(a0) < 1e-9);
}

TEST_CASE("orbital distance of a y-dependent bump") {
  const auto& p = profile(256);
  const Sim2D sim(madelung_model(), p, 8, 2 * M_PI / kK0);
  Field2D s = sim.base_state();
  const double delta = 1e-3;
  double norm2 = 0.0;
  for (int i = 0; i < s.nx; ++i)
    for (int j = 0; j < s.ny; ++j) {
      const double b = std::exp(-std::pow(s.x(i) - 0.5, 2)) * std::cos(kK0 * sim.y(j));
      s.rho(i, j) += delta * b;
      norm2 += b * b;
    }
  const auto [d, a] = orbital_distance(sim, s);
  CHECK(d == Approx(delta * std::sqrt(norm2 * sim.dx() * sim.dy())).epsilon(0.01));
}

TEST_CASE("orbital distance of a constant state is shift independent") {
  const auto& p = profile(256);
  const Sim2D sim(madelung_model(), p, 8, 2 * M_PI / kK0);
  Field2D s = sim.base_state();
  const double ubar = p.u.mean();
  const Eigen::VectorXd psi = antiderivative(p.grid, Eigen::VectorXd(ubar - p.u.array()));
  s.rho.setConstant(1.0);
  s.phi = psi.replicate(1, 8);
  const double ref = std::sqrt(sim.dx() * sim.ly() *
                               ((1.0 - p.rho.array()).square().sum() + (ubar - p.u.array()).square().sum()));
  const auto [d, a] = orbital_distance(sim, s);
  CHECK(d == Approx(ref).epsilon(1e-10));
  CHECK(soliton_norm(sim) == Approx(std::sqrt(sim.dx() * sim.ly() *
                                              ((1.0 - p.rho.array()).square().sum() + p.u.array().square().sum())))
                                 .epsilon(1e-12));
}

TEST_CASE("Madelung variables") {
  const auto a = madelung_model();
  CHECK(madelung_G(a, 4.0, 1.0) - madelung_G(a, 1.0, 1.0) == Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(madelung_G(a, 1.0, 1.0) == 0.0);
  CHECK(madelung_A(a, 0.3) == Approx(0.5));
  CHECK(madelung_A(a, 7.0) == Approx(0.5));
  const auto b = constant_k_model();
  CHECK(madelung_G(b, 4.0, 1.0) == Approx(2.0).epsilon(1e-10));

  const auto p = constant_profile(make_endstate(1, 0.3, 0.5), Grid1D(64, 8.0));
  const Sim2D sim(a, p, 8, 5.0);
  const auto m = madelung_diagnostics(sim, sim.base_state(), 1.0);
  CHECK(m.gauge_norm < 1e-14);
  CHECK((m.zx.real().array() - 0.3).abs().maxCoeff() < 1e-14);
  CHECK(m.zx.imag().cwiseAbs().maxCoeff() < 1e-14);
  CHECK(m.zy.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("log-window fit") {
  std::vector<double> t, y;
  for (int i = 0; i < 50; ++i) {
    t.push_back(0.5 * i);
    y.push_back(1e-5 * std::exp(0.3 * t.back()));
  }
  const auto [slope, resid] = fit_log_window(t, y, 2e-5, 1e-2);
  CHECK(slope == Approx(0.3).epsilon(1e-12));
  CHECK(resid < 1e-12);
}

TEST_CASE("rhs linearization matches JL on a single mode") {
  const auto& p = profile(512);
  const Sim2D sim(madelung_model(), p, 8, 2 * M_PI / kK0);
  const auto gs = growth_rate(p, madelung_model(), kK0);
  REQUIRE(gs.mode);
  const auto a = assemble(p, madelung_model(), kK0);
  const int n = p.grid.n();
  Eigen::VectorXcd v(2 * n);
  v << gs.mode->u1, gs.mode->u2;
  const Eigen::VectorXcd Jv = a.JL * v;
  const double eta = 1e-4;  // central difference; below this roundoff dominates at high wavenumbers
  const Field2D up = sim.rhs(sim.perturbed_state(*gs.mode, eta));
  const Field2D um = sim.rhs(sim.perturbed_state(*gs.mode, -eta));
  Field2D ref = sim.perturbed_state(ModePair{Jv.head(n), Jv.tail(n), kK0}, 1.0);
  ref.rho -= sim.base_state().rho;
  Field2D err = ref;
  err.rho = (up.rho - um.rho) / (2 * eta) - ref.rho;
  err.phi = (up.phi - um.phi) / (2 * eta) - ref.phi;
  CHECK(l2(err) / l2(ref) < 1e-6);
}

TEST_CASE("instability experiment validates its inputs") {
  InstabilityConfig c;
  c.eps = {0.5};
  c.kappa = 0.1;
  CHECK_THROWS_AS(run_instability_experiment(profile(256), madelung_model(), kK0, 0.16, c), ValidationError);
  c.eps = {1e-3};
  CHECK_THROWS_AS(run_instability_experiment(profile(256), madelung_model(), 0.0, 0.16, c), ValidationError);
}

TEST_CASE("linear regime follows single-mode propagation") {
  const auto& p = profile(512);
  const Sim2D sim(madelung_model(), p, 4, 2 * M_PI / kK0);
  const auto gs = growth_rate(p, madelung_model(), kK0);
  REQUIRE(gs.mode);
  const double T = 2.0 / gs.sigma, eps = 1e-5;

  PropagationOptions po;
  po.expm_max_dim = 2 * p.grid.n();
  po.keep_snapshots = true;
  const auto tr = propagate_mode(p, madelung_model(), p.grid, kK0, *gs.mode, Forcing{}, T, T / 8, po);
  const Field2D ref = sim.perturbed_state(tr.snapshots.back(), 1.0);

  RunOptions o;
  o.T = T;
  o.sample_every = 1 << 30;
  const RunRecord a = simulate(sim, sim.perturbed_state(*gs.mode, eps), o);
  const RunRecord b = simulate(sim, sim.perturbed_state(*gs.mode, -eps), o);
  Field2D d = ref, r = ref;
  r.rho -= sim.base_state().rho;
  d.rho = (a.final_state.rho - b.final_state.rho) / (2 * eps) - r.rho;
  d.phi = (a.final_state.phi - b.final_state.phi) / (2 * eps) - r.phi;
  d.phi.array() -= d.phi.mean();
  CHECK(l2(d) / l2(r) < 1e-6);
}
