#include <doctest.h>

#include <cmath>
#include <map>

#include "ek/dense.hpp"
#include "ek/error.hpp"
#include "ek/evolution.hpp"

using namespace ek;
using doctest::Approx;

namespace {

const Endstate kEnd = make_endstate(1, 0, 0.5);

const SolitonProfile& profile(int n) {
  static const SolitonProfile base = compute_profile(madelung_model(), kEnd, 1024);
  static std::map<int, SolitonProfile> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, base.resample(Grid1D(n, base.grid.half_length()))).first;
  return it->second;
}

ModePair bump(const Grid1D& g, double k) {
  ModePair u = ModePair::zero(g.n(), k);
  for (int i = 0; i < g.n(); ++i) {
    const double x = g.x(i);
    u.u1[i] = std::exp(-x * x / 2);
    u.u2[i] = std::complex<double>(0.3, 0.1) * x * std::exp(-x * x / 2);
  }
  return u;
}

GrowthCurve coarse_curve(const SolitonProfile& p) {
  ScanOptions so;
  so.samples = 24;
  so.k_hi = 1.0;
  return scan_growth_curve(p, madelung_model(), so);
}

}  // namespace

TEST_CASE("zero data and zero forcing stay zero") {
  const auto& p = profile(128);
  const auto tr = propagate_mode(p, madelung_model(), p.grid, 0.5, ModePair::zero(128, 0.5), Forcing{}, 5.0, 0.1);
  for (double v : tr.l2) CHECK(v == 0.0);
  for (std::size_t i = 1; i < tr.t.size(); ++i) CHECK(tr.t[i] > tr.t[i - 1]);
}

TEST_CASE("unstable mode grows at the eigen rate") {
  const auto& p = profile(256);
  const double k = 0.513;
  const auto gs = growth_rate(p, madelung_model(), k);
  REQUIRE(gs.mode);
  const double T = 10.0 / gs.sigma;
  const auto tr = propagate_mode(p, madelung_model(), p.grid, k, *gs.mode, Forcing{}, T, 0.05);
  CHECK(fit_rate(tr.t, tr.l2, T / 2, T) == Approx(gs.sigma).epsilon(0.01));
  CHECK(tr.method == "expm");
}

TEST_CASE("IF-RK4 path agrees with the dense exponential") {
  const auto& p = profile(128);
  const double k = 0.4;
  const auto u0 = bump(p.grid, k);
  PropagationOptions dense, rk;
  dense.keep_snapshots = rk.keep_snapshots = true;
  rk.expm_max_dim = 0;
  const auto a = propagate_mode(p, madelung_model(), p.grid, k, u0, Forcing{}, 2.0, 0.0005, dense);
  const auto b = propagate_mode(p, madelung_model(), p.grid, k, u0, Forcing{}, 2.0, 0.0005, rk);
  CHECK(b.method == "ifrk4");
  REQUIRE(a.snapshots.size() == b.snapshots.size());
  const auto& ua = a.snapshots.back();
  const auto& ub = b.snapshots.back();
  const double diff = std::sqrt((ua.u1 - ub.u1).squaredNorm() + (ua.u2 - ub.u2).squaredNorm());
  const double ref = std::sqrt(ua.u1.squaredNorm() + ua.u2.squaredNorm());
  CHECK(diff / ref < 1e-8);
}

TEST_CASE("forced response saturates at the forcing rate") {
  const auto& p = profile(128);
  const double k = 0.5;
  const auto gs = growth_rate(p, madelung_model(), k);
  const double gamma = 1.5 * gs.sigma;
  const auto f = power_exponential_forcing(bump(p.grid, k), gamma, 0.0);
  auto ratio = [&](double T) {
    const auto tr = propagate_mode(p, madelung_model(), p.grid, k, ModePair::zero(128, k), f, T, 0.05);
    double sup = 0.0;
    for (std::size_t i = 0; i < tr.t.size(); ++i) sup = std::max(sup, tr.l2[i] * std::exp(-gamma * tr.t[i]));
    return sup;
  };
  const double c1 = ratio(10.0 / gs.sigma), c2 = ratio(20.0 / gs.sigma);
  CHECK(c2 == Approx(c1).epsilon(0.05));
}

TEST_CASE("resolvent experiment rejects gamma below sigma0") {
  const auto& p = profile(128);
  CHECK_THROWS_AS(resolvent_experiment(p, madelung_model(), 0.5, 0.1, 1.0, 0, 10.0, 0.15), ValidationError);
}

TEST_CASE("resolvent experiment reports one ratio per derivative order") {
  const auto& p = profile(128);
  const auto gs = growth_rate(p, madelung_model(), 0.5);
  const auto r = resolvent_experiment(p, madelung_model(), 0.5, 1.5 * gs.sigma, 1.0, 1, 5.0 / gs.sigma, gs.sigma);
  REQUIRE(r.ratio.size() == 2);
  REQUIRE(r.trend.size() == 2);
  CHECK(r.ratio[1].front() == 0.0);  // j = s is U itself, and U(0) = 0
  CHECK(r.ratio[0].front() > 0.0);   // d/dt U(0) = F(0)
  for (const auto& row : r.ratio)
    for (double v : row) CHECK(std::isfinite(v));
}

TEST_CASE("t_star") {
  const double T = t_star(1e-3, 0.1, 0.5);
  CHECK(std::abs(1e-3 * std::exp(0.5 * T) * std::pow(1 + T, -0.25) - 0.1) < 1e-12);
  CHECK_THROWS_AS(t_star(0.1, 0.1, 0.5), ValidationError);
  CHECK_THROWS_AS(t_star(0.5, 0.1, 0.5), ValidationError);
  const double T2 = t_star(0.5e-3, 0.1, 0.5);
  CHECK(T2 - T == Approx(std::log(2.0) / 0.5).epsilon(0.05));
  CHECK(t_star(1e-4, 0.1, 0.5) > T);
  CHECK(t_star(1e-3, 0.2, 0.5) > T);
}

TEST_CASE("wavepacket support and Parseval at t = 0") {
  const auto& p = profile(128);
  const auto curve = coarse_curve(p);
  const auto spec = make_wavepacket_spec(curve, 4);
  CHECK(spec.plateau == Approx(spec.support / 2));
  for (double k : spec.k_nodes) CHECK(curve.sigma_at(k) > 0.75 * curve.sigma0);
  CHECK(bump(spec, spec.k0) == Approx(1.0));
  CHECK(bump(spec, spec.k0 + spec.support) == 0.0);
  CHECK(bump(spec, spec.k0 + 0.3 * spec.support) == Approx(bump(spec, spec.k0 - 0.3 * spec.support)));

  const auto modes = wavepacket_modes(spec, p, madelung_model());
  int ny = 16;
  while (ny <= 2 * spec.node_index.back()) ny *= 2;
  const Field2D F = build_wavepacket(modes, p.grid, 0.0, ny);
  const double field = std::sqrt(F.dx() * F.dy() * (F.rho.squaredNorm() + F.phi.squaredNorm()));
  CHECK(field == Approx(wavepacket_norm(modes, p.grid, 0.0)).epsilon(1e-10));
  for (double s : modes.sigma) CHECK(s <= curve.sigma0 * 1.005);
}

TEST_CASE("quadratic source vanishes for zero first-order data") {
  const auto& p = profile(128);
  const auto z = ModePair::zero(128, 0.5);
  const auto q = quadratic_source(p, madelung_model(), z, z);
  CHECK(q.u1.cwiseAbs().maxCoeff() == 0.0);
  CHECK(q.u2.cwiseAbs().maxCoeff() == 0.0);
  CHECK(q.k == Approx(1.0));
}

TEST_CASE("single pair correction grows at twice the mode rate") {
  const auto& p = profile(256);
  const double k = 0.513;
  const auto gs = growth_rate(p, madelung_model(), k);
  REQUIRE(gs.mode);
  const double T = 10.0 / gs.sigma;
  const auto tr = propagate_pair(p, madelung_model(), *gs.mode, gs.sigma, *gs.mode, gs.sigma, T, 0.05);
  CHECK(tr.l2.front() == 0.0);
  CHECK(growth_rate(p, madelung_model(), 2 * k).sigma <= 1e-8);  // 2 k0 lies beyond k_max
  CHECK(fit_rate(tr.t, tr.l2, T / 2, T) == Approx(2 * gs.sigma).epsilon(0.03));
}
