#include "ek/evolution.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "ek/dense.hpp"
#include "ek/error.hpp"
#include "ek/fft.hpp"
#include "ek/parallel.hpp"

namespace ek {

using cd = std::complex<double>;

namespace {

Eigen::VectorXcd stack(const ModePair& u) {
  Eigen::VectorXcd v(u.u1.size() + u.u2.size());
  v << u.u1, u.u2;
  return v;
}

ModePair unstack(const Eigen::VectorXcd& v, double k) {
  const Eigen::Index n = v.size() / 2;
  return {v.head(n), v.tail(n), k};
}

Eigen::VectorXcd mat_apply(const Eigen::MatrixXd& a, const Eigen::VectorXcd& v) {
  Eigen::VectorXcd out(a.rows());
  out.real() = a * v.real();
  out.imag() = a * v.imag();
  return out;
}

double spectral_radius_estimate(const Eigen::MatrixXd& a) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::VectorXd x(a.rows());
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = u(rng);
  x.normalize();
  double est = 0.0;
  for (int it = 0; it < 40; ++it) {
    Eigen::VectorXd y = a * x;
    est = y.norm();
    if (est == 0.0) return 0.0;
    x = y / est;
  }
  return est;
}

// Real operator acting on stacked (u1, u2) through one 2x2 block per Fourier bin.
class FourierBlocks {
 public:
  using Block = std::array<cd, 4>;

  FourierBlocks(int n, std::vector<Block> blocks) : n_(n), blocks_(std::move(blocks)) {}

  Eigen::VectorXcd operator()(const Eigen::VectorXcd& u) const {
    Eigen::VectorXcd out(2 * n_);
    Eigen::VectorXd ra(n_), rb(n_);
    apply_real(Eigen::VectorXd(u.real()), ra, rb);
    out.head(n_).real() = ra;
    out.tail(n_).real() = rb;
    apply_real(Eigen::VectorXd(u.imag()), ra, rb);
    out.head(n_).imag() = ra;
    out.tail(n_).imag() = rb;
    return out;
  }

  void apply_real(const Eigen::VectorXd& u, Eigen::VectorXd& ra, Eigen::VectorXd& rb) const {
    std::vector<cd> a(n_ / 2 + 1), b(n_ / 2 + 1);
    fft::r2c(n_, u.data(), a.data());
    fft::r2c(n_, u.data() + n_, b.data());
    for (int m = 0; m <= n_ / 2; ++m) {
      const Block& B = blocks_[m];
      const cd x = a[m], y = b[m];
      a[m] = B[0] * x + B[1] * y;
      b[m] = B[2] * x + B[3] * y;
    }
    fft::c2r(n_, a.data(), ra.data());
    fft::c2r(n_, b.data(), rb.data());
  }

  Eigen::MatrixXd matrix() const {
    Eigen::MatrixXd S(2 * n_, 2 * n_);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(2 * n_), ra(n_), rb(n_);
    for (int j = 0; j < 2 * n_; ++j) {
      e.setZero();
      e[j] = 1.0;
      apply_real(e, ra, rb);
      S.col(j) << ra, rb;
    }
    return S;
  }

 private:
  int n_;
  std::vector<Block> blocks_;
};

struct EndstateSymbol {
  double rho, K, dg0, v;
};

EndstateSymbol endstate_symbol(const SolitonProfile& p, const ModelSpec& model) {
  const ClosureValues cv = model.eval(p.end.rho_inf);
  return {p.end.rho_inf, cv.K, cv.dg0, p.end.u_inf - p.c};
}

// JL_inf(k) has symbol -i xi v I + [[0, rho q], [-(K q + g'), 0]] with q = xi^2 + k^2;
// xi is the first-derivative symbol, so the Nyquist bin carries xi = 0 as in D1.
FourierBlocks endstate_generator(const Grid1D& g, const EndstateSymbol& s, double k) {
  const int n = g.n();
  std::vector<FourierBlocks::Block> blocks(n / 2 + 1);
  for (int m = 0; m <= n / 2; ++m) {
    const double xi = m == n / 2 ? 0.0 : g.wavenumber(m);
    const double q = xi * xi + k * k;
    const cd adv(0.0, -xi * s.v);
    blocks[m] = {adv, s.rho * q, -(s.K * q + s.dg0), adv};
  }
  return {n, std::move(blocks)};
}

FourierBlocks endstate_flow(const Grid1D& g, const EndstateSymbol& s, double k, double h) {
  const int n = g.n();
  std::vector<FourierBlocks::Block> blocks(n / 2 + 1);
  for (int m = 0; m <= n / 2; ++m) {
    const double xi = m == n / 2 ? 0.0 : g.wavenumber(m);
    const double q = xi * xi + k * k;
    const double alpha = s.rho * q, beta = s.K * q + s.dg0;
    const double w2 = alpha * beta;
    double cs = 1.0, sw = h;  // cos(w h), sin(w h) / w
    if (w2 > 0) {
      const double w = std::sqrt(w2);
      cs = std::cos(w * h);
      sw = std::sin(w * h) / w;
    } else if (w2 < 0) {
      const double w = std::sqrt(-w2);
      cs = std::cosh(w * h);
      sw = std::sinh(w * h) / w;
    }
    const cd adv = std::exp(cd(0.0, -xi * s.v * h));
    blocks[m] = {adv * cs, adv * alpha * sw, -adv * beta * sw, adv * cs};
  }
  return {n, std::move(blocks)};
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

}  // namespace

Forcing power_exponential_forcing(const ModePair& shape, double gamma, double n) {
  Forcing f;
  const Eigen::VectorXcd g = stack(shape);
  f.eval = [g, gamma, n](double t, int order) -> Eigen::VectorXcd {
    // d^m [e^{gamma t} (1+t)^{-n}] by Leibniz.
    double sum = 0.0, binom = 1.0;
    for (int i = 0; i <= order; ++i) {
      double fall = 1.0;
      for (int r = 0; r < i; ++r) fall *= -n - r;
      sum += binom * std::pow(gamma, order - i) * fall * std::pow(1.0 + t, -n - i);
      binom = binom * (order - i) / (i + 1);
    }
    return (sum * std::exp(gamma * t)) * g;
  };
  f.description = "exp(" + fmt(gamma) + " t) (1+t)^-" + fmt(n) + " g(x)";
  return f;
}

ModeTrajectory propagate_mode(const SolitonProfile& p, const ModelSpec& model, const Grid1D& g, double k,
                              const ModePair& u0, const Forcing& f, double T, double dt,
                              const PropagationOptions& opts) {
  if (!(g == p.grid)) throw ValidationError("propagate_mode: grid does not match the profile grid");
  const int n = g.n();
  if (u0.u1.size() != n || u0.u2.size() != n)
    throw ValidationError("propagate_mode: initial data length does not match grid");
  if (!(T >= 0) || !(dt > 0)) throw ValidationError("propagate_mode: need T >= 0 and dt > 0");
  if (opts.sample_every < 1) throw ValidationError("propagate_mode: sample_every must be >= 1");

  const OperatorAssembly a = assemble(p, model, k);
  const bool dense = 2 * n <= opts.expm_max_dim;
  const long steps = T > 0 ? std::max(1L, static_cast<long>(std::ceil(T / dt - 1e-9))) : 0;
  const double h = steps ? T / steps : dt;

  ModeTrajectory tr;
  tr.k = k;
  tr.method = dense ? "expm" : "ifrk4";
  tr.forcing = f ? f.description : "none";
  tr.xjk_orders = opts.xjk_orders;
  tr.xjk.resize(opts.xjk_orders.size());

  auto record = [&](double t, const Eigen::VectorXcd& U) {
    const ModePair mp = unstack(U, k);
    tr.t.push_back(t);
    tr.l2.push_back(hs_norm(g, mp, 0));
    tr.hs.push_back(hs_norm(g, mp, opts.hs_order));
    for (std::size_t o = 0; o < opts.xjk_orders.size(); ++o) tr.xjk[o].push_back(xjk_norm(g, mp, opts.xjk_orders[o]));
    if (opts.keep_snapshots) tr.snapshots.push_back(mp);
    if (opts.observer) opts.observer(t, U);
  };
  auto forcing = [&](double t) -> Eigen::VectorXcd {
    return f ? f.eval(t, 0) : Eigen::VectorXcd::Zero(2 * n);
  };

  Eigen::VectorXcd U = stack(u0);
  record(0.0, U);
  if (steps == 0) return tr;

  auto blowup = [&](double t, double radius) {
    std::ostringstream os;
    os << "integrator unstable at t=" << t << " (dt=" << h << ", spectral radius ~" << radius << ")";
    throw NumericalError(os.str());
  };

  if (dense) {
    const Eigen::MatrixXd Eh = expm(a.JL, 0.5 * h);
    const Eigen::MatrixXd E = Eh * Eh;
    Eigen::VectorXcd F0 = forcing(0.0);
    for (long s = 0; s < steps; ++s) {
      const double t = s * h;
      Eigen::VectorXcd next = mat_apply(E, U);
      if (f) {
        // Simpson rule for the Duhamel integral over one step.
        const Eigen::VectorXcd Fm = forcing(t + 0.5 * h), F1 = forcing(t + h);
        next += (h / 6.0) * (mat_apply(E, F0) + 4.0 * mat_apply(Eh, Fm) + F1);
        F0 = F1;
      }
      U = std::move(next);
      const double nu = U.norm();
      if (!std::isfinite(nu) || nu > 1e250) blowup(t + h, spectral_radius_estimate(a.JL));
      if ((s + 1) % opts.sample_every == 0 || s + 1 == steps) record((s + 1) * h, U);
    }
    return tr;
  }

  // Lawson IF-RK4: the endstate part is integrated exactly, the variable-coefficient
  // remainder R = JL - JL_inf explicitly.
  const EndstateSymbol sym = endstate_symbol(p, model);
  const Eigen::MatrixXd R = a.JL - endstate_generator(g, sym, k).matrix();
  const double radius = spectral_radius_estimate(R);
  if (h * radius > 2.5)
    throw ValidationError("propagate_mode: dt=" + fmt(h) + " does not resolve the remainder (spectral radius ~" +
                          fmt(radius) + "); need dt * radius <= 2.5");
  const FourierBlocks P1 = endstate_flow(g, sym, k, h), Ph = endstate_flow(g, sym, k, 0.5 * h);
  auto N = [&](double t, const Eigen::VectorXcd& u) {
    Eigen::VectorXcd r = mat_apply(R, u);
    if (f) r += f.eval(t, 0);
    return r;
  };
  for (long s = 0; s < steps; ++s) {
    const double t = s * h;
    const Eigen::VectorXcd k1 = N(t, U);
    const Eigen::VectorXcd PhU = Ph(U);
    const Eigen::VectorXcd k2 = N(t + 0.5 * h, Ph(U + 0.5 * h * k1));
    const Eigen::VectorXcd k3 = N(t + 0.5 * h, PhU + 0.5 * h * k2);
    const Eigen::VectorXcd k4 = N(t + h, P1(U) + h * Ph(k3));
    U = P1(U) + (h / 6.0) * (P1(k1) + 2.0 * Ph(k2 + k3) + k4);
    const double nu = U.norm();
    if (!std::isfinite(nu) || nu > 1e250) blowup(t + h, radius);
    if ((s + 1) % opts.sample_every == 0 || s + 1 == steps) record((s + 1) * h, U);
  }
  return tr;
}

double fit_rate(const std::vector<double>& t, const std::vector<double>& y, double t0, double t1) {
  double st = 0, sy = 0, stt = 0, sty = 0;
  int m = 0;
  for (std::size_t i = 0; i < t.size() && i < y.size(); ++i) {
    if (t[i] < t0 || t[i] > t1 || !(y[i] > 0)) continue;
    const double ly = std::log(y[i]);
    st += t[i];
    sy += ly;
    stt += t[i] * t[i];
    sty += t[i] * ly;
    ++m;
  }
  if (m < 2) throw NumericalError("fit_rate: fewer than two positive samples in the window");
  const double den = m * stt - st * st;
  if (den == 0.0) throw NumericalError("fit_rate: degenerate time window");
  return (m * sty - st * sy) / den;
}

ResolventResult resolvent_experiment(const SolitonProfile& p, const ModelSpec& model, double k, double gamma,
                                     double n, int s, double T, double sigma0, const ResolventOptions& opts) {
  if (!(gamma > sigma0))
    throw ValidationError("resolvent: gamma=" + fmt(gamma) + " must exceed sigma0=" + fmt(sigma0) +
                          "; the estimate is not claimed there");
  if (s < 0 || !(n >= 0) || !(T > 0)) throw ValidationError("resolvent: need s >= 0, n >= 0 and T > 0");
  const Grid1D& g = p.grid;
  const Eigen::VectorXd x = g.nodes();
  const Eigen::VectorXd gauss = (-0.5 * x.array().square()).exp();
  ModePair shape{gauss.cast<cd>(), (x.array() * gauss.array()).matrix().cast<cd>(), k};
  const Forcing F = power_exponential_forcing(shape, gamma, n);
  const OperatorAssembly a = assemble(p, model, k);

  ResolventResult res;
  res.k = k;
  res.gamma = gamma;
  res.n = n;
  res.s = s;
  res.T = T;
  res.sigma0 = sigma0;
  res.ratio.assign(s + 1, {});

  PropagationOptions po;
  po.xjk_orders = {};
  po.sample_every = opts.sample_every;
  po.observer = [&](double t, const Eigen::VectorXcd& U) {
    std::vector<Eigen::VectorXcd> D{U};
    for (int m = 1; m <= s; ++m) D.push_back(mat_apply(a.JL, D.back()) + F.eval(t, m - 1));
    const double w = std::pow(1.0 + t, n) * std::exp(-gamma * t);
    res.t.push_back(t);
    for (int j = 0; j <= s; ++j) res.ratio[j].push_back(xjk_norm(g, unstack(D[s - j], k), j) * w);
  };
  propagate_mode(p, model, g, k, ModePair::zero(g.n(), k), F, T, opts.dt, po);

  res.bounded = true;
  for (int j = 0; j <= s; ++j) {
    double sup = 0, first = 0, last = 0, peak = 0;
    for (std::size_t i = 0; i < res.t.size(); ++i) {
      const double r = res.ratio[j][i];
      if (r > sup) {
        sup = r;
        peak = res.t[i];
      }
      if (res.t[i] <= 0.25 * T) first = std::max(first, r);
      if (res.t[i] >= 0.75 * T) last = std::max(last, r);
    }
    const double trend = first > 0 ? last / first : (last > 0 ? INFINITY : 0.0);
    res.sup_ratio.push_back(sup);
    res.peak_time.push_back(peak);
    res.trend.push_back(trend);
    if (!(trend <= opts.trend_limit)) res.bounded = false;
  }
  return res;
}

double bump(const WavepacketSpec& spec, double k) {
  const double d = std::abs(std::abs(k) - spec.k0);
  if (d <= spec.plateau) return 1.0;
  if (d >= spec.support) return 0.0;
  const double s = (d - spec.plateau) / (spec.support - spec.plateau);
  auto h = [](double x) { return x > 0 ? std::exp(-1.0 / x) : 0.0; };
  return h(1.0 - s) / (h(1.0 - s) + h(s));
}

WavepacketSpec make_wavepacket_spec(const GrowthCurve& curve, int nodes_per_radius) {
  if (nodes_per_radius < 2) throw ValidationError("wavepacket: nodes_per_radius must be >= 2");
  if (!(curve.sigma0 > 0) || curve.samples.empty()) throw ValidationError("wavepacket: growth curve has no instability");
  WavepacketSpec spec;
  spec.k0 = curve.k0;
  spec.sigma0 = curve.sigma0;
  const double level = 0.75 * curve.sigma0;
  // Distances from k0 to the first sample on either side at or below the level,
  // then linear interpolation between that sample and its inner neighbour.
  auto crossing = [&](int dir) {
    const auto& S = curve.samples;
    auto it = std::lower_bound(S.begin(), S.end(), curve.k0, [](const GrowthSample& a, double v) { return a.k < v; });
    int i = static_cast<int>(it - S.begin());
    if (dir < 0) --i;
    double prev_k = curve.k0, prev_s = curve.sigma0;
    for (; i >= 0 && i < static_cast<int>(S.size()); i += dir) {
      if (S[i].sigma <= level) {
        const double t = (prev_s - level) / (prev_s - S[i].sigma);
        return std::abs(prev_k + t * (S[i].k - prev_k) - curve.k0);
      }
      prev_k = S[i].k;
      prev_s = S[i].sigma;
    }
    return dir < 0 ? curve.k0 : std::abs(curve.k_max - curve.k0);
  };
  // Interpolating a concave curve underestimates it, so the interval stays inside
  // the super-level set; the margin guards against the coarse spacing.
  spec.support = 0.98 * std::min({crossing(-1), crossing(+1), curve.k0});
  spec.plateau = 0.5 * spec.support;
  spec.dk = spec.support / nodes_per_radius;
  const int lo = static_cast<int>(std::floor((spec.k0 - spec.support) / spec.dk)) + 1;
  const int hi = static_cast<int>(std::ceil((spec.k0 + spec.support) / spec.dk)) - 1;
  for (int m = std::max(lo, 1); m <= hi; ++m) {
    const double k = m * spec.dk;
    const double f = bump(spec, k);
    if (f <= 0) continue;
    spec.node_index.push_back(m);
    spec.k_nodes.push_back(k);
    spec.f1.push_back(f);
  }
  if (spec.node_index.empty()) throw NumericalError("wavepacket: no quadrature node inside the support");
  return spec;
}

WavepacketModes wavepacket_modes(const WavepacketSpec& spec, const SolitonProfile& p, const ModelSpec& model,
                                 const GrowthOptions& growth) {
  const std::size_t nn = spec.k_nodes.size();
  WavepacketModes out;
  out.spec = spec;
  out.sigma.resize(nn);
  out.v1.resize(nn, ModePair::zero(p.grid.n(), 0.0));
  std::size_t c = 0;
  for (std::size_t i = 1; i < nn; ++i)
    if (std::abs(spec.k_nodes[i] - spec.k0) < std::abs(spec.k_nodes[c] - spec.k0)) c = i;
  const GrowthSample center = growth_rate(p, model, spec.k_nodes[c], growth);
  if (!center.mode) throw NumericalError("wavepacket: no unstable mode at the central node");
  out.sigma[c] = center.sigma;
  out.v1[c] = *center.mode;

  auto track = [&](std::size_t from, std::size_t to) {
    const double k = spec.k_nodes[to];
    const OperatorAssembly a = assemble(p, model, k, growth.form);
    const Eigen::VectorXcd start = stack(out.v1[from]);
    auto [lambda, vec] = refine_eigenpair(a, cd(out.sigma[from], 0.0), &start);
    ModePair m = normalize_mode(p.grid, vec, k);
    const double dx = p.grid.dx();
    const cd ov = dx * (out.v1[from].u1.dot(m.u1) + out.v1[from].u2.dot(m.u2));
    if (std::abs(ov) < 0.9)
      throw NumericalError("wavepacket: adjacent eigenvectors at k=" + fmt(spec.k_nodes[from]) + " and k=" +
                           fmt(k) + " overlap by " + fmt(std::abs(ov)) + " < 0.9; refine the k grid");
    const cd rot = std::conj(ov) / std::abs(ov);
    m.u1 *= rot;
    m.u2 *= rot;
    out.sigma[to] = lambda.real();
    out.v1[to] = std::move(m);
  };
  for (std::size_t i = c; i + 1 < nn; ++i) track(i, i + 1);
  for (std::size_t i = c; i > 0; --i) track(i, i - 1);

  for (std::size_t i = 0; i < nn; ++i)
    if (!(out.sigma[i] > 0.75 * spec.sigma0))
      throw NumericalError("wavepacket: node k=" + fmt(spec.k_nodes[i]) + " has sigma=" + fmt(out.sigma[i]) +
                           " outside {sigma > 3 sigma0 / 4}");
  return out;
}

Field2D build_wavepacket(const WavepacketModes& modes, const Grid1D& g, double t, int ny) {
  const auto& spec = modes.spec;
  const int mmax = spec.node_index.empty() ? 0 : spec.node_index.back();
  if (ny <= 2 * mmax) throw ValidationError("wavepacket: ny=" + std::to_string(ny) + " cannot resolve index " + std::to_string(mmax));
  Field2D f(g.n(), ny, g.half_length(), spec.ly());
  for (std::size_t i = 0; i < spec.k_nodes.size(); ++i) {
    const double c = 2.0 * spec.dk * spec.f1[i] * std::exp(modes.sigma[i] * t);
    const auto& v = modes.v1[i];
    for (int j = 0; j < ny; ++j) {
      const cd e = std::exp(cd(0.0, spec.k_nodes[i] * f.y(j)));
      f.rho.col(j) += c * (v.u1 * e).real();
      f.phi.col(j) += c * (v.u2 * e).real();
    }
  }
  return f;
}

double wavepacket_norm(const WavepacketModes& modes, const Grid1D& g, double t) {
  const auto& spec = modes.spec;
  double sum = 0.0;
  for (std::size_t i = 0; i < spec.k_nodes.size(); ++i) {
    const auto& v = modes.v1[i];
    const double nv = g.dx() * (v.u1.squaredNorm() + v.u2.squaredNorm());
    const double c = spec.dk * spec.f1[i] * std::exp(modes.sigma[i] * t);
    sum += 2.0 * c * c * nv;  // +k and -k
  }
  return std::sqrt(spec.ly() * sum);
}

WavepacketFit wavepacket_history(const WavepacketModes& modes, const Grid1D& g, double T, int samples) {
  if (samples < 4 || !(T > 0)) throw ValidationError("wavepacket: need T > 0 and at least 4 samples");
  WavepacketFit fit;
  const double s0 = modes.spec.sigma0;
  std::vector<double> prefactored;
  for (int i = 0; i < samples; ++i) {
    const double t = T * i / (samples - 1);
    const double l2 = wavepacket_norm(modes, g, t);
    fit.t.push_back(t);
    fit.l2.push_back(l2);
    fit.compensated.push_back(l2 * std::pow(1.0 + t, 0.25) * std::exp(-s0 * t));
    prefactored.push_back(l2 * std::pow(1.0 + t, 0.25));
  }
  fit.rate = fit_rate(fit.t, fit.l2, 0.5 * T, T);
  fit.compensated_rate = fit_rate(fit.t, prefactored, 0.5 * T, T);
  const auto [mn, mx] = std::minmax_element(fit.compensated.begin(), fit.compensated.end());
  fit.band = *mx / *mn;
  return fit;
}

ModePair quadratic_source(const SolitonProfile& p, const ModelSpec& model, const ModePair& a, const ModePair& b) {
  const Grid1D& g = p.grid;
  const int n = g.n();
  const double ka = a.k, kb = b.k, kt = a.k + b.k;
  const Eigen::VectorXcd dra = derivative(g, a.u1, 1), drb = derivative(g, b.u1, 1);
  const Eigen::VectorXcd ddrb = derivative(g, b.u1, 2);
  const Eigen::VectorXcd dpa = derivative(g, a.u2, 1), dpb = derivative(g, b.u2, 1);
  const Eigen::VectorXcd flux = (a.u1.array() * dpb.array()).matrix();
  const Eigen::VectorXcd dflux = derivative(g, flux, 1);

  ModePair out = ModePair::zero(n, kt);
  for (int i = 0; i < n; ++i) {
    const Jet3 K = model.capillarity_jet(p.rho[i]);
    const Jet3 G = model.potential_jet(p.rho[i]);
    const double r1 = p.drho[i], r2 = p.ddrho[i];
    const cd ra = a.u1[i], rb = b.u1[i], pa = a.u2[i], pb = b.u2[i];
    // -div(rho_a grad phi_b)
    out.u1[i] = -(dflux[i] - kt * kb * ra * pb);
    // -|grad phi|^2/2 + quadratic part of K lap rho + K'|grad rho|^2/2 - g0
    out.u2[i] = -0.5 * (dpa[i] * dpb[i] - ka * kb * pa * pb) + K.d1 * ra * (ddrb[i] - kb * kb * rb) +
                0.5 * K.d2 * r2 * ra * rb + 0.5 * K.d1 * (dra[i] * drb[i] - ka * kb * ra * rb) +
                K.d2 * r1 * ra * drb[i] + 0.25 * K.d3 * r1 * r1 * ra * rb - 0.5 * G.d2 * ra * rb;
  }
  return out;
}

namespace {

struct SourceTerm {
  double rate;
  Eigen::VectorXcd q;
};

Forcing exponential_sum_forcing(std::vector<SourceTerm> terms, std::string description) {
  Forcing f;
  f.eval = [terms = std::move(terms)](double t, int order) {
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(terms.front().q.size());
    for (const auto& s : terms) out += (std::pow(s.rate, order) * std::exp(s.rate * t)) * s.q;
    return out;
  };
  f.description = std::move(description);
  return f;
}

}  // namespace

ModeTrajectory propagate_pair(const SolitonProfile& p, const ModelSpec& model, const ModePair& w1, double s1,
                              const ModePair& w2, double s2, double T, double dt) {
  const Eigen::VectorXcd q = stack(quadratic_source(p, model, w1, w2)) + stack(quadratic_source(p, model, w2, w1));
  const double k = w1.k + w2.k;
  Forcing f = exponential_sum_forcing({{s1 + s2, q}}, "quadratic source at k=" + fmt(k));
  return propagate_mode(p, model, p.grid, k, ModePair::zero(p.grid.n(), k), f, T, dt);
}

CorrectionResult build_correction_v2(const WavepacketModes& modes, const SolitonProfile& p, const ModelSpec& model,
                                     double T, double dt, int jobs) {
  const auto& spec = modes.spec;
  const Grid1D& g = p.grid;
  // Signed node list: index m, amplitude-weighted mode w = dk f1 v1, rate sigma.
  struct Node {
    int m;
    double sigma;
    ModePair w;
  };
  std::vector<Node> nodes;
  for (std::size_t i = 0; i < spec.k_nodes.size(); ++i) {
    ModePair w = modes.v1[i];
    const double c = spec.dk * spec.f1[i];
    w.u1 *= c;
    w.u2 *= c;
    ModePair wc{w.u1.conjugate(), w.u2.conjugate(), -w.k};
    nodes.push_back({spec.node_index[i], modes.sigma[i], std::move(w)});
    nodes.push_back({-spec.node_index[i], modes.sigma[i], std::move(wc)});
  }
  const double k_nyq = g.wavenumber(g.n() / 2);
  std::map<int, std::vector<std::pair<int, int>>> pairs;
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i)
    for (int j = 0; j < static_cast<int>(nodes.size()); ++j) {
      const int M = nodes[i].m + nodes[j].m;
      if (M < 0) continue;
      if (M * spec.dk >= k_nyq) throw NumericalError("V2: total wavenumber outside the resolved band");
      pairs[M].emplace_back(i, j);
    }

  CorrectionResult res;
  for (const auto& [M, _] : pairs) res.totals.push_back(M);
  std::vector<ModeTrajectory> traj(res.totals.size());
  std::vector<ModePair> finals(res.totals.size(), ModePair::zero(g.n(), 0.0));
  parallel_for(res.totals.size(), jobs, [&](std::size_t idx) {
    const int M = res.totals[idx];
    const double k = M * spec.dk;
    std::vector<SourceTerm> terms;
    for (auto [i, j] : pairs.at(M))
      terms.push_back({nodes[i].sigma + nodes[j].sigma, stack(quadratic_source(p, model, nodes[i].w, nodes[j].w))});
    Forcing f = exponential_sum_forcing(std::move(terms), "V2 source");
    PropagationOptions po;
    po.xjk_orders = {};
    po.observer = [&, k](double, const Eigen::VectorXcd& U) { finals[idx] = unstack(U, k); };
    traj[idx] = propagate_mode(p, model, g, k, ModePair::zero(g.n(), k), f, T, dt, po);
  });

  const std::size_t ns = traj.front().t.size();
  res.t = traj.front().t;
  res.l2.assign(ns, 0.0);
  for (std::size_t idx = 0; idx < traj.size(); ++idx) {
    const double mult = res.totals[idx] == 0 ? 1.0 : 2.0;  // -M is the conjugate
    for (std::size_t s = 0; s < ns; ++s) res.l2[s] += mult * traj[idx].l2[s] * traj[idx].l2[s];
  }
  for (double& v : res.l2) v = std::sqrt(spec.ly() * v);
  res.final_modes = std::move(finals);
  res.rate = fit_rate(res.t, res.l2, 0.5 * T, T);
  res.shape_max = -INFINITY;
  for (std::size_t s = 0; s < ns; ++s)
    if (res.l2[s] > 0)
      res.shape_max = std::max(res.shape_max, std::log(res.l2[s]) - 2.0 * spec.sigma0 * res.t[s] +
                                                  0.5 * std::log(1.0 + res.t[s]));
  return res;
}

double t_star(double eps, double kappa, double sigma0) {
  if (!(eps > 0) || !(kappa < 1) || !(sigma0 > 0))
    throw ValidationError("t_star: need eps > 0, kappa < 1 and sigma0 > 0");
  if (!(eps < kappa)) throw ValidationError("t_star: eps must be below kappa, otherwise T* <= 0");
  // h is convex with h(0) < 0, so the positive root is unique.
  auto h = [&](double T) { return std::log(eps / kappa) + sigma0 * T - 0.25 * std::log1p(T); };
  auto dh = [&](double T) { return sigma0 - 0.25 / (1.0 + T); };
  double lo = 0.0, hi = 1.0;
  while (h(hi) <= 0) {
    lo = hi;
    hi *= 2.0;
  }
  double T = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double v = h(T);
    if (v == 0.0) break;
    (v < 0 ? lo : hi) = T;
    const double d = dh(T);
    double next = d > 0 ? T - v / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - T) <= 1e-15 * std::max(1.0, T)) {
      T = next;
      break;
    }
    T = next;
  }
  return T;
}

}  // namespace ek
