#include "ek/linop.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "ek/dense.hpp"
#include "ek/error.hpp"
#include "ek/parallel.hpp"

namespace ek {

using cd = std::complex<double>;

namespace {

Eigen::MatrixXd sandwich(const Eigen::MatrixXd& D1, const Eigen::VectorXd& a) {
  // D1^T diag(a) D1, symmetrized so that roundoff does not break symmetry.
  Eigen::MatrixXd s = D1.transpose() * (a.asDiagonal() * D1);
  return 0.5 * (s + s.transpose());
}

}  // namespace

OperatorAssembly assemble(const SolitonProfile& p, const ModelSpec& model, double k, MForm form) {
  const Grid1D& g = p.grid;
  const int n = g.n();
  OperatorAssembly a(g);
  a.k = k;
  a.form = form;
  a.rho = p.rho;
  a.K.resize(n);
  a.v = p.u.array() - p.c;
  a.m.resize(n);
  for (int i = 0; i < n; ++i) {
    const Jet3 kj = model.capillarity_jet(p.rho[i]);
    const Jet3 gj = model.potential_jet(p.rho[i]);
    const double r1 = p.drho[i], r2 = p.ddrho[i];
    a.K[i] = kj.f;
    const double quad = form == MForm::Hessian ? 0.5 * kj.d2 : kj.d1;
    a.m[i] = kj.d1 * r2 + quad * r1 * r1 - gj.d1;
  }
  a.D1 = diff_matrix(g);
  const double k2 = k * k;

  const Eigen::MatrixXd SK = sandwich(a.D1, a.K);
  Eigen::MatrixXd L11 = SK;
  L11.diagonal().array() += k2 * a.K.array() - a.m.array();
  const Eigen::MatrixXd L12 = a.v.asDiagonal() * a.D1;
  Eigen::MatrixXd L22 = sandwich(a.D1, a.rho);
  L22.diagonal() += k2 * a.rho;

  a.L.resize(2 * n, 2 * n);
  a.L << L11, L12, L12.transpose(), L22;
  a.JL.resize(2 * n, 2 * n);
  a.JL << L12.transpose(), L22, -L11, -L12;
  a.M = SK;
  a.M.diagonal().array() -= a.m.array() + a.v.array().square() / a.rho.array();
  return a;
}

OperatorAssembly assemble(const SolitonProfile& p, const ModelSpec& model, const Grid1D& g, double k,
                          MForm form) {
  if (!(g == p.grid)) {
    std::ostringstream os;
    os << "grid/profile mismatch: grid (n=" << g.n() << ", X=" << g.half_length() << ") vs profile (n="
       << p.grid.n() << ", X=" << p.grid.half_length() << "); resample the profile first";
    throw ValidationError(os.str());
  }
  return assemble(p, model, k, form);
}

namespace {

double symmetry_defect(const Eigen::MatrixXd& a) {
  const double s = a.cwiseAbs().maxCoeff();
  return s > 0 ? (a - a.transpose()).cwiseAbs().maxCoeff() / s : 0.0;
}

}  // namespace

Spectrum spectrum(const OperatorAssembly& a, Which which, bool vectors) {
  Spectrum s;
  if (which == Which::JL) {
    GenEig e = gen_eig(a.JL, vectors);
    s.values = std::move(e.values);
    s.vectors = std::move(e.vectors);
    return s;
  }
  const Eigen::MatrixXd& A = which == Which::L ? a.L : a.M;
  s.symmetry_defect = symmetry_defect(A);
  SymEig e = sym_eig(A, vectors);
  s.values = e.values.cast<cd>();
  if (vectors) s.vectors = e.vectors.cast<cd>();
  return s;
}

std::pair<cd, Eigen::VectorXcd> refine_eigenpair(const OperatorAssembly& a, cd guess,
                                                 const Eigen::VectorXcd* start) {
  const Eigen::Index n = a.JL.rows();
  // Nudge the shift off the eigenvalue so the factorization stays regular.
  const cd shift = guess + cd(1e-9 * std::max(1.0, std::abs(guess)), 0.0);
  Eigen::VectorXcd x;
  if (start && start->size() == n) {
    x = *start;
  } else {
    std::mt19937_64 rng(0x5eed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    x.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) x[i] = u(rng);
  }
  x.normalize();

  cd lambda = guess;
  auto iterate = [&](auto&& solve) {
    cd prev = lambda;
    for (int it = 0; it < 60; ++it) {
      Eigen::VectorXcd y = solve(x);
      const double yy = y.squaredNorm();
      if (!(yy > 0) || !std::isfinite(yy)) throw NumericalError("inverse iteration broke down");
      lambda = shift + x.dot(y) / yy;
      x = y / std::sqrt(yy);
      if (it >= 2 && std::abs(lambda - prev) <= 1e-14 * std::max(1.0, std::abs(lambda))) break;
      prev = lambda;
    }
  };
  if (shift.imag() == 0.0) {
    Eigen::MatrixXd A = a.JL;
    A.diagonal().array() -= shift.real();
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    iterate([&](const Eigen::VectorXcd& b) {
      Eigen::VectorXcd y(b.size());
      y.real() = lu.solve(Eigen::VectorXd(b.real()));
      y.imag() = lu.solve(Eigen::VectorXd(b.imag()));
      return y;
    });
  } else {
    Eigen::MatrixXcd A = a.JL.cast<cd>();
    A.diagonal().array() -= shift;
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(A);
    iterate([&](const Eigen::VectorXcd& b) { return Eigen::VectorXcd(lu.solve(b)); });
  }
  return {lambda, x};
}

namespace {

double tail_fraction(const Grid1D& g, const Eigen::VectorXcd& vec, double start) {
  const int n = g.n();
  double tail = 0.0, total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double w = std::norm(vec[i]) + std::norm(vec[i + n]);
    total += w;
    if (std::abs(g.x(i)) > start * g.half_length()) tail += w;
  }
  return total > 0 ? tail / total : 1.0;
}

}  // namespace

ModePair normalize_mode(const Grid1D& g, const Eigen::VectorXcd& vec, double k) {
  const int n = g.n();
  ModePair m{vec.head(n), vec.tail(n), k};
  Eigen::Index imax = 0;
  m.u1.cwiseAbs().maxCoeff(&imax);
  cd phase = m.u1[imax];
  if (std::abs(phase) == 0.0) phase = 1.0;
  const cd rot = std::conj(phase) / std::abs(phase);
  const double nrm = std::sqrt(g.dx() * (m.u1.squaredNorm() + m.u2.squaredNorm()));
  m.u1 *= rot / nrm;
  m.u2 *= rot / nrm;
  return m;
}

GrowthSample growth_rate(const SolitonProfile& p, const ModelSpec& model, double k, const GrowthOptions& opts) {
  const OperatorAssembly a = assemble(p, model, k, opts.form);
  const Eigen::VectorXcd ev = gen_eig(a.JL, false).values;
  const double radius = ev.cwiseAbs().maxCoeff();
  const double thr = std::max(opts.neutral_rel * radius, opts.unstable_abs);

  std::vector<Eigen::Index> cand;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev[i].real() > thr) cand.push_back(i);
  std::sort(cand.begin(), cand.end(), [&](auto x, auto y) {
    if (ev[x].real() != ev[y].real()) return ev[x].real() > ev[y].real();
    return ev[x].imag() > ev[y].imag();
  });

  GrowthSample s;
  s.k = k;
  bool found = false;
  for (Eigen::Index idx : cand) {
    // A conjugate partner shares the eigenvector up to conjugation.
    if (ev[idx].imag() < 0.0) {
      const bool partner = std::any_of(cand.begin(), cand.end(), [&](auto j) {
        return std::abs(ev[j] - std::conj(ev[idx])) <= 1e-10 * radius;
      });
      if (partner) {
        if (found && std::abs(s.sigma - ev[idx].real()) <= 1e-10 * radius) ++s.count_unstable;
        else ++s.count_rejected;
        continue;
      }
    }
    auto [lambda, vec] = refine_eigenpair(a, ev[idx]);
    const double tail = tail_fraction(p.grid, vec, opts.tail_start);
    if (tail >= opts.tail_mass) {
      ++s.count_rejected;
      continue;
    }
    ++s.count_unstable;
    if (!found) {
      found = true;
      s.sigma = lambda.real();
      s.sigma_imag = lambda.imag();
      s.tail_mass = tail;
      s.mode = normalize_mode(p.grid, vec, k);
    }
  }
  return s;
}

double GrowthCurve::sigma_at(double k) const {
  k = std::abs(k);
  if (samples.empty() || k >= k_max) return 0.0;
  auto it = std::lower_bound(samples.begin(), samples.end(), k,
                             [](const GrowthSample& s, double v) { return s.k < v; });
  if (it == samples.begin()) return it->sigma;
  if (it == samples.end()) return samples.back().sigma;
  const auto& b = *it;
  const auto& a = *(it - 1);
  const double t = (k - a.k) / (b.k - a.k);
  return (1 - t) * a.sigma + t * b.sigma;
}

double default_k_hi(const SolitonProfile& p, const ModelSpec& model) {
  double kmin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < p.grid.n(); ++i) kmin = std::min(kmin, model.K(p.rho[i]));
  return 4.0 * std::sqrt(std::max(0.5, 1.0 / kmin));
}

namespace {

constexpr double kInvPhi = 0.6180339887498949;

template <class F>
std::pair<double, double> golden_max(F&& f, double a, double b, double rel_tol) {
  double c = b - kInvPhi * (b - a), d = a + kInvPhi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > rel_tol * std::max(std::abs(c), 1e-12)) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  return fc >= fd ? std::make_pair(c, fc) : std::make_pair(d, fd);
}

}  // namespace

GrowthCurve scan_growth_curve(const SolitonProfile& p, const ModelSpec& model, const ScanOptions& opts) {
  if (opts.samples < 3) throw ValidationError("scan.samples must be at least 3");
  GrowthCurve curve;
  curve.options = opts.growth;
  curve.n = p.grid.n();
  curve.half_length = p.grid.half_length();
  curve.k_hi = opts.k_hi > 0 ? opts.k_hi : default_k_hi(p, model);
  const int ns = opts.samples;

  std::vector<GrowthSample> coarse(ns);
  parallel_for(ns, opts.jobs, [&](std::size_t i) {
    coarse[i] = growth_rate(p, model, curve.k_hi * static_cast<double>(i) / (ns - 1), opts.growth);
  });
  std::vector<GrowthSample> extra;
  auto eval = [&](double k) {
    extra.push_back(growth_rate(p, model, k, opts.growth));
    return extra.back().sigma;
  };

  const auto best = std::max_element(coarse.begin(), coarse.end(),
                                     [](const auto& x, const auto& y) { return x.sigma < y.sigma; });
  const double thr = opts.growth.unstable_abs;
  if (best->sigma <= thr)
    throw NumericalError("no instability detected on [0, " + std::to_string(curve.k_hi) +
                         "]: sigma~ <= threshold at every sample");
  const int ib = static_cast<int>(best - coarse.begin());

  const double ka = coarse[std::max(ib - 1, 0)].k;
  const double kb = coarse[std::min(ib + 1, ns - 1)].k;
  auto [k0, s0] = golden_max(eval, ka, kb, opts.k0_rel_tol);
  if (s0 < best->sigma) {
    k0 = best->k;
    s0 = best->sigma;
  }
  curve.k0 = k0;
  curve.sigma0 = s0;

  int iz = -1;
  for (int i = ib + 1; i < ns; ++i)
    if (coarse[i].sigma <= thr) {
      iz = i;
      break;
    }
  if (iz < 0)
    throw NumericalError("sigma~ still positive at k_hi = " + std::to_string(curve.k_hi) +
                         "; raise scan.k_hi");
  double lo = coarse[iz - 1].k, hi = coarse[iz].k;
  while (hi - lo > opts.kmax_rel_tol * hi) {
    const double mid = 0.5 * (lo + hi);
    if (eval(mid) > thr) lo = mid;
    else hi = mid;
  }
  curve.k_max = hi;

  // sigma~ depends on k only through k^2; sample a few negative wavenumbers.
  for (int i : {ib, ns / 4, ns / 2}) {
    const GrowthSample neg = growth_rate(p, model, -coarse[i].k, opts.growth);
    curve.evenness_defect = std::max(curve.evenness_defect, std::abs(neg.sigma - coarse[i].sigma));
  }

  curve.samples = std::move(coarse);
  curve.samples.insert(curve.samples.end(), extra.begin(), extra.end());
  std::stable_sort(curve.samples.begin(), curve.samples.end(),
                   [](const auto& x, const auto& y) { return x.k < y.k; });
  for (const auto& s : curve.samples) curve.max_unstable_count = std::max(curve.max_unstable_count, s.count_unstable);
  return curve;
}

std::pair<double, double> track_maximum(const SolitonProfile& p, const ModelSpec& model, double k_lo,
                                        double k_hi, double sigma_guess, double k_rel_tol, MForm form) {
  cd last(sigma_guess, 0.0);
  Eigen::VectorXcd vec;
  auto f = [&](double k) {
    const OperatorAssembly a = assemble(p, model, k, form);
    auto [lambda, v] = refine_eigenpair(a, last, vec.size() ? &vec : nullptr);
    last = cd(lambda.real(), 0.0);
    vec = v;
    return lambda.real();
  };
  return [&] {
    auto [k0, s0] = golden_max(f, k_lo, k_hi, k_rel_tol);
    return std::make_pair(s0, k0);
  }();
}

std::pair<double, double> linf_symbol(const Endstate& end, const ModelSpec& model, double xi, double k) {
  const ClosureValues c = model.eval(end.rho_inf);
  const double q = xi * xi + k * k;
  const double a = c.K * q + c.dg0;
  const double d = end.rho_inf * q;
  const double b = (end.u_inf - end.c) * xi;
  const double mean = 0.5 * (a + d);
  const double rad = std::hypot(0.5 * (a - d), b);
  return {mean - rad, mean + rad};
}

std::pair<cd, cd> jlinf_symbol_roots(const Endstate& end, const ModelSpec& model, double xi, double k) {
  const ClosureValues c = model.eval(end.rho_inf);
  const double v = end.u_inf - end.c;
  const double r = end.rho_inf;
  const double q = xi * xi + k * k;
  const double c0 = r * c.K * q * q + r * c.dg0 * k * k + (r * c.dg0 - v * v) * xi * xi;
  const cd b(0.0, -2.0 * xi * v);  // X^2 + b X + c0 = 0
  const cd disc = std::sqrt(b * b - 4.0 * c0);
  return {0.5 * (-b + disc), 0.5 * (-b - disc)};
}

bool HypothesisReport::all_pass() const {
  return !results.empty() && std::all_of(results.begin(), results.end(), [](const auto& r) { return r.pass; });
}

double kernel_defect(const OperatorAssembly& a, const SolitonProfile& p) {
  return (a.M * p.drho).norm() / p.drho.norm();
}

HypothesisReport check_hypotheses(const SolitonProfile& p, const ModelSpec& model, const HypothesisOptions& opts) {
  const Grid1D& g = p.grid;
  const int n = g.n();
  const double dx = g.dx();
  HypothesisReport rep;
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_vec = [&](int len) {
    Eigen::VectorXd v(len);
    for (int i = 0; i < len; ++i) v[i] = normal(rng);
    return v;
  };

  double kmin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) kmin = std::min(kmin, model.K(p.rho[i]));

  {
    HypothesisResult h;
    h.id = "H1";
    const double k = 0.5 * default_k_hi(p, model);
    const OperatorAssembly a = assemble(p, model, k, opts.form);
    const double alpha = sym_eig(a.L).values[0];
    const Eigen::MatrixXd& D1 = a.D1;
    double worst = std::numeric_limits<double>::infinity();
    for (int t = 0; t < opts.random_vectors; ++t) {
      const Eigen::VectorXd v = random_vec(2 * n);
      const Eigen::VectorXd v1 = v.head(n), v2 = v.tail(n);
      const double lhs = dx * v.dot(a.L * v);
      const Eigen::VectorXd d1 = D1 * v1, d2 = D1 * v2;
      double rhs = 0.0;
      for (int i = 0; i < n; ++i)
        rhs += 0.5 * a.K[i] * d1[i] * d1[i] + (k * k - 0.5) * v1[i] * v1[i] + a.rho[i] * d2[i] * d2[i] +
               (k * k - 1.0 / a.K[i]) * v2[i] * v2[i];
      rhs *= dx;
      worst = std::min(worst, (lhs - rhs) / std::abs(lhs));
    }
    h.pass = alpha > 0.0 && worst >= -1e-12;
    h.evidence = {{"k_probe", k}, {"min_eig_L", alpha}, {"explicit_bound_min_rel_margin", worst}};
    h.summary = h.pass ? "L(k) positive definite at probe k; explicit lower bound holds"
                       : (alpha <= 0.0 ? "L(k) has a nonpositive eigenvalue at probe k"
                                       : "explicit lower bound violated on a test vector");
    rep.results.push_back(std::move(h));
  }
  {
    HypothesisResult h;
    h.id = "H2";
    double worst = std::numeric_limits<double>::infinity();
    for (double k : opts.h2_probe_k) {
      double alpha_k = std::numeric_limits<double>::infinity();
      for (int i = 0; i < opts.h2_xi_samples; ++i) {
        const double xi = -opts.h2_xi_max + 2.0 * opts.h2_xi_max * i / (opts.h2_xi_samples - 1);
        alpha_k = std::min(alpha_k, linf_symbol(p.end, model, xi, k).first);
      }
      h.evidence.emplace_back("alpha_k@" + std::to_string(k), alpha_k);
      worst = std::min(worst, alpha_k);
    }
    h.pass = worst > 0.0;
    h.summary = h.pass ? "essential spectrum of L(k) bounded below by alpha_k > 0"
                       : "L_inf(k) symbol has a nonpositive eigenvalue";
    rep.results.push_back(std::move(h));
  }
  {
    HypothesisResult h;
    h.id = "H3";
    double mind = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i)
      mind = std::min({mind, 2.0 * opts.h3_k * model.K(p.rho[i]), 2.0 * opts.h3_k * p.rho[i]});
    h.pass = mind > 0.0;
    h.evidence = {{"k", opts.h3_k}, {"min_diagonal", mind}, {"min_K", kmin}};
    h.summary = h.pass ? "L'(k) = diag(2kK, 2k rho) positive" : "L'(k) has a nonpositive entry";
    rep.results.push_back(std::move(h));
  }
  {
    HypothesisResult h;
    h.id = "H4";
    const OperatorAssembly a = assemble(p, model, 0.0, opts.form);
    const Eigen::VectorXd mev = sym_eig(a.M).values;
    int neg = 0, near = 0;
    for (double e : mev) {
      if (e < -opts.negative_tol) ++neg;
      else if (e < opts.negative_tol) ++near;
    }
    const double kd = kernel_defect(a, p);
    double schur = 0.0;
    for (int t = 0; t < opts.random_vectors; ++t) {
      const Eigen::VectorXd v = random_vec(2 * n);
      const Eigen::VectorXd v1 = v.head(n), v2 = v.tail(n);
      const double lhs = dx * v.dot(a.L * v);
      const Eigen::VectorXd w = a.D1 * v2 + (a.v.array() * v1.array() / a.rho.array()).matrix();
      const double rhs = dx * (v1.dot(a.M * v1) + (a.rho.array() * w.array().square()).sum());
      schur = std::max(schur, std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs)));
    }
    const Eigen::VectorXd lev = sym_eig(a.L).values;
    const double lscale = lev.cwiseAbs().maxCoeff();
    int lneg = 0;
    for (double e : lev)
      if (e < -opts.negative_tol * lscale) ++lneg;
    h.pass = neg == 1 && near == 1 && kd < opts.kernel_tol && schur < opts.schur_tol;
    h.evidence = {{"M_negative_count", neg},        {"M_lambda_minus", mev[0]},
                  {"M_near_kernel_count", near},    {"M_kernel_defect", kd},
                  {"schur_max_rel_defect", schur},  {"L0_negative_count", lneg}};
    std::ostringstream os;
    if (h.pass) os << "M has one negative eigenvalue " << mev[0] << ", rho_c' spans its kernel";
    else os << "M: " << neg << " negative, " << near << " near-zero eigenvalues; kernel defect " << kd
            << "; Schur defect " << schur;
    h.summary = os.str();
    rep.results.push_back(std::move(h));
  }
  return rep;
}

}  // namespace ek
