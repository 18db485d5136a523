#include "ek/cli/session.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "ek/cli/nls_oracle.hpp"
#include "ek/error.hpp"
#include "ek/evolution.hpp"
#include "ek/linop.hpp"
#include "ek/parallel.hpp"
#include "ek/sim2d.hpp"

#ifndef EK_VERSION
#define EK_VERSION "unknown"
#endif

namespace ek::cli {

namespace fs = std::filesystem;

namespace {

class Stopwatch {
 public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_;
};

std::string sci(double v, int digits = 3) {
  std::ostringstream os;
  os.precision(digits);
  os << std::scientific << v;
  return os.str();
}

json model_json(const ModelSpec& m) { return {{"kind", m.kind()}, {"params", m.params()}}; }

double rel(double a, double b) { return std::abs(a / b - 1.0); }

double max_abs_deviation(const SolitonProfile& p, double c) {
  double err = 0.0;
  for (Eigen::Index i = 0; i < p.rho.size(); ++i)
    err = std::max(err, std::abs(p.rho[i] - oracle::grey_soliton_density(c, p.z[i])));
  return err;
}

json hypothesis_json(const HypothesisReport& rep) {
  json arr = json::array();
  for (const auto& h : rep.results) {
    json ev = json::object();
    for (const auto& [k, v] : h.evidence) ev[k] = jnum(v);
    arr.push_back({{"id", h.id}, {"pass", h.pass}, {"summary", h.summary}, {"evidence", ev}});
  }
  return arr;
}

double essential_max_re(const ModelSpec& model, const Endstate& end) {
  double worst = 0.0;
  for (int i = 0; i <= 100; ++i)
    for (int j = 0; j <= 100; ++j) {
      const double xi = -10.0 + 0.2 * i, k = -10.0 + 0.2 * j;
      if (i == 50 && j == 50) continue;
      const auto [a, b] = jlinf_symbol_roots(end, model, xi, k);
      worst = std::max({worst, std::abs(a.real()), std::abs(b.real())});
    }
  return worst;
}

GrowthOptions growth_options(const ExperimentConfig& c) {
  GrowthOptions g;
  g.tail_mass = c.scan.tail_mass;
  g.neutral_rel = c.scan.neutral_rel;
  g.unstable_abs = c.scan.unstable_abs;
  g.form = c.scan.m_form;
  return g;
}

}  // namespace

const std::vector<std::string>& verbs() {
  static const std::vector<std::string> v{"soliton",   "spectrum", "hypotheses", "growth", "wavepacket",
                                          "resolvent", "simulate", "experiment", "all"};
  return v;
}

Session::Session(ExperimentConfig cfg, Flags flags)
    : cfg_(std::move(cfg)), flags_(flags), hash_(config_hash(cfg_)), model_(cfg_.build_model()),
      out_(cfg_.out, hash_) {
  validate(cfg_);
  if (cfg_.jobs > 0) set_default_jobs(cfg_.jobs);
}

void Session::check(const std::string& id, const std::string& title, bool pass, const std::string& detail) {
  checks_.push_back({id, title, pass, detail});
  if (pass)
    spdlog::info("check {} passed: {}", id, detail);
  else
    spdlog::warn("check {} FAILED: {}", id, detail);
}

bool Session::canonical_nls() const {
  const auto& p = model_.params();
  return model_.kind() == "madelung" && p.size() == 2 && p[0] == 0.25 && p[1] == 1.0 &&
         cfg_.endstate.rho_inf == 1.0 && cfg_.endstate.u_inf == 0.0 && std::abs(cfg_.endstate.c) < 1.0;
}

const SolitonProfile& Session::profile() {
  if (!profile_) {
    Stopwatch sw;
    profile_ = compute_profile(model_, cfg_.endstate, cfg_.profile.n, cfg_.profile.tol);
    timings_["profile"] = sw.seconds();
    spdlog::info("profile: N={} X={:.4f} rho*={:.6f} ({:.2f} s)", cfg_.profile.n, profile_->grid.half_length(),
                 profile_->rho_star, timings_["profile"]);
  }
  return *profile_;
}

SolitonProfile Session::profile_at(int n) {
  const SolitonProfile& p = profile();
  if (n == p.grid.n()) return p;
  return p.resample(Grid1D(n, p.grid.half_length()));
}

GrowthCurve Session::curve() const { return read_curve(out_.dir()); }

json Session::soliton() {
  const SolitonProfile& p = profile();
  const ProfileResidual res = profile_residual(p, model_);
  std::vector<std::vector<double>> rows;
  for (Eigen::Index i = 0; i < p.rho.size(); ++i)
    rows.push_back({p.z[i], p.rho[i], p.drho[i], p.ddrho[i], p.u[i], p.du[i]});
  out_.csv("profile.csv", {"z", "rho", "drho", "ddrho", "u", "du"}, rows);
  json j;
  j["model"] = model_json(model_);
  j["endstate"] = {{"rho_inf", p.end.rho_inf}, {"u_inf", p.end.u_inf}, {"c", p.c}, {"j", p.flux()}};
  j["n"] = p.grid.n();
  j["half_length"] = p.grid.half_length();
  j["rho_star"] = p.rho_star;
  j["kappa_d"] = p.kappa_d;
  j["decay_lengths"] = p.grid.half_length() * p.kappa_d;
  j["residual_ode"] = res.ode;
  j["residual_flux"] = res.flux;
  check("soliton.residual", "profile-ODE and flux residuals", res.ode < 1e-8 && res.flux < 1e-10,
        "ode " + sci(res.ode) + ", flux " + sci(res.flux));
  if (canonical_nls()) {
    const double err = max_abs_deviation(p, p.c);
    j["closed_form_error"] = err;
    check("soliton.closed_form", "grey-soliton closed form", err < 1e-8, "max error " + sci(err));
  } else {
    j["closed_form_error"] = nullptr;
  }
  out_.write_json("soliton.json", j);
  return j;
}

json Session::spectrum() {
  const SolitonProfile p = profile_at(cfg_.scan.n);
  ScanOptions so;
  so.samples = cfg_.scan.samples;
  so.k_hi = cfg_.scan.k_hi;
  so.jobs = cfg_.jobs;
  so.growth = growth_options(cfg_);
  Stopwatch sw;
  const GrowthCurve c = scan_growth_curve(p, model_, so);
  timings_["scan"] = sw.seconds();
  spdlog::info("scan: k0={:.8f} sigma0={:.10f} k_max={:.8f} ({:.1f} s)", c.k0, c.sigma0, c.k_max, timings_["scan"]);

  std::vector<std::vector<double>> rows;
  for (const auto& s : c.samples)
    rows.push_back({s.k, s.sigma, s.sigma_imag, double(s.count_unstable), double(s.count_rejected), s.tail_mass});
  out_.csv("curve.csv", {"k", "sigma", "sigma_imag", "count_unstable", "count_rejected", "tail_mass"}, rows,
           {{"k0", num(c.k0)},
            {"sigma0", num(c.sigma0)},
            {"k_max", num(c.k_max)},
            {"k_hi", num(c.k_hi)},
            {"n", std::to_string(c.n)},
            {"half_length", num(c.half_length)},
            {"max_unstable_count", std::to_string(c.max_unstable_count)},
            {"evenness_defect", num(c.evenness_defect)}});

  json j;
  j["k0"] = c.k0;
  j["sigma0"] = c.sigma0;
  j["k_max"] = c.k_max;
  j["k_hi"] = c.k_hi;
  j["n"] = c.n;
  j["samples"] = c.samples.size();
  j["max_unstable_count"] = c.max_unstable_count;
  j["evenness_defect"] = c.evenness_defect;
  j["tail_mass_threshold"] = cfg_.scan.tail_mass;

  // (sigma0, k0) at higher resolution, followed by inverse iteration.
  json conv = json::array();
  const double dk = c.k_hi / std::max(1, cfg_.scan.samples - 1);
  std::vector<std::pair<double, double>> tracked;
  for (int n : cfg_.scan.check_n) {
    Stopwatch t;
    const SolitonProfile q = profile_at(n);
    const auto [s0, k0] = track_maximum(q, model_, std::max(1e-6, c.k0 - dk), c.k0 + dk, c.sigma0, 1e-5,
                                        cfg_.scan.m_form);
    tracked.emplace_back(s0, k0);
    timings_["track_maximum.n=" + std::to_string(n)] = t.seconds();
    conv.push_back({{"n", n}, {"sigma0", s0}, {"k0", k0}});
  }
  j["resolution_check"] = conv;
  double ds = 0.0, dkr = 0.0;
  if (tracked.size() >= 2) {
    const auto& a = tracked[tracked.size() - 2];
    const auto& b = tracked.back();
    ds = rel(a.first, b.first);
    dkr = rel(a.second, b.second);
  }
  j["resolution_rel_change"] = {{"sigma0", ds}, {"k0", dkr}};
  out_.write_json("spectrum.json", j);

  check("spectrum.maximum", "sigma0 > 0 and 0 < k0 < k_max", c.sigma0 > 0 && c.k0 > 0 && c.k0 < c.k_max,
        "sigma0 " + num(c.sigma0) + ", k0 " + num(c.k0) + ", k_max " + num(c.k_max));
  check("spectrum.count", "at most one unstable eigenvalue per k", c.max_unstable_count <= 1,
        "max count " + std::to_string(c.max_unstable_count));
  check("spectrum.resolution", "(sigma0, k0) stable to 0.1% under refinement", ds < 1e-3 && dkr < 1e-3,
        "sigma0 " + sci(ds) + ", k0 " + sci(dkr));

  if (flags_.dump_modes) {
    const GrowthSample gs = growth_rate(p, model_, c.k0, growth_options(cfg_));
    if (gs.mode) {
      std::vector<std::vector<double>> m;
      for (int i = 0; i < p.grid.n(); ++i)
        m.push_back({p.grid.x(i), gs.mode->u1[i].real(), gs.mode->u1[i].imag(), gs.mode->u2[i].real(),
                     gs.mode->u2[i].imag()});
      out_.csv("modes.csv", {"x", "u1_re", "u1_im", "u2_re", "u2_im"}, m,
               {{"k", num(c.k0)}, {"sigma", num(gs.sigma)}});
    }
  }
  return j;
}

json Session::hypotheses() {
  const SolitonProfile p = profile_at(cfg_.hypotheses.n);
  HypothesisOptions ho;
  ho.h2_probe_k = cfg_.hypotheses.probe_k;
  ho.h2_xi_max = cfg_.hypotheses.xi_max;
  ho.random_vectors = cfg_.hypotheses.random_vectors;
  ho.seed = cfg_.seed;
  ho.form = cfg_.scan.m_form;
  Stopwatch sw;
  const HypothesisReport rep = check_hypotheses(p, model_, ho);
  timings_["hypotheses"] = sw.seconds();
  json j;
  j["model"] = model_json(model_);
  j["n"] = p.grid.n();
  j["results"] = hypothesis_json(rep);
  j["all_pass"] = rep.all_pass();
  for (const auto& h : rep.results) check("hypotheses." + h.id, h.id, h.pass, h.summary);
  out_.write_json("report.json", j);
  return j;
}

json Session::growth() {
  const GrowthCurve c = curve();
  const SolitonProfile p = profile_at(cfg_.scan.n);
  const GrowthSample gs = growth_rate(p, model_, c.k0, growth_options(cfg_));
  if (!gs.mode) throw NumericalError("growth: no unstable mode at k0 = " + num(c.k0));
  const double T = cfg_.growth.t_sigma / gs.sigma;
  Stopwatch sw;
  const ModeTrajectory tr = propagate_mode(p, model_, p.grid, c.k0, *gs.mode, Forcing{}, T, cfg_.growth.dt);
  timings_["growth.propagate"] = sw.seconds();
  const double fit = fit_rate(tr.t, tr.l2, T / 2, T);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < tr.t.size(); ++i) rows.push_back({tr.t[i], tr.l2[i]});
  out_.csv("growth.csv", {"t", "l2"}, rows, {{"k", num(c.k0)}, {"method", tr.method}});

  json j;
  j["k0"] = c.k0;
  j["sigma_eigen"] = gs.sigma;
  j["sigma_fit"] = fit;
  j["fit_rel_diff"] = rel(fit, gs.sigma);
  j["T"] = T;
  j["dt"] = cfg_.growth.dt;
  j["method"] = tr.method;
  check("growth.fit", "eigen rate vs propagation fit within 1%", rel(fit, gs.sigma) < 0.01,
        "rel diff " + sci(rel(fit, gs.sigma)));
  if (canonical_nls()) {
    Stopwatch t;
    const double s = oracle::nls_growth_rate(p.grid, cfg_.endstate.c, c.k0);
    timings_["growth.nls_oracle"] = t.seconds();
    j["sigma_nls"] = s;
    j["nls_rel_diff"] = rel(gs.sigma, s);
    check("growth.nls", "eigen rate vs linearized NLS within 0.5%", rel(gs.sigma, s) < 0.005,
          "rel diff " + sci(rel(gs.sigma, s)));
  } else {
    j["sigma_nls"] = nullptr;
    j["nls_rel_diff"] = nullptr;
  }
  out_.write_json("growth.json", j);
  return j;
}

json Session::wavepacket() {
  const GrowthCurve c = curve();
  const SolitonProfile p = profile_at(cfg_.scan.n);
  const WavepacketSpec spec = make_wavepacket_spec(c, cfg_.wavepacket.nodes_per_radius);
  Stopwatch sw;
  const WavepacketModes modes = wavepacket_modes(spec, p, model_, growth_options(cfg_));
  timings_["wavepacket.modes"] = sw.seconds();
  const double T = cfg_.wavepacket.t_sigma / c.sigma0;
  const WavepacketFit fit = wavepacket_history(modes, p.grid, T, cfg_.wavepacket.samples);

  int ny = cfg_.wavepacket.ny;
  while (ny <= 2 * spec.node_index.back()) ny *= 2;
  const Field2D F = build_wavepacket(modes, p.grid, 0.5 * T, ny);
  const double field_norm = std::sqrt(F.dx() * F.dy() * (F.rho.squaredNorm() + F.phi.squaredNorm()));
  const double parseval = field_norm / wavepacket_norm(modes, p.grid, 0.5 * T) - 1.0;

  Stopwatch sv;
  const CorrectionResult v2 = build_correction_v2(modes, p, model_, T, cfg_.wavepacket.dt, cfg_.jobs);
  timings_["wavepacket.v2"] = sv.seconds();

  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < fit.t.size(); ++i) rows.push_back({fit.t[i], fit.l2[i], fit.compensated[i]});
  out_.csv("wavepacket.csv", {"t", "l2", "compensated"}, rows);
  rows.clear();
  for (std::size_t i = 0; i < v2.t.size(); ++i) rows.push_back({v2.t[i], v2.l2[i]});
  out_.csv("v2.csv", {"t", "l2"}, rows);

  json j;
  j["k0"] = spec.k0;
  j["sigma0"] = spec.sigma0;
  j["support"] = spec.support;
  j["plateau"] = spec.plateau;
  j["dk"] = spec.dk;
  j["ly"] = spec.ly();
  j["nodes"] = spec.node_index.size();
  j["T"] = T;
  j["rate"] = fit.rate;
  j["rate_rel_diff"] = rel(fit.rate, c.sigma0);
  j["compensated_rate"] = fit.compensated_rate;
  j["band"] = fit.band;
  j["parseval_rel_error"] = parseval;
  j["v2_rate"] = v2.rate;
  j["v2_rate_over_sigma0"] = v2.rate / c.sigma0;
  j["v2_shape_max"] = v2.shape_max;
  j["v2_totals"] = v2.totals.size();
  out_.write_json("wavepacket.json", j);
  check("wavepacket.rate", "ln|V1| slope within 2% of sigma0", rel(fit.rate, c.sigma0) < 0.02,
        "rel diff " + sci(rel(fit.rate, c.sigma0)));
  check("wavepacket.band", "compensated amplitude within a factor-4 band", fit.band <= 4.0,
        "band " + num(fit.band));
  const double r2 = v2.rate / c.sigma0;
  check("wavepacket.v2", "V2 rate in [1.9, 2.1] sigma0", r2 >= 1.9 && r2 <= 2.1, "rate/sigma0 " + num(r2));
  return j;
}

json Session::resolvent() {
  const GrowthCurve c = curve();
  const SolitonProfile p = profile_at(cfg_.scan.n);
  const double gamma = flags_.gamma ? *flags_.gamma : cfg_.resolvent.gamma_factor * c.sigma0;
  const double n = flags_.n ? *flags_.n : cfg_.resolvent.n;
  const std::vector<int> orders = flags_.s ? std::vector<int>{*flags_.s} : cfg_.resolvent.s;
  const double T = cfg_.resolvent.t_sigma / c.sigma0;
  ResolventOptions ro;
  ro.dt = cfg_.resolvent.dt;

  json runs = json::array();
  std::vector<std::vector<double>> rows;
  for (int s : orders) {
    Stopwatch sw;
    const ResolventResult r = resolvent_experiment(p, model_, c.k0, gamma, n, s, T, c.sigma0, ro);
    timings_["resolvent.s=" + std::to_string(s)] = sw.seconds();
    for (int jj = 0; jj <= s; ++jj) {
      for (std::size_t i = 0; i < r.t.size(); ++i) rows.push_back({double(s), double(jj), r.t[i], r.ratio[jj][i]});
      const bool ok = r.trend[jj] <= ro.trend_limit;
      check("resolvent.s" + std::to_string(s) + ".j" + std::to_string(jj), "last/first quarter sup ratio <= 1.05",
            ok, "trend " + num(r.trend[jj]) + ", sup " + num(r.sup_ratio[jj]) + " at t " + num(r.peak_time[jj]));
    }
    runs.push_back({{"s", s},
                    {"sup_ratio", r.sup_ratio},
                    {"trend", r.trend},
                    {"peak_time", r.peak_time},
                    {"bounded", r.bounded}});
  }
  out_.csv("resolvent.csv", {"s", "j", "t", "ratio"}, rows);
  json j;
  j["k"] = c.k0;
  j["gamma"] = gamma;
  j["gamma_over_sigma0"] = gamma / c.sigma0;
  j["n"] = n;
  j["T"] = T;
  j["trend_limit"] = ro.trend_limit;
  j["runs"] = runs;
  out_.write_json("resolvent.json", j);
  return j;
}

json Session::simulate() {
  const GrowthCurve c = curve();
  const auto& sc = cfg_.simulation;
  const SolitonProfile p = profile_at(sc.nx);
  const double ly = 2.0 * M_PI * sc.torus_multiple / c.k0;

  // Unperturbed travelling wave in its own frame.
  const Sim2D sim(model_, p, sc.ny, ly);
  RunOptions o;
  o.T = sc.steady_t_sigma / c.sigma0;
  o.dt = sc.dt;
  o.sample_every = sc.sample_every;
  o.sigma0 = c.sigma0;
  Stopwatch sw;
  const RunRecord rec = ek::simulate(sim, sim.base_state(), o);
  timings_["simulate.steady"] = sw.seconds();
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < rec.t.size(); ++i)
    rows.push_back({rec.t[i], rec.mass_defect[i], rec.pi_norm[i], rec.orbital[i], rec.min_rho[i], rec.madelung[i],
                    rec.shift[i]});
  out_.csv("timeseries.csv", {"t", "mass_defect", "pi_norm", "orbital_distance", "min_rho", "madelung_norm", "shift"},
           rows, {{"run", "unperturbed"}});
  out_.field("steady_final", rec.final_state);
  const double max_orbit = *std::max_element(rec.orbital.begin(), rec.orbital.end());
  const double max_mass = *std::max_element(rec.mass_defect.begin(), rec.mass_defect.end());

  // Finite-difference linearization of the 2D right-hand side against JL(k0).
  Stopwatch sl;
  const SolitonProfile pl = profile_at(sc.linearization_nx);
  const Sim2D lin(model_, pl, 8, 2.0 * M_PI / c.k0);
  const GrowthSample gs = growth_rate(pl, model_, c.k0, growth_options(cfg_));
  if (!gs.mode) throw NumericalError("simulate: no unstable mode at k0 on the linearization grid");
  const OperatorAssembly a = assemble(pl, model_, c.k0, cfg_.scan.m_form);
  const int n = pl.grid.n();
  Eigen::VectorXcd v(2 * n);
  v << gs.mode->u1, gs.mode->u2;
  const Eigen::VectorXcd Jv = a.JL * v;
  const ModePair jv{Jv.head(n), Jv.tail(n), c.k0};
  const double eta = sc.linearization_eta;
  const Field2D up = lin.rhs(lin.perturbed_state(*gs.mode, eta));
  const Field2D um = lin.rhs(lin.perturbed_state(*gs.mode, -eta));
  Field2D ref = lin.perturbed_state(jv, 1.0);
  ref.rho -= lin.base_state().rho;
  const double num_ = std::sqrt(((up.rho - um.rho) / (2 * eta) - ref.rho).squaredNorm() +
                                ((up.phi - um.phi) / (2 * eta) - ref.phi).squaredNorm());
  const double lin_err = num_ / std::sqrt(ref.rho.squaredNorm() + ref.phi.squaredNorm());
  timings_["simulate.linearization"] = sl.seconds();

  json j;
  j["nx"] = sc.nx;
  j["ny"] = sc.ny;
  j["ly"] = ly;
  j["dt"] = rec.dt;
  j["T"] = o.T;
  j["steady_max_orbital_distance"] = max_orbit;
  j["steady_max_mass_defect"] = max_mass;
  j["steady_final_shift"] = rec.shift.back();
  j["linearization"] = {{"nx", sc.linearization_nx}, {"eta", eta}, {"scheme", "centred"}, {"rel_error", lin_err}};
  out_.write_json("simulate.json", j);
  check("simulate.steady", "unperturbed orbital distance < 1e-6", max_orbit < 1e-6, "max " + sci(max_orbit));
  check("simulate.mass", "relative mass defect < 1e-10", max_mass < 1e-10, "max " + sci(max_mass));
  check("simulate.linearization", "rhs linearization vs JL < 1e-5", lin_err < 1e-5, "rel error " + sci(lin_err));
  return j;
}

json Session::experiment() {
  const GrowthCurve c = curve();
  const auto& sc = cfg_.simulation;
  InstabilityConfig ic;
  ic.eps = sc.eps;
  ic.nx = sc.nx;
  ic.ny = sc.ny;
  ic.torus_multiple = sc.torus_multiple;
  ic.dt = sc.dt;
  ic.kappa = sc.kappa;
  ic.t_cap = sc.t_cap;
  ic.sample_every = sc.sample_every;
  ic.fit_hi = sc.fit_hi;
  ic.jobs = cfg_.jobs;
  Stopwatch sw;
  const InstabilityReport rep = run_instability_experiment(profile(), model_, c.k0, c.sigma0, ic);
  timings_["experiment"] = sw.seconds();

  std::vector<std::vector<double>> summary, series;
  json runs = json::array();
  double worst_mass = 0.0, worst_wall = 0.0;
  for (const auto& r : rep.runs) {
    timings_["experiment.eps=" + num(r.eps)] = r.wall_seconds;
    worst_wall = std::max(worst_wall, r.wall_seconds);
    worst_mass = std::max(worst_mass, r.max_mass_defect);
    summary.push_back({r.eps, r.rate, r.fit_residual, r.escape_time, double(r.censored), r.t_cap, r.max_mass_defect});
    const auto& R = r.record;
    for (std::size_t i = 0; i < R.t.size(); ++i)
      series.push_back({r.eps, R.t[i], R.mass_defect[i], R.pi_norm[i], R.orbital[i], R.min_rho[i], R.madelung[i],
                        R.shift[i]});
    runs.push_back({{"eps", r.eps},
                    {"rate", jnum(r.rate)},
                    {"rate_rel_diff", jnum(rel(r.rate, rep.sigma_ref))},
                    {"fit_residual", jnum(r.fit_residual)},
                    {"fit_ok", r.fit_ok},
                    {"escape_time", jnum(r.escape_time)},
                    {"censored", r.censored},
                    {"t_cap", r.t_cap},
                    {"max_mass_defect", r.max_mass_defect}});
  }
  out_.csv("experiment.csv", {"eps", "rate", "fit_residual", "escape_time", "censored", "t_cap", "max_mass_defect"},
           summary);
  out_.csv("experiment_series.csv",
           {"eps", "t", "mass_defect", "pi_norm", "orbital_distance", "min_rho", "madelung_norm", "shift"}, series);

  const double target = 1.0 / c.sigma0;
  json j;
  j["k0"] = rep.k0;
  j["sigma0"] = rep.sigma0;
  j["sigma_ref"] = rep.sigma_ref;
  j["nx"] = rep.nx;
  j["ny"] = rep.ny;
  j["ly"] = rep.ly;
  j["dt"] = rep.dt;
  j["delta_stop"] = rep.delta_stop;
  j["runs"] = runs;
  j["slope"] = jnum(rep.slope);
  j["slope_target"] = target;
  j["slope_rel_diff"] = jnum(rel(rep.slope, target));
  j["monotone"] = rep.monotone;
  out_.write_json("experiment.json", j);

  const auto smallest = std::min_element(rep.runs.begin(), rep.runs.end(),
                                         [](const auto& a, const auto& b) { return a.eps < b.eps; });
  const double rr = rel(smallest->rate, rep.sigma_ref);
  check("experiment.rate", "linear-phase rate within 5% at the smallest eps", std::isfinite(rr) && rr < 0.05,
        "eps " + num(smallest->eps) + ", rel diff " + sci(rr));
  const double sr = rel(rep.slope, target);
  check("experiment.slope", "escape-time slope within 10% of 1/sigma0", std::isfinite(sr) && sr < 0.10,
        "slope " + num(rep.slope) + " vs " + num(target));
  check("experiment.mass", "relative mass defect < 1e-10", worst_mass < 1e-10, "max " + sci(worst_mass));
  check("experiment.runtime", "each run under 10 min", worst_wall < 600.0, "slowest " + num(worst_wall) + " s");
  return j;
}

json Session::crossmodel() {
  json j;
  auto kernel = [&](const ModelSpec& m, const SolitonProfile& p, MForm f) {
    return kernel_defect(assemble(p, m, 0.0, f), p);
  };
  const SolitonProfile pa = profile_at(cfg_.hypotheses.n);
  j["primary"] = {{"model", model_json(model_)},
                  {"kernel_defect_hessian", kernel(model_, pa, MForm::Hessian)},
                  {"kernel_defect_variant", kernel(model_, pa, MForm::Variant)},
                  {"essential_max_re", essential_max_re(model_, cfg_.endstate)}};
  if (cfg_.secondary.kind.empty()) {
    j["secondary"] = nullptr;
  } else {
    const ModelSpec mb = cfg_.secondary.build();
    Stopwatch sw;
    const SolitonProfile pb0 = compute_profile(mb, cfg_.endstate, cfg_.profile.n, cfg_.profile.tol);
    const ProfileResidual res = profile_residual(pb0, mb);
    const SolitonProfile pb =
        cfg_.hypotheses.n == pb0.grid.n() ? pb0 : pb0.resample(Grid1D(cfg_.hypotheses.n, pb0.grid.half_length()));
    HypothesisOptions ho;
    ho.h2_probe_k = cfg_.hypotheses.probe_k;
    ho.h2_xi_max = cfg_.hypotheses.xi_max;
    ho.random_vectors = cfg_.hypotheses.random_vectors;
    ho.seed = cfg_.seed;
    const HypothesisReport rep = check_hypotheses(pb, mb, ho);
    timings_["crossmodel.secondary"] = sw.seconds();
    j["secondary"] = {{"model", model_json(mb)},
                      {"residual_ode", res.ode},
                      {"residual_flux", res.flux},
                      {"rho_star", pb0.rho_star},
                      {"kernel_defect_hessian", kernel(mb, pb, MForm::Hessian)},
                      {"kernel_defect_variant", kernel(mb, pb, MForm::Variant)},
                      {"essential_max_re", essential_max_re(mb, cfg_.endstate)},
                      {"hypotheses", hypothesis_json(rep)},
                      {"hypotheses_all_pass", rep.all_pass()}};
  }
  out_.write_json("crossmodel.json", j);
  return j;
}

json Session::determinism() {
  // A fresh session on the same config re-creates the cheap artifacts in a scratch
  // directory; they must match this run byte for byte.
  ExperimentConfig again = cfg_;
  again.out = (out_.dir() / "determinism_rerun").string();
  Session s(again);
  s.soliton();
  s.hypotheses();
  std::vector<std::string> compared, differing;
  for (const std::string name : {"profile.csv", "soliton.json", "report.json"}) {
    auto slurp = [](const fs::path& p) {
      std::ifstream in(p, std::ios::binary);
      return std::string(std::istreambuf_iterator<char>(in), {});
    };
    compared.push_back(name);
    if (slurp(out_.dir() / name) != slurp(s.artifacts().dir() / name)) differing.push_back(name);
  }
  std::error_code ec;
  fs::remove_all(s.artifacts().dir(), ec);
  json j{{"compared", compared}, {"differing", differing}, {"identical", differing.empty()}};
  out_.write_json("determinism.json", j);
  return j;
}

json Session::all() {
  std::map<std::string, json> r;
  Stopwatch sw;
  for (const char* v : {"soliton", "spectrum", "hypotheses", "growth", "wavepacket", "resolvent", "simulate",
                        "experiment", "crossmodel", "determinism"}) {
    Stopwatch t;
    spdlog::info("all: {}", v);
    const std::string name = v;
    if (name == "soliton") r[name] = soliton();
    if (name == "spectrum") r[name] = spectrum();
    if (name == "hypotheses") r[name] = hypotheses();
    if (name == "growth") r[name] = growth();
    if (name == "wavepacket") r[name] = wavepacket();
    if (name == "resolvent") r[name] = resolvent();
    if (name == "simulate") r[name] = simulate();
    if (name == "experiment") r[name] = experiment();
    if (name == "crossmodel") r[name] = crossmodel();
    if (name == "determinism") r[name] = determinism();
    timings_["all." + name] = t.seconds();
  }
  evaluate_criteria(r);
  json j = json::array();
  for (const auto& c : criteria_) j.push_back({{"id", c.id}, {"title", c.title}, {"pass", c.pass}, {"detail", c.detail}});
  return {{"criteria", j}};
}

void Session::evaluate_criteria(const std::map<std::string, json>& r) {
  criteria_.clear();
  auto add = [&](int id, const std::string& title, bool pass, const std::string& detail) {
    criteria_.push_back({"C" + std::to_string(id), title, pass, detail});
  };
  auto d = [](const json& v) { return v.is_number() ? v.get<double>() : std::numeric_limits<double>::quiet_NaN(); };
  const json& sol = r.at("soliton");
  const json& spec = r.at("spectrum");
  const json& hyp = r.at("hypotheses");
  const json& gr = r.at("growth");
  const json& wp = r.at("wavepacket");
  const json& res = r.at("resolvent");
  const json& sim = r.at("simulate");
  const json& exp = r.at("experiment");
  const json& cm = r.at("crossmodel");
  const json& det = r.at("determinism");
  const json& sec = cm.at("secondary");
  const bool has_b = !sec.is_null();

  {
    const double err = d(sol["closed_form_error"]), t = timings_.count("profile") ? timings_.at("profile") : NAN;
    const double dl = d(sol["decay_lengths"]);
    add(1, "soliton closed form", err < 1e-8 && t < 1.0 && dl >= 8.0,
        "max error " + sci(err) + ", " + num(t) + " s, X = " + num(dl) + " decay lengths");
  }
  {
    const double ode = has_b ? d(sec["residual_ode"]) : NAN, flux = has_b ? d(sec["residual_flux"]) : NAN;
    add(2, "secondary-model profile residuals", ode < 1e-8 && flux < 1e-10,
        "ode " + sci(ode) + ", flux " + sci(flux));
  }
  {
    const json& a = cm["primary"];
    const double ar = d(a["kernel_defect_hessian"]), al = d(a["kernel_defect_variant"]);
    const double br = has_b ? d(sec["kernel_defect_hessian"]) : NAN;
    const double bl = has_b ? d(sec["kernel_defect_variant"]) : NAN;
    add(3, "m-coefficient adjudication", ar < 1e-6 && br < 1e-6 && al > 1e-3 && bl < 1e-6,
        "primary " + sci(ar) + " / variant " + sci(al) + "; secondary " + sci(br) + " / variant " + sci(bl));
  }
  auto h4 = [&](const json& results, const char* key) {
    for (const auto& h : results)
      if (h["id"] == "H4") return d(h["evidence"][key]);
    return std::numeric_limits<double>::quiet_NaN();
  };
  {
    const double na = h4(hyp["results"], "M_negative_count"), za = h4(hyp["results"], "M_near_kernel_count");
    const double nb = has_b ? h4(sec["hypotheses"], "M_negative_count") : NAN;
    const double zb = has_b ? h4(sec["hypotheses"], "M_near_kernel_count") : NAN;
    add(4, "Sturm-Liouville count of M", na == 1 && za <= 1 && nb == 1 && zb <= 1,
        "negative/near-kernel: primary " + num(na) + "/" + num(za) + ", secondary " + num(nb) + "/" + num(zb));
  }
  {
    const bool a = hyp["all_pass"].get<bool>(), b = has_b && sec["hypotheses_all_pass"].get<bool>();
    add(5, "hypotheses H1-H4 on both models", a && b,
        std::string("primary ") + (a ? "pass" : "fail") + ", secondary " + (b ? "pass" : "fail"));
  }
  {
    const double a = d(cm["primary"]["essential_max_re"]), b = has_b ? d(sec["essential_max_re"]) : NAN;
    add(6, "essential spectrum on the imaginary axis", a < 1e-12 && b < 1e-12,
        "max |Re| " + sci(a) + " / " + sci(b));
  }
  {
    const double s0 = d(spec["sigma0"]), k0 = d(spec["k0"]), km = d(spec["k_max"]);
    const double cnt = d(spec["max_unstable_count"]);
    const double ds = d(spec["resolution_rel_change"]["sigma0"]), dk = d(spec["resolution_rel_change"]["k0"]);
    const double t = timings_.count("scan") ? timings_.at("scan") : NAN;
    add(7, "growth curve", s0 > 0 && k0 > 0 && k0 < km && cnt <= 1 && ds < 1e-3 && dk < 1e-3 && t < 300.0,
        "sigma0 " + num(s0) + ", k0 " + num(k0) + ", k_max " + num(km) + ", refinement " + sci(ds) + "/" + sci(dk) +
            ", scan " + num(t) + " s");
  }
  {
    const double f = d(gr["fit_rel_diff"]), nls = d(gr["nls_rel_diff"]);
    add(8, "rate cross-validation", f < 0.01 && nls < 0.005, "propagation " + sci(f) + ", NLS " + sci(nls));
  }
  {
    bool ok = true;
    std::string detail;
    for (const auto& run : res["runs"]) {
      const auto trend = run["trend"].get<std::vector<double>>();
      for (std::size_t j = 0; j < trend.size(); ++j) {
        ok = ok && trend[j] <= d(res["trend_limit"]);
        detail += (detail.empty() ? "" : ", ") + std::string("s") + std::to_string(run["s"].get<int>()) + "/j" +
                  std::to_string(j) + " " + num(trend[j]);
      }
    }
    add(9, "resolvent trend", ok, detail);
  }
  {
    const double rr = d(wp["rate_rel_diff"]), band = d(wp["band"]), v2 = d(wp["v2_rate_over_sigma0"]);
    add(10, "wavepacket asymptotics", rr < 0.02 && band <= 4.0 && v2 >= 1.9 && v2 <= 2.1,
        "rate " + sci(rr) + ", band " + num(band) + ", V2 " + num(v2));
  }
  {
    double rate = NAN, eps_min = INFINITY, worst = 0.0;
    for (const auto& run : exp["runs"])
      if (d(run["eps"]) < eps_min) {
        eps_min = d(run["eps"]);
        rate = d(run["rate_rel_diff"]);
      }
    for (const auto& [k, v] : timings_)
      if (k.rfind("experiment.eps=", 0) == 0) worst = std::max(worst, v);
    const double sr = d(exp["slope_rel_diff"]);
    add(11, "nonlinear instability", rate < 0.05 && sr < 0.10 && worst < 600.0,
        "rate " + sci(rate) + " at eps " + num(eps_min) + ", slope " + num(d(exp["slope"])) + " vs " +
            num(d(exp["slope_target"])) + ", slowest run " + num(worst) + " s");
  }
  {
    double mass = d(sim["steady_max_mass_defect"]);
    for (const auto& run : exp["runs"]) mass = std::max(mass, d(run["max_mass_defect"]));
    const double orb = d(sim["steady_max_orbital_distance"]);
    add(12, "conservation and steadiness", mass < 1e-10 && orb < 1e-6,
        "mass " + sci(mass) + ", orbital " + sci(orb));
  }
  {
    const double e = d(sim["linearization"]["rel_error"]);
    add(13, "linearization consistency", e < 1e-5, "rel error " + sci(e));
  }
  add(14, "determinism", det["identical"].get<bool>(),
      "re-run of " + std::to_string(det["compared"].size()) + " artifacts, " +
          std::to_string(det["differing"].size()) + " differing");
  for (const auto& c : criteria_) spdlog::info("{} {}: {}", c.id, c.pass ? "PASS" : "FAIL", c.detail);
}

std::string primary_artifact(const std::string& verb) {
  static const std::map<std::string, std::string> names{
      {"soliton", "profile.csv"},       {"spectrum", "curve.csv"},     {"hypotheses", "report.json"},
      {"growth", "growth.csv"},         {"wavepacket", "wavepacket.csv"}, {"resolvent", "resolvent.csv"},
      {"simulate", "timeseries.csv"}, {"experiment", "experiment.json"}};
  const auto it = names.find(verb);
  return it == names.end() ? std::string() : it->second;
}

json Session::run(const std::string& verb) {
  Stopwatch sw;
  json result;
  if (!flags_.primary.empty()) {
    const std::string from = primary_artifact(verb);
    if (from.empty()) throw ValidationError("--out must be a directory for `" + verb + "`");
    out_.rename(from, flags_.primary);
  }
  if (verb == "soliton")
    result = soliton();
  else if (verb == "spectrum")
    result = spectrum();
  else if (verb == "hypotheses")
    result = hypotheses();
  else if (verb == "growth")
    result = growth();
  else if (verb == "wavepacket")
    result = wavepacket();
  else if (verb == "resolvent")
    result = resolvent();
  else if (verb == "simulate")
    result = simulate();
  else if (verb == "experiment")
    result = experiment();
  else if (verb == "all")
    result = all();
  else
    throw ValidationError("unknown verb '" + verb + "'");
  timings_["total"] = sw.seconds();

  json m;
  m["code_version"] = EK_VERSION;
  m["verb"] = verb;
  m["config"] = canonical_yaml(cfg_);
  m["outputs"] = out_.written();
  json checks = json::array();
  bool ok = true;
  for (const auto& c : checks_) {
    checks.push_back({{"id", c.id}, {"title", c.title}, {"pass", c.pass}, {"detail", c.detail}});
    ok = ok && c.pass;
  }
  m["checks"] = checks;
  if (!criteria_.empty()) {
    json cr = json::array();
    for (const auto& c : criteria_) cr.push_back({{"id", c.id}, {"title", c.title}, {"pass", c.pass}, {"detail", c.detail}});
    m["criteria"] = cr;
  }
  m["all_checks_pass"] = ok;
  json rt = json::object();
  for (const auto& [k, v] : timings_) rt[k] = v;
  m["runtime_seconds"] = rt;
  out_.write_json("manifest.json", m);
  return m;
}

}  // namespace ek::cli
