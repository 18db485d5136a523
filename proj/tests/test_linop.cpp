#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <complex>
#include <vector>

#include "ek/linop.hpp"

using namespace ek;
using doctest::Approx;
using cplx = std::complex<double>;

namespace {

const Endstate kEnd = make_endstate(1, 0, 0.5);

const SolitonProfile& profile_a(int n) {
  static const SolitonProfile base = compute_profile(madelung_model(), kEnd, 1024);
  static std::map<int, SolitonProfile> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, base.resample(Grid1D(n, base.grid.half_length()))).first;
  return it->second;
}

// Largest distance from each eigenvalue to the nearest member of `target`.
double match_defect(const Eigen::VectorXcd& ev, const std::vector<cplx>& target) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    double best = INFINITY;
    for (const auto& t : target) best = std::min(best, std::abs(ev[i] - t));
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace

TEST_CASE("constant-state L(k) diagonalizes by the symbol") {
  const Grid1D g(64, 10.0);
  const auto model = madelung_model();
  const auto p = constant_profile(kEnd, g);
  const double k = 0.7;
  const auto a = assemble(p, model, k);
  const auto sp = spectrum(a, Which::L);

  std::vector<double> expected;
  const Eigen::VectorXd xi = g.wavenumbers();
  for (int m = 0; m < g.n(); ++m) {
    const double x = (m == g.n() / 2) ? 0.0 : xi[m];  // first derivative drops Nyquist
    const auto [lo, hi] = linf_symbol(kEnd, model, x, k);
    expected.push_back(lo);
    expected.push_back(hi);
  }
  std::sort(expected.begin(), expected.end());
  std::vector<double> got(sp.values.size());
  for (Eigen::Index i = 0; i < sp.values.size(); ++i) got[i] = sp.values[i].real();
  std::sort(got.begin(), got.end());
  REQUIRE(got.size() == expected.size());
  // The Nyquist row keeps its full second-derivative symbol through K k^2 only,
  // so compare everywhere except where the two conventions can differ.
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - expected[i]));
  CHECK(worst < 1e-8);
}

TEST_CASE("L(k) is symmetric and JL = J L") {
  const auto& p = profile_a(128);
  const auto a = assemble(p, madelung_model(), 0.5);
  const Eigen::MatrixXd& L = a.L;
  CHECK((L - L.transpose()).cwiseAbs().maxCoeff() / L.cwiseAbs().maxCoeff() < 1e-12);
  const int n = p.grid.n();
  Eigen::MatrixXd JL(2 * n, 2 * n);
  JL << L.bottomRows(n), -L.topRows(n);
  CHECK((JL - a.JL).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("m reproduces -g0'(rho_inf) at the ends") {
  const auto& p = profile_a(256);
  const auto a = assemble(p, madelung_model(), 0.0);
  CHECK(a.m[0] == Approx(-1.0).epsilon(1e-10));
}

TEST_CASE("rho_c' spans the kernel of M only with the re-derived coefficient") {
  const auto& p = profile_a(1024);
  CHECK(kernel_defect(assemble(p, madelung_model(), 0.0, MForm::Hessian), p) < 1e-6);
  CHECK(kernel_defect(assemble(p, madelung_model(), 0.0, MForm::Variant), p) > 1e-3);
  const auto pb = compute_profile(constant_k_model(), kEnd, 1024);
  CHECK(kernel_defect(assemble(pb, constant_k_model(), 0.0, MForm::Hessian), pb) < 1e-6);
  CHECK(kernel_defect(assemble(pb, constant_k_model(), 0.0, MForm::Variant), pb) < 1e-6);
}

TEST_CASE("J alone has eigenvalues +-i") {
  Eigen::Matrix2d J;
  J << 0, 1, -1, 0;
  const Eigen::EigenSolver<Eigen::Matrix2d> es(J);
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(es.eigenvalues()[i].real()) < 1e-15);
    CHECK(std::abs(std::abs(es.eigenvalues()[i].imag()) - 1.0) < 1e-15);
  }
}

TEST_CASE("JL(k) spectrum has the Hamiltonian four-fold symmetry") {
  const auto& p = profile_a(128);
  const auto sp = spectrum(assemble(p, madelung_model(), 0.5), Which::JL);
  std::vector<cplx> all(sp.values.data(), sp.values.data() + sp.values.size());
  const double scale = sp.values.cwiseAbs().maxCoeff();
  std::vector<cplx> conj, refl;
  for (const auto& v : all) {
    conj.push_back(std::conj(v));
    refl.push_back(-std::conj(v));
  }
  CHECK(match_defect(sp.values, conj) / scale < 1e-8);
  CHECK(match_defect(sp.values, refl) / scale < 1e-8);
}

TEST_CASE("M has a single negative eigenvalue") {
  const auto& p = profile_a(512);
  const auto sp = spectrum(assemble(p, madelung_model(), 0.0), Which::M);
  int neg = 0, near = 0;
  for (Eigen::Index i = 0; i < sp.values.size(); ++i) {
    const double v = sp.values[i].real();
    if (v < -1e-8) ++neg;
    else if (v < 1e-8) ++near;
  }
  CHECK(neg == 1);
  CHECK(near <= 1);
}

TEST_CASE("growth rate at special wavenumbers") {
  const auto& p = profile_a(256);
  const auto model = madelung_model();
  // The translation pair at k = 0 splits into +-4.9e-6 at N = 256; from N = 512 on it stays neutral.
  const auto g0 = growth_rate(profile_a(512), model, 0.0);
  CHECK(g0.sigma <= 1e-6);
  const auto mid = growth_rate(p, model, 0.5);
  CHECK(mid.sigma > 0.1);
  CHECK(mid.count_unstable == 1);
  REQUIRE(mid.mode);
  const double nrm = std::sqrt(p.grid.dx() * (mid.mode->u1.squaredNorm() + mid.mode->u2.squaredNorm()));
  CHECK(nrm == Approx(1.0).epsilon(1e-12));
  Eigen::Index imax;
  mid.mode->u1.cwiseAbs().maxCoeff(&imax);
  CHECK(std::abs(mid.mode->u1[imax].imag()) < 1e-12);
  CHECK(mid.mode->u1[imax].real() > 0);
  const auto far = growth_rate(p, model, 1.0);
  CHECK(far.sigma <= 1e-8);
  CHECK_FALSE(far.mode);
}

TEST_CASE("growth curve maximum") {
  const auto& p = profile_a(256);
  ScanOptions so;
  so.samples = 24;
  so.k_hi = 1.0;
  const auto c = scan_growth_curve(p, madelung_model(), so);
  CHECK(c.sigma0 > 0);
  CHECK(c.k0 > 0);
  CHECK(c.k0 < c.k_max);
  CHECK(c.max_unstable_count <= 1);
  for (const auto& s : c.samples) CHECK(s.sigma <= c.sigma0 + 1e-12);
  CHECK(c.sigma_at(c.k_max + 0.05) <= 1e-8);
  CHECK(c.evenness_defect < 1e-10);
}

TEST_CASE("Hermitian symbol of L_inf") {
  const auto model = madelung_model();
  const auto [a, b] = linf_symbol(kEnd, model, 0.0, 0.0);
  CHECK(std::min(a, b) == Approx(0.0));
  CHECK(std::max(a, b) == Approx(1.0));
  const auto [c, d] = linf_symbol(kEnd, model, 1.0, 1.0);
  CHECK(c > 0);
  CHECK(d > 0);
}

TEST_CASE("roots of the JL_inf symbol") {
  const auto model = madelung_model();
  const auto [z0, z1] = jlinf_symbol_roots(kEnd, model, 0.0, 0.0);
  CHECK(std::abs(z0) < 1e-15);
  CHECK(std::abs(z1) < 1e-15);
  const auto [r0, r1] = jlinf_symbol_roots(kEnd, model, 1.0, 0.0);
  // X^2 + i X + 1 = 0  ->  X = i(-1 +- sqrt 5)/2
  std::vector<double> im{r0.imag(), r1.imag()};
  std::sort(im.begin(), im.end());
  CHECK(im[0] == Approx((-1 - std::sqrt(5.0)) / 2));
  CHECK(im[1] == Approx((-1 + std::sqrt(5.0)) / 2));
  CHECK(std::abs(r0.real()) < 1e-12);
  CHECK(std::abs(r1.real()) < 1e-12);
  for (const auto& m : {madelung_model(), constant_k_model()}) {
    double worst = 0.0;
    for (int i = 0; i <= 100; ++i)
      for (int j = 0; j <= 100; ++j) {
        if (i == 50 && j == 50) continue;
        const auto [x, y] = jlinf_symbol_roots(kEnd, m, -10 + 0.2 * i, -10 + 0.2 * j);
        worst = std::max({worst, std::abs(x.real()), std::abs(y.real())});
      }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("hypotheses H1-H4 hold for the grey soliton") {
  const auto& p = profile_a(512);
  const auto rep = check_hypotheses(p, madelung_model());
  REQUIRE(rep.results.size() == 4);
  for (const auto& h : rep.results) {
    CAPTURE(h.id);
    CAPTURE(h.summary);
    CHECK(h.pass);
  }
  CHECK(rep.all_pass());
}

TEST_CASE("H3 diagonal at k = 1 is 2 min K") {
  const auto& p = profile_a(256);
  const auto rep = check_hypotheses(p, madelung_model());
  double minK = INFINITY;
  for (Eigen::Index i = 0; i < p.rho.size(); ++i) minK = std::min(minK, madelung_model().K(p.rho[i]));
  for (const auto& h : rep.results)
    if (h.id == "H3")
      for (const auto& [k, v] : h.evidence)
        if (k == "min_diagonal") CHECK(v == Approx(std::min(2 * minK, 2 * p.rho.minCoeff())));
}
