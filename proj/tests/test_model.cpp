#include <doctest.h>

#include <cmath>
#include <vector>

#include "ek/error.hpp"
#include "ek/model.hpp"

using namespace ek;
using doctest::Approx;

namespace {

// W'(rho) written out directly from the closures, independent of EffectivePotential.
double dW_ref(const ModelSpec& m, const Endstate& e, double r) {
  const double j = e.flux();
  return m.g0(r) - m.g0(e.rho_inf) + 0.5 * j * j * (1.0 / (r * r) - 1.0 / (e.rho_inf * e.rho_inf));
}

// Composite Simpson on [a, b] with n panels.
template <class F>
double simpson(F f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

std::vector<ModelSpec> all_models() {
  std::vector<ModelSpec> out;
  for (const auto& kind : registered_models()) {
    if (kind == "polytropic") {
      const std::vector<double> p{0.5, -0.5, 1.0, 2.0};
      out.push_back(make_model(kind, p));
    } else {
      out.push_back(make_model(kind, {}));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("closure values at reference densities") {
  const auto a = madelung_model().eval(1.0);
  CHECK(a.K == Approx(0.25));
  CHECK(a.dK == Approx(-0.25));
  CHECK(a.d2K == Approx(0.5));
  CHECK(a.g0 == Approx(1.0));
  CHECK(a.dg0 == Approx(1.0));

  const auto b = constant_k_model().eval(2.0);
  CHECK(b.K == 1.0);
  CHECK(b.dK == 0.0);
  CHECK(b.d2K == 0.0);
  CHECK(b.g0 == Approx(2.0));
  CHECK(b.dg0 == Approx(1.0));
}

TEST_CASE("vacuum is outside the admissible interval") {
  CHECK_THROWS_AS(madelung_model().eval(0.0), DomainError);
  CHECK_THROWS_AS(madelung_model().eval(-1.0), DomainError);
  CHECK_THROWS_AS(make_model("no_such_model", {}), ValidationError);
}

TEST_CASE("analytic derivatives agree with central differences") {
  for (const auto& m : all_models()) {
    CAPTURE(m.kind());
    for (double r : {0.05, 0.3, 1.0, 2.5, 7.0}) {
      const double h = 1e-5 * r;
      const auto c = m.eval(r), p = m.eval(r + h), q = m.eval(r - h);
      auto close = [](double an, double fd) { return std::abs(an - fd) <= 1e-6 * std::max(1.0, std::abs(an)); };
      CHECK(close(c.dK, (p.K - q.K) / (2 * h)));
      CHECK(close(c.d2K, (p.dK - q.dK) / (2 * h)));
      CHECK(close(c.dg0, (p.g0 - q.g0) / (2 * h)));
      CHECK(m.eval(r).K > 0.0);
    }
  }
}

TEST_CASE("saddle check margins") {
  const auto a = saddle_check(madelung_model(), make_endstate(1, 0, 0.5));
  CHECK(a.holds);
  CHECK(a.margin == Approx(0.75));
  const auto edge = saddle_check(madelung_model(), make_endstate(1, 0, 1.0));
  CHECK_FALSE(edge.holds);
  CHECK(edge.margin == Approx(0.0).epsilon(1e-15));
  const auto b = saddle_check(constant_k_model(), make_endstate(1, 0, 0.9));
  CHECK(b.holds);
  CHECK(b.margin == Approx(0.19));
}

TEST_CASE("saddle margin depends on u_inf - c only") {
  for (const auto& m : all_models())
    for (double a : {-3.0, -0.4, 0.0, 1.7, 12.0}) {
      const auto s0 = saddle_check(m, make_endstate(1.3, 0.2, 0.6));
      const auto s1 = saddle_check(m, make_endstate(1.3, 0.2 + a, 0.6 + a));
      CHECK(s1.margin == Approx(s0.margin).epsilon(1e-12));
    }
}

TEST_CASE("endstate flux and validation") {
  const auto e = make_endstate(2.0, 0.3, 0.8);
  CHECK(e.flux() == 2.0 * (0.3 - 0.8));
  CHECK_THROWS_AS(make_endstate(0.0, 0, 0.5), ValidationError);
  CHECK_THROWS_AS(make_endstate(-1.0, 0, 0.5), ValidationError);
}

TEST_CASE("effective potential normalization and curvature") {
  for (const auto& m : all_models()) {
    const auto e = make_endstate(1, 0, 0.5);
    const EffectivePotential W(m, e);
    CHECK(std::abs(W.W(1.0)) < 1e-15);
    CHECK(std::abs(W.dW(1.0)) < 1e-15);
    CHECK(W.d2W(1.0) == Approx(m.eval(1.0).dg0 - e.flux() * e.flux()));
  }
  const EffectivePotential Wa(madelung_model(), make_endstate(1, 0, 0.5));
  CHECK(Wa.d2W(1.0) == Approx(0.75));
}

TEST_CASE("W agrees with independent quadrature of W'") {
  const auto m = constant_k_model();
  const auto e = make_endstate(1, 0, 0.5);
  const EffectivePotential W(m, e);
  const double ref = simpson([&](double r) { return dW_ref(m, e, r); }, 1.0, 0.8, 2000);
  CHECK(std::abs(W.W(0.8) - ref) < 1e-10);
}

TEST_CASE("W' matches numerical differentiation of W") {
  for (const auto& m : all_models()) {
    const auto e = make_endstate(1, 0.1, 0.6);
    const EffectivePotential W(m, e);
    for (double r : {0.4, 0.7, 0.95, 1.3, 2.0}) {
      const double h = 1e-4;
      const double fd = (-W.W(r + 2 * h) + 8 * W.W(r + h) - 8 * W.W(r - h) + W.W(r - 2 * h)) / (12 * h);
      CHECK(std::abs(W.dW(r) - fd) < 1e-8);
      CHECK(W.dW(r) == Approx(dW_ref(m, e, r)).epsilon(1e-12));
    }
  }
}
