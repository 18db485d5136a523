#include <doctest.h>

#include <cmath>

#include "ek/error.hpp"
#include "ek/grid.hpp"

using namespace ek;
using doctest::Approx;

TEST_CASE("grid layout") {
  const Grid1D g(128, 5.0);
  CHECK(g.x(64) == 0.0);
  CHECK(g.x(0) == -5.0);
  CHECK(g.x(10) == Approx(-g.x(128 - 10)));
  CHECK_THROWS_AS(Grid1D(100, 1.0), ValidationError);
  CHECK_THROWS_AS(Grid1D(32, 1.0), ValidationError);
  CHECK_THROWS_AS(Grid1D(64, 0.0), ValidationError);
}

TEST_CASE("spectral derivatives of band-limited and smooth functions") {
  const Grid1D g(128, 3.0);
  const Eigen::VectorXd x = g.nodes();
  const double w = M_PI / 3.0;

  CHECK(derivative(g, Eigen::VectorXd(Eigen::VectorXd::Constant(128, 2.5)), 1).cwiseAbs().maxCoeff() < 1e-13);
  CHECK(derivative(g, Eigen::VectorXd(Eigen::VectorXd::Constant(128, 2.5)), 2).cwiseAbs().maxCoeff() < 1e-13);

  const Eigen::VectorXd s = (w * x).array().sin();
  CHECK((derivative(g, s, 1) - w * (w * x).array().cos().matrix()).cwiseAbs().maxCoeff() < 1e-10);

  const double w2 = 2 * M_PI / 3.0;
  const Eigen::VectorXd s2 = (w2 * x).array().sin();
  CHECK((derivative(g, s2, 1) - w2 * (w2 * x).array().cos().matrix()).cwiseAbs().maxCoeff() < 1e-10);

  const Grid1D G(256, 20.0);
  const Eigen::VectorXd X = G.nodes();
  const Eigen::VectorXd gauss = (-X.array().square()).exp();
  const Eigen::VectorXd exact = (4 * X.array().square() - 2) * gauss.array();
  CHECK((derivative(G, gauss, 2) - exact).cwiseAbs().maxCoeff() < 1e-8);

  CHECK_THROWS_AS(derivative(g, s, 3), ValidationError);
}

TEST_CASE("differentiation matrix matches the transform") {
  const Grid1D g(64, 4.0);
  const Eigen::VectorXd x = g.nodes();
  const Eigen::VectorXd f = (-x.array().square() / 2).exp() * (x.array() + 0.3);
  CHECK((diff_matrix(g) * f - derivative(g, f, 1)).cwiseAbs().maxCoeff() < 1e-12);
  const Eigen::MatrixXd D = diff_matrix(g);
  CHECK((D + D.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("Parseval: spectral and physical L2 norms agree") {
  const Grid1D g(256, 10.0);
  const Eigen::VectorXd x = g.nodes();
  const Eigen::VectorXd f = (-x.array().square()).exp() * (3 * x.array()).cos();
  const double phys = std::sqrt(g.dx() * f.squaredNorm());
  CHECK(hs_norm(g, f, 0) == Approx(phys).epsilon(1e-12));
}

TEST_CASE("H1 norm of a Gaussian") {
  // |e^{-x^2}|^2_{L2} = sqrt(pi/2), |d/dx e^{-x^2}|^2_{L2} = sqrt(pi/2)
  const Grid1D g(256, 15.0);
  const Eigen::VectorXd x = g.nodes();
  const Eigen::VectorXd f = (-x.array().square()).exp();
  const double ref = std::sqrt(2.0 * std::sqrt(M_PI / 2));
  CHECK(hs_norm(g, f, 1) == Approx(ref).epsilon(1e-10));
  CHECK(hs_norm(g, Eigen::VectorXd(Eigen::VectorXd::Zero(256)), 2) == 0.0);
}

TEST_CASE("X^j_k semi-norm") {
  const int n = 256;
  const Grid1D g(n, M_PI);
  const Eigen::VectorXd x = g.nodes();

  CHECK(xjk_norm(g, ModePair::zero(n, 1.3), 2) == 0.0);

  ModePair c = ModePair::zero(n, 0.0);
  c.u2.setConstant(2.0);
  CHECK(xjk_norm(g, c, 0) < 1e-12);

  // U1 = sin(2 pi x / X) with X = pi: |U1|^2_{L2} = pi, |U1'|^2 = 4 pi.
  ModePair s = ModePair::zero(n, 1.0);
  s.u1 = (2.0 * x.array()).sin().cast<std::complex<double>>();
  const double h1 = M_PI + 4 * M_PI;
  CHECK(xjk_norm2(g, s, 0) == Approx(h1 + M_PI).epsilon(1e-10));
  CHECK(xjk_norm(g, s, 0) == Approx(std::sqrt(h1 + M_PI)).epsilon(1e-10));
}

TEST_CASE("X^j_k is nondecreasing in j and |k|") {
  const int n = 128;
  const Grid1D g(n, 8.0);
  const Eigen::VectorXd x = g.nodes();
  ModePair u = ModePair::zero(n, 0.0);
  u.u1 = ((-x.array().square() / 3).exp() * (1.0 + 0.5 * x.array())).cast<std::complex<double>>();
  u.u2 = ((-x.array().square() / 5).exp() * x.array()).cast<std::complex<double>>() * std::complex<double>(0.2, 1.0);
  double prev_k = -1.0;
  for (double k : {0.0, 0.3, 1.0, 2.5}) {
    u.k = k;
    double prev_j = -1.0;
    for (int j = 0; j <= 3; ++j) {
      const double v = xjk_norm(g, u, j);
      CHECK(v >= prev_j);
      prev_j = v;
    }
    const double v0 = xjk_norm(g, u, 0);
    CHECK(v0 >= prev_k);
    prev_k = v0;
  }
}

TEST_CASE("X^0_0 is controlled by Sobolev norms of the components") {
  const int n = 128;
  const Grid1D g(n, 8.0);
  const Eigen::VectorXd x = g.nodes();
  ModePair u = ModePair::zero(n, 0.0);
  u.u1 = (-x.array().square()).exp().cast<std::complex<double>>();
  u.u2 = (x.array() * (-x.array().square() / 2).exp()).cast<std::complex<double>>();
  const double lhs = xjk_norm2(g, u, 0);
  const double h1 = hs_norm(g, u.u1, 1), h1b = hs_norm(g, u.u2, 1), l2b = hs_norm(g, u.u2, 0);
  CHECK(lhs >= h1 * h1 - 1e-12);
  CHECK(lhs <= h1 * h1 + h1b * h1b - l2b * l2b + 1e-12);
}
