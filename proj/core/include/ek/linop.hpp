#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ek/grid.hpp"
#include "ek/model.hpp"
#include "ek/soliton.hpp"

namespace ek {

/// Zeroth-order coefficient m of the linearized capillarity term.
enum class MForm {
  Hessian,  ///< K' rho'' + K'' rho'^2 / 2 - g0', from the second variation of the energy
  Variant,  ///< K' rho'' + K' rho'^2 - g0'; misses rho' in the kernel unless K'' = 0
};

/// Dense discretization of L(k), JL(k) and M about a profile. D1 is the Fourier
/// differentiation matrix, so -d/dx(a d/dx .) becomes D1^T diag(a) D1.
struct OperatorAssembly {
  explicit OperatorAssembly(const Grid1D& g) : grid(g) {}

  Grid1D grid;
  double k = 0.0;
  MForm form = MForm::Hessian;
  Eigen::VectorXd rho, K, v, m;  // v = u_c - c
  Eigen::MatrixXd D1;
  Eigen::MatrixXd L, JL, M;
};

OperatorAssembly assemble(const SolitonProfile& p, const ModelSpec& model, double k,
                          MForm form = MForm::Hessian);
/// Throws ValidationError when `g` is not the profile's grid.
OperatorAssembly assemble(const SolitonProfile& p, const ModelSpec& model, const Grid1D& g, double k,
                          MForm form = MForm::Hessian);

enum class Which { L, JL, M };

struct Spectrum {
  Eigen::VectorXcd values;    // ascending for L and M
  Eigen::MatrixXcd vectors;   // empty unless requested
  double max_discarded_imag = 0.0;
  double symmetry_defect = 0.0;  // max|A - A^T| / max|A| for L and M
};

Spectrum spectrum(const OperatorAssembly& a, Which which, bool vectors = false);

/// Thresholds used to separate genuine unstable eigenvalues from discretization
/// artifacts of the (imaginary) essential spectrum.
struct GrowthOptions {
  double neutral_rel = 1e-8;     // |Re| <= neutral_rel * spectral radius is neutral
  double unstable_abs = 1e-8;    // sigma above this counts as unstable
  double tail_start = 0.8;       // tail region |x| > tail_start * X
  double tail_mass = 1e-2;       // localized iff tail mass fraction below this
  MForm form = MForm::Hessian;
};

struct GrowthSample {
  double k = 0.0;
  double sigma = 0.0;       // sigma~(k)
  double sigma_imag = 0.0;  // Im of the selected eigenvalue
  int count_unstable = 0;   // localized eigenvalues with Re > threshold
  int count_rejected = 0;   // candidates with Re > threshold discarded as delocalized
  double tail_mass = 0.0;
  std::optional<ModePair> mode;  // unit L2 norm, density component real-positive at its peak
};

GrowthSample growth_rate(const SolitonProfile& p, const ModelSpec& model, double k,
                         const GrowthOptions& opts = {});

/// Unit discrete L2 norm over both components, phase fixed so the density
/// component is real-positive where its modulus peaks.
ModePair normalize_mode(const Grid1D& g, const Eigen::VectorXcd& stacked, double k);

/// Refines an eigenvalue of JL(k) near `guess` by shifted inverse iteration with a
/// single LU factorization. Returns (eigenvalue, eigenvector).
std::pair<std::complex<double>, Eigen::VectorXcd> refine_eigenpair(const OperatorAssembly& a,
                                                                  std::complex<double> guess,
                                                                  const Eigen::VectorXcd* start = nullptr);

struct GrowthCurve {
  std::vector<GrowthSample> samples;  // every evaluated k, sorted by k
  double k_max = 0.0, k0 = 0.0, sigma0 = 0.0;
  double k_hi = 0.0;
  int n = 0;
  double half_length = 0.0;
  GrowthOptions options;
  int max_unstable_count = 0;
  double evenness_defect = 0.0;

  /// sigma~ at k by linear interpolation of the samples (0 outside the band).
  double sigma_at(double k) const;
};

struct ScanOptions {
  int samples = 64;
  double k_hi = 0.0;          // 0: 4 * sqrt(max(1/2, 1/min K(rho_c)))
  double k0_rel_tol = 1e-4;
  double kmax_rel_tol = 1e-6;
  int jobs = 0;
  GrowthOptions growth;
};

/// Coarse scan, golden-section refinement of k0, bisection for k_max. Throws
/// NumericalError ("no instability detected") when sigma~ <= threshold everywhere.
GrowthCurve scan_growth_curve(const SolitonProfile& p, const ModelSpec& model, const ScanOptions& opts = {});

/// (sigma0, k0) located by golden section where sigma~(k) is followed by inverse
/// iteration from a nearby eigenpair (no dense eigensolve per k). Used for the
/// high-resolution convergence check.
std::pair<double, double> track_maximum(const SolitonProfile& p, const ModelSpec& model, double k_lo,
                                        double k_hi, double sigma_guess, double k_rel_tol = 1e-5,
                                        MForm form = MForm::Hessian);

/// Eigenvalues of the Hermitian 2x2 symbol of L_inf(k) at x-frequency xi.
std::pair<double, double> linf_symbol(const Endstate& end, const ModelSpec& model, double xi, double k);

/// Roots of X^2 - 2 i xi (u_inf - c) X + rho K (xi^2 + k^2)^2 + rho g0' k^2 + (rho g0' - (u_inf - c)^2) xi^2.
std::pair<std::complex<double>, std::complex<double>> jlinf_symbol_roots(const Endstate& end,
                                                                        const ModelSpec& model, double xi,
                                                                        double k);

struct HypothesisResult {
  std::string id;
  bool pass = false;
  std::string summary;
  std::vector<std::pair<std::string, double>> evidence;
};

struct HypothesisOptions {
  std::vector<double> h2_probe_k{0.5, 1.0, 2.0};
  double h2_xi_max = 20.0;
  int h2_xi_samples = 4001;
  double h3_k = 1.0;
  int random_vectors = 10;
  std::uint64_t seed = 12345;
  double schur_tol = 1e-8;
  double kernel_tol = 1e-6;
  double negative_tol = 1e-8;
  MForm form = MForm::Hessian;
};

struct HypothesisReport {
  std::vector<HypothesisResult> results;  // H1..H4
  bool all_pass() const;
};

HypothesisReport check_hypotheses(const SolitonProfile& p, const ModelSpec& model,
                                  const HypothesisOptions& opts = {});

/// Upper k of the default scan range: 4 sqrt(max(1/2, 1/min K(rho_c))).
double default_k_hi(const SolitonProfile& p, const ModelSpec& model);

/// ||M rho_c'||_2 / ||rho_c'||_2.
double kernel_defect(const OperatorAssembly& a, const SolitonProfile& p);

}  // namespace ek
