#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ek {

/// Open density interval on which a model's closures are defined.
struct Interval {
  double lo = 1e-8;
  double hi = 1e8;
  bool contains(double x) const noexcept { return x > lo && x < hi; }
};

/// Value of a scalar closure and its first three derivatives.
struct Jet3 {
  double f = 0, d1 = 0, d2 = 0, d3 = 0;
};

/// Capillarity coefficient K(rho) > 0.
class CapillarityLaw {
 public:
  virtual ~CapillarityLaw() = default;
  virtual std::string name() const = 0;
  virtual Jet3 eval(double rho) const = 0;
  /// Closed form of the integral of sqrt(K(r)/r) over [rho_ref, rho], if known.
  virtual std::optional<double> madelung_primitive(double rho, double rho_ref) const {
    (void)rho;
    (void)rho_ref;
    return std::nullopt;
  }
};

/// Bulk chemical potential g0(rho).
class PotentialLaw {
 public:
  virtual ~PotentialLaw() = default;
  virtual std::string name() const = 0;
  virtual Jet3 eval(double rho) const = 0;
  /// Closed form of the integral of g0(r) - g0(rho_ref) over [rho_ref, rho_ref + delta],
  /// evaluated without cancellation for small delta.
  virtual std::optional<double> bregman(double rho_ref, double delta) const {
    (void)rho_ref;
    (void)delta;
    return std::nullopt;
  }
};

/// K = a * rho^p.
class PowerCapillarity final : public CapillarityLaw {
 public:
  PowerCapillarity(double a, double p);
  std::string name() const override;
  Jet3 eval(double rho) const override;
  std::optional<double> madelung_primitive(double rho, double rho_ref) const override;

 private:
  double a_, p_;
};

/// g0 = b * rho.
class LinearPotential final : public PotentialLaw {
 public:
  explicit LinearPotential(double b);
  std::string name() const override;
  Jet3 eval(double rho) const override;
  std::optional<double> bregman(double rho_ref, double delta) const override;

 private:
  double b_;
};

/// g0 = b * rho^gamma. No closed-form Bregman term is provided, so the effective
/// potential falls back to quadrature.
class PolytropicPotential final : public PotentialLaw {
 public:
  PolytropicPotential(double b, double gamma);
  std::string name() const override;
  Jet3 eval(double rho) const override;

 private:
  double b_, gamma_;
};

/// The five closure values used throughout the linear analysis.
struct ClosureValues {
  double K, dK, d2K, g0, dg0;
};

/// Fluid model: capillarity and chemical-potential closures plus the admissible
/// density interval. Immutable and cheap to copy.
class ModelSpec {
 public:
  ModelSpec(std::string kind, std::vector<double> params, std::shared_ptr<const CapillarityLaw> cap,
            std::shared_ptr<const PotentialLaw> pot, Interval admissible = {});

  const std::string& kind() const noexcept { return kind_; }
  const std::vector<double>& params() const noexcept { return params_; }
  const Interval& admissible() const noexcept { return admissible_; }
  const CapillarityLaw& capillarity() const noexcept { return *cap_; }
  const PotentialLaw& potential() const noexcept { return *pot_; }

  /// Throws DomainError naming the closure when rho is not admissible.
  ClosureValues eval(double rho) const;
  Jet3 capillarity_jet(double rho) const;
  Jet3 potential_jet(double rho) const;

  double K(double rho) const { return capillarity_jet(rho).f; }
  double g0(double rho) const { return potential_jet(rho).f; }

 private:
  [[noreturn]] void domain_failure(double rho, const std::string& closure) const;

  std::string kind_;
  std::vector<double> params_;
  std::shared_ptr<const CapillarityLaw> cap_;
  std::shared_ptr<const PotentialLaw> pot_;
  Interval admissible_;
};

/// K = a/rho, g0 = b*rho. Defaults (a, b) = (1/4, 1) are Madelung-equivalent to the
/// defocusing cubic Schrodinger equation with dispersion 1/2.
ModelSpec madelung_model(double a = 0.25, double b = 1.0);
/// K = K0, g0 = b*rho.
ModelSpec constant_k_model(double k0 = 1.0, double b = 1.0);

using ModelFactory = std::function<ModelSpec(std::span<const double> params)>;

/// Registers a named model constructor. Built-ins: "madelung", "constant_k", "polytropic".
void register_model(const std::string& kind, ModelFactory factory);
ModelSpec make_model(const std::string& kind, std::span<const double> params);
std::vector<std::string> registered_models();

/// Far-field state and wave speed.
struct Endstate {
  double rho_inf = 1.0;
  double u_inf = 0.0;
  double c = 0.0;

  /// Mass flux in the co-moving frame, rho_inf * (u_inf - c).
  double flux() const noexcept { return rho_inf * (u_inf - c); }
};

Endstate make_endstate(double rho_inf, double u_inf, double c);

struct SaddleCheck {
  bool holds;
  double margin;  ///< rho_inf g0'(rho_inf) - (u_inf - c)^2
};

SaddleCheck saddle_check(const ModelSpec& model, const Endstate& end);

/// Potential W of the profile ODE  K(rho) rho'^2 / 2 = W(rho), anchored at W(rho_inf) = 0.
class EffectivePotential {
 public:
  EffectivePotential(ModelSpec model, Endstate end);

  double W(double rho) const { return W_delta(rho - end_.rho_inf); }
  /// W(rho_inf + delta); accurate relative to W for small delta when the closure
  /// provides a closed-form Bregman term.
  double W_delta(double delta) const;
  double dW(double rho) const;
  double d2W(double rho) const;

  bool closed_form() const noexcept { return closed_form_; }
  const ModelSpec& model() const noexcept { return model_; }
  const Endstate& endstate() const noexcept { return end_; }

 private:
  ModelSpec model_;
  Endstate end_;
  bool closed_form_;
};

/// Throws ValidationError when the saddle condition fails.
EffectivePotential effective_potential(const ModelSpec& model, const Endstate& end);

}  // namespace ek
