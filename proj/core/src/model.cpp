#include "ek/model.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>

#include "ek/error.hpp"

namespace ek {

namespace {

std::string fmt_double(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace

PowerCapillarity::PowerCapillarity(double a, double p) : a_(a), p_(p) {
  if (!(a > 0)) throw ValidationError("capillarity coefficient must be positive, got " + fmt_double(a));
}

std::string PowerCapillarity::name() const {
  return "K=" + fmt_double(a_) + "*rho^" + fmt_double(p_);
}

Jet3 PowerCapillarity::eval(double rho) const {
  if (p_ == 0.0) return {a_, 0.0, 0.0, 0.0};
  const double f = a_ * std::pow(rho, p_);
  return {f, p_ * f / rho, p_ * (p_ - 1) * f / (rho * rho),
          p_ * (p_ - 1) * (p_ - 2) * f / (rho * rho * rho)};
}

std::optional<double> PowerCapillarity::madelung_primitive(double rho, double rho_ref) const {
  const double e = 0.5 * (p_ + 1.0);
  if (e == 0.0) return std::sqrt(a_) * std::log(rho / rho_ref);
  return std::sqrt(a_) * (std::pow(rho, e) - std::pow(rho_ref, e)) / e;
}

LinearPotential::LinearPotential(double b) : b_(b) {
  if (!(b > 0)) throw ValidationError("potential slope must be positive, got " + fmt_double(b));
}

std::string LinearPotential::name() const { return "g0=" + fmt_double(b_) + "*rho"; }

Jet3 LinearPotential::eval(double rho) const { return {b_ * rho, b_, 0.0, 0.0}; }

std::optional<double> LinearPotential::bregman(double, double delta) const {
  return 0.5 * b_ * delta * delta;
}

PolytropicPotential::PolytropicPotential(double b, double gamma) : b_(b), gamma_(gamma) {
  if (!(b > 0) || !(gamma > 0))
    throw ValidationError("polytropic potential needs b > 0 and gamma > 0");
}

std::string PolytropicPotential::name() const {
  return "g0=" + fmt_double(b_) + "*rho^" + fmt_double(gamma_);
}

Jet3 PolytropicPotential::eval(double rho) const {
  const double f = b_ * std::pow(rho, gamma_);
  const double g = gamma_;
  return {f, g * f / rho, g * (g - 1) * f / (rho * rho), g * (g - 1) * (g - 2) * f / (rho * rho * rho)};
}

ModelSpec::ModelSpec(std::string kind, std::vector<double> params,
                     std::shared_ptr<const CapillarityLaw> cap,
                     std::shared_ptr<const PotentialLaw> pot, Interval admissible)
    : kind_(std::move(kind)),
      params_(std::move(params)),
      cap_(std::move(cap)),
      pot_(std::move(pot)),
      admissible_(admissible) {
  if (!cap_ || !pot_) throw ValidationError("model '" + kind_ + "' is missing a closure");
  if (!(admissible_.lo >= 0.0) || !(admissible_.hi > admissible_.lo))
    throw ValidationError("admissible density interval must satisfy 0 <= lo < hi");
}

void ModelSpec::domain_failure(double rho, const std::string& closure) const {
  throw DomainError("density " + fmt_double(rho) + " outside admissible interval (" +
                    fmt_double(admissible_.lo) + ", " + fmt_double(admissible_.hi) +
                    ") of closure " + closure);
}

Jet3 ModelSpec::capillarity_jet(double rho) const {
  if (!admissible_.contains(rho)) domain_failure(rho, cap_->name());
  return cap_->eval(rho);
}

Jet3 ModelSpec::potential_jet(double rho) const {
  if (!admissible_.contains(rho)) domain_failure(rho, pot_->name());
  return pot_->eval(rho);
}

ClosureValues ModelSpec::eval(double rho) const {
  const Jet3 k = capillarity_jet(rho);
  const Jet3 g = potential_jet(rho);
  return {k.f, k.d1, k.d2, g.f, g.d1};
}

ModelSpec madelung_model(double a, double b) {
  return ModelSpec("madelung", {a, b}, std::make_shared<PowerCapillarity>(a, -1.0),
                   std::make_shared<LinearPotential>(b));
}

ModelSpec constant_k_model(double k0, double b) {
  return ModelSpec("constant_k", {k0, b}, std::make_shared<PowerCapillarity>(k0, 0.0),
                   std::make_shared<LinearPotential>(b));
}

namespace {

struct Registry {
  Registry();
  std::mutex mutex;
  std::map<std::string, ModelFactory> factories;
};

double param_or(std::span<const double> p, std::size_t i, double fallback) {
  return i < p.size() ? p[i] : fallback;
}

Registry::Registry() {
  factories["madelung"] = [](std::span<const double> p) {
    if (p.size() > 2) throw ValidationError("model.params for madelung takes at most [a, b]");
    return madelung_model(param_or(p, 0, 0.25), param_or(p, 1, 1.0));
  };
  factories["constant_k"] = [](std::span<const double> p) {
    if (p.size() > 2) throw ValidationError("model.params for constant_k takes at most [K0, b]");
    return constant_k_model(param_or(p, 0, 1.0), param_or(p, 1, 1.0));
  };
  factories["polytropic"] = [](std::span<const double> p) {
    if (p.size() != 4) throw ValidationError("model.params for polytropic is [a, p, b, gamma]");
    return ModelSpec("polytropic", {p.begin(), p.end()}, std::make_shared<PowerCapillarity>(p[0], p[1]),
                     std::make_shared<PolytropicPotential>(p[2], p[3]));
  };
}

Registry& registry() {
  static Registry r;
  return r;
}

}  // namespace

void register_model(const std::string& kind, ModelFactory factory) {
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  r.factories[kind] = std::move(factory);
}

ModelSpec make_model(const std::string& kind, std::span<const double> params) {
  auto& r = registry();
  ModelFactory f;
  {
    std::lock_guard lock(r.mutex);
    auto it = r.factories.find(kind);
    if (it == r.factories.end()) throw ValidationError("model.kind: unknown model '" + kind + "'");
    f = it->second;
  }
  return f(params);
}

std::vector<std::string> registered_models() {
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  std::vector<std::string> out;
  for (const auto& [k, _] : r.factories) out.push_back(k);
  return out;
}

Endstate make_endstate(double rho_inf, double u_inf, double c) {
  if (!(rho_inf > 0) || !std::isfinite(rho_inf))
    throw ValidationError("endstate.rho_inf must be positive, got " + fmt_double(rho_inf));
  if (!std::isfinite(u_inf) || !std::isfinite(c))
    throw ValidationError("endstate velocity and wave speed must be finite");
  return {rho_inf, u_inf, c};
}

SaddleCheck saddle_check(const ModelSpec& model, const Endstate& end) {
  const double dg0 = model.potential_jet(end.rho_inf).d1;
  const double v = end.u_inf - end.c;
  const double margin = end.rho_inf * dg0 - v * v;
  return {margin > 0.0, margin};
}

EffectivePotential::EffectivePotential(ModelSpec model, Endstate end)
    : model_(std::move(model)), end_(end) {
  closed_form_ = model_.potential().bregman(end_.rho_inf, 0.0).has_value();
}

double EffectivePotential::W_delta(double delta) const {
  const double ri = end_.rho_inf;
  const double rho = ri + delta;
  const double j = end_.flux();
  const double flux_part = -0.5 * j * j * delta * delta / (rho * ri * ri);
  if (delta == 0.0) return 0.0;
  if (auto b = model_.potential().bregman(ri, delta)) {
    model_.potential_jet(rho);  // domain check
    return *b + flux_part;
  }
  model_.potential_jet(rho);
  // int_0^delta (g0(ri + s) - g0(ri)) ds, integrated by parts so the integrand
  // carries no cancellation: int_0^delta (delta - s) g0'(ri + s) ds. Panels shrink
  // geometrically toward rho = 0 so each stays well inside the analyticity region.
  auto integrand = [&](double s) { return (delta - s) * model_.potential_jet(ri + s).d1; };
  using GL = boost::math::quadrature::gauss<double, 20>;
  double bregman = 0.0;
  double a = 0.0;
  while (a != delta) {
    const double left = ri + a;
    double step = 0.5 * left;
    double b = delta > 0 ? std::min(a + step, delta) : std::max(a - 0.5 * step, delta);
    bregman += GL::integrate(integrand, a, b);
    a = b;
  }
  return bregman + flux_part;
}

double EffectivePotential::dW(double rho) const {
  const double ri = end_.rho_inf;
  const double j = end_.flux();
  const double delta = rho - ri;
  const double g = model_.potential_jet(rho).f - model_.potential_jet(ri).f;
  return g - 0.5 * j * j * delta * (rho + ri) / (rho * rho * ri * ri);
}

double EffectivePotential::d2W(double rho) const {
  const double j = end_.flux();
  return model_.potential_jet(rho).d1 - j * j / (rho * rho * rho);
}

EffectivePotential effective_potential(const ModelSpec& model, const Endstate& end) {
  const auto s = saddle_check(model, end);
  if (!s.holds) {
    throw ValidationError("saddle condition fails (margin " + fmt_double(s.margin) +
                          "): no soliton regime for this endstate and speed");
  }
  return EffectivePotential(model, end);
}

}  // namespace ek
