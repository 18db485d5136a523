#include "ek/cli/config.hpp"

#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "ek/error.hpp"

namespace ek::cli {

ModelSpec ModelBlock::build() const { return make_model(kind, params); }

namespace {

std::string where(const YAML::Node& n) {
  const YAML::Mark m = n.Mark();
  if (m.is_null()) return "";
  return " (line " + std::to_string(m.line + 1) + ", column " + std::to_string(m.column + 1) + ")";
}

[[noreturn]] void bad(const std::string& key, const std::string& what, const YAML::Node& n = {}) {
  throw ValidationError("config key '" + key + "': " + what + (n.IsDefined() ? where(n) : ""));
}

void check_keys(const YAML::Node& n, const std::string& path, const std::set<std::string>& allowed) {
  if (!n.IsMap()) bad(path.empty() ? "<root>" : path, "expected a mapping", n);
  for (const auto& kv : n) {
    const std::string k = kv.first.as<std::string>();
    if (!allowed.count(k)) bad(path.empty() ? k : path + "." + k, "unknown key", kv.first);
  }
}

template <class T>
void read(const YAML::Node& parent, const std::string& path, const char* key, T& dst) {
  const YAML::Node n = parent[key];
  if (!n.IsDefined() || n.IsNull()) return;
  const std::string full = path.empty() ? key : path + "." + key;
  try {
    dst = n.as<T>();
  } catch (const YAML::Exception&) {
    bad(full, "cannot convert value '" + (n.IsScalar() ? n.Scalar() : std::string("<non-scalar>")) + "'", n);
  }
}

ModelBlock read_model(const YAML::Node& n, const std::string& path) {
  check_keys(n, path, {"kind", "params"});
  ModelBlock m;
  if (!n["kind"]) bad(path + ".kind", "required");
  read(n, path, "kind", m.kind);
  m.params.clear();
  read(n, path, "params", m.params);
  return m;
}

bool power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

void require(bool ok, const std::string& key, const std::string& constraint) {
  if (!ok) throw ValidationError("config key '" + key + "': must satisfy " + constraint);
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ValidationError("config parse error in " + source + ": " + e.what());
  }
  if (!root.IsDefined() || root.IsNull()) throw ValidationError("config " + source + " is empty");
  check_keys(root, "",
             {"model", "endstate", "speed", "profile", "scan", "hypotheses", "growth", "wavepacket", "resolvent",
              "simulation", "secondary_model", "output", "seed", "jobs"});

  ExperimentConfig c;
  if (!root["model"]) bad("model", "required block missing");
  c.model = read_model(root["model"], "model");
  if (!root["speed"]) bad("speed", "required");
  read(root, "", "speed", c.endstate.c);
  if (const auto e = root["endstate"]) {
    check_keys(e, "endstate", {"rho_inf", "u_inf"});
    read(e, "endstate", "rho_inf", c.endstate.rho_inf);
    read(e, "endstate", "u_inf", c.endstate.u_inf);
  }
  if (const auto n = root["profile"]) {
    check_keys(n, "profile", {"n", "tol"});
    read(n, "profile", "n", c.profile.n);
    read(n, "profile", "tol", c.profile.tol);
  }
  if (const auto n = root["scan"]) {
    check_keys(n, "scan",
               {"n", "samples", "k_hi", "tail_mass", "neutral_rel", "unstable_abs", "m_form", "check_n"});
    read(n, "scan", "n", c.scan.n);
    read(n, "scan", "samples", c.scan.samples);
    read(n, "scan", "k_hi", c.scan.k_hi);
    read(n, "scan", "tail_mass", c.scan.tail_mass);
    read(n, "scan", "neutral_rel", c.scan.neutral_rel);
    read(n, "scan", "unstable_abs", c.scan.unstable_abs);
    read(n, "scan", "check_n", c.scan.check_n);
    std::string form = "hessian";
    read(n, "scan", "m_form", form);
    if (form == "hessian")
      c.scan.m_form = MForm::Hessian;
    else if (form == "variant")
      c.scan.m_form = MForm::Variant;
    else
      bad("scan.m_form", "expected 'hessian' or 'variant', got '" + form + "'", n["m_form"]);
  }
  if (const auto n = root["hypotheses"]) {
    check_keys(n, "hypotheses", {"n", "probe_k", "xi_max", "random_vectors"});
    read(n, "hypotheses", "n", c.hypotheses.n);
    read(n, "hypotheses", "probe_k", c.hypotheses.probe_k);
    read(n, "hypotheses", "xi_max", c.hypotheses.xi_max);
    read(n, "hypotheses", "random_vectors", c.hypotheses.random_vectors);
  }
  if (const auto n = root["growth"]) {
    check_keys(n, "growth", {"dt", "t_sigma"});
    read(n, "growth", "dt", c.growth.dt);
    read(n, "growth", "t_sigma", c.growth.t_sigma);
  }
  if (const auto n = root["wavepacket"]) {
    check_keys(n, "wavepacket", {"nodes_per_radius", "t_sigma", "dt", "samples", "ny"});
    read(n, "wavepacket", "nodes_per_radius", c.wavepacket.nodes_per_radius);
    read(n, "wavepacket", "t_sigma", c.wavepacket.t_sigma);
    read(n, "wavepacket", "dt", c.wavepacket.dt);
    read(n, "wavepacket", "samples", c.wavepacket.samples);
    read(n, "wavepacket", "ny", c.wavepacket.ny);
  }
  if (const auto n = root["resolvent"]) {
    check_keys(n, "resolvent", {"gamma_factor", "n", "s", "t_sigma", "dt"});
    read(n, "resolvent", "gamma_factor", c.resolvent.gamma_factor);
    read(n, "resolvent", "n", c.resolvent.n);
    read(n, "resolvent", "s", c.resolvent.s);
    read(n, "resolvent", "t_sigma", c.resolvent.t_sigma);
    read(n, "resolvent", "dt", c.resolvent.dt);
  }
  if (const auto n = root["simulation"]) {
    check_keys(n, "simulation",
               {"nx", "ny", "eps", "kappa", "dt", "t_cap", "torus_multiple", "sample_every", "fit_hi",
                "steady_t_sigma", "linearization_nx", "linearization_eta"});
    auto& s = c.simulation;
    read(n, "simulation", "nx", s.nx);
    read(n, "simulation", "ny", s.ny);
    read(n, "simulation", "eps", s.eps);
    read(n, "simulation", "kappa", s.kappa);
    read(n, "simulation", "dt", s.dt);
    read(n, "simulation", "t_cap", s.t_cap);
    read(n, "simulation", "torus_multiple", s.torus_multiple);
    read(n, "simulation", "sample_every", s.sample_every);
    read(n, "simulation", "fit_hi", s.fit_hi);
    read(n, "simulation", "steady_t_sigma", s.steady_t_sigma);
    read(n, "simulation", "linearization_nx", s.linearization_nx);
    read(n, "simulation", "linearization_eta", s.linearization_eta);
  }
  if (const auto n = root["secondary_model"]) {
    if (n.IsNull() || (n.IsScalar() && n.Scalar() == "none"))
      c.secondary = ModelBlock{"", {}};
    else
      c.secondary = read_model(n, "secondary_model");
  }
  if (const auto n = root["output"]) {
    check_keys(n, "output", {"dir"});
    read(n, "output", "dir", c.out);
  }
  read(root, "", "seed", c.seed);
  read(root, "", "jobs", c.jobs);
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

void validate(const ExperimentConfig& c) {
  const ModelSpec model = c.build_model();
  make_endstate(c.endstate.rho_inf, c.endstate.u_inf, c.endstate.c);
  const SaddleCheck sc = saddle_check(model, c.endstate);
  if (!sc.holds) {
    std::ostringstream os;
    os << "speed: saddle condition rho g0'(rho) > (u_inf - c)^2 fails (margin " << sc.margin
       << "); c is not subsonic relative to the endstate";
    throw ValidationError(os.str());
  }
  if (!c.secondary.kind.empty()) {
    const ModelSpec m2 = c.secondary.build();
    if (!saddle_check(m2, c.endstate).holds) throw ValidationError("secondary_model: saddle condition fails");
  }
  require(power_of_two(c.profile.n) && c.profile.n >= 64, "profile.n", "a power of two >= 64");
  require(c.profile.tol > 0 && c.profile.tol < 1e-2, "profile.tol", "0 < tol < 1e-2");
  require(power_of_two(c.scan.n) && c.scan.n >= 64, "scan.n", "a power of two >= 64");
  require(c.scan.samples >= 8, "scan.samples", ">= 8");
  require(c.scan.k_hi >= 0, "scan.k_hi", ">= 0 (0 selects the automatic range)");
  require(c.scan.tail_mass > 0 && c.scan.tail_mass < 1, "scan.tail_mass", "0 < tail_mass < 1");
  require(c.scan.neutral_rel >= 0 && c.scan.unstable_abs >= 0, "scan.neutral_rel/unstable_abs", ">= 0");
  for (int n : c.scan.check_n) require(power_of_two(n) && n >= 64, "scan.check_n", "powers of two >= 64");
  require(power_of_two(c.hypotheses.n) && c.hypotheses.n >= 64, "hypotheses.n", "a power of two >= 64");
  require(!c.hypotheses.probe_k.empty(), "hypotheses.probe_k", "non-empty");
  for (double k : c.hypotheses.probe_k) require(k > 0, "hypotheses.probe_k", "positive entries");
  require(c.hypotheses.xi_max > 0, "hypotheses.xi_max", "> 0");
  require(c.hypotheses.random_vectors >= 1, "hypotheses.random_vectors", ">= 1");
  require(c.growth.dt > 0 && c.growth.t_sigma > 0, "growth", "dt > 0 and t_sigma > 0");
  require(c.wavepacket.nodes_per_radius >= 2, "wavepacket.nodes_per_radius", ">= 2");
  require(c.wavepacket.dt > 0 && c.wavepacket.t_sigma > 0, "wavepacket", "dt > 0 and t_sigma > 0");
  require(c.wavepacket.samples >= 8, "wavepacket.samples", ">= 8");
  require(c.wavepacket.ny >= 4 && c.wavepacket.ny % 2 == 0, "wavepacket.ny", "even and >= 4");
  require(c.resolvent.gamma_factor > 1, "resolvent.gamma_factor", "> 1 (gamma > sigma0)");
  require(c.resolvent.n >= 0, "resolvent.n", ">= 0");
  require(!c.resolvent.s.empty(), "resolvent.s", "non-empty");
  for (int s : c.resolvent.s) require(s >= 0 && s <= 4, "resolvent.s", "0 <= s <= 4");
  require(c.resolvent.t_sigma > 0 && c.resolvent.dt > 0, "resolvent", "dt > 0 and t_sigma > 0");
  const auto& s = c.simulation;
  require(power_of_two(s.nx) && s.nx >= 64, "simulation.nx", "a power of two >= 64");
  require(power_of_two(s.ny) && s.ny >= 4, "simulation.ny", "a power of two >= 4");
  require(power_of_two(s.linearization_nx) && s.linearization_nx >= 64, "simulation.linearization_nx",
          "a power of two >= 64");
  require(s.kappa > 0 && s.kappa < 1, "simulation.kappa", "0 < kappa < 1");
  require(!s.eps.empty(), "simulation.eps", "non-empty");
  for (double e : s.eps) require(e > 0 && e < s.kappa, "simulation.eps", "0 < eps < kappa < 1");
  require(s.dt >= 0 && s.t_cap >= 0, "simulation.dt/t_cap", ">= 0 (0 selects the default)");
  require(s.torus_multiple >= 1, "simulation.torus_multiple", ">= 1");
  require(s.sample_every >= 1, "simulation.sample_every", ">= 1");
  require(s.fit_hi > 0 && s.fit_hi < 1, "simulation.fit_hi", "0 < fit_hi < 1");
  require(s.steady_t_sigma > 0, "simulation.steady_t_sigma", "> 0");
  require(s.linearization_eta > 0, "simulation.linearization_eta", "> 0");
  require(c.jobs >= 0, "jobs", ">= 0");
}

std::string canonical_yaml(const ExperimentConfig& c) {
  // Output location and worker count do not change results and are left out.
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << YAML::BeginMap;
  auto model = [&](const char* key, const ModelBlock& m) {
    e << YAML::Key << key << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "kind" << YAML::Value << m.kind;
    e << YAML::Key << "params" << YAML::Value << YAML::Flow << m.params;
    e << YAML::EndMap;
  };
  model("model", c.model);
  e << YAML::Key << "endstate" << YAML::Value << YAML::BeginMap << YAML::Key << "rho_inf" << YAML::Value
    << c.endstate.rho_inf << YAML::Key << "u_inf" << YAML::Value << c.endstate.u_inf << YAML::EndMap;
  e << YAML::Key << "speed" << YAML::Value << c.endstate.c;
  e << YAML::Key << "profile" << YAML::Value << YAML::BeginMap << YAML::Key << "n" << YAML::Value << c.profile.n
    << YAML::Key << "tol" << YAML::Value << c.profile.tol << YAML::EndMap;
  e << YAML::Key << "scan" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "n" << YAML::Value << c.scan.n << YAML::Key << "samples" << YAML::Value << c.scan.samples;
  e << YAML::Key << "k_hi" << YAML::Value << c.scan.k_hi << YAML::Key << "tail_mass" << YAML::Value
    << c.scan.tail_mass;
  e << YAML::Key << "neutral_rel" << YAML::Value << c.scan.neutral_rel << YAML::Key << "unstable_abs"
    << YAML::Value << c.scan.unstable_abs;
  e << YAML::Key << "m_form" << YAML::Value
    << (c.scan.m_form == MForm::Hessian ? "hessian" : "variant");
  e << YAML::Key << "check_n" << YAML::Value << YAML::Flow << c.scan.check_n << YAML::EndMap;
  e << YAML::Key << "hypotheses" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "n" << YAML::Value << c.hypotheses.n << YAML::Key << "probe_k" << YAML::Value << YAML::Flow
    << c.hypotheses.probe_k;
  e << YAML::Key << "xi_max" << YAML::Value << c.hypotheses.xi_max << YAML::Key << "random_vectors"
    << YAML::Value << c.hypotheses.random_vectors << YAML::EndMap;
  e << YAML::Key << "growth" << YAML::Value << YAML::BeginMap << YAML::Key << "dt" << YAML::Value << c.growth.dt
    << YAML::Key << "t_sigma" << YAML::Value << c.growth.t_sigma << YAML::EndMap;
  const auto& w = c.wavepacket;
  e << YAML::Key << "wavepacket" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "nodes_per_radius" << YAML::Value << w.nodes_per_radius << YAML::Key << "t_sigma"
    << YAML::Value << w.t_sigma;
  e << YAML::Key << "dt" << YAML::Value << w.dt << YAML::Key << "samples" << YAML::Value << w.samples
    << YAML::Key << "ny" << YAML::Value << w.ny << YAML::EndMap;
  const auto& r = c.resolvent;
  e << YAML::Key << "resolvent" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "gamma_factor" << YAML::Value << r.gamma_factor << YAML::Key << "n" << YAML::Value << r.n;
  e << YAML::Key << "s" << YAML::Value << YAML::Flow << r.s << YAML::Key << "t_sigma" << YAML::Value << r.t_sigma
    << YAML::Key << "dt" << YAML::Value << r.dt << YAML::EndMap;
  const auto& s = c.simulation;
  e << YAML::Key << "simulation" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "nx" << YAML::Value << s.nx << YAML::Key << "ny" << YAML::Value << s.ny;
  e << YAML::Key << "eps" << YAML::Value << YAML::Flow << s.eps << YAML::Key << "kappa" << YAML::Value << s.kappa;
  e << YAML::Key << "dt" << YAML::Value << s.dt << YAML::Key << "t_cap" << YAML::Value << s.t_cap;
  e << YAML::Key << "torus_multiple" << YAML::Value << s.torus_multiple << YAML::Key << "sample_every"
    << YAML::Value << s.sample_every;
  e << YAML::Key << "fit_hi" << YAML::Value << s.fit_hi << YAML::Key << "steady_t_sigma" << YAML::Value
    << s.steady_t_sigma;
  e << YAML::Key << "linearization_nx" << YAML::Value << s.linearization_nx << YAML::Key << "linearization_eta"
    << YAML::Value << s.linearization_eta << YAML::EndMap;
  if (c.secondary.kind.empty())
    e << YAML::Key << "secondary_model" << YAML::Value << "none";
  else
    model("secondary_model", c.secondary);
  e << YAML::Key << "seed" << YAML::Value << c.seed;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = canonical_yaml(cfg);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr))
    throw NumericalError("config hash: SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

}  // namespace ek::cli
