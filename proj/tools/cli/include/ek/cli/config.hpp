#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ek/linop.hpp"
#include "ek/model.hpp"

namespace ek::cli {

struct ModelBlock {
  std::string kind = "madelung";
  std::vector<double> params;  // empty: the registered defaults

  ModelSpec build() const;
};

struct ExperimentConfig {
  ModelBlock model;
  Endstate endstate;  // c lives here as well ("speed" in the file)

  struct Profile {
    int n = 1024;
    double tol = 1e-12;
  } profile;

  struct Scan {
    int n = 256;
    int samples = 64;
    double k_hi = 0.0;
    double tail_mass = 1e-2;
    double neutral_rel = 1e-8;
    double unstable_abs = 1e-8;
    MForm m_form = MForm::Hessian;
    std::vector<int> check_n{512, 1024};  // (sigma0, k0) stability check
  } scan;

  struct Hypotheses {
    int n = 1024;
    std::vector<double> probe_k{0.5, 1.0, 2.0};
    double xi_max = 20.0;
    int random_vectors = 10;
  } hypotheses;

  struct Growth {
    double dt = 0.05;
    double t_sigma = 10.0;  // T = t_sigma / sigma0
  } growth;

  struct Wavepacket {
    int nodes_per_radius = 8;
    double t_sigma = 10.0;
    double dt = 0.05;
    int samples = 401;
    int ny = 128;
  } wavepacket;

  struct Resolvent {
    double gamma_factor = 1.2;  // gamma = gamma_factor * sigma0
    double n = 1.0;
    std::vector<int> s{0, 1};
    double t_sigma = 20.0;
    double dt = 0.05;
  } resolvent;

  struct Simulation {
    int nx = 256, ny = 32;
    std::vector<double> eps{1e-3, 3e-4, 1e-4};
    double kappa = 0.1;
    double dt = 0.0;
    double t_cap = 0.0;
    int torus_multiple = 1;
    int sample_every = 20;
    double fit_hi = 0.01;
    double steady_t_sigma = 10.0;  // unperturbed run length in units of 1/sigma0
    int linearization_nx = 512;
    double linearization_eta = 1e-4;
  } simulation;

  // Second model for the cross-model acceptance checks; disabled when kind is empty.
  ModelBlock secondary{"constant_k", {1.0, 1.0}};

  std::string out = "out";
  std::uint64_t seed = 12345;
  int jobs = 0;

  ModelSpec build_model() const { return model.build(); }
};

/// Parses and validates a YAML configuration. Unknown keys, missing required
/// blocks and out-of-range values raise ValidationError naming the key.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<string>");

/// Range checks plus the eager saddle check; throws ValidationError.
void validate(const ExperimentConfig& cfg);

/// Canonical YAML of the fully defaulted configuration.
std::string canonical_yaml(const ExperimentConfig& cfg);
/// SHA-256 of canonical_yaml, hex encoded.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace ek::cli
