#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ek/cli/artifacts.hpp"
#include "ek/cli/config.hpp"
#include "ek/soliton.hpp"

namespace ek::cli {

struct Flags {
  bool dump_modes = false;
  std::optional<double> gamma;  // resolvent: absolute rate, overrides gamma_factor
  std::optional<double> n;      // resolvent: power of (1 + t)
  std::optional<int> s;         // resolvent: single time-derivative order
  std::string primary;          // --out given as a file: name of the verb's main artifact
};

/// Main artifact of a verb ("profile.csv" for soliton, ...); empty for `all`.
std::string primary_artifact(const std::string& verb);

struct Check {
  std::string id;
  std::string title;
  bool pass = false;
  std::string detail;
};

const std::vector<std::string>& verbs();

/// One invocation of the tool: a validated config, an output directory and the
/// results computed so far. Each verb writes its artifacts and returns a summary;
/// run() additionally writes manifest.json.
class Session {
 public:
  Session(ExperimentConfig cfg, Flags flags = {});

  json run(const std::string& verb);

  json soliton();
  json spectrum();
  json hypotheses();
  json growth();
  json wavepacket();
  json resolvent();
  json simulate();
  json experiment();
  json crossmodel();   // secondary-model checks used by `all`
  json determinism();  // re-runs cheap verbs into a scratch directory and compares bytes
  json all();

  const ExperimentConfig& config() const noexcept { return cfg_; }
  const Artifacts& artifacts() const noexcept { return out_; }
  const std::vector<Check>& checks() const noexcept { return checks_; }
  const std::vector<Check>& criteria() const noexcept { return criteria_; }
  const std::map<std::string, double>& timings() const noexcept { return timings_; }

 private:
  const SolitonProfile& profile();
  SolitonProfile profile_at(int n);
  GrowthCurve curve() const;
  bool canonical_nls() const;
  void check(const std::string& id, const std::string& title, bool pass, const std::string& detail);
  void evaluate_criteria(const std::map<std::string, json>& r);

  ExperimentConfig cfg_;
  Flags flags_;
  std::string hash_;
  ModelSpec model_;
  Artifacts out_;
  std::optional<SolitonProfile> profile_;
  std::map<std::string, double> timings_;
  std::vector<Check> checks_, criteria_;
};

}  // namespace ek::cli
