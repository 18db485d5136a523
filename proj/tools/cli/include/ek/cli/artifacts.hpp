#pragma once

#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "ek/field2d.hpp"
#include "ek/linop.hpp"

namespace ek::cli {

using json = nlohmann::ordered_json;

/// Writes run outputs into one directory. Every file carries the config hash:
/// CSV as a leading comment, JSON as a "config_hash" member, fields through their
/// JSON header. Numbers are printed with 17 significant digits so identical runs
/// give identical bytes.
class Artifacts {
 public:
  Artifacts(std::filesystem::path dir, std::string hash);

  const std::filesystem::path& dir() const noexcept { return dir_; }
  const std::string& hash() const noexcept { return hash_; }
  const std::vector<std::string>& written() const noexcept { return written_; }
  /// Files written under `from` go to `to` instead (same directory).
  void rename(std::string from, std::string to) { renames_[std::move(from)] = std::move(to); }

  void csv(const std::string& name, const std::vector<std::string>& columns,
           const std::vector<std::vector<double>>& rows, const std::vector<std::pair<std::string, std::string>>& meta = {});
  void write_json(const std::string& name, json body);
  /// name.bin holds rho then phi as little-endian doubles, x fastest; name.json describes it.
  void field(const std::string& name, const Field2D& f);

 private:
  void record(const std::string& name);
  std::string target(const std::string& name) const;
  std::filesystem::path dir_;
  std::string hash_;
  std::vector<std::string> written_;
  std::map<std::string, std::string> renames_;
};

std::string num(double v);  // %.17g, "nan"/"inf" spelled out

/// Reads curve.csv produced by the spectrum verb. Throws DependencyError if absent.
GrowthCurve read_curve(const std::filesystem::path& dir, std::string* hash = nullptr);

/// JSON number or null for non-finite values.
json jnum(double v);

}  // namespace ek::cli
