#include "ek/cli/artifacts.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ek/error.hpp"

namespace ek::cli {

namespace fs = std::filesystem;

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

Artifacts::Artifacts(fs::path dir, std::string hash) : dir_(std::move(dir)), hash_(std::move(hash)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw ValidationError("cannot create output directory " + dir_.string() + ": " + ec.message());
}

std::string Artifacts::target(const std::string& name) const {
  const auto it = renames_.find(name);
  return it == renames_.end() ? name : it->second;
}

void Artifacts::record(const std::string& name) {
  if (std::find(written_.begin(), written_.end(), name) == written_.end()) written_.push_back(name);
}

void Artifacts::csv(const std::string& logical, const std::vector<std::string>& columns,
                    const std::vector<std::vector<double>>& rows,
                    const std::vector<std::pair<std::string, std::string>>& meta) {
  const std::string name = target(logical);
  std::ofstream out(dir_ / name);
  if (!out) throw ValidationError("cannot write " + (dir_ / name).string());
  out << "# config_hash: " << hash_ << "\n";
  for (const auto& [k, v] : meta) out << "# " << k << ": " << v << "\n";
  for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
  out << "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << num(r[i]);
    out << "\n";
  }
  record(name);
}

void Artifacts::write_json(const std::string& logical, json body) {
  const std::string name = target(logical);
  json doc;
  doc["config_hash"] = hash_;
  for (auto it = body.begin(); it != body.end(); ++it) doc[it.key()] = it.value();
  std::ofstream out(dir_ / name);
  if (!out) throw ValidationError("cannot write " + (dir_ / name).string());
  out << doc.dump(2) << "\n";
  record(name);
}

void Artifacts::field(const std::string& name, const Field2D& f) {
  const std::string bin = name + ".bin";
  std::ofstream out(dir_ / bin, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + (dir_ / bin).string());
  out.write(reinterpret_cast<const char*>(f.rho.data()), static_cast<std::streamsize>(f.rho.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(f.phi.data()), static_cast<std::streamsize>(f.phi.size() * sizeof(double)));
  record(bin);
  json h;
  h["format"] = "float64 little-endian, rho block then phi block, x index fastest";
  h["data"] = bin;
  h["nx"] = f.nx;
  h["ny"] = f.ny;
  h["x_range"] = {-f.half_length, f.half_length};
  h["ly"] = f.ly;
  write_json(name + ".json", h);
}

GrowthCurve read_curve(const fs::path& dir, std::string* hash) {
  const fs::path path = dir / "curve.csv";
  std::ifstream in(path);
  if (!in) throw DependencyError("missing " + path.string() + "; run `ek spectrum` first");
  GrowthCurve c;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      const std::string key = line.substr(2, colon - 2), val = line.substr(colon + 2);
      if (key == "config_hash" && hash) *hash = val;
      if (key == "k0") c.k0 = std::stod(val);
      if (key == "sigma0") c.sigma0 = std::stod(val);
      if (key == "k_max") c.k_max = std::stod(val);
      if (key == "k_hi") c.k_hi = std::stod(val);
      if (key == "n") c.n = std::stoi(val);
      if (key == "half_length") c.half_length = std::stod(val);
      if (key == "max_unstable_count") c.max_unstable_count = std::stoi(val);
      if (key == "evenness_defect") c.evenness_defect = std::stod(val);
      continue;
    }
    if (!header) {
      header = true;
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() < 6) throw DependencyError("malformed row in " + path.string());
    GrowthSample s;
    s.k = v[0];
    s.sigma = v[1];
    s.sigma_imag = v[2];
    s.count_unstable = static_cast<int>(v[3]);
    s.count_rejected = static_cast<int>(v[4]);
    s.tail_mass = v[5];
    c.samples.push_back(s);
  }
  if (c.samples.empty() || !(c.sigma0 > 0) || !(c.k0 > 0))
    throw DependencyError(path.string() + " has no unstable maximum; rerun `ek spectrum`");
  return c;
}

}  // namespace ek::cli
