#include <doctest.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "ek/cli/config.hpp"
#include "ek/cli/session.hpp"
#include "ek/error.hpp"

using namespace ek;
using namespace ek::cli;
namespace fs = std::filesystem;

namespace {

const bool kQuiet = (spdlog::set_level(spdlog::level::warn), true);

const char* kMinimal = "model: {kind: madelung}\nspeed: 0.5\n";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ek_test_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

int run_ek(const std::string& args) {
  const int rc = std::system((std::string(EK_BINARY) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("minimal config takes the documented defaults") {
  const ExperimentConfig c = parse_config(kMinimal);
  CHECK(c.model.kind == "madelung");
  CHECK(c.endstate.c == 0.5);
  CHECK(c.endstate.rho_inf == 1.0);
  CHECK(c.endstate.u_inf == 0.0);
  CHECK(c.profile.n == 1024);
  CHECK(c.scan.n == 256);
  CHECK(c.scan.m_form == MForm::Hessian);
  CHECK(c.simulation.kappa == 0.1);
  CHECK(c.seed == 12345);
}

TEST_CASE("validation names the offending key") {
  const std::string eps = error_of(std::string(kMinimal) + "simulation: {eps: [0.5], kappa: 0.1}\n");
  CHECK(eps.find("simulation.eps") != std::string::npos);

  const std::string typo = error_of("modle: {kind: madelung}\nspeed: 0.5\n");
  CHECK(typo.find("modle") != std::string::npos);
  CHECK(typo.find("unknown key") != std::string::npos);

  const std::string nested = error_of(std::string(kMinimal) + "scan: {sampels: 12}\n");
  CHECK(nested.find("scan.sampels") != std::string::npos);

  CHECK(error_of("speed: 0.5\n").find("model") != std::string::npos);
  CHECK(error_of("model: {kind: madelung}\n").find("speed") != std::string::npos);
  CHECK(error_of(std::string(kMinimal) + "profile: {n: 1000}\n").find("profile.n") != std::string::npos);
  CHECK(error_of(std::string(kMinimal) + "scan: {m_form: other}\n").find("scan.m_form") != std::string::npos);
}

TEST_CASE("supersonic speed is rejected at load time") {
  CHECK(error_of("model: {kind: madelung}\nspeed: 1.5\n").find("saddle") != std::string::npos);
  CHECK_THROWS_AS(parse_config("model: {kind: nosuch}\nspeed: 0.5\n"), ValidationError);
}

TEST_CASE("parse errors carry a location") {
  const std::string bad_value = error_of("model: {kind: madelung}\nspeed: fast\n");
  CHECK(bad_value.find("speed") != std::string::npos);
  CHECK(bad_value.find("line 2") != std::string::npos);

  const std::string syntax = error_of("model: [madelung\nspeed: 0.5\n");
  CHECK(syntax.find("parse error") != std::string::npos);
  CHECK(syntax.find("line") != std::string::npos);

  CHECK_THROWS_AS(parse_config(""), ValidationError);
  CHECK_THROWS_AS(load_config("/nonexistent/ek.yaml"), ValidationError);
}

TEST_CASE("config hash depends on content only") {
  const ExperimentConfig a = parse_config(kMinimal);
  const ExperimentConfig b = parse_config("speed: 0.5\nmodel:\n  kind: madelung\noutput: {dir: elsewhere}\njobs: 3\n");
  const std::string h = config_hash(a);
  CHECK(h.size() == 64);
  CHECK(h == config_hash(b));
  CHECK(h == config_hash(parse_config(canonical_yaml(a))));
  CHECK(h != config_hash(parse_config("model: {kind: madelung}\nspeed: 0.4\n")));
  CHECK(h != config_hash(parse_config(std::string(kMinimal) + "seed: 7\n")));
}

TEST_CASE("bundled configs load") {
  for (const char* name : {"acceptance_model_a.yaml", "model_b.yaml", "quick.yaml"}) {
    CAPTURE(name);
    CHECK_NOTHROW(load_config(fs::path(EK_CONFIG_DIR) / name));
  }
}

TEST_CASE("downstream verbs require their inputs") {
  ExperimentConfig c = parse_config(kMinimal);
  c.out = scratch("dependency").string();
  Session s(c);
  CHECK_THROWS_AS(s.growth(), DependencyError);
  CHECK_THROWS_AS(s.run("nosuch"), ValidationError);
  CHECK(exit_code(ErrorKind::Dependency) == 4);
  CHECK(exit_code(ErrorKind::Validation) == 2);
  CHECK(exit_code(ErrorKind::Numerical) == 3);
}

TEST_CASE("soliton artifacts embed the hash and are reproducible") {
  ExperimentConfig c = parse_config(kMinimal);
  const std::string h = config_hash(c);
  const fs::path first = scratch("soliton_a");
  c.out = first.string();
  Session a(c);
  const json m = a.run("soliton");
  CHECK(m["verb"] == "soliton");
  CHECK(fs::exists(fs::path(c.out) / "manifest.json"));

  const std::string csv = slurp(fs::path(c.out) / "profile.csv");
  CHECK(csv.rfind("# config_hash: " + h + "\n", 0) == 0);
  const json sol = json::parse(slurp(fs::path(c.out) / "soliton.json"));
  CHECK(sol["config_hash"] == h);

  c.out = scratch("soliton_b").string();
  Session b(c);
  b.run("soliton");
  CHECK(slurp(fs::path(c.out) / "profile.csv") == csv);
  CHECK(slurp(fs::path(c.out) / "soliton.json") == slurp(first / "soliton.json"));
}

TEST_CASE("process exit codes follow the error kind") {
  const fs::path dir = scratch("process");
  CHECK(run_ek("") == 2);
  CHECK(run_ek("soliton --config /nonexistent.yaml") == 2);

  const fs::path typo = dir / "typo.yaml";
  std::ofstream(typo) << "modle: {kind: madelung}\nspeed: 0.5\n";
  CHECK(run_ek("soliton --config " + typo.string() + " --out " + (dir / "typo").string()) == 2);
  CHECK(fs::exists(dir / "typo" / "error.json"));

  const fs::path ok = dir / "ok.yaml";
  std::ofstream(ok) << kMinimal;
  CHECK(run_ek("growth --config " + ok.string() + " --out " + (dir / "growth").string()) == 4);
  const json err = json::parse(slurp(dir / "growth" / "error.json"));
  CHECK(err["error"] == "dependency");
}

TEST_CASE("--out naming a file renames the main artifact") {
  const fs::path dir = scratch("named");
  const fs::path cfg = dir / "ok.yaml";
  std::ofstream(cfg) << kMinimal;
  CHECK(run_ek("soliton --config " + cfg.string() + " --out " + (dir / "sol.csv").string()) == 0);
  CHECK(fs::exists(dir / "sol.csv"));
  CHECK(fs::exists(dir / "soliton.json"));
  CHECK_FALSE(fs::exists(dir / "profile.csv"));
  CHECK(slurp(dir / "sol.csv").rfind("# config_hash: ", 0) == 0);
  CHECK(run_ek("all --config " + cfg.string() + " --out " + (dir / "all.csv").string()) == 2);
}
