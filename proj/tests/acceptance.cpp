// Full acceptance run: executes every verb on one configuration and reports
// each criterion on its own line. Exit status is zero when every criterion
// passes except the documented known failures.
//
// Determinism (C14) additionally runs `all` twice on the reduced quick config
// and compares every CSV, JSON and field file byte for byte (manifest.json holds wall
// times and is skipped).
//
//   acceptance [config.yaml] [out-dir]

#include <spdlog/spdlog.h>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <string>
#include <vector>

#include "ek/cli/config.hpp"
#include "ek/cli/session.hpp"

namespace {

// C9: the forced-response ratios keep growing slowly (trend ~1.07 per doubling of
// t) instead of flattening; see README, "Known failures".
const std::set<std::string> kKnownFailures{"C9"};

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Relative paths of the CSV/JSON outputs under dir, manifests excluded.
std::set<fs::path> outputs(const fs::path& dir) {
  std::set<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
    if (ext == ".csv" || ext == ".json" || ext == ".bin") files.insert(fs::relative(e.path(), dir));
  }
  return files;
}

// Runs `all` twice on the quick config; returns the number of mismatching files
// (or -1 when the file sets differ) and the number compared.
std::pair<int, std::size_t> repeat_quick(const fs::path& out) {
  std::vector<fs::path> dirs{out / "quick_1", out / "quick_2"};
  for (const auto& d : dirs) {
    fs::remove_all(d);
    ek::cli::ExperimentConfig cfg = ek::cli::load_config(fs::path(EK_CONFIG_DIR) / "quick.yaml");
    cfg.out = d.string();
    ek::cli::Session(cfg).run("all");
  }
  const auto a = outputs(dirs[0]), b = outputs(dirs[1]);
  if (a != b) return {-1, a.size()};
  int bad = 0;
  for (const auto& f : a)
    if (slurp(dirs[0] / f) != slurp(dirs[1] / f)) {
      std::printf("  differs: %s\n", f.string().c_str());
      ++bad;
    }
  return {bad, a.size()};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path config = argc > 1 ? fs::path(argv[1]) : fs::path(EK_CONFIG_DIR) / "acceptance_model_a.yaml";
  const fs::path out = argc > 2 ? fs::path(argv[2]) : fs::current_path() / "acceptance_out";
  spdlog::set_level(spdlog::level::warn);

  std::vector<ek::cli::Check> criteria;
  try {
    ek::cli::ExperimentConfig cfg = ek::cli::load_config(config);
    cfg.out = out.string();
    ek::cli::Session session(cfg);
    session.run("all");
    criteria = session.criteria();
    std::printf("config %s, hash %s\n", config.string().c_str(), ek::cli::config_hash(cfg).c_str());
    for (const auto& [k, v] : session.timings())
      if (k.rfind("all.", 0) == 0) std::printf("  %-18s %8.1f s\n", k.c_str() + 4, v);

    const auto [bad, n] = repeat_quick(out);
    for (auto& c : criteria)
      if (c.id == "C14") {
        c.pass = c.pass && bad == 0;
        c.detail += bad < 0 ? "; quick `all` x2: different file sets"
                            : "; quick `all` x2: " + std::to_string(n - bad) + "/" + std::to_string(n) + " files identical";
      }
  } catch (const std::exception& e) {
    std::printf("acceptance run aborted: %s\n", e.what());
    return 1;
  }

  int unexpected = 0;
  for (const auto& c : criteria) {
    const bool known = kKnownFailures.count(c.id) > 0;
    const char* tag = c.pass ? (known ? "XPASS" : "PASS") : (known ? "XFAIL" : "FAIL");
    if (!c.pass && !known) ++unexpected;
    std::printf("%-5s %-4s %s: %s\n", tag, c.id.c_str(), c.title.c_str(), c.detail.c_str());
  }
  if (criteria.size() != 14) {
    std::printf("expected 14 criteria, got %zu\n", criteria.size());
    return 1;
  }
  std::printf("%d unexpected failure(s)\n", unexpected);
  return unexpected == 0 ? 0 : 1;
}
