#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ek/cli/session.hpp"
#include "ek/error.hpp"

namespace {

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("ek");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
  const char* level = std::getenv("EK_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
}

int report_error(const std::string& kind, int code, const std::string& message, const std::string& verb,
                 const std::string& out) {
  ek::cli::json err{{"error", kind}, {"message", message}, {"verb", verb}, {"exit_code", code}};
  std::cerr << err.dump() << "\n";
  if (!out.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    std::ofstream f(std::filesystem::path(out) / "error.json");
    if (f) f << err.dump(2) << "\n";
  }
  return code;
}

const char* kind_name(ek::ErrorKind k) {
  switch (k) {
    case ek::ErrorKind::Validation: return "validation";
    case ek::ErrorKind::Domain: return "domain";
    case ek::ErrorKind::Numerical: return "numerical";
    case ek::ErrorKind::Dependency: return "dependency";
  }
  return "unknown";
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();

  CLI::App app{"Transverse instability of capillary-fluid solitons"};
  app.require_subcommand(1);
  std::string config_path, out;
  int jobs = -1;
  std::int64_t seed = -1;
  ek::cli::Flags flags;

  for (const auto& verb : ek::cli::verbs()) {
    auto* sub = app.add_subcommand(verb);
    sub->add_option("--config", config_path, "YAML experiment configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (overrides output.dir)");
    sub->add_option("--jobs", jobs, "worker threads (default: available cores)")->check(CLI::NonNegativeNumber);
    sub->add_option("--seed", seed, "random seed (overrides the config)")->check(CLI::NonNegativeNumber);
    if (verb == "spectrum" || verb == "all") sub->add_flag("--dump-modes", flags.dump_modes, "write modes.csv");
    if (verb == "resolvent") {
      sub->add_option("--gamma", flags.gamma, "forcing rate gamma (absolute)");
      sub->add_option("--n", flags.n, "power of (1 + t)");
      sub->add_option("--s", flags.s, "time-derivative order")->check(CLI::NonNegativeNumber);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const std::string verb = app.get_subcommands().front()->get_name();

  try {
    ek::cli::ExperimentConfig cfg = ek::cli::load_config(config_path);
    if (!out.empty()) {
      // `--out profile.csv` names the verb's main artifact; its directory holds the rest.
      const std::filesystem::path o(out);
      if (o.extension() == ".csv" || o.extension() == ".json") {
        flags.primary = o.filename().string();
        cfg.out = o.has_parent_path() ? o.parent_path().string() : ".";
      } else {
        cfg.out = out;
      }
    }
    if (jobs >= 0) cfg.jobs = jobs;
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    out = cfg.out;
    ek::cli::Session session(cfg, flags);
    const auto manifest = session.run(verb);
    spdlog::info("wrote {} files to {}", session.artifacts().written().size(), session.artifacts().dir().string());
    if (verb == "all")
      for (const auto& c : session.criteria())
        std::cout << c.id << " " << (c.pass ? "PASS" : "FAIL") << "  " << c.title << ": " << c.detail << "\n";
    return 0;
  } catch (const ek::Error& e) {
    return report_error(kind_name(e.kind()), ek::exit_code(e.kind()), e.what(), verb, out);
  } catch (const std::exception& e) {
    return report_error("numerical", 3, e.what(), verb, out);
  }
}
