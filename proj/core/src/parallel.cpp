#include "ek/parallel.hpp"

namespace ek {

namespace {
std::atomic<int> g_jobs{0};
}

int default_jobs() noexcept {
  const int j = g_jobs.load();
  if (j > 0) return j;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

void set_default_jobs(int jobs) noexcept { g_jobs.store(jobs > 0 ? jobs : 0); }

}  // namespace ek
