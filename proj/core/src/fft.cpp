#include "ek/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "ek/error.hpp"

namespace ek::fft {

namespace {

enum class Kind { R2C, C2R, R2C2, C2R2 };

struct PlanCache {
  std::mutex mutex;
  std::map<std::tuple<Kind, int, int>, fftw_plan> plans;

  ~PlanCache() {
    for (auto& [_, p] : plans) fftw_destroy_plan(p);
  }
};

PlanCache& cache() {
  static PlanCache c;
  return c;
}

constexpr unsigned kFlags = FFTW_ESTIMATE | FFTW_UNALIGNED;

fftw_plan plan_for(Kind kind, int nx, int ny) {
  auto& c = cache();
  std::lock_guard lock(c.mutex);
  const auto key = std::make_tuple(kind, nx, ny);
  if (auto it = c.plans.find(key); it != c.plans.end()) return it->second;

  const int nreal = kind == Kind::R2C || kind == Kind::C2R ? nx : nx * ny;
  const int ncplx = kind == Kind::R2C || kind == Kind::C2R ? nx / 2 + 1 : nx * (ny / 2 + 1);
  std::vector<double> r(nreal);
  std::vector<cplx> z(ncplx);
  auto* zp = reinterpret_cast<fftw_complex*>(z.data());
  fftw_plan p = nullptr;
  switch (kind) {
    case Kind::R2C: p = fftw_plan_dft_r2c_1d(nx, r.data(), zp, kFlags); break;
    case Kind::C2R: p = fftw_plan_dft_c2r_1d(nx, zp, r.data(), kFlags); break;
    case Kind::R2C2: p = fftw_plan_dft_r2c_2d(nx, ny, r.data(), zp, kFlags); break;
    case Kind::C2R2: p = fftw_plan_dft_c2r_2d(nx, ny, zp, r.data(), kFlags); break;
  }
  if (!p) throw NumericalError("FFTW could not create a plan");
  c.plans.emplace(key, p);
  return p;
}

}  // namespace

void r2c(int n, const double* in, cplx* out) {
  fftw_execute_dft_r2c(plan_for(Kind::R2C, n, 0), const_cast<double*>(in),
                       reinterpret_cast<fftw_complex*>(out));
}

void c2r(int n, const cplx* in, double* out) {
  // c2r transforms overwrite their input.
  std::vector<cplx> tmp(in, in + n / 2 + 1);
  fftw_execute_dft_c2r(plan_for(Kind::C2R, n, 0), reinterpret_cast<fftw_complex*>(tmp.data()), out);
  const double s = 1.0 / n;
  for (int i = 0; i < n; ++i) out[i] *= s;
}

void r2c_2d(int nx, int ny, const double* in, cplx* out) {
  fftw_execute_dft_r2c(plan_for(Kind::R2C2, nx, ny), const_cast<double*>(in),
                       reinterpret_cast<fftw_complex*>(out));
}

void c2r_2d(int nx, int ny, const cplx* in, double* out) {
  const std::size_t nc = static_cast<std::size_t>(nx) * (ny / 2 + 1);
  std::vector<cplx> tmp(in, in + nc);
  fftw_execute_dft_c2r(plan_for(Kind::C2R2, nx, ny), reinterpret_cast<fftw_complex*>(tmp.data()),
                       out);
  const double s = 1.0 / (static_cast<double>(nx) * ny);
  for (std::size_t i = 0, n = static_cast<std::size_t>(nx) * ny; i < n; ++i) out[i] *= s;
}

}  // namespace ek::fft
