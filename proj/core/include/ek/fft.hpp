#pragma once

#include <complex>

namespace ek::fft {

using cplx = std::complex<double>;

// Thin FFTW wrappers. Plans are created once per shape (FFTW_ESTIMATE, so
// results do not depend on timing) and executed through the new-array API,
// which makes every call thread-safe. Inverse transforms are normalized.

/// n reals -> n/2+1 coefficients.
void r2c(int n, const double* in, cplx* out);
/// n/2+1 coefficients -> n reals, divided by n. `in` is not modified.
void c2r(int n, const cplx* in, double* out);

/// Row-major nx-by-ny reals -> nx-by-(ny/2+1) coefficients.
void r2c_2d(int nx, int ny, const double* in, cplx* out);
/// Inverse of r2c_2d, divided by nx*ny. `in` is not modified.
void c2r_2d(int nx, int ny, const cplx* in, double* out);

}  // namespace ek::fft
