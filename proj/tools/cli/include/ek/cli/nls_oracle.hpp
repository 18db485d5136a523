#pragma once

#include "ek/grid.hpp"

namespace ek::oracle {

/// Largest real part of the spectrum of the cubic defocusing Schrodinger equation
/// i psi_t = -Lap psi / 2 + (|psi|^2 - 1) psi linearized about its grey soliton
/// i c + s tanh(s x), s = sqrt(1 - c^2), in the frame moving at c, for transverse
/// wavenumber k. Works on psi itself (no hydrodynamic variables), with a constant
/// phase gradient removed so the background is periodic on the grid.
double nls_growth_rate(const Grid1D& g, double c, double k);

/// |psi|^2 of the same grey soliton: 1 - (1 - c^2) sech^2(sqrt(1 - c^2) z).
double grey_soliton_density(double c, double z);

}  // namespace ek::oracle
