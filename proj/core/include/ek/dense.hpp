#pragma once

#include <Eigen/Dense>

namespace ek {

struct SymEig {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns, empty unless requested
};

struct GenEig {
  Eigen::VectorXcd values;
  Eigen::MatrixXcd vectors;  // right eigenvectors, unit 2-norm, empty unless requested
};

/// LAPACK dsyevd. Throws NumericalError on failure.
SymEig sym_eig(Eigen::MatrixXd a, bool vectors = false);
/// LAPACK dgeev. Throws NumericalError (with a 1-norm condition estimate) on failure.
GenEig gen_eig(Eigen::MatrixXd a, bool vectors = false);

/// exp(t A) by scaling and squaring with Pade approximants.
Eigen::MatrixXd expm(const Eigen::MatrixXd& a, double t = 1.0);

}  // namespace ek
