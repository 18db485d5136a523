#include "ek/dense.hpp"

#include <lapacke.h>

#include <sstream>
#include <unsupported/Eigen/MatrixFunctions>

#include "ek/error.hpp"

namespace ek {

namespace {

[[noreturn]] void eig_failure(const char* routine, lapack_int info, const Eigen::MatrixXd& a) {
  std::ostringstream os;
  os << routine << " failed (info " << info << ") on a " << a.rows() << "x" << a.cols()
     << " matrix; 1-norm " << a.cwiseAbs().colwise().sum().maxCoeff();
  if (a.allFinite()) os << ", reciprocal condition estimate " << a.partialPivLu().rcond();
  else os << ", matrix has non-finite entries";
  throw NumericalError(os.str());
}

}  // namespace

SymEig sym_eig(Eigen::MatrixXd a, bool vectors) {
  const Eigen::MatrixXd orig = a;
  const lapack_int n = static_cast<lapack_int>(a.rows());
  SymEig out;
  out.values.resize(n);
  if (n == 0) return out;
  const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, vectors ? 'V' : 'N', 'U', n, a.data(), n,
                                         out.values.data());
  if (info != 0) eig_failure("dsyevd", info, orig);
  if (vectors) out.vectors = std::move(a);
  return out;
}

GenEig gen_eig(Eigen::MatrixXd a, bool vectors) {
  const Eigen::MatrixXd orig = vectors ? Eigen::MatrixXd() : a;
  const lapack_int n = static_cast<lapack_int>(a.rows());
  GenEig out;
  if (n == 0) return out;
  Eigen::VectorXd wr(n), wi(n);
  Eigen::MatrixXd vr;
  if (vectors) vr.resize(n, n);
  const lapack_int info = LAPACKE_dgeev(LAPACK_COL_MAJOR, 'N', vectors ? 'V' : 'N', n, a.data(), n,
                                        wr.data(), wi.data(), nullptr, 1,
                                        vectors ? vr.data() : nullptr, n);
  if (info != 0) eig_failure("dgeev", info, vectors ? a : orig);
  out.values.resize(n);
  for (lapack_int i = 0; i < n; ++i) out.values[i] = {wr[i], wi[i]};
  if (vectors) {
    out.vectors.resize(n, n);
    for (lapack_int j = 0; j < n; ++j) {
      if (wi[j] == 0.0) {
        out.vectors.col(j) = vr.col(j).cast<std::complex<double>>();
      } else {
        // Conjugate pair packed as (re, im) in consecutive columns.
        for (lapack_int i = 0; i < n; ++i) {
          out.vectors(i, j) = {vr(i, j), vr(i, j + 1)};
          out.vectors(i, j + 1) = {vr(i, j), -vr(i, j + 1)};
        }
        ++j;
      }
    }
  }
  return out;
}

Eigen::MatrixXd expm(const Eigen::MatrixXd& a, double t) { return (t * a).exp(); }

}  // namespace ek
