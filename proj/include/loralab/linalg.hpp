#pragma once

#include <Eigen/Dense>

#include "loralab/common.hpp"

namespace loralab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Eigendecomposition of a symmetric matrix: values sorted non-increasing,
/// vectors[:, i] is the orthonormal eigenvector paired with values[i].
struct Spectrum {
  Vector values;
  Matrix vectors;
};

/// Singular values of a symmetric matrix together with the eigenvectors and
/// eigenvalue signs they came from, ordered by descending |eigenvalue|.
/// signs[i] is +-1 with sign(0) = +1; d sv_i / dM = signs[i] * v_i v_i^T.
struct SingularSpectrum {
  Vector values;
  Matrix vectors;
  Vector signs;
};

double frobenius_norm(const Matrix& m);

/// Cyclic Jacobi rotations. Converged when the off-diagonal Frobenius norm
/// drops below 1e-12 * ||input||_F; at most 100 sweeps, else NumericalError
/// carrying the residual. Throws ContractViolation for non-square or
/// asymmetric (beyond 1e-12 relative) input.
Spectrum eigh_sym(const Matrix& m);

/// |eigenvalues| re-sorted descending.
Vector singular_values(const Matrix& m);

SingularSpectrum singular_spectrum(const Matrix& m);

/// Smallest gap between consecutive sorted values; +inf for size < 2.
double min_spectral_gap(const Vector& sorted_values);

}  // namespace loralab
