#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace smpc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid distribution, weight, or option values.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A user-supplied function returned a non-finite value.
class EvaluationError : public Error {
public:
    using Error::Error;
};

/// A polynomial entry exceeds the basis degree, so Galerkin projection would not be exact.
class ProjectionError : public Error {
public:
    using Error::Error;
};

/// A matrix that must be positive definite is not (after regularization).
class ConditioningError : public Error {
public:
    using Error::Error;
};

/// Kronecker product of dense matrices.
Matrix kron(const Matrix& a, const Matrix& b);

/// Spectral radius via a general eigen decomposition.
double spectral_radius(const Matrix& a);

/// Symmetric square root of a PSD matrix (negative eigenvalues clipped).
Matrix psd_sqrt(const Matrix& m);

/// (M + Mᵀ) / 2
inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace smpc
