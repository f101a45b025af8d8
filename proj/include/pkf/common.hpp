#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace pkf {

inline constexpr double kPi = 3.14159265358979323846;

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

/// Base class for runtime numerical failures (singular matrices, failed
/// factorizations, indefinite covariances). A trial that throws one of these
/// is recorded as failed, never silently patched.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A mapping or matrix was evaluated at (or produced) a singular point.
class SingularityError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// A matrix that must be PSD/PD failed its conditioning check.
class ConditioningError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Wraps an angle to the principal interval (-pi, pi].
inline double wrap_angle(double a)
{
    return a - 2.0 * kPi * std::ceil((a - kPi) / (2.0 * kPi));
}

template <typename Derived>
Eigen::MatrixXd symmetrize(const Eigen::MatrixBase<Derived>& m)
{
    return 0.5 * (m + m.transpose());
}

inline Mat4 symmetrize4(const Mat4& m)
{
    return 0.5 * (m + m.transpose());
}

/// Lower-triangular Cholesky factor of a PSD matrix, with an escalating
/// additive jitter ladder (0, 1e-12, 1e-10, 1e-8, each scaled by trace/n)
/// before giving up. A zero matrix factors to zero.
inline Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& cov)
{
    const Eigen::Index n = cov.rows();
    if (cov.cols() != n) {
        throw std::domain_error("cholesky_factor: matrix must be square");
    }
    const double scale = cov.trace() / static_cast<double>(n);
    if (!(scale > 0.0)) {
        if (cov.cwiseAbs().maxCoeff() == 0.0) {
            return Eigen::MatrixXd::Zero(n, n);
        }
        throw ConditioningError("cholesky_factor: non-positive trace");
    }
    static constexpr double jitters[] = {0.0, 1e-12, 1e-10, 1e-8};
    for (double j : jitters) {
        Eigen::MatrixXd shifted = cov;
        shifted.diagonal().array() += j * scale;
        Eigen::LLT<Eigen::MatrixXd> llt(shifted);
        if (llt.info() == Eigen::Success) {
            return llt.matrixL();
        }
    }
    throw ConditioningError("cholesky_factor: matrix is not PSD within jitter ladder");
}

/// Inverse of a small square matrix via partial-pivot LU. Throws
/// SingularityError if the inverse is not finite.
inline Eigen::MatrixXd invert(const Eigen::MatrixXd& m, const char* what)
{
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
    Eigen::MatrixXd inv = lu.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
    if (!inv.allFinite()) {
        throw SingularityError(std::string(what) + ": matrix is singular");
    }
    return inv;
}

inline Mat4 invert4(const Mat4& m, const char* what)
{
    Eigen::PartialPivLU<Mat4> lu(m);
    Mat4 inv = lu.solve(Mat4::Identity());
    if (!inv.allFinite()) {
        throw SingularityError(std::string(what) + ": matrix is singular");
    }
    return inv;
}

/// Eigenvalues of a symmetric matrix, ascending.
inline Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& m)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

/// Numerical rank of a symmetric PSD matrix: eigenvalues above
/// rel_tol * max eigenvalue count toward the rank.
inline int numerical_rank(const Eigen::MatrixXd& sym, double rel_tol = 1e-9)
{
    const Eigen::VectorXd ev = symmetric_eigenvalues(sym);
    const double top = ev.cwiseAbs().maxCoeff();
    if (top == 0.0) {
        return 0;
    }
    int rank = 0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] > rel_tol * top) {
            ++rank;
        }
    }
    return rank;
}

}  // namespace pkf
