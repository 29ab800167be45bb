#pragma once

// Dense Gaussian algebra: factorization with diagonal loading, conditioning,
// quadratic forms and covariance hygiene.

#include "sgf/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace sgf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Counters for numerical repairs and optimizer work performed while
/// producing a result. Filters report these per step.
struct NumericEvents {
    int jitters = 0;
    int fallbacks = 0;
    int optimizer_iterations = 0;

    NumericEvents& operator+=(const NumericEvents& other) noexcept
    {
        jitters += other.jitters;
        fallbacks += other.fallbacks;
        optimizer_iterations += other.optimizer_iterations;
        return *this;
    }
};

inline void note_jitter(NumericEvents* events) noexcept
{
    if (events != nullptr) {
        ++events->jitters;
    }
}

struct Gaussian {
    Vector mean;
    Matrix cov;

    Index dim() const noexcept { return mean.size(); }
};

/// Joint Gaussian over [X; Y]; `split` is the dimension of X.
struct JointGaussian {
    Vector mean;
    Matrix cov;
    Index split = 0;

    Index x_dim() const noexcept { return split; }
    Index y_dim() const noexcept { return mean.size() - split; }
};

/// Diagonal loading fractions tried, in order, when a factorization fails.
inline constexpr std::array<double, 4> kJitterLadder{1e-12, 1e-10, 1e-8, 1e-6};

inline Matrix symmetrized(const Matrix& c)
{
    return 0.5 * (c + c.transpose());
}

/// Loading unit: trace(C)/d, or 1 for a matrix with non-positive trace
/// (the all-zero covariance of a perfectly known state).
inline double jitter_scale(const Matrix& c)
{
    if (c.rows() == 0) {
        return 1.0;
    }
    const double scale = c.trace() / static_cast<double>(c.rows());
    return scale > 0.0 ? scale : 1.0;
}

inline void require_square(const Matrix& c, const char* what)
{
    require(c.rows() == c.cols(), ErrorKind::DimensionMismatch,
            std::string(what) + " must be square, got " + std::to_string(c.rows()) + "x" +
                std::to_string(c.cols()));
}

/// Lower-triangular S with S*S^T = C. On failure the diagonal is loaded with
/// eps*trace(C)/d for eps in kJitterLadder; each repaired call counts one jitter.
inline Matrix cholesky_factor(const Matrix& c, NumericEvents* events = nullptr)
{
    require_square(c, "covariance");
    if (c.rows() == 0) {
        return Matrix(0, 0);
    }
    require(c.allFinite(), ErrorKind::NotPositiveDefinite, "covariance has non-finite entries");

    Eigen::LLT<Matrix> llt(c);
    if (llt.info() == Eigen::Success) {
        return llt.matrixL();
    }

    const double scale = jitter_scale(c);
    for (const double eps : kJitterLadder) {
        Matrix loaded = c;
        loaded.diagonal().array() += eps * scale;
        llt.compute(loaded);
        if (llt.info() == Eigen::Success) {
            note_jitter(events);
            return llt.matrixL();
        }
    }
    throw Error(ErrorKind::NotPositiveDefinite,
                "factorization failed after maximum diagonal loading (dimension " +
                    std::to_string(c.rows()) + ")");
}

/// Symmetrizes C and, if it has eigenvalues below -1e-10*trace(C), shifts the
/// spectrum by the smallest rung of the jitter ladder that makes it PSD.
inline Matrix repair_covariance(const Matrix& c, NumericEvents* events = nullptr)
{
    require_square(c, "covariance");
    Matrix sym = symmetrized(c);
    if (sym.rows() == 0) {
        return sym;
    }
    require(sym.allFinite(), ErrorKind::NotPositiveDefinite, "covariance has non-finite entries");

    const double min_eig =
        Eigen::SelfAdjointEigenSolver<Matrix>(sym, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    const double scale = jitter_scale(sym);
    const double floor = -1e-10 * std::max(sym.trace(), 0.0);
    if (min_eig >= floor) {
        return sym;
    }
    for (const double eps : kJitterLadder) {
        if (min_eig + eps * scale >= 0.0) {
            sym.diagonal().array() += eps * scale;
            note_jitter(events);
            return sym;
        }
    }
    throw Error(ErrorKind::NotPositiveDefinite,
                "covariance has eigenvalue " + std::to_string(min_eig) +
                    " beyond the repair range");
}

/// Symmetric square root for sampling: V*sqrt(max(L,0)). Unlike Cholesky it
/// is exact for singular covariances, so zero-variance directions draw zeros.
inline Matrix psd_sqrt(const Matrix& c)
{
    require_square(c, "covariance");
    if (c.rows() == 0) {
        return Matrix(0, 0);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(c));
    const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal();
}

/// Conditions X on Y = ybar + innovation. The innovation is passed explicitly
/// so callers with non-Euclidean observations (angles) can form it themselves.
inline Gaussian condition_on_innovation(const JointGaussian& joint, const Vector& innovation,
                                        NumericEvents* events = nullptr)
{
    const Index n = joint.mean.size();
    const Index nx = joint.split;
    const Index ny = n - nx;
    require(nx > 0 && ny > 0, ErrorKind::DimensionMismatch,
            "split must satisfy 0 < split < dimension");
    require(joint.cov.rows() == n && joint.cov.cols() == n, ErrorKind::DimensionMismatch,
            "joint covariance does not match mean");
    require(innovation.size() == ny, ErrorKind::DimensionMismatch,
            "innovation has wrong dimension");

    const Matrix syy = symmetrized(joint.cov.bottomRightCorner(ny, ny));
    Matrix lower;
    try {
        lower = cholesky_factor(syy, events);
    }
    catch (const Error& e) {
        if (e.kind() == ErrorKind::NotPositiveDefinite) {
            throw Error(ErrorKind::SingularInnovationCov, "innovation covariance is singular");
        }
        throw;
    }
    const auto tri = lower.triangularView<Eigen::Lower>();

    // whitened_yx = S^-1 Syx, so Sxy Syy^-1 Syx = whitened_yx^T whitened_yx.
    const Matrix whitened_yx = tri.solve(joint.cov.bottomLeftCorner(ny, nx));
    const Vector whitened_innovation = tri.solve(innovation);

    Gaussian out;
    out.mean = joint.mean.head(nx) + whitened_yx.transpose() * whitened_innovation;
    out.cov = symmetrized(joint.cov.topLeftCorner(nx, nx) - whitened_yx.transpose() * whitened_yx);
    return out;
}

inline Gaussian condition(const JointGaussian& joint, const Vector& y, NumericEvents* events = nullptr)
{
    require(y.size() == joint.y_dim(), ErrorKind::DimensionMismatch,
            "conditioning value has wrong dimension");
    return condition_on_innovation(joint, y - joint.mean.tail(joint.y_dim()), events);
}

/// v^T * Sigma^-1 * v given the lower Cholesky factor of Sigma.
inline double quadratic_form_factored(const Vector& v, const Matrix& lower)
{
    require(v.size() == lower.rows(), ErrorKind::DimensionMismatch,
            "vector and factor dimensions differ");
    return lower.triangularView<Eigen::Lower>().solve(v).squaredNorm();
}

inline double quadratic_form(const Vector& v, const Matrix& sigma)
{
    require_square(sigma, "metric");
    require(v.size() == sigma.rows(), ErrorKind::DimensionMismatch,
            "vector and metric dimensions differ");
    if (v.size() == 0) {
        return 0.0;
    }
    Eigen::LLT<Matrix> llt(symmetrized(sigma));
    require(llt.info() == Eigen::Success && sigma.allFinite(), ErrorKind::SingularMatrix,
            "metric is not positive definite");
    return quadratic_form_factored(v, llt.matrixL());
}

} // namespace sgf
