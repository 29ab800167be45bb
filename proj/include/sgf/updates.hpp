#pragma once

// Time and measurement update kernels. Every measurement update takes a
// generic MeasurementMap, so the same kernel serves the conventional update
// (prior x_{n+1|n}, map phi) and the smoothing update (prior X_{n|n}, map Psi).

#include "sgf/cubature.hpp"
#include "sgf/error.hpp"
#include "sgf/gaussian.hpp"
#include "sgf/model.hpp"
#include "sgf/numeric.hpp"
#include "sgf/optimize.hpp"
#include "sgf/rng.hpp"

#include <cmath>
#include <cstddef>

namespace sgf {

struct VariationalSettings {
    /// Gradient tolerance; multiplied by (1 + |J(prior mean)|) when relative.
    double grad_tol = 1e-6;
    bool relative_grad_tol = true;
    int max_iter = 200;
    double fd_step = kSqrtEps;
    double hessian_fd_step = kQuarticRootEps;
};

/// First-order moment mapping through Phi^n. The augmented covariance may be
/// full (after a smoothing update) and the noise mean non-zero.
inline Gaussian time_update_linear(const AugmentedGaussian& aug, const ProcessModel& process, std::size_t n)
{
    const Matrix jac = process_jacobian(process, n, aug.belief.mean);
    return {propagate_augmented(process, n, aug.belief.mean),
            symmetrized(jac * aug.belief.cov * jac.transpose())};
}

/// Moments of the push-forward of a point measure for the augmented belief.
inline Gaussian time_update_points(const AugmentedGaussian& aug, const ProcessModel& process, std::size_t n,
                                   const RuleKind& kind, Rng* rng = nullptr, NumericEvents* events = nullptr)
{
    const Matrix root = cholesky_factor(aug.belief.cov, events);
    const DiscreteMeasure mu = transform(standard_rule(kind, aug.dim(), rng), aug.belief.mean, root);

    DiscreteMeasure image;
    image.weights = mu.weights;
    image.points.resize(process.state_dim, mu.size());
    for (Index j = 0; j < mu.size(); ++j) {
        image.points.col(j) = propagate_augmented(process, n, mu.points.col(j));
    }
    Gaussian out = moments(image);
    out.cov = repair_covariance(out.cov, events);
    return out;
}

namespace detail {

inline void check_measurement_inputs(const Gaussian& prior, const MeasurementMap& map, const Vector& y,
                                     const Matrix& r)
{
    require(prior.mean.size() == map.in_dim && prior.cov.rows() == map.in_dim, ErrorKind::DimensionMismatch,
            "prior dimension does not match the measurement map");
    require(y.size() == map.out_dim && r.rows() == map.out_dim && r.cols() == map.out_dim,
            ErrorKind::DimensionMismatch, "observation or its covariance has the wrong dimension");
}

inline JointGaussian stack_joint(const Gaussian& prior, const Vector& predicted, const Matrix& cross,
                                 const Matrix& innovation_cov)
{
    const Index nx = prior.mean.size();
    const Index ny = predicted.size();
    JointGaussian joint;
    joint.split = nx;
    joint.mean.resize(nx + ny);
    joint.mean << prior.mean, predicted;
    joint.cov.resize(nx + ny, nx + ny);
    joint.cov.topLeftCorner(nx, nx) = prior.cov;
    joint.cov.topRightCorner(nx, ny) = cross;
    joint.cov.bottomLeftCorner(ny, nx) = cross.transpose();
    joint.cov.bottomRightCorner(ny, ny) = innovation_cov;
    return joint;
}

} // namespace detail

/// Linearized update: gain C H^T (H C H^T + R)^-1 with H the map's Jacobian
/// at the prior mean.
inline Gaussian measurement_update_linear(const Gaussian& prior, const MeasurementMap& map, const Vector& y,
                                          const Matrix& r, NumericEvents* events = nullptr)
{
    detail::check_measurement_inputs(prior, map, y, r);
    const Matrix h = map.jacobian(prior.mean);
    const Vector predicted = map.value(prior.mean);
    const Matrix cross = prior.cov * h.transpose();
    const Matrix innovation_cov = symmetrized(h * cross + r);

    Gaussian post = condition_on_innovation(detail::stack_joint(prior, predicted, cross, innovation_cov),
                                            map.difference(y, predicted), events);
    post.cov = repair_covariance(post.cov, events);
    return post;
}

/// Point-based update: predicted observation, cross covariance and
/// observation covariance are weighted sums over a measure for the prior.
inline Gaussian measurement_update_points(const Gaussian& prior, const MeasurementMap& map, const Vector& y,
                                          const Matrix& r, const RuleKind& kind, Rng* rng = nullptr,
                                          NumericEvents* events = nullptr)
{
    detail::check_measurement_inputs(prior, map, y, r);
    const Matrix root = cholesky_factor(prior.cov, events);
    const DiscreteMeasure mu = transform(standard_rule(kind, prior.dim(), rng), prior.mean, root);
    const Index count = mu.size();

    // Observation deviations are taken against the first image point so that
    // wrapped components (bearings) average without branch-cut artifacts.
    Matrix deviations(map.out_dim, count);
    const Vector anchor = map.value(mu.points.col(0));
    deviations.col(0).setZero();
    for (Index j = 1; j < count; ++j) {
        deviations.col(j) = map.difference(map.value(mu.points.col(j)), anchor);
    }
    const Vector mean_deviation = deviations * mu.weights;
    const Vector predicted = anchor + mean_deviation;
    deviations.colwise() -= mean_deviation;

    // State moments come from the same points as the cross covariance so the
    // joint matrix stays PSD for sampled measures. Cubature rules reproduce
    // the prior moments exactly.
    const Gaussian point_moments = moments(mu);
    const Matrix state_dev = mu.points.colwise() - point_moments.mean;
    const Matrix cross = state_dev * mu.weights.asDiagonal() * deviations.transpose();
    const Matrix obs_cov = symmetrized(deviations * mu.weights.asDiagonal() * deviations.transpose());

    Gaussian post = condition_on_innovation(detail::stack_joint(point_moments, predicted, cross, obs_cov + r),
                                            map.difference(y, predicted), events);
    post.cov = repair_covariance(post.cov, events);
    return post;
}

/// Variational update: mean minimizes
///   J(x) = 1/2 (|x - m|^2_C + |y - map(x)|^2_R)
/// and covariance is the inverse Hessian of J there. The search runs in
/// whitened coordinates x = m + S u (S S^T = C), which leaves the minimizer
/// and the inverse Hessian unchanged while keeping BFGS well scaled.
inline Gaussian measurement_update_variational(const Gaussian& prior, const MeasurementMap& map, const Vector& y,
                                               const Matrix& r, const VariationalSettings& settings = {},
                                               NumericEvents* events = nullptr)
{
    detail::check_measurement_inputs(prior, map, y, r);
    const Matrix root = cholesky_factor(prior.cov, events);
    const Matrix r_root = cholesky_factor(r, events);

    auto misfit = [&](const Vector& u) {
        const Vector x = prior.mean + root * u;
        return 0.5 * (u.squaredNorm() + quadratic_form_factored(map.difference(y, map.value(x)), r_root));
    };

    const Vector start = Vector::Zero(prior.dim());
    BfgsSettings bfgs;
    bfgs.grad_tol = settings.grad_tol * (settings.relative_grad_tol ? 1.0 + std::abs(misfit(start)) : 1.0);
    bfgs.max_iter = settings.max_iter;
    bfgs.fd_step = settings.fd_step;
    const BfgsResult best = bfgs_minimize(misfit, start, bfgs);
    if (events != nullptr) {
        events->optimizer_iterations += best.iterations;
    }

    auto hessian_root = [&](const Vector& u) {
        const Matrix hess = symmetrized(numerical_hessian(misfit, u, settings.hessian_fd_step));
        try {
            return cholesky_factor(hess, events);
        }
        catch (const Error& e) {
            if (e.kind() == ErrorKind::NotPositiveDefinite) {
                throw Error(ErrorKind::SingularHessian, "misfit Hessian is not positive definite at the minimizer");
            }
            throw;
        }
    };
    Vector u = best.x;
    Matrix hess_root = hessian_root(u);
    // One Newton step from the BFGS point. BFGS stops as soon as the gradient
    // is under tolerance; the polish removes most of the remaining offset and
    // is exact when the misfit is quadratic. Kept only if it lowers the misfit.
    const Vector g = numerical_gradient(misfit, u, settings.fd_step);
    const Vector polished = u - hess_root.transpose().triangularView<Eigen::Upper>().solve(
                                    hess_root.triangularView<Eigen::Lower>().solve(g));
    if (const double f_polished = misfit(polished); std::isfinite(f_polished) && f_polished <= best.value) {
        u = polished;
        hess_root = hessian_root(u);
    }
    // S H^-1 S^T = W^T W with W = L_H^-1 S^T.
    const Matrix w = hess_root.triangularView<Eigen::Lower>().solve(Matrix(root.transpose()));
    Gaussian post{prior.mean + root * u, w.transpose() * w};
    post.cov = repair_covariance(post.cov, events);
    return post;
}

} // namespace sgf
