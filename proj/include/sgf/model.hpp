#pragma once

// Forward and observation models, the augmented state [x; xi], and
// Euler-Maruyama composition of SDE substeps into one forward map.

#include "sgf/error.hpp"
#include "sgf/gaussian.hpp"
#include "sgf/numeric.hpp"

#include <cstddef>
#include <functional>
#include <memory>
#include <string>

namespace sgf {

/// x_{n+1} = propagate(n, x_n, xi_n), xi_n ~ N(0, noise_cov).
struct ProcessModel {
    Index state_dim = 0;
    Index noise_dim = 0;
    std::function<Vector(std::size_t, const Vector&, const Vector&)> propagate;
    Matrix noise_cov;
    /// Optional d x (d+D) derivative with respect to [x; xi].
    std::function<Matrix(std::size_t, const Vector&, const Vector&)> jacobian;

    Index augmented_dim() const noexcept { return state_dim + noise_dim; }
};

/// y_n = observe(n, x_n) + eta_n, eta_n ~ N(0, obs_cov).
struct ObservationModel {
    Index state_dim = 0;
    Index obs_dim = 0;
    std::function<Vector(std::size_t, const Vector&)> observe;
    Matrix obs_cov;
    /// Optional d' x d derivative.
    std::function<Matrix(std::size_t, const Vector&)> jacobian;
    /// Optional difference a - b in observation space (e.g. wrapped angles).
    std::function<Vector(const Vector&, const Vector&)> residual;
    /// Optional map of a raw observation onto its canonical range.
    std::function<Vector(const Vector&)> canonicalize;
};

/// A map R^in -> R^out as seen by a measurement update. `jacobian` is always
/// populated; `residual` defaults to subtraction.
struct MeasurementMap {
    Index in_dim = 0;
    Index out_dim = 0;
    std::function<Vector(const Vector&)> value;
    std::function<Matrix(const Vector&)> jacobian;
    std::function<Vector(const Vector&, const Vector&)> residual;

    Vector difference(const Vector& a, const Vector& b) const { return residual ? residual(a, b) : Vector(a - b); }
};

inline Vector propagate_augmented(const ProcessModel& model, std::size_t n, const Vector& augmented)
{
    require(augmented.size() == model.augmented_dim(), ErrorKind::DimensionMismatch,
            "augmented state has dimension " + std::to_string(augmented.size()) + ", expected " +
                std::to_string(model.augmented_dim()));
    return model.propagate(n, augmented.head(model.state_dim), augmented.tail(model.noise_dim));
}

inline Matrix process_jacobian(const ProcessModel& model, std::size_t n, const Vector& augmented)
{
    require(augmented.size() == model.augmented_dim(), ErrorKind::DimensionMismatch,
            "augmented state has wrong dimension");
    if (model.jacobian) {
        return model.jacobian(n, augmented.head(model.state_dim), augmented.tail(model.noise_dim));
    }
    return numerical_jacobian([&](const Vector& z) { return propagate_augmented(model, n, z); }, augmented);
}

inline Matrix observation_jacobian(const ObservationModel& obs, std::size_t n, const Vector& x)
{
    if (obs.jacobian) {
        return obs.jacobian(n, x);
    }
    return numerical_jacobian([&](const Vector& z) { return obs.observe(n, z); }, x);
}

/// phi^n as a measurement map on R^d. The map refers to `obs`, which must
/// outlive it.
inline MeasurementMap observation_map(const ObservationModel& obs, std::size_t n)
{
    MeasurementMap map;
    map.in_dim = obs.state_dim;
    map.out_dim = obs.obs_dim;
    map.value = [&obs, n](const Vector& x) { return obs.observe(n, x); };
    map.jacobian = [&obs, n](const Vector& x) { return observation_jacobian(obs, n, x); };
    map.residual = obs.residual;
    return map;
}

/// Psi^n = phi^{n+1} o Phi^n on R^(d+D): the map that links the augmented
/// state at step n to the next observation y_{n+1}. Refers to both models.
inline MeasurementMap composed_observation(const ProcessModel& process, const ObservationModel& obs, std::size_t n)
{
    require(process.state_dim == obs.state_dim, ErrorKind::DimensionMismatch,
            "process and observation state dimensions differ");
    MeasurementMap map;
    map.in_dim = process.augmented_dim();
    map.out_dim = obs.obs_dim;
    map.value = [&process, &obs, n](const Vector& aug) {
        return obs.observe(n + 1, propagate_augmented(process, n, aug));
    };
    map.jacobian = [&process, &obs, n](const Vector& aug) {
        const Vector next = propagate_augmented(process, n, aug);
        return Matrix(observation_jacobian(obs, n + 1, next) * process_jacobian(process, n, aug));
    };
    map.residual = obs.residual;
    return map;
}

/// Belief over the augmented state [x; xi].
struct AugmentedGaussian {
    Gaussian belief;
    Index state_dim = 0;

    Index dim() const noexcept { return belief.mean.size(); }
    Index noise_dim() const noexcept { return dim() - state_dim; }
    Vector state_mean() const { return belief.mean.head(state_dim); }
    Vector noise_mean() const { return belief.mean.tail(noise_dim()); }
    Gaussian state_marginal() const
    {
        return {belief.mean.head(state_dim), belief.cov.topLeftCorner(state_dim, state_dim)};
    }
};

/// [x; xi] ~ N([m; 0], blockdiag(C, Gamma)).
inline AugmentedGaussian augment(const Gaussian& prior, const ProcessModel& model, std::size_t /*n*/)
{
    const Index d = model.state_dim;
    const Index noise = model.noise_dim;
    require(prior.mean.size() == d && prior.cov.rows() == d && prior.cov.cols() == d,
            ErrorKind::DimensionMismatch, "prior dimension does not match the process model");
    require(model.noise_cov.rows() == noise && model.noise_cov.cols() == noise, ErrorKind::DimensionMismatch,
            "noise covariance does not match noise dimension");

    AugmentedGaussian aug;
    aug.state_dim = d;
    aug.belief.mean = Vector::Zero(d + noise);
    aug.belief.mean.head(d) = prior.mean;
    aug.belief.cov = Matrix::Zero(d + noise, d + noise);
    aug.belief.cov.topLeftCorner(d, d) = prior.cov;
    aug.belief.cov.bottomRightCorner(noise, noise) = model.noise_cov;
    return aug;
}

/// dx = b(t,x) dt + s(t,x) dB with N Brownian components, discretized with
/// step dt and composed `substeps` times per observation interval.
///
/// Additive noise (no `volatility` callback): the constant d x N matrix
/// `additive_volatility` is folded into the noise covariance, so
/// Q = dt * diag(|s_j|^2) and the state receives s_j/|s_j| * w_j.
/// Multiplicative noise: Q = dt * I and the state receives s(t,x) * w.
struct SdeSpec {
    Index state_dim = 0;
    Index brownian_dim = 0;
    std::function<Vector(double, const Vector&)> drift;
    std::function<Matrix(double, const Vector&)> drift_jacobian; // optional, d x d
    Matrix additive_volatility;
    std::function<Matrix(double, const Vector&)> volatility; // optional, d x N
    /// Optional d x d derivative of s(t,x)*w with respect to x.
    std::function<Matrix(double, const Vector&, const Vector&)> volatility_jacobian;
    double dt = 0.0;
    int substeps = 1;
};

namespace detail {

struct SdeKernel {
    SdeSpec spec;
    Matrix noise_map; // additive case: unit-column volatility

    double time(std::size_t n, int m) const
    {
        return (static_cast<double>(n) * spec.substeps + m) * spec.dt;
    }

    Vector step(double t, const Vector& x, const Vector& w) const
    {
        Vector next = x + spec.dt * spec.drift(t, x);
        if (spec.volatility) {
            next += spec.volatility(t, x) * w;
        }
        else {
            next += noise_map * w;
        }
        return next;
    }
};

} // namespace detail

inline ProcessModel discretize_sde(SdeSpec spec)
{
    require(spec.dt > 0.0, ErrorKind::InvalidArgument, "SDE time step must be positive");
    require(spec.substeps >= 1, ErrorKind::InvalidArgument, "SDE substeps must be >= 1");
    require(spec.state_dim >= 1 && static_cast<bool>(spec.drift), ErrorKind::InvalidArgument,
            "SDE needs a state dimension and a drift");
    const Index d = spec.state_dim;
    const Index nb = spec.brownian_dim;
    const int substeps = spec.substeps;

    auto kernel = std::make_shared<detail::SdeKernel>();
    Vector q_diag = Vector::Constant(nb, spec.dt);
    if (!spec.volatility) {
        require(spec.additive_volatility.rows() == d && spec.additive_volatility.cols() == nb,
                ErrorKind::DimensionMismatch, "additive volatility must be d x N");
        kernel->noise_map = Matrix::Zero(d, nb);
        for (Index j = 0; j < nb; ++j) {
            const double norm = spec.additive_volatility.col(j).norm();
            q_diag(j) = spec.dt * norm * norm;
            if (norm > 0.0) {
                kernel->noise_map.col(j) = spec.additive_volatility.col(j) / norm;
            }
        }
    }
    kernel->spec = std::move(spec);

    ProcessModel model;
    model.state_dim = d;
    model.noise_dim = nb * substeps;
    model.noise_cov = Matrix::Zero(model.noise_dim, model.noise_dim);
    for (int m = 0; m < substeps; ++m) {
        model.noise_cov.diagonal().segment(m * nb, nb) = q_diag;
    }

    model.propagate = [kernel, nb, substeps](std::size_t n, const Vector& x, const Vector& xi) {
        Vector state = x;
        for (int m = 0; m < substeps; ++m) {
            state = kernel->step(kernel->time(n, m), state, xi.segment(m * nb, nb));
        }
        return state;
    };

    const SdeSpec& s = kernel->spec;
    const bool analytic = static_cast<bool>(s.drift_jacobian) &&
                          (!s.volatility || static_cast<bool>(s.volatility_jacobian));
    if (analytic) {
        model.jacobian = [kernel, d, nb, substeps](std::size_t n, const Vector& x, const Vector& xi) {
            const SdeSpec& sp = kernel->spec;
            Matrix jac = Matrix::Zero(d, d + nb * substeps);
            jac.leftCols(d).setIdentity();
            Vector state = x;
            for (int m = 0; m < substeps; ++m) {
                const double t = kernel->time(n, m);
                const Vector w = xi.segment(m * nb, nb);
                Matrix step_jac = Matrix::Identity(d, d) + sp.dt * sp.drift_jacobian(t, state);
                Matrix noise_block = kernel->noise_map;
                if (sp.volatility) {
                    step_jac += sp.volatility_jacobian(t, state, w);
                    noise_block = sp.volatility(t, state);
                }
                jac = step_jac * jac;
                jac.middleCols(d + m * nb, nb) += noise_block;
                state = kernel->step(t, state, w);
            }
            return jac;
        };
    }
    return model;
}

} // namespace sgf
