#pragma once

// Twin-experiment systems: a bistable double-well SDE, stochastic Lorenz-63
// with a range observation, and coordinated-turn tracking with a
// range/bearing radar.

#include "sgf/error.hpp"
#include "sgf/gaussian.hpp"
#include "sgf/model.hpp"
#include "sgf/rng.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace sgf {

struct Models {
    ProcessModel process;
    ObservationModel observation;
};

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a)
{
    constexpr double two_pi = 2.0 * std::numbers::pi;
    return a - two_pi * std::ceil((a - std::numbers::pi) / two_pi);
}

inline Vector standard_normal_vector(Index k, Rng& rng)
{
    Vector v(k);
    for (Index i = 0; i < k; ++i) {
        v(i) = rng.normal();
    }
    return v;
}

inline Vector sample_gaussian(const Gaussian& g, Rng& rng)
{
    return g.mean + psd_sqrt(g.cov) * standard_normal_vector(g.mean.size(), rng);
}

// --- bistable ---------------------------------------------------------------

enum class BistableObservation { Identity, ShiftedQuadratic };

struct BistableSpec {
    double beta = 10.0;
    double sigma = 0.5;
    double dt = 0.01;
    int substeps = 20;
    BistableObservation obs_kind = BistableObservation::Identity;
    double obs_shift = 0.05;
    double obs_var = 0.03;

    void validate() const
    {
        require(beta > 0.0, ErrorKind::InvalidArgument, "bistable beta must be positive");
        require(obs_var > 0.0, ErrorKind::InvalidArgument, "bistable obs_var must be positive");
        require(dt > 0.0 && substeps >= 1, ErrorKind::InvalidArgument, "bistable needs dt > 0 and substeps >= 1");
    }

    double interval() const noexcept { return dt * substeps; }
};

inline SdeSpec bistable_sde(const BistableSpec& spec)
{
    const double beta = spec.beta;
    SdeSpec sde;
    sde.state_dim = 1;
    sde.brownian_dim = 1;
    sde.drift = [beta](double, const Vector& x) {
        return Vector::Constant(1, beta * x(0) * (1.0 - x(0) * x(0)));
    };
    sde.drift_jacobian = [beta](double, const Vector& x) {
        return Matrix::Constant(1, 1, beta * (1.0 - 3.0 * x(0) * x(0)));
    };
    sde.additive_volatility = Matrix::Constant(1, 1, spec.sigma);
    sde.dt = spec.dt;
    sde.substeps = spec.substeps;
    return sde;
}

inline Models bistable_models(const BistableSpec& spec)
{
    spec.validate();
    Models m;
    m.process = discretize_sde(bistable_sde(spec));

    ObservationModel& obs = m.observation;
    obs.state_dim = 1;
    obs.obs_dim = 1;
    obs.obs_cov = Matrix::Constant(1, 1, spec.obs_var);
    if (spec.obs_kind == BistableObservation::Identity) {
        obs.observe = [](std::size_t, const Vector& x) { return x; };
        obs.jacobian = [](std::size_t, const Vector&) { return Matrix::Identity(1, 1); };
    }
    else {
        const double shift = spec.obs_shift;
        obs.observe = [shift](std::size_t, const Vector& x) {
            return Vector::Constant(1, (x(0) - shift) * (x(0) - shift));
        };
        obs.jacobian = [shift](std::size_t, const Vector& x) {
            return Matrix::Constant(1, 1, 2.0 * (x(0) - shift));
        };
    }
    return m;
}

// --- Lorenz-63 --------------------------------------------------------------

struct Lorenz63Spec {
    double sigma = 10.0;
    double rho = 28.0;
    double beta = 8.0 / 3.0;
    Eigen::Vector3d g{0.0, 0.0, 0.5};
    double dt = 0.01;
    int substeps = 1;
    double obs_shift = 0.5;
    double obs_var = 0.5;

    void validate() const
    {
        require(dt > 0.0 && substeps >= 1, ErrorKind::InvalidArgument, "lorenz63 needs dt > 0 and substeps >= 1");
        require(obs_var > 0.0, ErrorKind::InvalidArgument, "lorenz63 obs_var must be positive");
    }

    double interval() const noexcept { return dt * substeps; }
};

inline Models lorenz63_models(const Lorenz63Spec& spec)
{
    spec.validate();
    const double s = spec.sigma;
    const double r = spec.rho;
    const double b = spec.beta;

    SdeSpec sde;
    sde.state_dim = 3;
    sde.brownian_dim = 3;
    sde.drift = [s, r, b](double, const Vector& x) {
        Vector f(3);
        f << s * (x(1) - x(0)), r * x(0) - x(1) - x(0) * x(2), x(0) * x(1) - b * x(2);
        return f;
    };
    sde.drift_jacobian = [s, r, b](double, const Vector& x) {
        Matrix j(3, 3);
        j << -s, s, 0.0, r - x(2), -1.0, -x(0), x(1), x(0), -b;
        return j;
    };
    sde.additive_volatility = spec.g.asDiagonal();
    sde.dt = spec.dt;
    sde.substeps = spec.substeps;

    Models m;
    m.process = discretize_sde(std::move(sde));

    const double shift = spec.obs_shift;
    ObservationModel& obs = m.observation;
    obs.state_dim = 3;
    obs.obs_dim = 1;
    obs.obs_cov = Matrix::Constant(1, 1, spec.obs_var);
    obs.observe = [shift](std::size_t, const Vector& x) {
        return Vector::Constant(1, std::hypot(x(0) - shift, x(1), x(2)));
    };
    obs.jacobian = [shift](std::size_t, const Vector& x) {
        Matrix j = Matrix::Zero(1, 3);
        const double range = std::hypot(x(0) - shift, x(1), x(2));
        if (range > 0.0) {
            j << (x(0) - shift) / range, x(1) / range, x(2) / range;
        }
        return j;
    };
    return m;
}

// --- coordinated turn -------------------------------------------------------

struct TurnModelSpec {
    double dt = 1.0;
    double q = 1.75e-3;
    double range_var = 1e2;
    double bearing_var = 1e-5;
    int substeps = 1;

    void validate() const
    {
        require(dt > 0.0 && substeps >= 1, ErrorKind::InvalidArgument, "tracking needs dt > 0 and substeps >= 1");
        require(q >= 0.0, ErrorKind::InvalidArgument, "tracking q must be >= 0");
        require(range_var > 0.0 && bearing_var > 0.0, ErrorKind::InvalidArgument,
                "tracking variances must be positive");
    }

    double interval() const noexcept { return dt * substeps; }
};

/// Turn-rate magnitude below which the transition matrix uses its limits.
inline constexpr double kTurnRateEpsilon = 1e-8;

namespace detail {

// sin(w t)/w, (1 - cos(w t))/w and their derivatives in w.
struct TurnTerms {
    double sin_ratio;
    double vers_ratio;
    double cos_wt;
    double sin_wt;
    double d_sin_ratio;
    double d_vers_ratio;
};

inline TurnTerms turn_terms(double w, double t)
{
    TurnTerms k{};
    const double wt = w * t;
    k.cos_wt = std::cos(wt);
    k.sin_wt = std::sin(wt);
    if (std::abs(w) < kTurnRateEpsilon) {
        k.sin_ratio = t;
        k.vers_ratio = 0.0;
    }
    else {
        const double half = std::sin(0.5 * wt);
        k.sin_ratio = k.sin_wt / w;
        k.vers_ratio = 2.0 * half * half / w;
    }
    if (std::abs(wt) < 1e-3) {
        const double t2 = t * t;
        k.d_sin_ratio = -w * t2 * t / 3.0 + w * w * w * t2 * t2 * t / 30.0;
        k.d_vers_ratio = 0.5 * t2 - w * w * t2 * t2 / 8.0;
    }
    else {
        k.d_sin_ratio = (wt * k.cos_wt - k.sin_wt) / (w * w);
        k.d_vers_ratio = (wt * k.sin_wt - 2.0 * std::sin(0.5 * wt) * std::sin(0.5 * wt)) / (w * w);
    }
    return k;
}

} // namespace detail

/// Transition over `t` for state [x, vx, y, vy, turn_rate].
inline Matrix turn_transition_matrix(double turn_rate, double t)
{
    const auto k = detail::turn_terms(turn_rate, t);
    Matrix f = Matrix::Zero(5, 5);
    f(0, 0) = 1.0;
    f(0, 1) = k.sin_ratio;
    f(0, 3) = -k.vers_ratio;
    f(1, 1) = k.cos_wt;
    f(1, 3) = -k.sin_wt;
    f(2, 1) = k.vers_ratio;
    f(2, 2) = 1.0;
    f(2, 3) = k.sin_ratio;
    f(3, 1) = k.sin_wt;
    f(3, 3) = k.cos_wt;
    f(4, 4) = 1.0;
    return f;
}

/// Zero-turn-rate limit: constant velocity.
inline Matrix turn_transition_limit(double t)
{
    Matrix f = Matrix::Identity(5, 5);
    f(0, 1) = t;
    f(2, 3) = t;
    return f;
}

inline Matrix turn_noise_cov(double t, double q)
{
    Matrix g = Matrix::Zero(5, 5);
    for (const Index p : {Index{0}, Index{2}}) {
        g(p, p) = t * t * t / 3.0;
        g(p, p + 1) = g(p + 1, p) = t * t / 2.0;
        g(p + 1, p + 1) = t;
    }
    g(4, 4) = q * t;
    return g;
}

inline Models turn_models(const TurnModelSpec& spec)
{
    spec.validate();
    const double t = spec.dt;
    const int substeps = spec.substeps;

    Models m;
    ProcessModel& proc = m.process;
    proc.state_dim = 5;
    proc.noise_dim = 5 * substeps;
    proc.noise_cov = Matrix::Zero(proc.noise_dim, proc.noise_dim);
    const Matrix block = turn_noise_cov(t, spec.q);
    for (int s = 0; s < substeps; ++s) {
        proc.noise_cov.block(5 * s, 5 * s, 5, 5) = block;
    }
    proc.propagate = [t, substeps](std::size_t, const Vector& x, const Vector& xi) {
        Vector state = x;
        for (int s = 0; s < substeps; ++s) {
            state = turn_transition_matrix(state(4), t) * state + xi.segment(5 * s, 5);
        }
        return state;
    };
    proc.jacobian = [t, substeps](std::size_t, const Vector& x, const Vector& xi) {
        Matrix jac = Matrix::Zero(5, 5 + 5 * substeps);
        jac.leftCols(5).setIdentity();
        Vector state = x;
        for (int s = 0; s < substeps; ++s) {
            const auto k = detail::turn_terms(state(4), t);
            const Matrix f = turn_transition_matrix(state(4), t);
            // d(F(w) x)/dw for the turn-rate column.
            Vector dfw = Vector::Zero(5);
            dfw(0) = k.d_sin_ratio * state(1) - k.d_vers_ratio * state(3);
            dfw(1) = -t * k.sin_wt * state(1) - t * k.cos_wt * state(3);
            dfw(2) = k.d_vers_ratio * state(1) + k.d_sin_ratio * state(3);
            dfw(3) = t * k.cos_wt * state(1) - t * k.sin_wt * state(3);
            Matrix step = f;
            step.col(4) += dfw;
            jac = step * jac;
            jac.middleCols(5 + 5 * s, 5) += Matrix::Identity(5, 5);
            state = f * state + xi.segment(5 * s, 5);
        }
        return jac;
    };

    ObservationModel& obs = m.observation;
    obs.state_dim = 5;
    obs.obs_dim = 2;
    obs.obs_cov = Matrix::Zero(2, 2);
    obs.obs_cov(0, 0) = spec.range_var;
    obs.obs_cov(1, 1) = spec.bearing_var;
    obs.observe = [](std::size_t, const Vector& x) {
        Vector y(2);
        y << std::hypot(x(0), x(2)), std::atan2(x(2), x(0));
        return y;
    };
    obs.jacobian = [](std::size_t, const Vector& x) {
        Matrix j = Matrix::Zero(2, 5);
        const double r2 = x(0) * x(0) + x(2) * x(2);
        if (r2 > 0.0) {
            const double r = std::sqrt(r2);
            j(0, 0) = x(0) / r;
            j(0, 2) = x(2) / r;
            j(1, 0) = -x(2) / r2;
            j(1, 2) = x(0) / r2;
        }
        return j;
    };
    obs.residual = [](const Vector& a, const Vector& b) {
        Vector d = a - b;
        d(1) = wrap_angle(d(1));
        return d;
    };
    obs.canonicalize = [](const Vector& y) {
        Vector c = y;
        c(1) = wrap_angle(c(1));
        return c;
    };
    return m;
}

// --- truth simulation -------------------------------------------------------

/// truth[n] is x_n for n = 0..steps; observations[n-1] is y_n.
struct TruthRun {
    std::vector<Vector> truth;
    std::vector<Vector> observations;
    std::uint64_t seed = 0;
};

inline Vector observe_noisy(const ObservationModel& obs, std::size_t n, const Vector& x, const Matrix& obs_root,
                            Rng& rng)
{
    Vector y = obs.observe(n, x) + obs_root * standard_normal_vector(obs.obs_dim, rng);
    return obs.canonicalize ? obs.canonicalize(y) : y;
}

inline TruthRun simulate_truth(const ProcessModel& process, const ObservationModel& obs, const Vector& x0,
                               std::size_t steps, Rng& rng)
{
    require(steps >= 1, ErrorKind::InvalidArgument, "simulate_truth needs at least one step");
    require(x0.size() == process.state_dim, ErrorKind::DimensionMismatch, "initial state has wrong dimension");
    const Matrix noise_root = psd_sqrt(process.noise_cov);
    const Matrix obs_root = psd_sqrt(obs.obs_cov);

    TruthRun run;
    run.seed = rng.seed();
    run.truth.reserve(steps + 1);
    run.observations.reserve(steps);
    run.truth.push_back(x0);
    for (std::size_t n = 0; n < steps; ++n) {
        const Vector xi = noise_root * standard_normal_vector(process.noise_dim, rng);
        run.truth.push_back(process.propagate(n, run.truth.back(), xi));
        run.observations.push_back(observe_noisy(obs, n + 1, run.truth.back(), obs_root, rng));
    }
    return run;
}

struct TransitionRun {
    TruthRun run;
    double transition_time = 0.0;
};

/// Bistable truth that switches wells inside [window_lo, window_hi].
///
/// Spontaneous switches are far too rare to find by rejection, so after a
/// random start time the drift is reversed while the path is still in its
/// starting half-line (the time-reversed relaxation path, which is the most
/// likely escape route). The Brownian increments are unchanged. The switch
/// time is the first time |x| >= 0.5 on the other side; attempts whose switch
/// misses the window are redrawn.
inline TransitionRun simulate_bistable_transition(const BistableSpec& spec, const ObservationModel& obs, double x0,
                                                  std::size_t steps, double window_lo, double window_hi, Rng& rng,
                                                  int max_attempts = 1000)
{
    spec.validate();
    require(x0 != 0.0, ErrorKind::InvalidArgument, "transition runs need a start point inside a well");
    require(window_lo < window_hi, ErrorKind::InvalidArgument, "transition window is empty");
    require(window_hi <= spec.interval() * static_cast<double>(steps), ErrorKind::InvalidArgument,
            "transition window extends past the simulated horizon");
    const double side = x0 > 0.0 ? 1.0 : -1.0;
    const double noise_sd = spec.sigma * std::sqrt(spec.dt);
    const Matrix obs_root = psd_sqrt(obs.obs_cov);
    constexpr double lead = 0.4;

    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        const double control_start = rng.uniform(window_lo - lead, window_hi - lead);
        TransitionRun out;
        out.run.seed = rng.seed();
        out.run.truth.push_back(Vector::Constant(1, x0));
        double x = x0;
        std::optional<double> switched;
        bool early = false;
        for (std::size_t n = 0; n < steps; ++n) {
            for (int m = 0; m < spec.substeps; ++m) {
                const double t = (static_cast<double>(n) * spec.substeps + m) * spec.dt;
                double drift = spec.beta * x * (1.0 - x * x);
                if (!switched && t >= control_start && side * x > 0.0) {
                    drift = -drift;
                }
                x += spec.dt * drift + noise_sd * rng.normal();
                if (!switched && side * x <= -0.5) {
                    switched = t + spec.dt;
                    early = *switched < window_lo;
                }
            }
            const Vector state = Vector::Constant(1, x);
            out.run.truth.push_back(state);
            out.run.observations.push_back(observe_noisy(obs, n + 1, state, obs_root, rng));
        }
        if (switched && !early && *switched <= window_hi) {
            out.transition_time = *switched;
            return out;
        }
    }
    throw Error(ErrorKind::InvalidArgument, "no transition inside the window after " + std::to_string(max_attempts) +
                                                " attempts");
}

} // namespace sgf
