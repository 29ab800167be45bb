#pragma once

// The eight Gaussian filters and the sequential estimation loop.
//
//   conventional:  X_{n|n} -> x_{n+1|n} => x_{n+1|n+1}
//   smoothing:     X_{n|n} => X_{n|n+1} -> x_{n+1|n+1}
//
// A smoothing filter conditions the augmented state (including the driving
// noise) on y_{n+1} through Psi^n = phi^{n+1} o Phi^n, then propagates the
// conditioned belief.

#include "sgf/cubature.hpp"
#include "sgf/error.hpp"
#include "sgf/gaussian.hpp"
#include "sgf/model.hpp"
#include "sgf/rng.hpp"
#include "sgf/updates.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sgf {

enum class FilterFamily { LGF, VGF, CGF, PGF, LGSF, VGSF, CGSF, PGSF };

inline constexpr std::string_view to_string(FilterFamily family) noexcept
{
    switch (family) {
    case FilterFamily::LGF: return "LGF";
    case FilterFamily::VGF: return "VGF";
    case FilterFamily::CGF: return "CGF";
    case FilterFamily::PGF: return "PGF";
    case FilterFamily::LGSF: return "LGSF";
    case FilterFamily::VGSF: return "VGSF";
    case FilterFamily::CGSF: return "CGSF";
    case FilterFamily::PGSF: return "PGSF";
    }
    return "?";
}

inline std::optional<FilterFamily> parse_family(std::string_view name) noexcept
{
    for (const auto f : {FilterFamily::LGF, FilterFamily::VGF, FilterFamily::CGF, FilterFamily::PGF,
                         FilterFamily::LGSF, FilterFamily::VGSF, FilterFamily::CGSF, FilterFamily::PGSF}) {
        if (to_string(f) == name) {
            return f;
        }
    }
    return std::nullopt;
}

enum class UpdateStyle { Linear, Variational, Points };

struct FilterKind {
    FilterFamily family = FilterFamily::LGF;
    int rule_degree = 3;            // CGF, CGSF
    std::size_t sample_count = 1000; // PGF, PGSF
    VariationalSettings variational{};

    bool smoothing() const noexcept
    {
        return family == FilterFamily::LGSF || family == FilterFamily::VGSF || family == FilterFamily::CGSF ||
               family == FilterFamily::PGSF;
    }

    UpdateStyle style() const noexcept
    {
        switch (family) {
        case FilterFamily::LGF:
        case FilterFamily::LGSF: return UpdateStyle::Linear;
        case FilterFamily::VGF:
        case FilterFamily::VGSF: return UpdateStyle::Variational;
        default: return UpdateStyle::Points;
        }
    }

    bool random() const noexcept { return family == FilterFamily::PGF || family == FilterFamily::PGSF; }

    RuleKind rule() const
    {
        return random() ? RuleKind::empirical(sample_count) : RuleKind::cubature(rule_degree);
    }

    /// Conventional counterpart of a smoothing filter and vice versa.
    FilterKind counterpart() const
    {
        FilterKind other = *this;
        switch (family) {
        case FilterFamily::LGF: other.family = FilterFamily::LGSF; break;
        case FilterFamily::VGF: other.family = FilterFamily::VGSF; break;
        case FilterFamily::CGF: other.family = FilterFamily::CGSF; break;
        case FilterFamily::PGF: other.family = FilterFamily::PGSF; break;
        case FilterFamily::LGSF: other.family = FilterFamily::LGF; break;
        case FilterFamily::VGSF: other.family = FilterFamily::VGF; break;
        case FilterFamily::CGSF: other.family = FilterFamily::CGF; break;
        case FilterFamily::PGSF: other.family = FilterFamily::PGF; break;
        }
        return other;
    }

    /// e.g. "LGF", "CGSF(5)", "PGF(1000)".
    std::string label() const
    {
        std::string name(to_string(family));
        if (style() == UpdateStyle::Points) {
            name += "(" + std::to_string(random() ? sample_count : static_cast<std::size_t>(rule_degree)) + ")";
        }
        return name;
    }

    void validate() const
    {
        if (random()) {
            require(sample_count >= 2, ErrorKind::InvalidArgument, label() + ": sample_count must be >= 2");
        }
        else if (style() == UpdateStyle::Points) {
            require(rule_degree == 3 || rule_degree == 5, ErrorKind::InvalidArgument,
                    label() + ": rule_degree must be 3 or 5");
        }
    }
};

namespace detail {

inline Gaussian apply_time_update(const FilterKind& kind, const AugmentedGaussian& aug, const ProcessModel& process,
                                  std::size_t n, Rng* rng, NumericEvents& events)
{
    if (kind.style() == UpdateStyle::Points) {
        return time_update_points(aug, process, n, kind.rule(), rng, &events);
    }
    return time_update_linear(aug, process, n);
}

/// The family's measurement update. A variational update that fails to
/// converge (or lands on a non-convex point) falls back to the linear update.
inline Gaussian apply_measurement_update(const FilterKind& kind, const Gaussian& prior, const MeasurementMap& map,
                                         const Vector& y, const Matrix& r, Rng* rng, NumericEvents& events)
{
    switch (kind.style()) {
    case UpdateStyle::Linear:
        return measurement_update_linear(prior, map, y, r, &events);
    case UpdateStyle::Points:
        return measurement_update_points(prior, map, y, r, kind.rule(), rng, &events);
    case UpdateStyle::Variational:
        try {
            return measurement_update_variational(prior, map, y, r, kind.variational, &events);
        }
        catch (const Error& e) {
            if (e.kind() != ErrorKind::OptimizerDidNotConverge && e.kind() != ErrorKind::LineSearchFailed &&
                e.kind() != ErrorKind::SingularHessian) {
                throw;
            }
            ++events.fallbacks;
            return measurement_update_linear(prior, map, y, r, &events);
        }
    }
    throw Error(ErrorKind::Unsupported, "unknown update style");
}

inline void require_random_source(const FilterKind& kind, const Rng* rng)
{
    require(!kind.random() || rng != nullptr, ErrorKind::InvalidArgument,
            kind.label() + " needs a random source");
}

} // namespace detail

/// X_{n|n} -> x_{n+1|n} => x_{n+1|n+1}.
inline Gaussian conventional_step(const FilterKind& kind, const Gaussian& posterior, const ProcessModel& process,
                                  const ObservationModel& obs, const Vector& y_next, std::size_t n, Rng* rng,
                                  NumericEvents& events)
{
    require(!kind.smoothing(), ErrorKind::InvalidArgument, kind.label() + " is a smoothing filter");
    detail::require_random_source(kind, rng);
    const AugmentedGaussian aug = augment(posterior, process, n);
    const Gaussian predicted = detail::apply_time_update(kind, aug, process, n, rng, events);
    return detail::apply_measurement_update(kind, predicted, observation_map(obs, n + 1), y_next, obs.obs_cov, rng,
                                            events);
}

/// X_{n|n} => X_{n|n+1}: the smoothing filter's measurement update on the
/// augmented belief. Its noise block carries the (generally non-zero) mean of
/// xi_n given y_{n+1}.
inline AugmentedGaussian smoothing_analysis(const FilterKind& kind, const Gaussian& posterior,
                                            const ProcessModel& process, const ObservationModel& obs,
                                            const Vector& y_next, std::size_t n, Rng* rng, NumericEvents& events)
{
    require(kind.smoothing(), ErrorKind::InvalidArgument, kind.label() + " is a conventional filter");
    detail::require_random_source(kind, rng);
    AugmentedGaussian aug = augment(posterior, process, n);
    aug.belief = detail::apply_measurement_update(kind, aug.belief, composed_observation(process, obs, n), y_next,
                                                  obs.obs_cov, rng, events);
    return aug;
}

/// X_{n|n} => X_{n|n+1} -> x_{n+1|n+1}.
inline Gaussian smoothing_step(const FilterKind& kind, const Gaussian& posterior, const ProcessModel& process,
                               const ObservationModel& obs, const Vector& y_next, std::size_t n, Rng* rng,
                               NumericEvents& events)
{
    const AugmentedGaussian conditioned = smoothing_analysis(kind, posterior, process, obs, y_next, n, rng, events);
    return detail::apply_time_update(kind, conditioned, process, n, rng, events);
}

struct StepRecord {
    std::size_t step = 0;
    Gaussian posterior;
    NumericEvents events;
};

/// records[0] is the prior at n = 0; records[n] is x_{n|n}.
struct FilterTrajectory {
    std::vector<StepRecord> records;
    std::optional<Error> failure;

    bool complete() const noexcept { return !failure.has_value(); }
};

inline Gaussian filter_step(const FilterKind& kind, const Gaussian& posterior, const ProcessModel& process,
                            const ObservationModel& obs, const Vector& y_next, std::size_t n, Rng* rng,
                            NumericEvents& events)
{
    return kind.smoothing() ? smoothing_step(kind, posterior, process, obs, y_next, n, rng, events)
                            : conventional_step(kind, posterior, process, obs, y_next, n, rng, events);
}

/// Assimilates y_1, y_2, ... in order. Kernel errors end the trajectory; the
/// records produced so far are kept and the error is stored in `failure`.
inline FilterTrajectory run_filter(const FilterKind& kind, const ProcessModel& process, const ObservationModel& obs,
                                   const Gaussian& prior, const std::vector<Vector>& observations, Rng* rng)
{
    require(!observations.empty(), ErrorKind::InvalidArgument, "run_filter needs at least one observation");
    kind.validate();
    detail::require_random_source(kind, rng);

    FilterTrajectory traj;
    traj.records.reserve(observations.size() + 1);
    traj.records.push_back({0, prior, {}});
    for (std::size_t n = 0; n < observations.size(); ++n) {
        NumericEvents events;
        try {
            Gaussian next = filter_step(kind, traj.records.back().posterior, process, obs, observations[n], n, rng,
                                        events);
            require(next.mean.allFinite() && next.cov.allFinite(), ErrorKind::NonFiniteEstimate,
                    "posterior at step " + std::to_string(n + 1) + " is not finite");
            traj.records.push_back({n + 1, std::move(next), events});
        }
        catch (const Error& e) {
            traj.failure = e;
            break;
        }
    }
    return traj;
}

} // namespace sgf
