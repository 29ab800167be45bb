#pragma once

// Discrete measures approximating Gaussians: the 2k-point degree-3 rule, the
// (2k^2+1)-point degree-5 rule, empirical measures and affine transport.

#include "sgf/error.hpp"
#include "sgf/gaussian.hpp"
#include "sgf/rng.hpp"

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace sgf {

/// Weighted point set. Points are stored as the columns of a k x n matrix.
/// Weights sum to one and may be negative (degree-5 rule for k > 4).
struct DiscreteMeasure {
    Vector weights;
    Matrix points;

    Index dim() const noexcept { return points.rows(); }
    Index size() const noexcept { return points.cols(); }
};

enum class RuleFamily { Cubature3, Cubature5, Empirical };

struct RuleKind {
    RuleFamily family = RuleFamily::Cubature3;
    std::size_t samples = 0; // Empirical only

    static RuleKind cubature(int degree)
    {
        require(degree == 3 || degree == 5, ErrorKind::Unsupported,
                "cubature degree must be 3 or 5, got " + std::to_string(degree));
        return {degree == 3 ? RuleFamily::Cubature3 : RuleFamily::Cubature5, 0};
    }

    static RuleKind empirical(std::size_t samples)
    {
        require(samples >= 2, ErrorKind::InvalidArgument, "empirical measures need at least 2 samples");
        return {RuleFamily::Empirical, samples};
    }

    bool is_random() const noexcept { return family == RuleFamily::Empirical; }
};

namespace detail {

inline DiscreteMeasure degree3_rule(Index k)
{
    DiscreteMeasure mu;
    mu.weights = Vector::Constant(2 * k, 1.0 / static_cast<double>(2 * k));
    mu.points = Matrix::Zero(k, 2 * k);
    const double r = std::sqrt(static_cast<double>(k));
    for (Index i = 0; i < k; ++i) {
        mu.points(i, 2 * i) = r;
        mu.points(i, 2 * i + 1) = -r;
    }
    return mu;
}

inline DiscreteMeasure degree5_rule(Index k)
{
    const double kd = static_cast<double>(k);
    const double kp2 = kd + 2.0;
    const Index n = 2 * k * k + 1;

    DiscreteMeasure mu;
    mu.weights.resize(n);
    mu.points = Matrix::Zero(k, n);

    Index col = 0;
    mu.weights(col++) = 2.0 / kp2;

    const double axis_radius = std::sqrt(kp2);
    const double axis_weight = (4.0 - kd) / (2.0 * kp2 * kp2);
    for (Index i = 0; i < k; ++i) {
        for (const double sign : {1.0, -1.0}) {
            mu.points(i, col) = sign * axis_radius;
            mu.weights(col++) = axis_weight;
        }
    }

    const double pair_radius = std::sqrt(kp2 / 2.0);
    const double pair_weight = 1.0 / (kp2 * kp2);
    for (Index i = 0; i < k; ++i) {
        for (Index j = i + 1; j < k; ++j) {
            for (const double si : {1.0, -1.0}) {
                for (const double sj : {1.0, -1.0}) {
                    mu.points(i, col) = si * pair_radius;
                    mu.points(j, col) = sj * pair_radius;
                    mu.weights(col++) = pair_weight;
                }
            }
        }
    }
    return mu;
}

} // namespace detail

/// Measure approximating the k-dimensional standard Gaussian.
/// `rng` is required for Empirical rules and ignored otherwise.
inline DiscreteMeasure standard_rule(const RuleKind& kind, Index k, Rng* rng = nullptr)
{
    require(k >= 1, ErrorKind::InvalidDimension, "rule dimension must be >= 1");
    switch (kind.family) {
    case RuleFamily::Cubature3:
        return detail::degree3_rule(k);
    case RuleFamily::Cubature5:
        return detail::degree5_rule(k);
    case RuleFamily::Empirical: {
        require(kind.samples >= 2, ErrorKind::InvalidArgument, "empirical measures need at least 2 samples");
        require(rng != nullptr, ErrorKind::InvalidArgument, "empirical rule needs a random source");
        const auto n = static_cast<Index>(kind.samples);
        DiscreteMeasure mu;
        mu.weights = Vector::Constant(n, 1.0 / static_cast<double>(n));
        mu.points.resize(k, n);
        for (Index j = 0; j < n; ++j) {
            for (Index i = 0; i < k; ++i) {
                mu.points(i, j) = rng->normal();
            }
        }
        return mu;
    }
    }
    throw Error(ErrorKind::Unsupported, "unknown rule family");
}

/// Push-forward under x -> m + S x.
inline DiscreteMeasure transform(const DiscreteMeasure& mu, const Vector& m, const Matrix& s)
{
    require(s.rows() == mu.dim() && s.cols() == mu.dim() && m.size() == mu.dim(),
            ErrorKind::DimensionMismatch, "transform dimensions do not match the measure");
    DiscreteMeasure out;
    out.weights = mu.weights;
    out.points = (s * mu.points).colwise() + m;
    return out;
}

inline Gaussian moments(const DiscreteMeasure& mu)
{
    Gaussian g;
    g.mean = mu.points * mu.weights;
    const Matrix centered = mu.points.colwise() - g.mean;
    g.cov = symmetrized(centered * mu.weights.asDiagonal() * centered.transpose());
    return g;
}

namespace detail {

inline double standard_normal_moment(int p)
{
    if (p % 2 != 0) {
        return 0.0;
    }
    double m = 1.0;
    for (int q = p - 1; q > 1; q -= 2) {
        m *= q;
    }
    return m;
}

inline void for_each_multi_index(Index k, int max_degree, const std::function<void(const std::vector<int>&)>& visit)
{
    std::vector<int> alpha(static_cast<std::size_t>(k), 0);
    std::function<void(std::size_t, int)> rec = [&](std::size_t pos, int budget) {
        if (pos == alpha.size()) {
            visit(alpha);
            return;
        }
        for (int a = 0; a <= budget; ++a) {
            alpha[pos] = a;
            rec(pos + 1, budget - a);
        }
        alpha[pos] = 0;
    };
    rec(0, max_degree);
}

} // namespace detail

/// Largest absolute gap between the measure's monomial moments and the
/// standard Gaussian's, over all monomials of total degree <= `degree`.
inline double moment_defect(const DiscreteMeasure& mu, int degree)
{
    require(degree >= 0 && degree <= 6 && mu.dim() >= 1 && mu.dim() <= 6, ErrorKind::Unsupported,
            "moment_defect supports degree <= 6 and dimension <= 6");
    double worst = 0.0;
    detail::for_each_multi_index(mu.dim(), degree, [&](const std::vector<int>& alpha) {
        double target = 1.0;
        for (const int a : alpha) {
            target *= detail::standard_normal_moment(a);
        }
        double moment = 0.0;
        for (Index j = 0; j < mu.size(); ++j) {
            double mono = 1.0;
            for (Index i = 0; i < mu.dim(); ++i) {
                for (int p = 0; p < alpha[static_cast<std::size_t>(i)]; ++p) {
                    mono *= mu.points(i, j);
                }
            }
            moment += mu.weights(j) * mono;
        }
        worst = std::max(worst, std::abs(moment - target));
    });
    return worst;
}

} // namespace sgf
