#pragma once

// Central finite differences. Steps are relative: h_i = step * (1 + |x_i|).

#include "sgf/gaussian.hpp"

#include <cmath>
#include <limits>

namespace sgf {

inline const double kSqrtEps = std::sqrt(std::numeric_limits<double>::epsilon());
inline const double kQuarticRootEps = std::pow(std::numeric_limits<double>::epsilon(), 0.25);

template <typename F>
Matrix numerical_jacobian(F&& f, const Vector& x, double step = kSqrtEps)
{
    Vector probe = x;
    Matrix jac;
    for (Index i = 0; i < x.size(); ++i) {
        const double h = step * (1.0 + std::abs(x(i)));
        probe(i) = x(i) + h;
        const Vector plus = f(probe);
        probe(i) = x(i) - h;
        const Vector minus = f(probe);
        probe(i) = x(i);
        if (i == 0) {
            jac.resize(plus.size(), x.size());
        }
        jac.col(i) = (plus - minus) / (2.0 * h);
    }
    return jac;
}

template <typename F>
Vector numerical_gradient(F&& f, const Vector& x, double step = kSqrtEps)
{
    Vector probe = x;
    Vector grad(x.size());
    for (Index i = 0; i < x.size(); ++i) {
        const double h = step * (1.0 + std::abs(x(i)));
        probe(i) = x(i) + h;
        const double plus = f(probe);
        probe(i) = x(i) - h;
        const double minus = f(probe);
        probe(i) = x(i);
        grad(i) = (plus - minus) / (2.0 * h);
    }
    return grad;
}

/// Second differences; exact (up to rounding) for quadratics.
template <typename F>
Matrix numerical_hessian(F&& f, const Vector& x, double step = kQuarticRootEps)
{
    const Index k = x.size();
    Vector h(k);
    for (Index i = 0; i < k; ++i) {
        h(i) = step * (1.0 + std::abs(x(i)));
    }
    const double f0 = f(x);
    Matrix hess(k, k);
    Vector probe = x;
    for (Index i = 0; i < k; ++i) {
        probe(i) = x(i) + h(i);
        const double fp = f(probe);
        probe(i) = x(i) - h(i);
        const double fm = f(probe);
        probe(i) = x(i);
        hess(i, i) = (fp - 2.0 * f0 + fm) / (h(i) * h(i));
        for (Index j = 0; j < i; ++j) {
            double acc = 0.0;
            for (const double si : {1.0, -1.0}) {
                for (const double sj : {1.0, -1.0}) {
                    probe(i) = x(i) + si * h(i);
                    probe(j) = x(j) + sj * h(j);
                    acc += si * sj * f(probe);
                }
            }
            probe(i) = x(i);
            probe(j) = x(j);
            hess(i, j) = hess(j, i) = acc / (4.0 * h(i) * h(j));
        }
    }
    return hess;
}

} // namespace sgf
