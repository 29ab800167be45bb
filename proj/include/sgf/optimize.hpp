#pragma once

// BFGS with numerical gradients and Armijo backtracking.

#include "sgf/error.hpp"
#include "sgf/gaussian.hpp"
#include "sgf/numeric.hpp"

#include <cmath>
#include <string>

namespace sgf {

struct BfgsSettings {
    double grad_tol = 1e-6;
    int max_iter = 200;
    double fd_step = kSqrtEps;
    double armijo_c = 1e-4;
    int max_halvings = 40;
};

struct BfgsResult {
    Vector x;
    double value = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
};

/// Minimizes f from x0. The inverse-Hessian estimate starts at the identity;
/// each line search takes the first step in {1, 1/2, 1/4, ...} that satisfies
/// the Armijo condition.
template <typename F>
BfgsResult bfgs_minimize(F&& f, const Vector& x0, const BfgsSettings& settings = {})
{
    require(settings.grad_tol > 0.0 && settings.max_iter >= 1, ErrorKind::InvalidArgument,
            "BFGS needs grad_tol > 0 and max_iter >= 1");
    const Index k = x0.size();
    auto grad = [&](const Vector& x) { return numerical_gradient(f, x, settings.fd_step); };

    Vector x = x0;
    double fx = f(x);
    require(std::isfinite(fx), ErrorKind::InvalidArgument, "objective is not finite at the start point");
    Vector g = grad(x);
    Matrix inv_hess = Matrix::Identity(k, k);

    int iter = 0;
    for (; iter < settings.max_iter; ++iter) {
        if (g.norm() <= settings.grad_tol) {
            return {x, fx, g.norm(), iter};
        }
        Vector dir = -inv_hess * g;
        double slope = g.dot(dir);
        if (!(slope < 0.0)) {
            inv_hess.setIdentity();
            dir = -g;
            slope = -g.squaredNorm();
        }

        double t = 1.0;
        Vector x_next;
        double f_next = 0.0;
        bool accepted = false;
        for (int h = 0; h <= settings.max_halvings; ++h) {
            x_next = x + t * dir;
            f_next = f(x_next);
            if (std::isfinite(f_next) && f_next <= fx + settings.armijo_c * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            throw Error(ErrorKind::LineSearchFailed, "no Armijo step after " +
                                                         std::to_string(settings.max_halvings) +
                                                         " halvings (gradient norm " +
                                                         std::to_string(g.norm()) + ")");
        }

        const Vector g_next = grad(x_next);
        const Vector s = x_next - x;
        const Vector y = g_next - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            const double rho = 1.0 / sy;
            const Matrix left = Matrix::Identity(k, k) - rho * s * y.transpose();
            inv_hess = left * inv_hess * left.transpose() + rho * s * s.transpose();
        }
        x = x_next;
        fx = f_next;
        g = g_next;
    }
    if (g.norm() <= settings.grad_tol) {
        return {x, fx, g.norm(), iter};
    }
    throw Error(ErrorKind::OptimizerDidNotConverge,
                "gradient norm " + std::to_string(g.norm()) + " above tolerance after " +
                    std::to_string(settings.max_iter) + " iterations");
}

} // namespace sgf
