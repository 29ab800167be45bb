#include "sgf/cubature.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

using namespace sgf;
using sgf::testing::Gen;
using sgf::testing::max_abs;

namespace {

/// Tensor-product 3-point Gauss-Hermite rule: exact for every monomial whose
/// per-coordinate degree is at most 5, built without the library.
std::vector<std::pair<double, Vector>> tensor_gauss_hermite(Index k)
{
    const double nodes[3] = {-std::sqrt(3.0), 0.0, std::sqrt(3.0)};
    const double weights[3] = {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0};
    std::vector<std::pair<double, Vector>> out;
    std::vector<int> idx(static_cast<std::size_t>(k), 0);
    while (true) {
        Vector x(k);
        double w = 1.0;
        for (Index i = 0; i < k; ++i) {
            x(i) = nodes[idx[static_cast<std::size_t>(i)]];
            w *= weights[idx[static_cast<std::size_t>(i)]];
        }
        out.emplace_back(w, x);
        Index pos = 0;
        while (pos < k && ++idx[static_cast<std::size_t>(pos)] == 3) {
            idx[static_cast<std::size_t>(pos)] = 0;
            ++pos;
        }
        if (pos == k) {
            break;
        }
    }
    return out;
}

double monomial(const Vector& x, const std::vector<int>& alpha)
{
    double v = 1.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        v *= std::pow(x(static_cast<Index>(i)), alpha[i]);
    }
    return v;
}

void all_monomials(Index k, int degree, const std::function<void(const std::vector<int>&)>& visit)
{
    std::vector<int> alpha(static_cast<std::size_t>(k), 0);
    std::function<void(std::size_t, int)> rec = [&](std::size_t pos, int left) {
        if (pos == alpha.size()) {
            visit(alpha);
            return;
        }
        for (int p = 0; p <= left; ++p) {
            alpha[pos] = p;
            rec(pos + 1, left - p);
        }
        alpha[pos] = 0;
    };
    rec(0, degree);
}

double oracle_defect(const DiscreteMeasure& mu, int degree)
{
    const auto gh = tensor_gauss_hermite(mu.dim());
    double worst = 0.0;
    all_monomials(mu.dim(), degree, [&](const std::vector<int>& alpha) {
        double target = 0.0;
        for (const auto& [w, x] : gh) {
            target += w * monomial(x, alpha);
        }
        double got = 0.0;
        for (Index j = 0; j < mu.size(); ++j) {
            got += mu.weights(j) * monomial(mu.points.col(j), alpha);
        }
        worst = std::max(worst, std::abs(got - target));
    });
    return worst;
}

} // namespace

TEST(StandardRule, Degree3InOneDimension)
{
    const auto mu = standard_rule(RuleKind::cubature(3), 1);
    ASSERT_EQ(mu.size(), 2);
    EXPECT_DOUBLE_EQ(std::min(mu.points(0, 0), mu.points(0, 1)), -1.0);
    EXPECT_DOUBLE_EQ(std::max(mu.points(0, 0), mu.points(0, 1)), 1.0);
    EXPECT_DOUBLE_EQ(mu.weights(0), 0.5);
    EXPECT_DOUBLE_EQ(mu.weights(1), 0.5);
}

TEST(StandardRule, Degree5InOneDimensionIsThreePointGaussHermite)
{
    const auto mu = standard_rule(RuleKind::cubature(5), 1);
    ASSERT_EQ(mu.size(), 3);
    for (Index j = 0; j < 3; ++j) {
        const double x = mu.points(0, j);
        if (std::abs(x) < 1e-15) {
            EXPECT_NEAR(mu.weights(j), 2.0 / 3.0, 1e-15);
        }
        else {
            EXPECT_NEAR(std::abs(x), std::sqrt(3.0), 1e-15);
            EXPECT_NEAR(mu.weights(j), 1.0 / 6.0, 1e-15);
        }
    }
}

TEST(StandardRule, SupportSizes)
{
    for (Index k = 1; k <= 8; ++k) {
        EXPECT_EQ(standard_rule(RuleKind::cubature(3), k).size(), 2 * k);
        EXPECT_EQ(standard_rule(RuleKind::cubature(5), k).size(), 2 * k * k + 1);
    }
    EXPECT_EQ(standard_rule(RuleKind::cubature(5), 3).size(), 19);
}

TEST(StandardRule, ExactnessAgainstTensorGaussHermite)
{
    for (Index k = 1; k <= 5; ++k) {
        EXPECT_LT(oracle_defect(standard_rule(RuleKind::cubature(3), k), 3), 1e-12) << "k=" << k;
        EXPECT_LT(oracle_defect(standard_rule(RuleKind::cubature(5), k), 5), 1e-12) << "k=" << k;
    }
}

TEST(StandardRule, RejectsBadArguments)
{
    EXPECT_THROW(standard_rule(RuleKind::cubature(3), 0), Error);
    EXPECT_THROW(RuleKind::cubature(4), Error);
    EXPECT_THROW(standard_rule(RuleKind::empirical(10), 2, nullptr), Error);
    EXPECT_THROW(RuleKind::empirical(1), Error);
}

TEST(StandardRule, EmpiricalIsSeedDeterministic)
{
    Rng a(5);
    Rng b(5);
    const auto m1 = standard_rule(RuleKind::empirical(50), 3, &a);
    const auto m2 = standard_rule(RuleKind::empirical(50), 3, &b);
    EXPECT_EQ(m1.points, m2.points);
    EXPECT_NEAR(m1.weights.sum(), 1.0, 1e-14);
}

TEST(Transform, IdentityAndAffine)
{
    const auto mu = standard_rule(RuleKind::cubature(5), 2);
    const auto same = transform(mu, Vector::Zero(2), Matrix::Identity(2, 2));
    EXPECT_EQ(same.points, mu.points);
    EXPECT_EQ(same.weights, mu.weights);

    const auto one = transform(standard_rule(RuleKind::cubature(3), 1), Vector::Constant(1, 2.0),
                               Matrix::Constant(1, 1, 3.0));
    EXPECT_DOUBLE_EQ(std::min(one.points(0, 0), one.points(0, 1)), -1.0);
    EXPECT_DOUBLE_EQ(std::max(one.points(0, 0), one.points(0, 1)), 5.0);
}

TEST(Transform, PropertyMomentsMatchTarget)
{
    Gen gen(21);
    for (int trial = 0; trial < 100; ++trial) {
        const Index k = gen.integer(1, 6);
        const Vector m = gen.vector(k, 3.0);
        const Matrix c = gen.spd(k);
        const Matrix s = c.llt().matrixL();
        for (const int degree : {3, 5}) {
            const Gaussian g = moments(transform(standard_rule(RuleKind::cubature(degree), k), m, s));
            EXPECT_LT(max_abs(g.mean - m), 1e-12 * (1.0 + max_abs(m)));
            EXPECT_LT(max_abs(g.cov - c), 1e-12 * (1.0 + max_abs(c)));
        }
    }
}

TEST(Moments, WorkedExamples)
{
    DiscreteMeasure single;
    single.weights = Vector::Ones(1);
    single.points = Matrix::Constant(2, 1, 1.5);
    const Gaussian g = moments(single);
    EXPECT_EQ(g.mean, Vector::Constant(2, 1.5));
    EXPECT_EQ(g.cov, Matrix::Zero(2, 2));

    const Gaussian s2 = moments(standard_rule(RuleKind::cubature(3), 2));
    EXPECT_LT(max_abs(s2.mean), 1e-15);
    EXPECT_LT(max_abs(s2.cov - Matrix::Identity(2, 2)), 1e-15);

    DiscreteMeasure pair;
    pair.weights = Vector::Constant(2, 0.5);
    pair.points.resize(1, 2);
    pair.points << -1.0, 1.0;
    const Gaussian p = moments(pair);
    EXPECT_DOUBLE_EQ(p.mean(0), 0.0);
    EXPECT_DOUBLE_EQ(p.cov(0, 0), 1.0);
}

TEST(MomentDefect, WorkedExamples)
{
    EXPECT_LE(moment_defect(standard_rule(RuleKind::cubature(3), 2), 3), 1e-12);
    EXPECT_NEAR(moment_defect(standard_rule(RuleKind::cubature(3), 1), 4), 2.0, 1e-12);
    EXPECT_LE(moment_defect(standard_rule(RuleKind::cubature(5), 2), 5), 1e-12);
    // Degree 6 is beyond a degree-5 rule.
    EXPECT_GT(moment_defect(standard_rule(RuleKind::cubature(5), 2), 6), 1e-3);
}

TEST(MomentDefect, AgreesWithOracleAtDegreeFive)
{
    Gen gen(22);
    for (int trial = 0; trial < 20; ++trial) {
        const Index k = gen.integer(1, 4);
        DiscreteMeasure mu;
        const Index n = gen.integer(1, 6);
        mu.weights = Vector::Constant(n, 1.0 / static_cast<double>(n));
        mu.points = gen.matrix(k, n);
        // Oracle rule is exact for the degree-5 monomials it is compared on.
        EXPECT_NEAR(moment_defect(mu, 5), oracle_defect(mu, 5), 1e-10);
    }
}
