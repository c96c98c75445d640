#include <gtest/gtest.h>

#include <cmath>

#include "poisonlab/attacks.hpp"
#include "poisonlab/datagen.hpp"
#include "test_util.hpp"

using namespace poisonlab;

namespace {

constexpr double kPi = 3.14159265358979323846;

/// κ₂ of a 2×2 matrix from σ² = (s ± √(s² − 4det²))/2, s = ‖A‖_F².
double kappa2x2(double a, double b, double c, double d) {
    const double s = a * a + b * b + c * c + d * d;
    const double det = a * d - b * c;
    const double disc = std::sqrt(std::max(0.0, s * s - 4 * det * det));
    const double hi = (s + disc) / 2, lo = (s - disc) / 2;
    return lo <= 0 ? INFINITY : std::sqrt(hi / lo);
}

/// Independent LP objective: least squares on the perturbed training set, error on the test set.
double lp_objective_oracle(const RegressionTask& t, const Mat& delta) {
    const Vect w = lstsq(t.x_train + delta, t.y_train);
    return norm2(t.y_test - t.x_test * w);
}

RegressionTask square_task(std::uint64_t seed) {
    Rng rng(seed);
    DenseParams p;
    p.n_train = 3;
    return gen_dense_regression(rng, p);
}

PerturbBudget budget(double eps, BallNorm norm, bool symmetric = false) {
    PerturbBudget b;
    b.epsilon = eps;
    b.norm = norm;
    b.symmetric = symmetric;
    return b;
}

}  // namespace

TEST(ProjectBall, Examples) {
    const Mat d{{3, 0}, {0, 4}};
    const Mat f = project_ball(d, budget(1.0, BallNorm::Frobenius));
    EXPECT_NEAR(f(0, 0), 0.6, 1e-15);
    EXPECT_NEAR(f(1, 1), 0.8, 1e-15);
    const Mat s = project_ball(d, budget(1.0, BallNorm::Spectral));
    EXPECT_NEAR(s(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(s(1, 1), 1.0, 1e-12);
    EXPECT_NEAR(s(0, 1), 0.0, 1e-12);
    const Mat inside{{0.1, 0.2}, {0.0, -0.1}};
    EXPECT_EQ(project_ball(inside, budget(1.0, BallNorm::Spectral)), inside);
    const Mat sym = project_ball(Mat{{0, 1}, {0, 0}}, budget(10.0, BallNorm::Frobenius, true));
    EXPECT_EQ(sym(0, 1), 0.5);
    EXPECT_EQ(sym(1, 0), 0.5);
}

TEST(ProjectBall, FeasibleIdempotentNonExpansive) {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.below(5), d = 1 + rng.below(4);
        const BallNorm norm = trial % 2 ? BallNorm::Spectral : BallNorm::Frobenius;
        const bool sym = trial % 3 == 0 && n == d;
        const PerturbBudget b = budget(0.05 + rng.uniform(), norm, sym);
        Mat a = (3.0 * rng.uniform()) * testutil::random_matrix(rng, n, d);
        Mat c = (3.0 * rng.uniform()) * testutil::random_matrix(rng, n, d);
        const Mat pa = project_ball(a, b), pc = project_ball(c, b);
        EXPECT_LE(ball_norm(pa, norm), b.epsilon * (1 + 1e-10));
        EXPECT_LE(fnorm(project_ball(pa, b) - pa), 1e-12 * std::max(1.0, fnorm(pa)));
        if (sym) {
            EXPECT_LE(fnorm(pa - pa.transpose()), 1e-14);
            a = 0.5 * (a + a.transpose());
            c = 0.5 * (c + c.transpose());
        }
        EXPECT_LE(fnorm(pa - pc), fnorm(a - c) * (1 + 1e-10) + 1e-12);
    }
}

TEST(ProjectBall, RejectsBadBudget) {
    EXPECT_THROW(budget(-1.0, BallNorm::Spectral).validate(), Error);
    EXPECT_THROW(budget(NAN, BallNorm::Spectral).validate(), Error);
}

TEST(ConditionGradient, MatchesFiniteDifferences) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Mat a = testutil::random_matrix(rng, 4, 3);
        const Mat g = condition_gradient(a);
        const double h = 1e-6;
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 3; ++j) {
                Mat p = a, m = a;
                p(i, j) += h;
                m(i, j) -= h;
                const double fd = (cond2(p) - cond2(m)) / (2 * h);
                EXPECT_NEAR(g(i, j), fd, 1e-4 * std::max(1.0, std::abs(fd)));
            }
    }
}

TEST(AttackUp, Diag21FrobeniusMatchesGridOracle) {
    const Mat x = Mat::diag(Vect{2, 1});
    const double eps = 0.5;
    // Grid over the sphere ‖Δ‖_F = ε; κ is maximized on the boundary.
    double best = 0.0;
    const int m = 60;
    for (int i = 0; i <= m; ++i) {
        const double t1 = kPi * i / m;
        for (int j = 0; j <= m; ++j) {
            const double t2 = kPi * j / m;
            for (int k = 0; k < 2 * m; ++k) {
                const double t3 = kPi * k / m;
                const double a = eps * std::cos(t1);
                const double b = eps * std::sin(t1) * std::cos(t2);
                const double c = eps * std::sin(t1) * std::sin(t2) * std::cos(t3);
                const double d = eps * std::sin(t1) * std::sin(t2) * std::sin(t3);
                best = std::max(best, kappa2x2(2 + a, b, c, 1 + d));
            }
        }
    }
    EXPECT_GE(best, 3.6411);
    const AttackOutcome out = attack_up(x, budget(eps, BallNorm::Frobenius));
    const double got = cond2(x + out.delta);
    EXPECT_LE(fnorm(out.delta), eps * (1 + 1e-10));
    EXPECT_GE(got, best * (1 - 1e-3));
    EXPECT_GE(got, 3.6411);
}

TEST(AttackUp, SpectralDiagonalOptimum) {
    // Shrinking σ_min and growing σ_max by ε is optimal: κ = (2+ε)/(1−ε).
    const Mat x = Mat::diag(Vect{2, 1});
    const AttackOutcome out = attack_up(x, budget(0.25, BallNorm::Spectral));
    EXPECT_NEAR(cond2(x + out.delta), 2.25 / 0.75, 1e-4);
}

TEST(AttackUp, FeasibleAndMonotoneOverTasks) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        const RegressionTask t = gen_dense_regression(rng, {});
        const PerturbBudget b = budget(0.3, seed % 2 ? BallNorm::Spectral : BallNorm::Frobenius);
        const AttackOutcome out = attack_up(t.x_train, b);
        EXPECT_LE(ball_norm(out.delta, b.norm), b.epsilon * (1 + 1e-10));
        ASSERT_FALSE(out.objective_trace.empty());
        EXPECT_EQ(out.objective_trace.front(), cond2(t.x_train));
        for (std::size_t k = 1; k < out.objective_trace.size(); ++k)
            EXPECT_GE(out.objective_trace[k], out.objective_trace[k - 1]);
        EXPECT_GE(cond2(t.x_train + out.delta), cond2(t.x_train));
    }
}

TEST(AttackLp, FeasibleAndMonotoneOverTasks) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        const RegressionTask t = gen_dense_regression(rng, {});
        const PerturbBudget b = budget(0.2, seed % 2 ? BallNorm::Spectral : BallNorm::Frobenius);
        OptimizerParams opt;
        opt.max_iter = 60;
        const AttackOutcome out = attack_lp(t, b, opt);
        EXPECT_LE(ball_norm(out.delta, b.norm), b.epsilon * (1 + 1e-10));
        for (std::size_t k = 1; k < out.objective_trace.size(); ++k)
            EXPECT_GE(out.objective_trace[k], out.objective_trace[k - 1]);
        EXPECT_NEAR(out.objective_trace.back(), lp_objective_oracle(t, out.delta),
                    1e-8 * std::max(1.0, out.objective_trace.back()));
    }
}

TEST(AttackLp, AnalyticGradientMatchesIndependentFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const RegressionTask t = square_task(seed);
        Rng rng(1000 + seed);
        const Mat delta = 0.01 * testutil::random_matrix(rng, 3, 3);
        const Mat g = lp::gradient_analytic(t, delta);
        const double h = 1e-6;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) {
                Mat p = delta, m = delta;
                p(i, j) += h;
                m(i, j) -= h;
                const double fd = (lp_objective_oracle(t, p) - lp_objective_oracle(t, m)) / (2 * h);
                EXPECT_NEAR(g(i, j), fd, 1e-4 * std::max(1.0, std::abs(fd))) << "seed " << seed;
            }
    }
}

TEST(AttackLp, ObjectiveMatchesOracle) {
    Rng rng(9);
    const RegressionTask t = gen_dense_regression(rng, {});
    const Mat delta = 0.1 * testutil::random_matrix(rng, 6, 3);
    EXPECT_NEAR(lp::objective(t, delta), lp_objective_oracle(t, delta), 1e-9);
}

TEST(AttackLp, EscapesZeroObjective) {
    // Noiseless square task: the clean test error is zero and the gradient vanishes there.
    const RegressionTask t = square_task(4);
    ASSERT_LE(lp::objective(t, Mat(3, 3)), 1e-8 * norm2(t.y_test));
    const AttackOutcome out = attack_lp(t, budget(0.1, BallNorm::Spectral));
    EXPECT_GT(out.objective_trace.back(), 1e-3);
}

TEST(Attacks, SmallEpsilonGivesSmallEffect) {
    const RegressionTask t = square_task(2);
    const double k0 = cond2(t.x_train);
    for (double eps : {1e-3, 1e-5, 1e-7}) {
        const AttackOutcome up = attack_up(t.x_train, budget(eps, BallNorm::Spectral));
        // κ is Lipschitz near a nonsingular point: |Δκ| ≲ ε·(κ/σ_min)(1 + κ)
        EXPECT_LE(cond2(t.x_train + up.delta) - k0, 10 * eps * k0 * (1 + k0) / 1.0 / inv_norm2(t.x_train));
        const AttackOutcome lp_out = attack_lp(t, budget(eps, BallNorm::Spectral));
        EXPECT_LE(opnorm2(lp_out.delta), eps * (1 + 1e-10));
    }
}

TEST(Attacks, Deterministic) {
    Rng rng(17);
    const RegressionTask t = gen_dense_regression(rng, {});
    const PerturbBudget b = budget(0.5, BallNorm::Spectral);
    EXPECT_EQ(attack_up(t.x_train, b).delta, attack_up(t.x_train, b).delta);
    EXPECT_EQ(attack_lp(t, b).delta, attack_lp(t, b).delta);
}

TEST(Attacks, JsonRoundTrip) {
    OptimizerParams p;
    p.max_iter = 12;
    p.grad_mode = GradMode::FiniteDiff;
    const OptimizerParams back = optimizer_params_from_json(to_json(p));
    EXPECT_EQ(back.max_iter, 12u);
    EXPECT_EQ(back.grad_mode, GradMode::FiniteDiff);
    EXPECT_EQ(attack_kind_from_string("UP"), AttackKind::UP);
    EXPECT_THROW(attack_kind_from_string("XX"), Error);
    EXPECT_EQ(ball_norm_from_string("frobenius"), BallNorm::Frobenius);
}
