#include <gtest/gtest.h>

#include <cmath>

#include "poisonlab/analysis.hpp"
#include "poisonlab/datagen.hpp"
#include "test_util.hpp"

using namespace poisonlab;

namespace {

double kappa2x2(const Mat& a) {
    const double s = a(0, 0) * a(0, 0) + a(0, 1) * a(0, 1) + a(1, 0) * a(1, 0) + a(1, 1) * a(1, 1);
    const double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    const double disc = std::sqrt(s * s - 4 * det * det);
    return std::sqrt((s + disc) / (s - disc));
}

RegressionTask identity_task() {
    RegressionTask t;
    t.x_train = Mat::identity(2);
    t.y_train = Vect{1, 2};
    t.x_test = Mat::identity(2);
    t.y_test = Vect{1, 2};
    t.w_ref = Vect{1, 2};
    return t;
}

}  // namespace

TEST(ForwardBounds, Examples) {
    const ForwardBounds b = forward_bounds(Mat::diag(Vect{2, 1}), Vect{3, 4}, 0.5);
    EXPECT_NEAR(b.rel, 0.5 / 0.5, 1e-12);
    EXPECT_NEAR(b.output, 0.5 * 5 * 2 / 0.5, 1e-12);
    try {
        forward_bounds(Mat::identity(2), Vect{1, 0}, 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::PreconditionFailed);
    }
}

TEST(ForwardBounds, CheckReports) {
    const Mat x = Mat::identity(2);
    const Vect w{1, 0};
    const auto ok = check_forward(x, w, Vect{1.05, 0}, 0.1);
    ASSERT_EQ(ok.size(), 2u);
    EXPECT_TRUE(ok[0].precondition_ok);
    EXPECT_TRUE(ok[0].holds);
    EXPECT_NEAR(ok[0].empirical_value, 0.05, 1e-12);
    const auto bad = check_forward(x, w, Vect{2, 0}, 0.1);
    EXPECT_FALSE(bad[0].holds);
    const auto pre = check_forward(x, w, Vect{1, 0}, 2.0);
    EXPECT_FALSE(pre[0].precondition_ok);
    EXPECT_FALSE(pre[1].precondition_ok);
}

TEST(ForwardBounds, HoldForAnyPerturbationInsideTheBall) {
    Rng rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        Mat x = testutil::random_matrix(rng, 3, 3);
        for (std::size_t i = 0; i < 3; ++i) x(i, i) += 2.0;
        const Vect y = testutil::random_vector(rng, 3);
        const double eps = 0.9 * rng.uniform() / inv_norm2(x);
        Mat d = testutil::random_matrix(rng, 3, 3);
        d = (eps * rng.uniform() / opnorm2(d)) * d;
        const Vect w = lu_solve(x, y);
        const Vect wp = lu_solve(x + d, y);
        for (const BoundReport& r : check_forward(x, w, wp, eps)) {
            EXPECT_TRUE(r.precondition_ok);
            EXPECT_TRUE(r.holds) << to_string(r.kind) << " trial " << trial;
        }
    }
}

TEST(TTest, ThreeSampleClosedForm) {
    const TTestReport r = one_sided_ttest({-1, -2, -3}, 0.05);
    EXPECT_NEAR(r.t_stat, -2.0 * std::sqrt(3.0), 1e-12);
    // df = 2: F(t) = 1/2 + t / (2√(2 + t²))
    const double t = r.t_stat;
    EXPECT_NEAR(r.p_value, 0.5 + t / (2 * std::sqrt(2 + t * t)), 1e-10);
    EXPECT_NEAR(r.p_value, 0.03709, 1e-5);
    EXPECT_EQ(r.df, 2u);
    EXPECT_TRUE(r.reject_null);
    EXPECT_FALSE(one_sided_ttest({-1, -2, -3}, 0.01).reject_null);
}

TEST(TTest, Errors) {
    try {
        one_sided_ttest({1, 2}, 0.05);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TooFewSamples);
    }
    try {
        one_sided_ttest({1, 1, 1}, 0.05);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ZeroVariance);
    }
}

TEST(TTest, CdfMatchesIntegratedDensity) {
    for (double nu : {2.0, 5.0, 10.0, 99.0}) {
        for (double t : {-6.0, -3.0, -1.7, -0.3, 0.0, 0.8, 2.5, 4.0}) {
            EXPECT_NEAR(student_t_cdf(t, nu), testutil::t_cdf_simpson(t, nu), 1e-6) << "nu " << nu << " t " << t;
        }
    }
}

TEST(TTest, IncompleteBetaExamples) {
    EXPECT_NEAR(incomplete_beta(1, 1, 0.3), 0.3, 1e-14);
    EXPECT_NEAR(incomplete_beta(2, 1, 0.5), 0.25, 1e-14);
    EXPECT_NEAR(incomplete_beta(2, 3, 0.4), 1 - incomplete_beta(3, 2, 0.6), 1e-14);
    EXPECT_EQ(incomplete_beta(2, 2, 0.0), 0.0);
    EXPECT_EQ(incomplete_beta(2, 2, 1.0), 1.0);
}

TEST(UpRate, Examples) {
    const UpRateBound b = up_rate_bound(10.0, 0.1, 1.2, 10.0, 0.5);
    const double denom = 0.1 * (2 - 0.1 * 1.44 * 10);
    EXPECT_NEAR(b.denom, denom, 1e-15);
    EXPECT_NEAR(b.t_min, 10.0 / (denom * 0.5), 1e-9);
    EXPECT_NEAR(b(100.0), 10.0 / (denom * 100), 1e-12);
    EXPECT_NEAR(b(b.t_min), 0.5, 1e-12);
}

TEST(UpRate, Errors) {
    auto code_of = [](auto&& f) {
        try {
            f();
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::InvalidConfig;
    };
    EXPECT_EQ(code_of([] { up_rate_bound(1, 0.1, 0.0, 10, 0.1); }), ErrorCode::InvalidAlpha);
    EXPECT_EQ(code_of([] { up_rate_bound(1, 0.1, 1.5, 10, 0.1); }), ErrorCode::InvalidAlpha);
    EXPECT_THROW(up_rate_bound(1, -0.1, 1.0, 10, 0.1), Error);
    EXPECT_THROW(up_rate_bound(1, 0.1, 1.0, 10, 0.0), Error);
}

TEST(UpRate, EnvelopeHoldsOnRandomConsistentSystems) {
    Rng rng(77);
    for (int trial = 0; trial < 30; ++trial) {
        Mat a = testutil::random_matrix(rng, 4, 4);
        for (std::size_t i = 0; i < 4; ++i) a(i, i) += 2.5;
        const Vect x = testutil::random_vector(rng, 4);
        const double l = gd_smoothness(a);
        const BoundReport r = check_gd_envelope(a, a * x, x, 1.0 / l, 1.0, l, 2000);
        EXPECT_TRUE(r.precondition_ok);
        EXPECT_TRUE(r.holds) << "trial " << trial;
    }
}

TEST(LpDivergence, BoundExample) {
    EXPECT_NEAR(lp_divergence_bound(Mat::diag(Vect{2, 1}), 0.5, 0.3), (0.3 / 2) / 1.5, 1e-14);
}

TEST(LpDivergence, ConstructedCaseHolds) {
    const Mat x = Mat::diag(Vect{2, 1});
    const double eps = 0.5, eta = 0.3;
    const BoundReport r = check_lp_divergence(x, Vect{0, 0}, Mat(2, 2), Vect{eta, 0}, eps, eta);
    EXPECT_TRUE(r.precondition_ok);
    EXPECT_NEAR(r.empirical_value, eta / 2, 1e-14);
    EXPECT_TRUE(r.holds);
}

TEST(LpDivergence, CounterexampleFlaggedOutsideRegime) {
    // X = I, ΔX = Δy·wᵀ/‖w‖² leaves w unchanged.
    const Vect w{1, 1};
    const double eta = 0.1, eps = 0.1;
    const Vect dy{eta / std::sqrt(2.0), eta / std::sqrt(2.0)};
    const Mat dx = (1.0 / 2.0) * outer(dy, w);
    const BoundReport r = check_lp_divergence(Mat::identity(2), w, dx, dy, eps, eta);
    EXPECT_NEAR(r.empirical_value, 0.0, 1e-14);
    EXPECT_FALSE(r.holds);
    EXPECT_FALSE(r.precondition_ok);
}

TEST(LpDivergence, HoldsInsideRegime) {
    Rng rng(8);
    int checked = 0;
    for (int trial = 0; trial < 5000 && checked < 100; ++trial) {
        Mat x = testutil::random_matrix(rng, 3, 3);
        for (std::size_t i = 0; i < 3; ++i) x(i, i) += 2.0;
        const double eps = 0.3 * rng.uniform(), eta = 0.1 + rng.uniform();
        Mat dx = testutil::random_matrix(rng, 3, 3);
        dx = (eps * rng.uniform() / opnorm2(dx)) * dx;
        Vect dy = testutil::random_vector(rng, 3);
        dy = ((1 + rng.uniform()) * eta / norm2(dy)) * dy;
        const Vect y = 0.1 * testutil::random_vector(rng, 3);
        const BoundReport r = check_lp_divergence(x, y, dx, dy, eps, eta);
        if (!r.precondition_ok) continue;
        ++checked;
        EXPECT_TRUE(r.holds) << "trial " << trial;
    }
    EXPECT_EQ(checked, 100);
}

TEST(Stationary, SpectralRadiusExamples) {
    const Mat a{{2, 1}, {1, 2}};
    EXPECT_NEAR(spectral_radius(stationary_iteration_matrix(a, SolverKind::Jacobi)), 0.5, 1e-12);
    EXPECT_NEAR(spectral_radius(stationary_iteration_matrix(a, SolverKind::GaussSeidel)), 0.25, 1e-12);
    EXPECT_NEAR(spectral_radius(stationary_iteration_matrix(a, SolverKind::SOR, 1.0)), 0.25, 1e-12);
}

TEST(Stationary, MatrixFormMatchesStep) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(seed);
        const RegressionTask t = gen_sdd_square(rng, {});
        const Vect x = testutil::random_vector(rng, 20);
        for (SolverKind k : {SolverKind::Jacobi, SolverKind::GaussSeidel, SolverKind::SOR}) {
            const double omega = k == SolverKind::SOR ? 1.25 : 1.0;
            const Vect matrix_form = stationary_iteration_matrix(t.x_train, k, omega) * x +
                                     stationary_offset(t.x_train, t.y_train, k, omega);
            const Vect step = stationary_step(t.x_train, t.y_train, x, k, omega);
            EXPECT_LE(norm2(matrix_form - step), 1e-12 * std::max(1.0, norm2(step)));
        }
    }
}

TEST(CgAlignment, Examples) {
    const Mat a = Mat::diag(Vect{3, 1, 2});
    const CgAlignment c = cg_alignment(a, Vect{1, 2, 3}, 2);
    EXPECT_NEAR(c.smallest, 4.0, 1e-12);  // eigenvalue 1 ↔ e₂
    EXPECT_NEAR(c.leading, 4.0 + 9.0, 1e-12);
    EXPECT_THROW(cg_alignment(Mat{{1, 2}, {0, 1}}, Vect{1, 1}, 1), Error);
    EXPECT_NO_THROW(cg_alignment(Mat{{1, 2}, {0, 1}}, Vect{1, 1}, 1, true));
}

TEST(CgAlignment, Parseval) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const Mat a = gen_sdd_matrix(rng, {});
        const Vect r0 = testutil::random_vector(rng, 20);
        const CgAlignment c = cg_alignment(a, r0, 20);
        EXPECT_NEAR(c.leading, dot(r0, r0), 1e-10 * dot(r0, r0));
        EXPECT_LE(c.smallest, c.leading);
    }
}

TEST(GdSmoothness, Examples) {
    EXPECT_NEAR(gd_smoothness(Mat::diag(Vect{3, 1})), 18.0, 1e-12);
    EXPECT_NEAR(gd_smoothness(Mat{{1}, {1}}), 4.0, 1e-12);
}

TEST(EigvecCondition, UpperTriangularClosedForm) {
    const Mat a{{1, 10}, {0, 2}};
    // Unit eigenvectors (1, 0) and (10, 1)/√101.
    const double s = 1.0 / std::sqrt(101.0);
    const double oracle = kappa2x2(Mat{{1, 10 * s}, {0, s}});
    EXPECT_NEAR(eigvec_condition(a), oracle, 1e-8);
}

TEST(EigvecCondition, NormalMatricesGiveOne) {
    EXPECT_NEAR(eigvec_condition(Mat{{2, 1}, {1, 3}}), 1.0, 1e-10);
    EXPECT_NEAR(eigvec_condition(Mat{{0, -1}, {1, 0}}), 1.0, 1e-10);
    Rng rng(2);
    EXPECT_NEAR(eigvec_condition(gen_sdd_matrix(rng, {})), 1.0, 1e-8);
}

TEST(EigvecCondition, DefectiveThrows) {
    try {
        eigvec_condition(Mat{{1, 1}, {0, 1}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DefectiveMatrix);
    }
}

TEST(Evaluate, CleanSystemIsExact) {
    SolverConfig cfg;
    cfg.kind = SolverKind::NES;
    const EvalMetrics m = evaluate(identity_task(), Mat(2, 2), cfg);
    EXPECT_EQ(m.sol_err_abs, 0.0);
    EXPECT_NEAR(m.abs_err, 0.0, 1e-15);
    EXPECT_NEAR(m.kappa, 1.0, 1e-15);
    EXPECT_TRUE(m.converged);
}

TEST(Evaluate, ScaledIdentity) {
    SolverConfig cfg;
    cfg.kind = SolverKind::GMRES;
    // (I + 0.25 I) w′ = y ⇒ w′ = 0.8 y
    const EvalMetrics m = evaluate(identity_task(), 0.25 * Mat::identity(2), cfg);
    EXPECT_NEAR(m.sol_err_abs, 0.2 * std::sqrt(5.0), 1e-10);
    EXPECT_NEAR(m.sol_err_rel, 0.2, 1e-10);
    EXPECT_NEAR(m.abs_err, 0.2 * std::sqrt(5.0), 1e-10);
    EXPECT_NEAR(m.rsd, 0.2, 1e-10);
    EXPECT_NEAR(m.kappa, 1.0, 1e-12);
}

TEST(Evaluate, SingularFallsBack) {
    SolverConfig cfg;
    cfg.kind = SolverKind::NES;
    const EvalMetrics m = evaluate(identity_task(), Mat{{0, 0}, {0, -1}}, cfg);
    EXPECT_FALSE(m.converged);
    EXPECT_EQ(m.n_end, cfg.effective_max_iter(2));
    EXPECT_TRUE(std::isfinite(m.sol_err_abs));
    EXPECT_EQ(m.kappa, kappa_or_max(Mat{{1, 0}, {0, 0}}));
}

TEST(Stats, MedianMean) {
    EXPECT_EQ(median({3, 1, 2}), 2.0);
    EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
    EXPECT_EQ(mean({1, 2, 6}), 3.0);
    EXPECT_THROW(median({}), Error);
}

TEST(Stats, Spearman) {
    EXPECT_NEAR(spearman({1, 2, 3, 4}, {10, 20, 25, 100}), 1.0, 1e-15);
    EXPECT_NEAR(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0, 1e-15);
    // ranks (1, 2.5, 2.5, 4) vs (1, 2, 3, 4)
    EXPECT_NEAR(spearman({1, 2, 2, 3}, {1, 2, 3, 4}), 4.5 / std::sqrt(4.5 * 5.0), 1e-14);
}
