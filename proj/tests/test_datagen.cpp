#include <gtest/gtest.h>

#include <cmath>

#include "poisonlab/analysis.hpp"
#include "poisonlab/datagen.hpp"
#include "poisonlab/matrix_io.hpp"
#include "poisonlab/solvers.hpp"

using namespace poisonlab;

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DifferentSeedsDiffer) {
    Rng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 100; ++i) same += a.next_u64() == b.next_u64();
    EXPECT_LT(same, 2);
}

TEST(Rng, UniformRangeAndMoments) {
    Rng rng(7);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    EXPECT_NEAR(sum / n, 0.5, 0.01);
}

TEST(Rng, NormalMoments) {
    Rng rng(8);
    const int n = 100000;
    std::vector<double> x(n);
    for (double& v : x) v = rng.normal();
    const double mu = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - mu) * (v - mu);
    EXPECT_LE(std::abs(mu), 0.05);
    EXPECT_LE(std::abs(std::sqrt(ss / (n - 1)) - 1.0), 0.05);
}

TEST(Rng, BelowStaysInRange) {
    Rng rng(3);
    std::vector<int> hits(7, 0);
    for (int i = 0; i < 7000; ++i) {
        const auto k = rng.below(7);
        ASSERT_LT(k, 7u);
        ++hits[k];
    }
    for (int h : hits) EXPECT_GT(h, 800);
}

TEST(DenseRegression, DefaultShapes) {
    Rng rng(0);
    const RegressionTask t = gen_dense_regression(rng, {});
    EXPECT_EQ(t.x_train.rows(), 6u);
    EXPECT_EQ(t.x_train.cols(), 3u);
    EXPECT_EQ(t.x_test.rows(), 9u);
    EXPECT_EQ(t.x_test.cols(), 3u);
    EXPECT_EQ(t.w_ref.size(), 3u);
}

TEST(DenseRegression, NoiselessSquareInterpolates) {
    Rng rng(4);
    DenseParams p;
    p.n_train = 3;
    const RegressionTask t = gen_dense_regression(rng, p);
    EXPECT_LE(norm2(t.x_train * t.w_ref - t.y_train), 1e-10 * norm2(t.y_train));
}

TEST(DenseRegression, TestLabelsFollowReferenceSolution) {
    Rng rng(5);
    DenseParams p;
    p.noise_std = 0.5;
    const RegressionTask t = gen_dense_regression(rng, p);
    EXPECT_LE(norm2(t.x_test * t.w_ref - t.y_test), 1e-12 * norm2(t.y_test));
    EXPECT_LE(norm2(t.w_ref - lstsq(t.x_train, t.y_train)), 0.0);
}

TEST(DenseRegression, Deterministic) {
    Rng a(42), b(42);
    const RegressionTask t1 = gen_dense_regression(a, {});
    const RegressionTask t2 = gen_dense_regression(b, {});
    EXPECT_EQ(t1.x_train, t2.x_train);
    EXPECT_EQ(t1.y_train, t2.y_train);
    EXPECT_EQ(t1.x_test, t2.x_test);
    EXPECT_EQ(t1.y_test, t2.y_test);
}

TEST(DenseRegression, KappaSurvivesCsvRoundTrip) {
    Rng rng(12);
    const RegressionTask t = gen_dense_regression(rng, {});
    const Mat back = mat_from_csv(to_csv(t.x_train));
    EXPECT_EQ(cond2(back), cond2(t.x_train));
}

TEST(DenseRegression, RejectsBadShapes) {
    Rng rng(0);
    DenseParams p;
    p.n_train = 2;
    EXPECT_THROW(gen_dense_regression(rng, p), Error);
}

TEST(SddSquare, StrictlyDominantAndSymmetric) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        const RegressionTask t = gen_sdd_square(rng, {});
        for (const Mat* m : {&t.x_train, &t.x_test}) {
            for (std::size_t i = 0; i < 20; ++i) {
                double off = 0.0;
                for (std::size_t j = 0; j < 20; ++j) {
                    if (j != i) off += std::abs((*m)(i, j));
                    EXPECT_LE(std::abs((*m)(i, j) - (*m)(j, i)), 1e-15);
                }
                EXPECT_GT((*m)(i, i), off);
            }
        }
    }
}

TEST(SddSquare, JacobiSpectralRadiusBelowOne) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        const RegressionTask t = gen_sdd_square(rng, {});
        EXPECT_LT(spectral_radius(stationary_iteration_matrix(t.x_train, SolverKind::Jacobi)), 1.0);
    }
}

TEST(SddSquare, TestSystemConsistentWithReference) {
    Rng rng(6);
    const RegressionTask t = gen_sdd_square(rng, {});
    EXPECT_LE(norm2(t.x_test * t.w_ref - t.y_test), 1e-12 * norm2(t.y_test));
    EXPECT_LE(norm2(t.x_train * t.w_ref - t.y_train), 1e-12 * norm2(t.y_train));
    for (double y : t.y_train) {
        EXPECT_GE(y, 0.0);
        EXPECT_LT(y, 1.0);
    }
}

TEST(SddSquare, DensityControlsPattern) {
    Rng rng(1);
    SddParams p;
    p.n = 10;
    p.density = 0.2;
    const Mat a = gen_sdd_matrix(rng, p);
    std::size_t nnz_off = 0;
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 10; ++j)
            if (i != j && a(i, j) != 0.0) ++nnz_off;
    // 20 raw entries, symmetrized: at most 40 off-diagonal nonzeros
    EXPECT_GT(nnz_off, 0u);
    EXPECT_LE(nnz_off, 40u);
}

TEST(SddSquare, AllSolversConvergeUnperturbed) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        const RegressionTask t = gen_sdd_square(rng, {});
        for (SolverKind k : {SolverKind::NES, SolverKind::GD, SolverKind::Jacobi, SolverKind::GaussSeidel,
                             SolverKind::SOR, SolverKind::CG, SolverKind::GMRES}) {
            SolverConfig cfg;
            cfg.kind = k;
            EXPECT_TRUE(solve(t.x_train, t.y_train, cfg).converged) << to_string(k) << " seed " << seed;
        }
    }
}
