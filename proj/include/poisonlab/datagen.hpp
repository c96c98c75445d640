#pragma once

#include <string>

#include "json.hpp"
#include "poisonlab/linalg.hpp"
#include "poisonlab/rng.hpp"

namespace poisonlab {

/// Train/test regression systems plus the reference solution fitted on the
/// clean training system.
struct RegressionTask {
    Mat x_train;
    Vect y_train;
    Mat x_test;
    Vect y_test;
    Vect w_ref;

    std::size_t dim() const noexcept { return x_train.cols(); }
};

struct DenseParams {
    std::size_t n_train = 6;
    std::size_t n_test = 9;
    std::size_t d = 3;
    double noise_std = 0.0;
};

struct SddParams {
    std::size_t n = 20;
    double density = 0.3;
    double diag_boost = 1.0;
};

/// Gaussian features, coefficients 100·U(0,1), y = X·coef + noise. The test
/// labels are X_test·w_ref so clean and perturbed runs share one evaluation path.
RegressionTask gen_dense_regression(Rng& rng, const DenseParams& p);

/// Sparse random pattern with U(0,1) values, symmetrized, then made strictly
/// diagonally dominant by setting a_ii = Σ_{j≠i}|a_ij| + diag_boost.
Mat gen_sdd_matrix(Rng& rng, const SddParams& p);

/// Square SDD train/test systems; y_train ~ U(0,1)^n, w_ref = X_train⁻¹ y_train.
RegressionTask gen_sdd_square(Rng& rng, const SddParams& p);

nlohmann::json to_json(const DenseParams& p);
nlohmann::json to_json(const SddParams& p);

}  // namespace poisonlab
