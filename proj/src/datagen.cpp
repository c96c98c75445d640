#include "poisonlab/datagen.hpp"

#include <cmath>
#include <numeric>
#include <vector>

namespace poisonlab {

namespace {

Mat gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
    Mat m(rows, cols);
    for (double& v : m.data()) v = rng.normal();
    return m;
}

}  // namespace

RegressionTask gen_dense_regression(Rng& rng, const DenseParams& p) {
    if (p.d == 0 || p.n_train < p.d || p.n_test == 0) {
        throw Error(ErrorCode::InvalidShape, "dense regression needs n_train >= d >= 1 and n_test >= 1");
    }
    if (!(p.noise_std >= 0.0)) throw Error(ErrorCode::InvalidShape, "noise_std must be >= 0");

    Mat x_train = gaussian_matrix(rng, p.n_train, p.d);
    Mat x_test = gaussian_matrix(rng, p.n_test, p.d);
    Vect coef(p.d);
    for (double& c : coef) c = 100.0 * rng.uniform();
    Vect y_train = x_train * coef;
    if (p.noise_std > 0.0) {
        for (double& y : y_train) y += p.noise_std * rng.normal();
    }
    Vect w_ref = lstsq(x_train, y_train);
    Vect y_test = x_test * w_ref;
    return RegressionTask{std::move(x_train), std::move(y_train), std::move(x_test), std::move(y_test),
                          std::move(w_ref)};
}

Mat gen_sdd_matrix(Rng& rng, const SddParams& p) {
    if (p.n < 2 || !(p.density > 0.0) || p.density > 1.0) {
        throw Error(ErrorCode::InvalidShape, "SDD generator needs n >= 2 and 0 < density <= 1");
    }
    if (!(p.diag_boost > 0.0)) throw Error(ErrorCode::InvalidShape, "diag_boost must be > 0");
    const std::size_t n = p.n;
    const std::size_t total = n * n;
    const auto k = static_cast<std::size_t>(std::llround(p.density * static_cast<double>(total)));

    // k distinct positions by partial Fisher-Yates, then U(0,1) values
    std::vector<std::size_t> slots(total);
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(total - i));
        std::swap(slots[i], slots[j]);
    }
    Mat a(n, n);
    for (std::size_t i = 0; i < k; ++i) a(slots[i] / n, slots[i] % n) = rng.uniform();

    Mat s(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) s(i, j) = 0.5 * (a(i, j) + a(j, i));
    for (std::size_t i = 0; i < n; ++i) {
        double off = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) off += std::abs(s(i, j));
        s(i, i) = off + p.diag_boost;
    }
    return s;
}

RegressionTask gen_sdd_square(Rng& rng, const SddParams& p) {
    Mat x_train = gen_sdd_matrix(rng, p);
    Vect y_train(p.n);
    for (double& y : y_train) y = rng.uniform();
    Rng test_stream = rng.fork();
    Mat x_test = gen_sdd_matrix(test_stream, p);
    Vect w_ref = lu_solve(x_train, y_train);
    Vect y_test = x_test * w_ref;
    return RegressionTask{std::move(x_train), std::move(y_train), std::move(x_test), std::move(y_test),
                          std::move(w_ref)};
}

nlohmann::json to_json(const DenseParams& p) {
    return {{"n_train", p.n_train}, {"n_test", p.n_test}, {"d", p.d}, {"noise_std", p.noise_std}};
}

nlohmann::json to_json(const SddParams& p) {
    return {{"n", p.n}, {"density", p.density}, {"diag_boost", p.diag_boost}};
}

}  // namespace poisonlab
