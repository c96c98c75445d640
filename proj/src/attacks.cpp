#include "poisonlab/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "poisonlab/solvers.hpp"

namespace poisonlab {

std::string_view to_string(BallNorm n) noexcept { return n == BallNorm::Spectral ? "spectral" : "frobenius"; }
std::string_view to_string(GradMode g) noexcept { return g == GradMode::Analytic ? "analytic" : "finite_diff"; }
std::string_view to_string(AttackKind a) noexcept { return a == AttackKind::LP ? "LP" : "UP"; }

AttackKind attack_kind_from_string(std::string_view name) {
    if (name == "LP" || name == "lp") return AttackKind::LP;
    if (name == "UP" || name == "up") return AttackKind::UP;
    throw Error(ErrorCode::InvalidConfig, "unknown attack '" + std::string(name) + "'");
}

BallNorm ball_norm_from_string(std::string_view name) {
    if (name == "spectral" || name == "2") return BallNorm::Spectral;
    if (name == "frobenius" || name == "fro") return BallNorm::Frobenius;
    throw Error(ErrorCode::InvalidConfig, "unknown norm '" + std::string(name) + "'");
}

void PerturbBudget::validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
        throw Error(ErrorCode::InvalidConfig, "perturbation budget epsilon must be > 0");
    }
}

double ball_norm(const Mat& delta, BallNorm norm) {
    return norm == BallNorm::Frobenius ? fnorm(delta) : opnorm2(delta);
}

namespace {

Mat symmetrized(const Mat& d) {
    Mat s = d;
    for (std::size_t i = 0; i < d.rows(); ++i)
        for (std::size_t j = 0; j < d.cols(); ++j) s(i, j) = 0.5 * (d(i, j) + d(j, i));
    return s;
}

constexpr double kBallSlack = 1e-12;

}  // namespace

Mat project_ball(const Mat& delta, const PerturbBudget& budget) {
    budget.validate();
    if (budget.symmetric && !delta.is_square()) {
        throw Error(ErrorCode::InvalidShape, "symmetric budget needs a square perturbation");
    }
    Mat d = budget.symmetric ? symmetrized(delta) : delta;
    const double eps = budget.epsilon;
    if (budget.norm == BallNorm::Frobenius) {
        const double nrm = fnorm(d);
        if (nrm <= eps * (1.0 + kBallSlack)) return d;
        d *= eps / nrm;
    } else {
        Svd s = svd(d);
        if (s.sigma[0] <= eps * (1.0 + kBallSlack)) return d;
        for (double& v : s.sigma) v = std::min(v, eps);
        d = s.reconstruct();
    }
    return budget.symmetric ? symmetrized(d) : d;
}

Mat condition_gradient(const Mat& a) {
    const Svd s = svd(a);
    const std::size_t k = s.sigma.size();
    const double smax = s.sigma[0];
    const double smin = s.sigma[k - 1];
    if (!(smin > 0.0)) throw Error(ErrorCode::NumericallySingular, "condition gradient at a singular matrix");
    Mat g = (1.0 / smin) * outer(s.u.col(0), s.v.col(0));
    g -= (smax / (smin * smin)) * outer(s.u.col(k - 1), s.v.col(k - 1));
    return g;
}

namespace {

using Objective = std::function<std::optional<double>(const Mat&)>;
using Gradient = std::function<std::optional<Mat>(const Mat&)>;

// Normalized projected gradient ascent with backtracking and keep-best.
AttackOutcome projected_ascent(std::size_t rows, std::size_t cols, const PerturbBudget& budget,
                               const OptimizerParams& opt, const Objective& objective,
                               const Gradient& gradient) {
    budget.validate();
    AttackOutcome out{Mat(rows, cols), {}, 0, GradMode::Analytic};
    const std::optional<double> f0 = objective(out.delta);
    if (!f0) throw Error(ErrorCode::InnerSolveFailure, "objective undefined at zero perturbation");
    double best = *f0;
    out.objective_trace.push_back(best);

    const double max_step = opt.step_fraction * budget.epsilon;
    double step = max_step;
    for (std::size_t it = 0; it < opt.max_iter; ++it) {
        const std::optional<Mat> grad = gradient(out.delta);
        if (!grad) break;
        const double gnorm = fnorm(*grad);
        if (!(gnorm > 0.0) || !std::isfinite(gnorm)) break;
        const Mat direction = (1.0 / gnorm) * *grad;

        bool accepted = false;
        std::size_t halvings = 0;
        double value = best;
        Mat candidate;
        while (true) {
            candidate = project_ball(out.delta + step * direction, budget);
            const std::optional<double> f = objective(candidate);
            if (f && *f > best) {
                value = *f;
                accepted = true;
                break;
            }
            if (halvings == opt.max_halvings) break;
            step *= 0.5;
            ++halvings;
        }
        if (!accepted) break;
        const double gain = value - best;
        out.delta = std::move(candidate);
        best = value;
        out.objective_trace.push_back(best);
        out.iters = it + 1;
        if (halvings == 0) step = std::min(2.0 * step, max_step);
        if (gain < opt.tol) break;
    }
    return out;
}

bool spectrum_degenerate(const Vect& sigma) {
    const std::size_t k = sigma.size();
    if (k < 2) return false;
    const double gap_tol = 1e-10 * sigma[0];
    return (sigma[0] - sigma[1] < gap_tol) || (sigma[k - 2] - sigma[k - 1] < gap_tol);
}

std::optional<double> safe_cond(const Mat& a) {
    try {
        return cond2(a);
    } catch (const Error&) {
        return std::nullopt;
    }
}

Mat central_difference(const Mat& at, double h, const std::function<double(const Mat&)>& f) {
    Mat g(at.rows(), at.cols());
    Mat probe = at;
    for (std::size_t i = 0; i < at.rows(); ++i) {
        for (std::size_t j = 0; j < at.cols(); ++j) {
            const double orig = probe(i, j);
            probe(i, j) = orig + h;
            const double fp = f(probe);
            probe(i, j) = orig - h;
            const double fm = f(probe);
            probe(i, j) = orig;
            g(i, j) = (fp - fm) / (2.0 * h);
        }
    }
    return g;
}

}  // namespace

AttackOutcome attack_up(const Mat& x, const PerturbBudget& budget, const OptimizerParams& opt) {
    budget.validate();
    if (budget.symmetric && !x.is_square()) throw Error(ErrorCode::InvalidShape, "symmetric UP needs square X");
    if (!safe_cond(x)) throw Error(ErrorCode::NumericallySingular, "UP needs a nonsingular starting matrix");

    bool used_fd = false;
    const Objective objective = [&](const Mat& d) { return safe_cond(x + d); };
    const Gradient gradient = [&](const Mat& d) -> std::optional<Mat> {
        const Mat a = x + d;
        const Svd s = svd(a);
        if (!spectrum_degenerate(s.sigma)) {
            try {
                return condition_gradient(a);
            } catch (const Error&) {
                return std::nullopt;
            }
        }
        // subgradient ambiguous at repeated extreme singular values
        used_fd = true;
        const double h = opt.fd_step * std::max(1.0, max_abs(a));
        try {
            return central_difference(a, h, [](const Mat& m) { return cond2(m); });
        } catch (const Error&) {
            return std::nullopt;
        }
    };
    AttackOutcome out = projected_ascent(x.rows(), x.cols(), budget, opt, objective, gradient);
    out.grad_mode = used_fd ? GradMode::FiniteDiff : GradMode::Analytic;
    return out;
}

// ---------------------------------------------------------------------------
// LP

namespace lp {

namespace {

constexpr double kTikhonov = 1e-10;

struct InnerSolution {
    Vect w;
    bool square_lu = false;
    double ridge = 0.0;
};

Vect normal_solve(const Mat& a, const Vect& y, double ridge) {
    Mat n = a.transpose() * a;
    for (std::size_t i = 0; i < n.rows(); ++i) n(i, i) += ridge;
    return cholesky_solve(n, transpose_times(a, y));
}

InnerSolution inner(const Mat& a, const Vect& y) {
    try {
        if (a.is_square()) return {lu_solve(a, y), true, 0.0};
        return {normal_solve(a, y, 0.0), false, 0.0};
    } catch (const Error&) {
    }
    try {
        return {normal_solve(a, y, kTikhonov), false, kTikhonov};
    } catch (const Error& e) {
        throw Error(ErrorCode::InnerSolveFailure, std::string("perturbed system numerically singular: ") + e.what());
    }
}

Vect test_residual(const RegressionTask& task, const Vect& w) { return task.y_test - task.x_test * w; }

}  // namespace

Vect inner_solve(const Mat& a, const Vect& y) { return inner(a, y).w; }

double objective(const RegressionTask& task, const Mat& delta) {
    return norm2(test_residual(task, inner_solve(task.x_train + delta, task.y_train)));
}

Mat gradient_analytic(const RegressionTask& task, const Mat& delta) {
    const Mat a = task.x_train + delta;
    const InnerSolution sol = inner(a, task.y_train);
    const Vect r = test_residual(task, sol.w);
    const double rn = norm2(r);
    if (!(rn > 0.0)) return Mat(a.rows(), a.cols());
    // g = ∂J/∂w′
    Vect g = transpose_times(task.x_test, r);
    g *= -1.0 / rn;
    if (sol.square_lu) {
        const Vect at_g = LuDecomp(a).solve_transposed(g);
        return -1.0 * outer(at_g, sol.w);
    }
    // differentiate N w′ = Aᵀy with N = AᵀA (+ ridge I)
    Mat n = a.transpose() * a;
    for (std::size_t i = 0; i < n.rows(); ++i) n(i, i) += sol.ridge;
    const Vect z = cholesky_solve(n, g);
    const Vect res = task.y_train - a * sol.w;
    return outer(res, z) - outer(a * z, sol.w);
}

Mat gradient_finite_diff(const RegressionTask& task, const Mat& delta, double h) {
    return central_difference(delta, h, [&](const Mat& d) { return objective(task, d); });
}

namespace {

// At a zero test residual ‖r‖ is not differentiable; the steepest ascent
// direction is the top right singular vector of the Jacobian of r(ΔX).
Mat steepest_direction_at_zero_residual(const RegressionTask& task, const Mat& delta, double h) {
    const std::size_t rows = delta.rows();
    const std::size_t cols = delta.cols();
    const std::size_t m = task.y_test.size();
    Mat jac(m, rows * cols);
    Mat probe = delta;
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            const double orig = probe(i, j);
            probe(i, j) = orig + h;
            const Vect rp = test_residual(task, inner_solve(task.x_train + probe, task.y_train));
            probe(i, j) = orig - h;
            const Vect rm = test_residual(task, inner_solve(task.x_train + probe, task.y_train));
            probe(i, j) = orig;
            for (std::size_t t = 0; t < m; ++t) jac(t, i * cols + j) = (rp[t] - rm[t]) / (2.0 * h);
        }
    }
    const Svd s = svd(jac);
    Mat dir(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) dir(i, j) = s.v(i * cols + j, 0);
    return dir;
}

}  // namespace

}  // namespace lp

AttackOutcome attack_lp(const RegressionTask& task, const PerturbBudget& budget, const OptimizerParams& opt) {
    budget.validate();
    const Mat& x = task.x_train;
    if (task.y_train.size() != x.rows() || task.x_test.cols() != x.cols() || task.y_test.size() != task.x_test.rows()) {
        throw Error(ErrorCode::InvalidShape, "LP: inconsistent task shapes");
    }
    const GradMode mode = opt.grad_mode.value_or(x.is_square() ? GradMode::Analytic : GradMode::FiniteDiff);
    const double zero_floor = 1e-8 * std::max(norm2(task.y_test), 1e-300);

    const Objective objective = [&](const Mat& d) -> std::optional<double> {
        try {
            return lp::objective(task, d);
        } catch (const Error&) {
            return std::nullopt;
        }
    };
    const Gradient gradient = [&](const Mat& d) -> std::optional<Mat> {
        try {
            if (lp::objective(task, d) <= zero_floor) {
                return lp::steepest_direction_at_zero_residual(task, d, opt.fd_step);
            }
            return mode == GradMode::Analytic ? lp::gradient_analytic(task, d)
                                              : lp::gradient_finite_diff(task, d, opt.fd_step);
        } catch (const Error&) {
            return std::nullopt;
        }
    };
    AttackOutcome out = projected_ascent(x.rows(), x.cols(), budget, opt, objective, gradient);
    out.grad_mode = mode;
    return out;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const PerturbBudget& b) {
    return {{"epsilon", b.epsilon}, {"norm", std::string(to_string(b.norm))}, {"symmetric", b.symmetric}};
}

nlohmann::json to_json(const OptimizerParams& p) {
    nlohmann::json j{{"max_iter", p.max_iter},       {"step_fraction", p.step_fraction},
                     {"max_halvings", p.max_halvings}, {"tol", p.tol},
                     {"fd_step", p.fd_step}};
    j["grad_mode"] = p.grad_mode ? nlohmann::json(std::string(to_string(*p.grad_mode))) : nlohmann::json("auto");
    return j;
}

OptimizerParams optimizer_params_from_json(const nlohmann::json& j) {
    OptimizerParams p;
    try {
        p.max_iter = j.value("max_iter", p.max_iter);
        p.step_fraction = j.value("step_fraction", p.step_fraction);
        p.max_halvings = j.value("max_halvings", p.max_halvings);
        p.tol = j.value("tol", p.tol);
        p.fd_step = j.value("fd_step", p.fd_step);
        const std::string mode = j.value("grad_mode", std::string("auto"));
        if (mode == "analytic") p.grad_mode = GradMode::Analytic;
        else if (mode == "finite_diff") p.grad_mode = GradMode::FiniteDiff;
        else if (mode != "auto") throw Error(ErrorCode::InvalidConfig, "unknown grad_mode " + mode);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("optimizer params: ") + e.what());
    }
    if (!(p.step_fraction > 0.0) || !(p.fd_step > 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "step_fraction and fd_step must be > 0");
    }
    return p;
}

nlohmann::json to_json(const AttackOutcome& outcome, const PerturbBudget& budget) {
    return {{"objective_trace", outcome.objective_trace},
            {"iters", outcome.iters},
            {"grad_mode", std::string(to_string(outcome.grad_mode))},
            {"budget", to_json(budget)},
            {"delta_norm", ball_norm(outcome.delta, budget.norm)}};
}

}  // namespace poisonlab
