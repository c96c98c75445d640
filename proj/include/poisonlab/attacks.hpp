#pragma once

// Feature-poisoning attacks on linear regression systems. Both attacks run
// projected gradient ascent over ΔX inside an ε-ball, start from ΔX = 0 and
// keep the best feasible iterate:
//
//   LP  (label-guided)   maximize ‖y_t − X_t w′‖₂,  w′ = argmin_w ‖y − (X + ΔX) w‖₂
//   UP  (unconditioning) maximize κ₂(X + ΔX)
//
// Labels are never perturbed.

#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "poisonlab/datagen.hpp"
#include "poisonlab/linalg.hpp"

namespace poisonlab {

enum class BallNorm { Spectral, Frobenius };
enum class GradMode { Analytic, FiniteDiff };
enum class AttackKind { LP, UP };

std::string_view to_string(BallNorm n) noexcept;
std::string_view to_string(GradMode g) noexcept;
std::string_view to_string(AttackKind a) noexcept;
AttackKind attack_kind_from_string(std::string_view name);
BallNorm ball_norm_from_string(std::string_view name);

struct PerturbBudget {
    double epsilon = 0.1;
    BallNorm norm = BallNorm::Spectral;
    /// Restrict ΔX to symmetric matrices.
    bool symmetric = false;

    void validate() const;
};

struct OptimizerParams {
    std::size_t max_iter = 1000;
    /// Initial step length as a fraction of ε.
    double step_fraction = 0.1;
    std::size_t max_halvings = 20;
    /// Stop once an accepted step improves the objective by less than this.
    double tol = 1e-10;
    /// Gradient mode for LP; empty picks Analytic for square systems and
    /// FiniteDiff for rectangular ones.
    std::optional<GradMode> grad_mode;
    double fd_step = 1e-6;
};

struct AttackOutcome {
    Mat delta;
    std::vector<double> objective_trace;  // best-so-far, starts at ΔX = 0
    std::size_t iters = 0;
    GradMode grad_mode = GradMode::Analytic;
};

/// Norm of ΔX in the budget's geometry.
double ball_norm(const Mat& delta, BallNorm norm);

/// Frobenius-metric projection onto {‖ΔX‖ ≤ ε}: Frobenius mode rescales,
/// spectral mode clips singular values at ε. Symmetric budgets symmetrize first.
/// Points already inside the ball (up to 1e-12 relative) come back unchanged.
Mat project_ball(const Mat& delta, const PerturbBudget& budget);

AttackOutcome attack_up(const Mat& x, const PerturbBudget& budget, const OptimizerParams& opt = {});
AttackOutcome attack_lp(const RegressionTask& task, const PerturbBudget& budget, const OptimizerParams& opt = {});

/// Gradient of κ₂ at a: (1/σ_min)·u₁v₁ᵀ − (σ_max/σ_min²)·u_k v_kᵀ.
Mat condition_gradient(const Mat& a);

/// Pieces of the LP objective, exposed for verification.
namespace lp {

/// Solution of the perturbed inner problem; square systems use LU, others the
/// normal equations. A Tikhonov term (1e-10) is added only if the plain solve
/// fails; InnerSolveFailure if that fails too.
Vect inner_solve(const Mat& a, const Vect& y);

double objective(const RegressionTask& task, const Mat& delta);
Mat gradient_analytic(const RegressionTask& task, const Mat& delta);
Mat gradient_finite_diff(const RegressionTask& task, const Mat& delta, double h);

}  // namespace lp

nlohmann::json to_json(const PerturbBudget& b);
nlohmann::json to_json(const OptimizerParams& p);
OptimizerParams optimizer_params_from_json(const nlohmann::json& j);
/// Attack metadata (trace, iters, grad_mode, budget echo); ΔX goes to delta.csv.
nlohmann::json to_json(const AttackOutcome& outcome, const PerturbBudget& budget);

}  // namespace poisonlab
