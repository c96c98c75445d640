#pragma once

// Direct (normal equations) and iterative solvers for A x = b, each tracking
// the true residual ‖b − A x⁽ᵏ⁾‖₂ at every iteration, plus ILU(0).

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "poisonlab/linalg.hpp"

namespace poisonlab {

enum class SolverKind { NES, GD, Jacobi, GaussSeidel, SOR, CG, GMRES };
enum class Preconditioner { None, ILU0 };

std::string_view to_string(SolverKind kind) noexcept;
/// Accepts the canonical names ("NES", "GD", "Jacobi", "GaussSeidel", "SOR", "CG", "GMRES").
SolverKind solver_kind_from_string(std::string_view name);
bool is_stationary(SolverKind kind) noexcept;

struct SolverConfig {
    SolverKind kind = SolverKind::GMRES;
    double tol = 1e-8;
    /// 0 selects the default: 10·n for stationary methods, CG and GMRES; 1e5 for GD.
    std::size_t max_iter = 0;
    double omega = 1.0;
    /// GD step; empty means 1/L with L = 2·σ_max(A)².
    std::optional<double> step_size;
    /// GMRES restart length; empty means full GMRES.
    std::optional<std::size_t> restart;
    Preconditioner precondition = Preconditioner::None;
    /// Run CG on (A + Aᵀ)/2 instead of A.
    bool symmetrize_cg = false;

    void validate() const;
    std::size_t effective_max_iter(std::size_t n) const;
    /// Short label such as "GMRES" or "GMRES+ILU0".
    std::string label() const;
};

struct SolveReport {
    Vect w;
    std::vector<double> residual_history;  // ‖b − A x⁽ᵏ⁾‖₂ for k = 0 … n_end
    std::size_t n_end = 0;
    bool converged = false;
    std::optional<std::string> breakdown;
};

/// Least squares through AᵀA w = Aᵀb with a Cholesky factorization.
/// Throws NumericallySingular when AᵀA fails the pivot threshold.
Vect solve_nes(const Mat& x, const Vect& y);

/// Runs the configured method from x⁽⁰⁾ = 0. NES is reported as a single step.
/// Dispatches to solve_preconditioned when cfg.precondition is ILU0.
SolveReport solve(const Mat& a, const Vect& b, const SolverConfig& cfg);

/// Unpreconditioned iterative solve. Throws ZeroDiagonal for Jacobi/GS/SOR on
/// a zero diagonal; CG breakdown (pᵀAp ≤ 0) is reported in the result.
SolveReport solve_iterative(const Mat& a, const Vect& b, const SolverConfig& cfg);

/// One sweep of Jacobi, Gauss-Seidel or SOR from x.
Vect stationary_step(const Mat& a, const Vect& b, const Vect& x, SolverKind kind, double omega);

/// Incomplete LU restricted to the nonzero pattern of the input (diagonal always included).
struct Ilu0 {
    Mat l;  // unit lower triangular
    Mat u;  // upper triangular
    std::vector<bool> pattern;  // row-major n×n mask

    bool in_pattern(std::size_t i, std::size_t j) const { return pattern[i * l.rows() + j]; }
    /// Returns (L U)⁻¹ r by two triangular solves.
    Vect apply_inverse(const Vect& r) const;
};

/// Throws ZeroPivot when a diagonal pivot falls below kSingularThreshold·‖a‖∞.
Ilu0 ilu0(const Mat& a);

/// ILU(0)-preconditioned GMRES (left) or CG. Convergence is judged on the true
/// residual so reports compare directly with unpreconditioned runs.
SolveReport solve_preconditioned(const Mat& a, const Vect& b, const SolverConfig& cfg);

/// "iter,residual" rows.
std::string residual_history_csv(const SolveReport& report);
nlohmann::json to_json(const SolveReport& report);
nlohmann::json to_json(const SolverConfig& cfg);
SolverConfig solver_config_from_json(const nlohmann::json& j);

}  // namespace poisonlab
