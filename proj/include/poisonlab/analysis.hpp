#pragma once

// Metrics for attacked systems, evaluators and checkers for the forward
// error bound, the GD rate envelope and the solution-divergence lower bound,
// spectral diagnostics for the iterative solvers, and a one-sided t-test.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "poisonlab/attacks.hpp"
#include "poisonlab/datagen.hpp"
#include "poisonlab/linalg.hpp"
#include "poisonlab/solvers.hpp"

namespace poisonlab {

struct EvalMetrics {
    double abs_err = 0.0;      // ‖y_t − X_t w′‖₂
    double rsd = 0.0;          // abs_err / ‖y_t‖₂
    double sol_err_abs = 0.0;  // ‖w − w′‖₂
    double sol_err_rel = 0.0;  // sol_err_abs / ‖w‖₂
    double kappa = 0.0;        // κ₂(X + ΔX)
    std::size_t n_end = 0;
    bool converged = true;
};

/// Solves the clean and perturbed training systems with the same solver and
/// scores the perturbed solution on the test system. Solver failures (thrown
/// or non-converged) are recorded as converged = false with n_end = max_iter;
/// a thrown failure falls back to the least-squares solution so every field
/// stays finite.
EvalMetrics evaluate(const RegressionTask& task, const Mat& delta, const SolverConfig& cfg);

/// σ_max/σ_min without a singularity cutoff; DBL_MAX for an exactly singular matrix.
double kappa_or_max(const Mat& a);

// ---------------------------------------------------------------------------
// Bounds

enum class BoundKind { ForwardRel, ForwardOutput, UpRate, LpDivergence };
std::string_view to_string(BoundKind k) noexcept;

struct BoundReport {
    BoundKind kind = BoundKind::ForwardRel;
    double bound_value = 0.0;
    double empirical_value = 0.0;
    bool precondition_ok = false;
    /// Upper bounds hold when empirical ≤ bound; the divergence bound is a
    /// lower bound and holds when empirical ≥ bound.
    bool holds = false;
    std::map<std::string, double> params;
};

struct ForwardBounds {
    double rel;     // ε‖X⁻¹‖ / (1 − ε‖X⁻¹‖)
    double output;  // ε‖w‖κ(X) / (1 − ε‖X⁻¹‖)
};

/// Throws PreconditionFailed unless ε‖X⁻¹‖₂ < 1.
ForwardBounds forward_bounds(const Mat& x, const Vect& w, double epsilon);

/// Compares ‖w − w′‖/‖w‖ and ‖Xw′ − Xw‖ against forward_bounds. When the
/// precondition fails both reports carry precondition_ok = false.
std::vector<BoundReport> check_forward(const Mat& x, const Vect& w, const Vect& w_perturbed, double epsilon);

/// Rate envelope T ↦ C / (γ(2 − γα²L)·T) for GD on a system whose largest
/// singular value grew by α.
struct UpRateBound {
    double c = 0.0;
    double gamma = 0.0;
    double alpha = 1.0;
    double l_clean = 0.0;
    double denom = 0.0;  // γ(2 − γα²L)
    double t_min = 0.0;  // iterations needed for β-accuracy

    double operator()(double t) const { return c / (denom * t); }
};

/// Throws InvalidAlpha when α ≤ 0 or 2 − γα²L ≤ 0, InvalidConfig for
/// non-positive γ, L or β.
UpRateBound up_rate_bound(double c, double gamma, double alpha, double l_clean, double beta);

/// Runs GD from 0 with step γ on the consistent system a x = b (solution
/// x_star) and checks min_{t<T} f(x_t) ≤ bound(T) at every logged T, with
/// f(x) = ‖a x − b‖². alpha/l_clean describe the envelope; pass alpha = 1 and
/// l_clean = 2σ_max(a)² for the unperturbed form.
BoundReport check_gd_envelope(const Mat& a, const Vect& b, const Vect& x_star, double gamma, double alpha,
                              double l_clean, std::size_t max_iter);

/// (η/‖X‖₂) / (1 + ε‖X⁻¹‖₂). Throws NumericallySingular for singular x.
double lp_divergence_bound(const Mat& x, double epsilon, double eta);

/// Checks ‖w* − w′*‖ ≥ lp_divergence_bound for X w* = y and
/// (X + ΔX) w′* = y + Δy. The precondition includes ‖ΔX‖₂ ≤ ε, ‖Δy‖₂ ≥ η and
/// ‖w′*‖₂ ≤ η‖X⁻¹‖₂/(1 + ε‖X⁻¹‖₂); without the last one the inequality can
/// fail (X = I, ΔX = Δy·wᵀ/‖w‖² leaves the solution unchanged).
BoundReport check_lp_divergence(const Mat& x, const Vect& y, const Mat& delta_x, const Vect& delta_y, double epsilon,
                                double eta);

// ---------------------------------------------------------------------------
// Forward-bound campaign and t-test

struct TTestReport {
    double t_stat = 0.0;
    double p_value = 1.0;
    std::size_t df = 0;
    std::size_t n_samples = 0;
    bool reject_null = false;
};

/// P(T ≤ t) for Student's t with df degrees of freedom (Boost.Math).
double student_t_cdf(double t, double df);

/// Regularized incomplete beta I_x(a, b) (Boost.Math).
double incomplete_beta(double a, double b, double x);

/// One-sample test of H₀: mean(d) ≥ 0 against H₁: mean(d) < 0.
/// Throws TooFewSamples for fewer than 3 values and ZeroVariance when all are equal.
TTestReport one_sided_ttest(const std::vector<double>& d, double xi);

struct ForwardSample {
    std::size_t index = 0;
    double sol_err_rel = 0.0;
    double rel_bound = 0.0;
    double output_err = 0.0;
    double output_bound = 0.0;
};

struct ForwardCampaign {
    AttackKind attack = AttackKind::LP;
    double epsilon = 0.0;
    std::vector<ForwardSample> samples;
    std::size_t excluded = 0;  // tasks with ε‖X⁻¹‖ ≥ 1
    std::size_t rel_violations = 0;
    std::size_t output_violations = 0;
};

/// For each square task meeting the precondition: attack at budget ε, solve
/// both systems with NES and record the errors next to their bounds.
ForwardCampaign run_forward_campaign(const std::vector<RegressionTask>& tasks, AttackKind attack,
                                     const PerturbBudget& budget, const OptimizerParams& opt = {});

/// t-test on d_i = sol_err_rel_i − rel_bound_i.
TTestReport forward_ttest(const ForwardCampaign& campaign, double xi);

TTestReport verify_forward(const std::vector<RegressionTask>& tasks, AttackKind attack, const PerturbBudget& budget,
                           double xi, const OptimizerParams& opt = {});

// ---------------------------------------------------------------------------
// Spectral diagnostics

/// Iteration matrix T of Jacobi, Gauss-Seidel or SOR for the splitting
/// a = D + L + U. Throws ZeroDiagonal.
Mat stationary_iteration_matrix(const Mat& a, SolverKind kind, double omega = 1.0);

/// The constant term c with x⁽ᵏ⁺¹⁾ = T x⁽ᵏ⁾ + c.
Vect stationary_offset(const Mat& a, const Vect& b, SolverKind kind, double omega = 1.0);

struct CgAlignment {
    double smallest = 0.0;  // ‖c₁‖²
    double leading = 0.0;   // Σ_{i ≤ k} ‖c_i‖²
};

/// Projects r0 onto the eigenvectors of a (eigenvalues ascending).
/// Throws NotSymmetric beyond 1e-9 relative asymmetry unless symmetrize is set.
CgAlignment cg_alignment(const Mat& a, const Vect& r0, std::size_t k, bool symmetrize = false);

/// 2·σ_max(x)².
double gd_smoothness(const Mat& x);

/// κ₂ of the unit-norm eigenvector matrix. Throws DefectiveMatrix when the
/// eigenvectors are numerically dependent.
double eigvec_condition(const Mat& a);

// ---------------------------------------------------------------------------
// Small statistics helpers

double median(std::vector<double> v);
double mean(const std::vector<double>& v);
/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

nlohmann::json to_json(const EvalMetrics& m);
nlohmann::json to_json(const BoundReport& r);
nlohmann::json to_json(const TTestReport& r);

}  // namespace poisonlab
