#include "poisonlab/analysis.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>

namespace poisonlab {

double kappa_or_max(const Mat& a) {
    const Vect s = singular_values(a);
    const double smin = s[s.size() - 1];
    if (!(smin > 0.0)) return DBL_MAX;
    const double k = s[0] / smin;
    return std::isfinite(k) ? k : DBL_MAX;
}

namespace {

struct SolveOutcome {
    Vect w;
    std::size_t n_end = 0;
    bool converged = false;
};

SolveOutcome solve_or_fallback(const Mat& a, const Vect& b, const SolverConfig& cfg) {
    const std::size_t max_iter = cfg.effective_max_iter(a.cols());
    try {
        SolveReport r = solve(a, b, cfg);
        if (!r.converged) return {std::move(r.w), max_iter, false};
        return {std::move(r.w), r.n_end, true};
    } catch (const Error& e) {
        if (e.code() == ErrorCode::InvalidShape || e.code() == ErrorCode::InvalidConfig) throw;
        return {lstsq(a, b), max_iter, false};
    }
}

}  // namespace

EvalMetrics evaluate(const RegressionTask& task, const Mat& delta, const SolverConfig& cfg) {
    if (delta.rows() != task.x_train.rows() || delta.cols() != task.x_train.cols()) {
        throw Error(ErrorCode::InvalidShape, "evaluate: delta shape differs from x_train");
    }
    const Mat perturbed = task.x_train + delta;
    const SolveOutcome clean = solve_or_fallback(task.x_train, task.y_train, cfg);
    const SolveOutcome pert = solve_or_fallback(perturbed, task.y_train, cfg);

    EvalMetrics m;
    m.abs_err = norm2(task.y_test - task.x_test * pert.w);
    const double yn = norm2(task.y_test);
    m.rsd = yn > 0.0 ? m.abs_err / yn : 0.0;
    m.sol_err_abs = norm2(clean.w - pert.w);
    const double wn = norm2(clean.w);
    m.sol_err_rel = wn > 0.0 ? m.sol_err_abs / wn : 0.0;
    m.kappa = kappa_or_max(perturbed);
    m.n_end = pert.n_end;
    m.converged = pert.converged;
    return m;
}

// ---------------------------------------------------------------------------

std::string_view to_string(BoundKind k) noexcept {
    switch (k) {
    case BoundKind::ForwardRel: return "forward_rel";
    case BoundKind::ForwardOutput: return "forward_output";
    case BoundKind::UpRate: return "up_rate";
    case BoundKind::LpDivergence: return "lp_divergence";
    }
    return "?";
}

ForwardBounds forward_bounds(const Mat& x, const Vect& w, double epsilon) {
    if (!x.is_square()) throw Error(ErrorCode::InvalidShape, "forward bounds need a square matrix");
    const Svd s = svd(x);
    const double smin = s.sigma[s.sigma.size() - 1];
    if (!(smin > kSingularThreshold * s.sigma[0])) {
        throw Error(ErrorCode::PreconditionFailed, "X is numerically singular");
    }
    const double inv = 1.0 / smin;
    const double e_inv = epsilon * inv;
    if (!(e_inv < 1.0)) throw Error(ErrorCode::PreconditionFailed, "requires eps*||X^-1|| < 1");
    const double kappa = s.sigma[0] / smin;
    return {e_inv / (1.0 - e_inv), epsilon * norm2(w) * kappa / (1.0 - e_inv)};
}

std::vector<BoundReport> check_forward(const Mat& x, const Vect& w, const Vect& w_perturbed, double epsilon) {
    BoundReport rel{BoundKind::ForwardRel, 0.0, 0.0, false, false, {{"epsilon", epsilon}}};
    BoundReport out{BoundKind::ForwardOutput, 0.0, 0.0, false, false, {{"epsilon", epsilon}}};
    const Vect diff = w - w_perturbed;
    rel.empirical_value = norm2(diff) / norm2(w);
    out.empirical_value = norm2(x * diff);
    try {
        const ForwardBounds b = forward_bounds(x, w, epsilon);
        rel.bound_value = b.rel;
        out.bound_value = b.output;
        rel.precondition_ok = out.precondition_ok = true;
        rel.holds = rel.empirical_value <= rel.bound_value;
        out.holds = out.empirical_value <= out.bound_value;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::PreconditionFailed) throw;
    }
    return {rel, out};
}

UpRateBound up_rate_bound(double c, double gamma, double alpha, double l_clean, double beta) {
    if (!(gamma > 0.0) || !(l_clean > 0.0) || !(beta > 0.0) || c < 0.0) {
        throw Error(ErrorCode::InvalidConfig, "up_rate_bound needs gamma, L, beta > 0 and C >= 0");
    }
    if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidAlpha, "alpha must be positive");
    const double margin = 2.0 - gamma * alpha * alpha * l_clean;
    if (!(margin > 0.0)) throw Error(ErrorCode::InvalidAlpha, "2 - gamma*alpha^2*L must be positive");
    UpRateBound b;
    b.c = c;
    b.gamma = gamma;
    b.alpha = alpha;
    b.l_clean = l_clean;
    b.denom = gamma * margin;
    b.t_min = c / (b.denom * beta);
    return b;
}

BoundReport check_gd_envelope(const Mat& a, const Vect& b, const Vect& x_star, double gamma, double alpha,
                              double l_clean, std::size_t max_iter) {
    const double c = std::pow(norm2(x_star), 2);  // x₀ = 0
    const UpRateBound env = up_rate_bound(c, gamma, alpha, l_clean, 1.0);

    SolverConfig cfg;
    cfg.kind = SolverKind::GD;
    cfg.step_size = gamma;
    cfg.max_iter = max_iter;
    cfg.tol = 1e-14;
    const SolveReport rep = solve(a, b, cfg);

    const double f_star = std::pow(norm2(b - a * x_star), 2);
    BoundReport r{BoundKind::UpRate, 0.0, 0.0, true, true,
                  {{"C", c}, {"gamma", gamma}, {"alpha", alpha}, {"L", l_clean}}};
    double best = INFINITY;
    double tightest = -INFINITY;
    std::size_t violations = 0;
    for (std::size_t t = 0; t < rep.residual_history.size(); ++t) {
        best = std::min(best, std::pow(rep.residual_history[t], 2) - f_star);
        const double bound = env(static_cast<double>(t + 1));
        if (best > bound) ++violations;
        const double ratio = bound > 0.0 ? best / bound : (best > 0.0 ? INFINITY : 0.0);
        if (ratio > tightest) {
            tightest = ratio;
            r.bound_value = bound;
            r.empirical_value = best;
        }
    }
    r.holds = violations == 0;
    r.params["iterations"] = static_cast<double>(rep.residual_history.size());
    r.params["violations"] = static_cast<double>(violations);
    return r;
}

double lp_divergence_bound(const Mat& x, double epsilon, double eta) {
    if (!x.is_square()) throw Error(ErrorCode::InvalidShape, "divergence bound needs a square matrix");
    const Vect s = singular_values(x);
    const double smin = s[s.size() - 1];
    if (!(smin > kSingularThreshold * s[0])) throw Error(ErrorCode::NumericallySingular, "X is singular");
    if (eta < 0.0) throw Error(ErrorCode::InvalidConfig, "eta must be >= 0");
    return (eta / s[0]) / (1.0 + epsilon / smin);
}

BoundReport check_lp_divergence(const Mat& x, const Vect& y, const Mat& delta_x, const Vect& delta_y, double epsilon,
                                double eta) {
    const double bound = lp_divergence_bound(x, epsilon, eta);
    const double inv = inv_norm2(x);
    const Vect w = lu_solve(x, y);
    const Vect w_prime = lu_solve(x + delta_x, y + delta_y);
    const double dx = opnorm2(delta_x);
    const double dy = norm2(delta_y);
    const double regime = eta * inv / (1.0 + epsilon * inv);

    BoundReport r{BoundKind::LpDivergence, bound, norm2(w - w_prime), false, false,
                  {{"epsilon", epsilon}, {"eta", eta}, {"dx_norm", dx}, {"dy_norm", dy},
                   {"w_prime_norm", norm2(w_prime)}, {"w_prime_limit", regime}}};
    r.precondition_ok = dx <= epsilon * (1.0 + 1e-9) && dy >= eta && norm2(w_prime) <= regime;
    r.holds = r.empirical_value >= r.bound_value;
    return r;
}

// ---------------------------------------------------------------------------

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw Error(ErrorCode::InvalidConfig, "incomplete beta needs a, b > 0");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    return boost::math::ibeta(a, b, x);
}

double student_t_cdf(double t, double df) {
    if (!(df > 0.0)) throw Error(ErrorCode::InvalidConfig, "df must be positive");
    if (std::isnan(t)) return t;
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    return boost::math::cdf(boost::math::students_t_distribution<double>(df), t);
}

TTestReport one_sided_ttest(const std::vector<double>& d, double xi) {
    const std::size_t n = d.size();
    if (n < 3) throw Error(ErrorCode::TooFewSamples, "t-test needs at least 3 samples, got " + std::to_string(n));
    const double mu = mean(d);
    double ss = 0.0;
    for (double v : d) ss += (v - mu) * (v - mu);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 0.0)) throw Error(ErrorCode::ZeroVariance, "all samples are identical");
    TTestReport r;
    r.n_samples = n;
    r.df = n - 1;
    r.t_stat = mu / (sd / std::sqrt(static_cast<double>(n)));
    r.p_value = student_t_cdf(r.t_stat, static_cast<double>(r.df));
    r.reject_null = r.p_value < xi;
    return r;
}

ForwardCampaign run_forward_campaign(const std::vector<RegressionTask>& tasks, AttackKind attack,
                                     const PerturbBudget& budget, const OptimizerParams& opt) {
    ForwardCampaign out;
    out.attack = attack;
    out.epsilon = budget.epsilon;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const RegressionTask& task = tasks[i];
        if (!task.x_train.is_square()) throw Error(ErrorCode::InvalidShape, "forward campaign needs square tasks");
        const Vect w = solve_nes(task.x_train, task.y_train);
        ForwardBounds bounds{};
        try {
            bounds = forward_bounds(task.x_train, w, budget.epsilon);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::PreconditionFailed) throw;
            ++out.excluded;
            continue;
        }
        const AttackOutcome o =
            attack == AttackKind::LP ? attack_lp(task, budget, opt) : attack_up(task.x_train, budget, opt);
        const Vect w_prime = solve_nes(task.x_train + o.delta, task.y_train);
        const std::vector<BoundReport> reps = check_forward(task.x_train, w, w_prime, budget.epsilon);
        ForwardSample s{i, reps[0].empirical_value, bounds.rel, reps[1].empirical_value, bounds.output};
        if (!reps[0].holds) ++out.rel_violations;
        if (!reps[1].holds) ++out.output_violations;
        out.samples.push_back(s);
    }
    return out;
}

TTestReport forward_ttest(const ForwardCampaign& campaign, double xi) {
    std::vector<double> d;
    d.reserve(campaign.samples.size());
    for (const ForwardSample& s : campaign.samples) d.push_back(s.sol_err_rel - s.rel_bound);
    return one_sided_ttest(d, xi);
}

TTestReport verify_forward(const std::vector<RegressionTask>& tasks, AttackKind attack, const PerturbBudget& budget,
                           double xi, const OptimizerParams& opt) {
    return forward_ttest(run_forward_campaign(tasks, attack, budget, opt), xi);
}

// ---------------------------------------------------------------------------

namespace {

void require_diagonal(const Mat& a) {
    if (!a.is_square()) throw Error(ErrorCode::InvalidShape, "iteration matrix needs a square matrix");
    for (std::size_t i = 0; i < a.rows(); ++i) {
        if (a(i, i) == 0.0) throw Error(ErrorCode::ZeroDiagonal, "zero diagonal at row " + std::to_string(i));
    }
}

// Forward substitution with the lower-triangular M = D + ωL, column by column.
Mat lower_solve(const Mat& a, double omega, const Mat& rhs) {
    const std::size_t n = a.rows();
    Mat x(n, rhs.cols());
    for (std::size_t c = 0; c < rhs.cols(); ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = rhs(i, c);
            for (std::size_t j = 0; j < i; ++j) s -= omega * a(i, j) * x(j, c);
            x(i, c) = s / a(i, i);
        }
    }
    return x;
}

}  // namespace

Mat stationary_iteration_matrix(const Mat& a, SolverKind kind, double omega) {
    require_diagonal(a);
    const std::size_t n = a.rows();
    if (kind == SolverKind::Jacobi) {
        Mat t(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) t(i, j) = -a(i, j) / a(i, i);
        return t;
    }
    if (kind == SolverKind::GaussSeidel) omega = 1.0;
    else if (kind != SolverKind::SOR) throw Error(ErrorCode::InvalidConfig, "not a stationary method");
    // (D + ωL)⁻¹((1 − ω)D − ωU)
    Mat rhs(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        rhs(i, i) = (1.0 - omega) * a(i, i);
        for (std::size_t j = i + 1; j < n; ++j) rhs(i, j) = -omega * a(i, j);
    }
    return lower_solve(a, omega, rhs);
}

Vect stationary_offset(const Mat& a, const Vect& b, SolverKind kind, double omega) {
    require_diagonal(a);
    const std::size_t n = a.rows();
    if (b.size() != n) throw Error(ErrorCode::InvalidShape, "offset: size mismatch");
    if (kind == SolverKind::Jacobi) {
        Vect c(n);
        for (std::size_t i = 0; i < n; ++i) c[i] = b[i] / a(i, i);
        return c;
    }
    if (kind == SolverKind::GaussSeidel) omega = 1.0;
    else if (kind != SolverKind::SOR) throw Error(ErrorCode::InvalidConfig, "not a stationary method");
    Mat rhs(n, 1);
    for (std::size_t i = 0; i < n; ++i) rhs(i, 0) = omega * b[i];
    return lower_solve(a, omega, rhs).col(0);
}

CgAlignment cg_alignment(const Mat& a, const Vect& r0, std::size_t k, bool symmetrize) {
    if (!a.is_square() || r0.size() != a.rows()) throw Error(ErrorCode::InvalidShape, "cg_alignment: size mismatch");
    Mat s = a;
    if (!is_symmetric(a, 1e-9)) {
        if (!symmetrize) throw Error(ErrorCode::NotSymmetric, "cg_alignment needs a symmetric matrix");
        s = 0.5 * (a + a.transpose());
    }
    const SymEigen e = eig_symmetric(s);
    const std::size_t upto = std::min(k, a.rows());
    CgAlignment out;
    for (std::size_t i = 0; i < upto; ++i) {
        const double proj = dot(r0, e.vectors.col(i));
        const double energy = proj * proj;  // ‖(r₀ᵀvᵢ)vᵢ‖² with unit vᵢ
        if (i == 0) out.smallest = energy;
        out.leading += energy;
    }
    return out;
}

double gd_smoothness(const Mat& x) {
    const double s = opnorm2(x);
    return 2.0 * s * s;
}

double eigvec_condition(const Mat& a) {
    const EigenDecomp e = eig_general(a);
    const std::size_t n = e.size();
    // Real embedding [[Re, −Im], [Im, Re]] has the singular values of V, each twice.
    Mat big(2 * n, 2 * n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            const double re = e.vectors(i, 2 * j);
            const double im = e.vectors(i, 2 * j + 1);
            big(i, j) = re;
            big(i, n + j) = -im;
            big(n + i, j) = im;
            big(n + i, n + j) = re;
        }
    }
    const Vect s = singular_values(big);
    const double smin = s[s.size() - 1];
    if (!(smin > 1e-12 * s[0])) throw Error(ErrorCode::DefectiveMatrix, "eigenvector matrix is numerically singular");
    return s[0] / smin;
}

// ---------------------------------------------------------------------------

double median(std::vector<double> v) {
    if (v.empty()) throw Error(ErrorCode::TooFewSamples, "median of an empty list");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

double mean(const std::vector<double>& v) {
    if (v.empty()) throw Error(ErrorCode::TooFewSamples, "mean of an empty list");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = rank;
        i = j + 1;
    }
    return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw Error(ErrorCode::InvalidShape, "spearman: need paired samples");
    const std::vector<double> rx = average_ranks(x);
    const std::vector<double> ry = average_ranks(y);
    const double mx = mean(rx), my = mean(ry);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

nlohmann::json to_json(const EvalMetrics& m) {
    return {{"abs_err", m.abs_err}, {"rsd", m.rsd},     {"sol_err_abs", m.sol_err_abs}, {"sol_err_rel", m.sol_err_rel},
            {"kappa", m.kappa},     {"n_end", m.n_end}, {"converged", m.converged}};
}

nlohmann::json to_json(const BoundReport& r) {
    return {{"kind", std::string(to_string(r.kind))},
            {"bound_value", r.bound_value},
            {"empirical_value", r.empirical_value},
            {"precondition_ok", r.precondition_ok},
            {"holds", r.holds},
            {"params", r.params}};
}

nlohmann::json to_json(const TTestReport& r) {
    return {{"t_stat", r.t_stat},
            {"p_value", r.p_value},
            {"df", r.df},
            {"n_samples", r.n_samples},
            {"reject_null", r.reject_null}};
}

}  // namespace poisonlab
