#include "poisonlab/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "poisonlab/matrix_io.hpp"

namespace poisonlab {

std::string_view to_string(SolverKind kind) noexcept {
    switch (kind) {
    case SolverKind::NES: return "NES";
    case SolverKind::GD: return "GD";
    case SolverKind::Jacobi: return "Jacobi";
    case SolverKind::GaussSeidel: return "GaussSeidel";
    case SolverKind::SOR: return "SOR";
    case SolverKind::CG: return "CG";
    case SolverKind::GMRES: return "GMRES";
    }
    return "?";
}

SolverKind solver_kind_from_string(std::string_view name) {
    for (SolverKind k : {SolverKind::NES, SolverKind::GD, SolverKind::Jacobi, SolverKind::GaussSeidel,
                         SolverKind::SOR, SolverKind::CG, SolverKind::GMRES}) {
        if (name == to_string(k)) return k;
    }
    if (name == "GS" || name == "Gauss-Seidel") return SolverKind::GaussSeidel;
    throw Error(ErrorCode::InvalidConfig, "unknown solver '" + std::string(name) + "'");
}

bool is_stationary(SolverKind kind) noexcept {
    return kind == SolverKind::Jacobi || kind == SolverKind::GaussSeidel || kind == SolverKind::SOR;
}

void SolverConfig::validate() const {
    if (!(tol > 0.0)) throw Error(ErrorCode::InvalidConfig, "tol must be > 0");
    if (kind == SolverKind::SOR && !(omega > 0.0 && omega < 2.0)) {
        throw Error(ErrorCode::InvalidConfig, "SOR requires 0 < omega < 2");
    }
    if (step_size && !(*step_size > 0.0)) throw Error(ErrorCode::InvalidConfig, "step_size must be > 0");
    if (restart && *restart == 0) throw Error(ErrorCode::InvalidConfig, "restart must be >= 1");
    if (precondition == Preconditioner::ILU0 && kind != SolverKind::GMRES && kind != SolverKind::CG) {
        throw Error(ErrorCode::InvalidConfig, "ILU0 preconditioning supports GMRES and CG only");
    }
}

std::size_t SolverConfig::effective_max_iter(std::size_t n) const {
    if (max_iter > 0) return max_iter;
    if (kind == SolverKind::GD) return 100000;
    if (kind == SolverKind::NES) return 1;
    return 10 * n;
}

std::string SolverConfig::label() const {
    std::string s(to_string(kind));
    if (precondition == Preconditioner::ILU0) s += "+ILU0";
    return s;
}

// ---------------------------------------------------------------------------

Vect solve_nes(const Mat& x, const Vect& y) {
    if (x.rows() != y.size()) throw Error(ErrorCode::InvalidShape, "NES: rows of X must match len(y)");
    const Mat xt = x.transpose();
    return cholesky_solve(xt * x, transpose_times(x, y));
}

namespace {

double residual_norm(const Mat& a, const Vect& b, const Vect& x) {
    Vect r = b;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
        r[i] -= s;
    }
    return norm2(r);
}

constexpr double kDivergenceFactor = 1e100;

// Shared bookkeeping: push a residual, decide convergence or divergence.
class Tracker {
public:
    Tracker(const Mat& a, const Vect& b, double tol)
        : a_(a), b_(b), bnorm_(norm2(b)), threshold_(tol * norm2(b)) {
        report_.residual_history.push_back(bnorm_);
    }

    double bnorm() const { return bnorm_; }
    SolveReport& report() { return report_; }

    /// Returns true when iteration should stop.
    bool record(const Vect& x) {
        const double res = residual_norm(a_, b_, x);
        if (!std::isfinite(res) || !x.all_finite() || res > kDivergenceFactor * std::max(bnorm_, 1.0)) {
            report_.breakdown = "diverged";
            return true;
        }
        report_.residual_history.push_back(res);
        report_.w = x;
        ++report_.n_end;
        if (res <= threshold_) {
            report_.converged = true;
            return true;
        }
        return false;
    }

    SolveReport finish(Vect fallback) {
        if (report_.w.empty()) report_.w = std::move(fallback);
        return std::move(report_);
    }

private:
    const Mat& a_;
    const Vect& b_;
    double bnorm_;
    double threshold_;
    SolveReport report_;
};

void require_square_system(const Mat& a, const Vect& b) {
    if (!a.is_square()) throw Error(ErrorCode::InvalidShape, "iterative solvers need a square matrix");
    if (a.rows() != b.size()) throw Error(ErrorCode::InvalidShape, "matrix/right-hand side size mismatch");
}

void require_nonzero_diagonal(const Mat& a) {
    for (std::size_t i = 0; i < a.rows(); ++i) {
        if (a(i, i) == 0.0) {
            throw Error(ErrorCode::ZeroDiagonal, "zero diagonal entry at row " + std::to_string(i));
        }
    }
}

SolveReport run_stationary(const Mat& a, const Vect& b, const SolverConfig& cfg) {
    require_square_system(a, b);
    require_nonzero_diagonal(a);
    const std::size_t max_iter = cfg.effective_max_iter(a.rows());
    Tracker track(a, b, cfg.tol);
    Vect x(a.rows());
    if (track.bnorm() == 0.0) {
        track.report().converged = true;
        return track.finish(x);
    }
    for (std::size_t k = 0; k < max_iter; ++k) {
        x = stationary_step(a, b, x, cfg.kind, cfg.omega);
        if (track.record(x)) break;
    }
    return track.finish(Vect(a.rows()));
}

SolveReport run_gd(const Mat& a, const Vect& b, const SolverConfig& cfg) {
    if (a.rows() != b.size()) throw Error(ErrorCode::InvalidShape, "GD: rows of A must match len(b)");
    double step = 0.0;
    if (cfg.step_size) {
        step = *cfg.step_size;
    } else {
        const double smax = opnorm2(a);
        if (smax == 0.0) throw Error(ErrorCode::NumericallySingular, "GD on a zero matrix");
        step = 1.0 / (2.0 * smax * smax);
    }
    const std::size_t max_iter = cfg.effective_max_iter(a.cols());
    Tracker track(a, b, cfg.tol);
    Vect x(a.cols());
    if (track.bnorm() == 0.0) {
        track.report().converged = true;
        return track.finish(x);
    }
    for (std::size_t k = 0; k < max_iter; ++k) {
        Vect r = a * x;
        r -= b;
        Vect grad = transpose_times(a, r);
        // ∇f = 2Aᵀ(Ax − b) for f = ‖Ax − b‖²
        for (std::size_t j = 0; j < x.size(); ++j) x[j] -= step * 2.0 * grad[j];
        if (track.record(x)) break;
    }
    return track.finish(Vect(a.cols()));
}

using Precond = std::function<Vect(const Vect&)>;

SolveReport run_cg(const Mat& a_in, const Vect& b, const SolverConfig& cfg, const Precond* precond) {
    require_square_system(a_in, b);
    Mat a_sym;
    if (cfg.symmetrize_cg) a_sym = 0.5 * (a_in + a_in.transpose());
    const Mat& a = cfg.symmetrize_cg ? a_sym : a_in;
    const std::size_t n = a.rows();
    const std::size_t max_iter = cfg.effective_max_iter(n);
    Tracker track(a, b, cfg.tol);
    Vect x(n);
    if (track.bnorm() == 0.0) {
        track.report().converged = true;
        return track.finish(x);
    }
    Vect r = b;
    Vect z = precond ? (*precond)(r) : r;
    Vect p = z;
    double rz = dot(r, z);
    for (std::size_t k = 0; k < max_iter; ++k) {
        const Vect ap = a * p;
        const double pap = dot(p, ap);
        if (!(pap > 0.0) || !std::isfinite(pap)) {
            track.report().breakdown = "CgBreakdown";
            break;
        }
        const double alpha = rz / pap;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if (track.record(x)) break;
        z = precond ? (*precond)(r) : r;
        const double rz_next = dot(r, z);
        const double beta = rz_next / rz;
        rz = rz_next;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    return track.finish(Vect(n));
}

// GMRES with Givens-rotated Hessenberg least squares. The iterate is formed at
// every step so the history holds true residuals. With a preconditioner the
// Arnoldi process runs on M⁻¹A (left preconditioning).
SolveReport run_gmres(const Mat& a, const Vect& b, const SolverConfig& cfg, const Precond* precond) {
    require_square_system(a, b);
    const std::size_t n = a.rows();
    const std::size_t max_iter = cfg.effective_max_iter(n);
    const std::size_t m = std::min(cfg.restart.value_or(max_iter), max_iter);
    Tracker track(a, b, cfg.tol);
    Vect x(n);
    if (track.bnorm() == 0.0) {
        track.report().converged = true;
        return track.finish(x);
    }
    auto apply = [&](const Vect& v) { return precond ? (*precond)(a * v) : a * v; };

    std::size_t total = 0;
    bool stop = false;
    while (!stop && total < max_iter) {
        Vect r = b - a * x;
        if (precond) r = (*precond)(r);
        const double beta = norm2(r);
        if (beta == 0.0) break;

        std::vector<Vect> basis;
        basis.push_back((1.0 / beta) * r);
        std::vector<std::vector<double>> h;  // h[j] = column j, length j+2
        std::vector<double> cs, sn;
        std::vector<double> g{beta};
        Vect x_cycle = x;

        for (std::size_t j = 0; j < m && total < max_iter; ++j) {
            Vect w = apply(basis[j]);
            std::vector<double> col(j + 2, 0.0);
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t i = 0; i <= j; ++i) {
                    const double hij = dot(w, basis[i]);
                    col[i] += hij;
                    for (std::size_t t = 0; t < n; ++t) w[t] -= hij * basis[i][t];
                }
            }
            const double hnext = norm2(w);
            col[j + 1] = hnext;
            double col_scale = 0.0;
            for (double v : col) col_scale = std::max(col_scale, std::abs(v));

            for (std::size_t i = 0; i < j; ++i) {
                const double t0 = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t0;
            }
            const double rho = std::hypot(col[j], col[j + 1]);
            const double c = rho == 0.0 ? 1.0 : col[j] / rho;
            const double s = rho == 0.0 ? 0.0 : col[j + 1] / rho;
            cs.push_back(c);
            sn.push_back(s);
            col[j] = rho;
            col[j + 1] = 0.0;
            g.push_back(-s * g[j]);
            g[j] = c * g[j];
            h.push_back(std::move(col));
            ++total;

            // y solves the (j+1)×(j+1) triangular system R y = g
            std::vector<double> y(j + 1, 0.0);
            for (std::size_t i = j + 1; i-- > 0;) {
                double acc = g[i];
                for (std::size_t k = i + 1; k <= j; ++k) acc -= h[k][i] * y[k];
                y[i] = h[i][i] == 0.0 ? 0.0 : acc / h[i][i];
            }
            x_cycle = x;
            for (std::size_t k = 0; k <= j; ++k)
                for (std::size_t t = 0; t < n; ++t) x_cycle[t] += y[k] * basis[k][t];

            if (track.record(x_cycle)) {
                stop = true;
                break;
            }
            if (hnext <= 1e-14 * col_scale) {
                // Arnoldi breakdown: the Krylov space is invariant, x_cycle is exact
                track.report().breakdown = "ArnoldiBreakdown";
                stop = true;
                break;
            }
            basis.push_back((1.0 / hnext) * w);
        }
        x = x_cycle;
        if (track.report().breakdown == "diverged") break;
    }
    return track.finish(Vect(n));
}

}  // namespace

Vect stationary_step(const Mat& a, const Vect& b, const Vect& x, SolverKind kind, double omega) {
    const std::size_t n = a.rows();
    Vect next = x;
    switch (kind) {
    case SolverKind::Jacobi:
        for (std::size_t i = 0; i < n; ++i) {
            double s = b[i];
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) s -= a(i, j) * x[j];
            next[i] = s / a(i, i);
        }
        break;
    case SolverKind::GaussSeidel:
        for (std::size_t i = 0; i < n; ++i) {
            double s = b[i];
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) s -= a(i, j) * next[j];
            next[i] = s / a(i, i);
        }
        break;
    case SolverKind::SOR:
        for (std::size_t i = 0; i < n; ++i) {
            double s = b[i];
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) s -= a(i, j) * next[j];
            next[i] = (1.0 - omega) * next[i] + omega * (s / a(i, i));
        }
        break;
    default:
        throw Error(ErrorCode::InvalidConfig, "stationary_step needs Jacobi, GaussSeidel or SOR");
    }
    return next;
}

SolveReport solve_iterative(const Mat& a, const Vect& b, const SolverConfig& cfg) {
    cfg.validate();
    switch (cfg.kind) {
    case SolverKind::Jacobi:
    case SolverKind::GaussSeidel:
    case SolverKind::SOR: return run_stationary(a, b, cfg);
    case SolverKind::GD: return run_gd(a, b, cfg);
    case SolverKind::CG: return run_cg(a, b, cfg, nullptr);
    case SolverKind::GMRES: return run_gmres(a, b, cfg, nullptr);
    case SolverKind::NES: break;
    }
    throw Error(ErrorCode::InvalidConfig, "NES is a direct solver; use solve()");
}

SolveReport solve(const Mat& a, const Vect& b, const SolverConfig& cfg) {
    cfg.validate();
    if (cfg.precondition == Preconditioner::ILU0) return solve_preconditioned(a, b, cfg);
    if (cfg.kind != SolverKind::NES) return solve_iterative(a, b, cfg);
    SolveReport report;
    report.residual_history.push_back(norm2(b));
    report.w = solve_nes(a, b);
    report.residual_history.push_back(residual_norm(a, b, report.w));
    report.n_end = 1;
    report.converged = true;
    return report;
}

// ---------------------------------------------------------------------------
// ILU(0)

Ilu0 ilu0(const Mat& a) {
    if (!a.is_square()) throw Error(ErrorCode::InvalidShape, "ilu0 requires a square matrix");
    const std::size_t n = a.rows();
    std::vector<bool> pattern(n * n, false);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) pattern[i * n + j] = (i == j) || a(i, j) != 0.0;

    const double threshold = kSingularThreshold * norm_inf(a);
    auto check_pivot = [&](double v, std::size_t k) {
        if (!(std::abs(v) > threshold)) {
            throw Error(ErrorCode::ZeroPivot, "ILU(0) pivot vanished at row " + std::to_string(k));
        }
    };
    Mat w = a;
    check_pivot(w(0, 0), 0);
    for (std::size_t i = 1; i < n; ++i) {
        for (std::size_t k = 0; k < i; ++k) {
            if (!pattern[i * n + k]) continue;
            w(i, k) /= w(k, k);
            const double lik = w(i, k);
            for (std::size_t j = k + 1; j < n; ++j) {
                if (pattern[i * n + j]) w(i, j) -= lik * w(k, j);
            }
        }
        check_pivot(w(i, i), i);
    }
    Ilu0 out{Mat::identity(n), Mat(n, n), std::move(pattern)};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (j < i) out.l(i, j) = w(i, j);
            else out.u(i, j) = w(i, j);
        }
    }
    return out;
}

Vect Ilu0::apply_inverse(const Vect& r) const {
    const std::size_t n = l.rows();
    Vect z(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = r[i];
        for (std::size_t j = 0; j < i; ++j) s -= l(i, j) * z[j];
        z[i] = s;
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = z[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= u(i, j) * z[j];
        z[i] = s / u(i, i);
    }
    return z;
}

SolveReport solve_preconditioned(const Mat& a, const Vect& b, const SolverConfig& cfg) {
    cfg.validate();
    if (cfg.precondition != Preconditioner::ILU0) {
        throw Error(ErrorCode::InvalidConfig, "solve_preconditioned requires precondition = ILU0");
    }
    require_square_system(a, b);
    const Ilu0 m = ilu0(a);
    const Precond apply = [&m](const Vect& r) { return m.apply_inverse(r); };
    switch (cfg.kind) {
    case SolverKind::GMRES: return run_gmres(a, b, cfg, &apply);
    case SolverKind::CG: return run_cg(a, b, cfg, &apply);
    default: break;
    }
    throw Error(ErrorCode::InvalidConfig, "ILU0 preconditioning supports GMRES and CG only");
}

// ---------------------------------------------------------------------------

std::string residual_history_csv(const SolveReport& report) {
    std::string out = "iter,residual\n";
    for (std::size_t k = 0; k < report.residual_history.size(); ++k) {
        out += std::to_string(k);
        out += ',';
        out += format_double(report.residual_history[k]);
        out += '\n';
    }
    return out;
}

nlohmann::json to_json(const SolveReport& report) {
    nlohmann::json j;
    j["w"] = report.w.values();
    j["residual_history"] = report.residual_history;
    j["n_end"] = report.n_end;
    j["converged"] = report.converged;
    j["breakdown"] = report.breakdown ? nlohmann::json(*report.breakdown) : nlohmann::json(nullptr);
    return j;
}

nlohmann::json to_json(const SolverConfig& cfg) {
    nlohmann::json j;
    j["kind"] = std::string(to_string(cfg.kind));
    j["tol"] = cfg.tol;
    j["max_iter"] = cfg.max_iter;
    j["omega"] = cfg.omega;
    j["step_size"] = cfg.step_size ? nlohmann::json(*cfg.step_size) : nlohmann::json("auto");
    j["restart"] = cfg.restart ? nlohmann::json(*cfg.restart) : nlohmann::json(nullptr);
    j["precondition"] = cfg.precondition == Preconditioner::ILU0 ? "ILU0" : "none";
    j["symmetrize_cg"] = cfg.symmetrize_cg;
    return j;
}

SolverConfig solver_config_from_json(const nlohmann::json& j) {
    SolverConfig cfg;
    try {
        if (j.is_string()) {
            cfg.kind = solver_kind_from_string(j.get<std::string>());
            return cfg;
        }
        cfg.kind = solver_kind_from_string(j.at("kind").get<std::string>());
        cfg.tol = j.value("tol", cfg.tol);
        cfg.max_iter = j.value("max_iter", cfg.max_iter);
        cfg.omega = j.value("omega", cfg.omega);
        if (j.contains("step_size") && j["step_size"].is_number()) cfg.step_size = j["step_size"].get<double>();
        if (j.contains("restart") && j["restart"].is_number()) cfg.restart = j["restart"].get<std::size_t>();
        const std::string pre = j.value("precondition", std::string("none"));
        if (pre == "ILU0" || pre == "ilu0") cfg.precondition = Preconditioner::ILU0;
        else if (pre != "none" && pre != "None") throw Error(ErrorCode::InvalidConfig, "unknown preconditioner " + pre);
        cfg.symmetrize_cg = j.value("symmetrize_cg", false);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("solver config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

}  // namespace poisonlab
