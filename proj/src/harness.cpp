#include "poisonlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "poisonlab/matrix_io.hpp"

namespace poisonlab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string_view to_string(GeneratorKind k) { return k == GeneratorKind::Dense ? "dense" : "sdd"; }

GeneratorKind generator_kind_from_string(const std::string& s) {
    if (s == "dense") return GeneratorKind::Dense;
    if (s == "sdd") return GeneratorKind::Sdd;
    throw Error(ErrorCode::InvalidConfig, "unknown generator '" + s + "' (expected dense or sdd)");
}

SolverConfig solver_of(SolverKind k) {
    SolverConfig c;
    c.kind = k;
    return c;
}

std::string eps_label(double eps) { return "eps_" + format_double(eps); }

}  // namespace

// ---------------------------------------------------------------------------
// Config

void ExperimentConfig::validate() const {
    if (epsilons.empty()) throw Error(ErrorCode::InvalidConfig, "epsilons must be non-empty");
    for (double e : epsilons) {
        if (!(e >= 0.0) || !std::isfinite(e)) throw Error(ErrorCode::InvalidConfig, "epsilons must be finite and >= 0");
    }
    if (repeats < 1) throw Error(ErrorCode::InvalidConfig, "repeats must be >= 1");
    if (attacks.empty()) throw Error(ErrorCode::InvalidConfig, "attacks must be non-empty");
    if (solvers.empty()) throw Error(ErrorCode::InvalidConfig, "solvers must be non-empty");
    for (const SolverConfig& s : solvers) s.validate();
    if (!(xi > 0.0 && xi < 1.0)) throw Error(ErrorCode::InvalidConfig, "xi must lie in (0, 1)");
    if (generator.kind == GeneratorKind::Dense) {
        const DenseParams& p = generator.dense;
        if (p.d < 1 || p.n_train < p.d || p.n_test < 1 || p.noise_std < 0.0) {
            throw Error(ErrorCode::InvalidConfig, "dense generator needs n_train >= d >= 1, n_test >= 1, noise_std >= 0");
        }
        for (const SolverConfig& s : solvers) {
            if (s.kind != SolverKind::NES && p.n_train != p.d) {
                throw Error(ErrorCode::InvalidConfig, "iterative solvers need a square system (n_train == d)");
            }
        }
    } else {
        const SddParams& p = generator.sdd;
        if (p.n < 2 || !(p.density > 0.0 && p.density <= 1.0) || !(p.diag_boost > 0.0)) {
            throw Error(ErrorCode::InvalidConfig, "sdd generator needs n >= 2, 0 < density <= 1, diag_boost > 0");
        }
    }
}

ExperimentConfig default_config(GeneratorKind kind) {
    ExperimentConfig c;
    c.generator.kind = kind;
    if (kind == GeneratorKind::Dense) {
        c.epsilons = {0.01, 0.1, 0.5, 1.0};
        c.solvers = {solver_of(SolverKind::NES)};
    } else {
        c.epsilons = {0.0, 0.4, 0.8, 1.2, 1.6, 2.0};
        for (SolverKind k : {SolverKind::Jacobi, SolverKind::GaussSeidel, SolverKind::SOR, SolverKind::CG,
                             SolverKind::GMRES, SolverKind::GD}) {
            c.solvers.push_back(solver_of(k));
        }
    }
    return c;
}

ExperimentConfig default_verify_config() {
    ExperimentConfig c = default_config(GeneratorKind::Dense);
    c.generator.dense.n_train = 3;
    c.generator.dense.d = 3;
    c.epsilons = {0.01, 0.011, 0.012, 0.013};
    c.repeats = 100;
    return c;
}

ExperimentConfig config_from_json(const json& j, const ExperimentConfig& base) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
    ExperimentConfig c = base;
    try {
        if (j.contains("generator")) {
            const json& g = j.at("generator");
            if (g.contains("kind")) {
                const GeneratorKind kind = generator_kind_from_string(g.at("kind").get<std::string>());
                if (kind != c.generator.kind) c = default_config(kind);
            }
            DenseParams& d = c.generator.dense;
            d.n_train = g.value("n_train", d.n_train);
            d.n_test = g.value("n_test", d.n_test);
            d.d = g.value("d", d.d);
            d.noise_std = g.value("noise_std", d.noise_std);
            SddParams& s = c.generator.sdd;
            s.n = g.value("n", s.n);
            s.density = g.value("density", s.density);
            s.diag_boost = g.value("diag_boost", s.diag_boost);
        }
        c.seed = j.value("seed", c.seed);
        if (j.contains("attacks")) {
            c.attacks.clear();
            const json& a = j.at("attacks");
            if (a.is_string()) {
                c.attacks.push_back(attack_kind_from_string(a.get<std::string>()));
            } else {
                for (const json& x : a) c.attacks.push_back(attack_kind_from_string(x.get<std::string>()));
            }
        }
        if (j.contains("budget")) {
            const json& b = j.at("budget");
            if (b.contains("norm")) c.budget.norm = ball_norm_from_string(b.at("norm").get<std::string>());
            c.budget.symmetric = b.value("symmetric", c.budget.symmetric);
        }
        if (j.contains("epsilons")) c.epsilons = j.at("epsilons").get<std::vector<double>>();
        if (j.contains("solvers")) {
            c.solvers.clear();
            for (const json& s : j.at("solvers")) c.solvers.push_back(solver_config_from_json(s));
        }
        if (j.contains("optimizer")) c.optimizer = optimizer_params_from_json(j.at("optimizer"));
        if (j.contains("outputs")) c.outputs = j.at("outputs").get<std::string>();
        c.repeats = j.value("repeats", c.repeats);
        c.xi = j.value("xi", c.xi);
        c.cg_leading = j.value("cg_leading", c.cg_leading);
        c.svg = j.value("svg", c.svg);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

json to_json(const ExperimentConfig& c) {
    json gen{{"kind", std::string(to_string(c.generator.kind))}};
    gen.update(c.generator.kind == GeneratorKind::Dense ? to_json(c.generator.dense) : to_json(c.generator.sdd));
    json attacks = json::array();
    for (AttackKind a : c.attacks) attacks.push_back(std::string(to_string(a)));
    json solvers = json::array();
    for (const SolverConfig& s : c.solvers) solvers.push_back(to_json(s));
    return {{"seed", c.seed},
            {"generator", gen},
            {"attacks", attacks},
            {"budget", {{"norm", std::string(to_string(c.budget.norm))}, {"symmetric", c.budget.symmetric}}},
            {"epsilons", c.epsilons},
            {"solvers", solvers},
            {"optimizer", to_json(c.optimizer)},
            {"outputs", c.outputs.string()},
            {"repeats", c.repeats},
            {"xi", c.xi},
            {"cg_leading", c.cg_leading},
            {"svg", c.svg}};
}

// ---------------------------------------------------------------------------
// Tasks

RegressionTask make_task(const GeneratorSpec& gen, std::uint64_t seed) {
    Rng rng(seed);
    return gen.kind == GeneratorKind::Dense ? gen_dense_regression(rng, gen.dense) : gen_sdd_square(rng, gen.sdd);
}

void write_bundle(const fs::path& dir, const RegressionTask& task, const GeneratorSpec& gen, std::uint64_t seed) {
    write_csv(dir / "x_train.csv", task.x_train);
    write_csv(dir / "y_train.csv", task.y_train);
    write_csv(dir / "x_test.csv", task.x_test);
    write_csv(dir / "y_test.csv", task.y_test);
    write_csv(dir / "w_ref.csv", task.w_ref);
    json params = gen.kind == GeneratorKind::Dense ? to_json(gen.dense) : to_json(gen.sdd);
    json meta{{"seed", seed},
              {"generator", std::string(to_string(gen.kind))},
              {"parameters", params},
              {"shapes",
               {{"x_train", {task.x_train.rows(), task.x_train.cols()}},
                {"x_test", {task.x_test.rows(), task.x_test.cols()}}}}};
    write_text(dir / "meta.json", meta.dump(2) + "\n");
}

RegressionTask read_bundle(const fs::path& dir) {
    RegressionTask t;
    t.x_train = read_mat_csv(dir / "x_train.csv");
    t.y_train = read_vect_csv(dir / "y_train.csv");
    t.x_test = read_mat_csv(dir / "x_test.csv");
    t.y_test = read_vect_csv(dir / "y_test.csv");
    t.w_ref = read_vect_csv(dir / "w_ref.csv");
    if (t.y_train.size() != t.x_train.rows() || t.x_test.cols() != t.x_train.cols() ||
        t.y_test.size() != t.x_test.rows() || t.w_ref.size() != t.x_train.cols()) {
        throw Error(ErrorCode::InvalidShape, "bundle " + dir.string() + " has inconsistent shapes");
    }
    return t;
}

fs::path bundle_dir(const ExperimentConfig& cfg, std::uint64_t seed) {
    return cfg.outputs / "tasks" / ("seed_" + std::to_string(seed));
}

namespace {

RegressionTask load_or_make(const ExperimentConfig& cfg, std::uint64_t seed, bool use_bundles) {
    if (use_bundles) {
        const fs::path dir = bundle_dir(cfg, seed);
        if (fs::exists(dir / "meta.json")) return read_bundle(dir);
    }
    return make_task(cfg.generator, seed);
}

}  // namespace

AttackOutcome craft_perturbation(const RegressionTask& task, AttackKind attack, double epsilon,
                                 const ExperimentConfig& cfg) {
    if (epsilon == 0.0) {
        return AttackOutcome{Mat(task.x_train.rows(), task.x_train.cols()), {}, 0, GradMode::Analytic};
    }
    PerturbBudget budget = cfg.budget;
    budget.epsilon = epsilon;
    return attack == AttackKind::LP ? attack_lp(task, budget, cfg.optimizer)
                                    : attack_up(task.x_train, budget, cfg.optimizer);
}

// ---------------------------------------------------------------------------
// Parallel execution

std::size_t worker_count() {
    if (const char* env = std::getenv("POISONLAB_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) return static_cast<std::size_t>(v);
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
        for (std::thread& t : pool) t.join();
    }
    for (const std::exception_ptr& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

// ---------------------------------------------------------------------------
// Sweep

std::vector<SweepCell> run_sweep(const ExperimentConfig& cfg, bool use_bundles) {
    cfg.validate();
    std::vector<SweepCell> cells;
    for (std::size_t r = 0; r < cfg.repeats; ++r)
        for (double eps : cfg.epsilons)
            for (AttackKind a : cfg.attacks) {
                SweepCell c;
                c.repeat = r;
                c.seed = cfg.seed_for(r);
                c.epsilon = eps;
                c.attack = a;
                cells.push_back(std::move(c));
            }

    std::vector<RegressionTask> tasks(cfg.repeats);
    parallel_for(cfg.repeats, worker_count(),
                 [&](std::size_t r) { tasks[r] = load_or_make(cfg, cfg.seed_for(r), use_bundles); });

    parallel_for(cells.size(), worker_count(), [&](std::size_t i) {
        SweepCell& cell = cells[i];
        const RegressionTask& task = tasks[cell.repeat];
        bool failed = false;
        try {
            cell.outcome = craft_perturbation(task, cell.attack, cell.epsilon, cfg);
        } catch (const Error& e) {
            cell.error = std::string("attack failed: ") + e.what();
            cell.outcome = AttackOutcome{Mat(task.x_train.rows(), task.x_train.cols()), {}, 0, GradMode::Analytic};
            failed = true;
        }
        for (const SolverConfig& s : cfg.solvers) {
            SweepRow row{cell.repeat, cell.epsilon, cell.attack, s.label(), {}};
            try {
                row.metrics = evaluate(task, cell.outcome.delta, s);
            } catch (const Error& e) {
                if (!cell.error) cell.error = std::string(s.label()) + ": " + e.what();
                row.metrics.n_end = s.effective_max_iter(task.dim());
                row.metrics.converged = false;
            }
            if (failed) row.metrics.converged = false;
            cell.rows.push_back(std::move(row));
        }
    });
    return cells;
}

std::string metrics_csv(const std::vector<SweepCell>& cells) {
    std::string out = std::string(kMetricsHeader) + "\n";
    for (const SweepCell& c : cells) {
        for (const SweepRow& r : c.rows) {
            const EvalMetrics& m = r.metrics;
            out += format_double(r.epsilon) + ',' + std::string(to_string(r.attack)) + ',' + r.solver + ',' +
                   format_double(m.abs_err) + ',' + format_double(m.rsd) + ',' + format_double(m.sol_err_abs) + ',' +
                   format_double(m.sol_err_rel) + ',' + format_double(m.kappa) + ',' + std::to_string(m.n_end) + ',' +
                   (m.converged ? "true" : "false") + '\n';
        }
    }
    return out;
}

json sweep_summary(const std::vector<SweepCell>& cells) {
    struct Acc {
        std::vector<double> abs_err, rsd, sol_abs, sol_rel, kappa, n_end;
        std::size_t converged = 0;
    };
    using Key = std::tuple<double, std::string, std::string>;
    std::map<Key, Acc> acc;
    std::vector<Key> order;
    for (const SweepCell& c : cells) {
        for (const SweepRow& r : c.rows) {
            Key k{r.epsilon, std::string(to_string(r.attack)), r.solver};
            auto [it, inserted] = acc.try_emplace(k);
            if (inserted) order.push_back(k);
            Acc& a = it->second;
            a.abs_err.push_back(r.metrics.abs_err);
            a.rsd.push_back(r.metrics.rsd);
            a.sol_abs.push_back(r.metrics.sol_err_abs);
            a.sol_rel.push_back(r.metrics.sol_err_rel);
            a.kappa.push_back(r.metrics.kappa);
            a.n_end.push_back(static_cast<double>(r.metrics.n_end));
            a.converged += r.metrics.converged ? 1 : 0;
        }
    }
    json rows = json::array();
    for (const Key& k : order) {
        const Acc& a = acc.at(k);
        rows.push_back({{"epsilon", std::get<0>(k)},
                        {"attack", std::get<1>(k)},
                        {"solver", std::get<2>(k)},
                        {"samples", a.abs_err.size()},
                        {"converged", a.converged},
                        {"median",
                         {{"abs_err", median(a.abs_err)},
                          {"rsd", median(a.rsd)},
                          {"sol_err_abs", median(a.sol_abs)},
                          {"sol_err_rel", median(a.sol_rel)},
                          {"kappa", median(a.kappa)},
                          {"n_end", median(a.n_end)}}}});
    }
    return rows;
}

std::string residual_csv(const SolveReport& report) {
    std::string out = "iter,residual,rel_residual\n";
    const double b = report.residual_history.empty() ? 0.0 : report.residual_history.front();
    for (std::size_t k = 0; k < report.residual_history.size(); ++k) {
        const double r = report.residual_history[k];
        out += std::to_string(k) + ',' + format_double(r) + ',' + format_double(b > 0.0 ? r / b : 0.0) + '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_synth(const ExperimentConfig& cfg) {
    cfg.validate();
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
        const std::uint64_t seed = cfg.seed_for(r);
        write_bundle(bundle_dir(cfg, seed), make_task(cfg.generator, seed), cfg.generator, seed);
    }
    write_text(cfg.outputs / "config.json", to_json(cfg).dump(2) + "\n");
    std::cout << "wrote " << cfg.repeats << " task bundle(s) under " << (cfg.outputs / "tasks").string() << "\n";
    return 0;
}

int cmd_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
        const std::uint64_t seed = cfg.seed_for(r);
        const fs::path dir = bundle_dir(cfg, seed);
        if (!fs::exists(dir / "meta.json")) write_bundle(dir, make_task(cfg.generator, seed), cfg.generator, seed);
    }
    const std::vector<SweepCell> cells = run_sweep(cfg, true);

    std::size_t failures = 0;
    for (const SweepCell& c : cells) {
        const fs::path dir = cfg.outputs / "cells" / ("seed_" + std::to_string(c.seed)) / eps_label(c.epsilon) /
                             std::string(to_string(c.attack));
        write_csv(dir / "delta.csv", c.outcome.delta);
        PerturbBudget budget = cfg.budget;
        budget.epsilon = c.epsilon > 0.0 ? c.epsilon : 1.0;
        json meta = to_json(c.outcome, budget);
        meta["budget"]["epsilon"] = c.epsilon;
        meta["seed"] = c.seed;
        meta["attack"] = std::string(to_string(c.attack));
        json metrics = json::object();
        for (const SweepRow& r : c.rows) metrics[r.solver] = to_json(r.metrics);
        meta["metrics"] = metrics;
        if (c.error) {
            meta["error"] = *c.error;
            ++failures;
            std::cerr << "cell seed=" << c.seed << " eps=" << c.epsilon << " " << to_string(c.attack) << ": "
                      << *c.error << "\n";
        }
        write_text(dir / "attack.json", meta.dump(2) + "\n");
    }

    // Convergence curves for the first repeat.
    const RegressionTask first = load_or_make(cfg, cfg.seed_for(0), true);
    std::vector<std::pair<fs::path, std::string>> curves;
    std::mutex mu;
    std::vector<const SweepCell*> firsts;
    for (const SweepCell& c : cells)
        if (c.repeat == 0) firsts.push_back(&c);
    parallel_for(firsts.size() * cfg.solvers.size(), worker_count(), [&](std::size_t i) {
        const SweepCell& c = *firsts[i / cfg.solvers.size()];
        const SolverConfig& s = cfg.solvers[i % cfg.solvers.size()];
        std::string text;
        try {
            text = residual_csv(solve(first.x_train + c.outcome.delta, first.y_train, s));
        } catch (const Error&) {
            return;
        }
        const fs::path p = cfg.outputs / "residuals" / std::string(to_string(c.attack)) /
                           (eps_label(c.epsilon) + "_" + s.label() + ".csv");
        std::lock_guard<std::mutex> lock(mu);
        curves.emplace_back(p, std::move(text));
    });
    for (const auto& [p, text] : curves) write_text(p, text);

    write_text(cfg.outputs / "metrics.csv", metrics_csv(cells));
    write_text(cfg.outputs / "summary.json", sweep_summary(cells).dump(2) + "\n");
    write_text(cfg.outputs / "config.json", to_json(cfg).dump(2) + "\n");
    std::cout << "sweep: " << cells.size() << " cells, " << failures << " failed; metrics in "
              << (cfg.outputs / "metrics.csv").string() << "\n";
    return failures > 0 ? 2 : 0;
}

int cmd_verify_bounds(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<RegressionTask> tasks(cfg.repeats);
    parallel_for(cfg.repeats, worker_count(),
                 [&](std::size_t r) { tasks[r] = make_task(cfg.generator, cfg.seed_for(r)); });
    if (!tasks.front().x_train.is_square()) {
        throw Error(ErrorCode::InvalidConfig, "verify-bounds needs square tasks (dense with n_train == d)");
    }

    struct Job {
        double eps;
        AttackKind attack;
        ForwardCampaign campaign;
    };
    std::vector<Job> jobs;
    for (double eps : cfg.epsilons)
        for (AttackKind a : cfg.attacks) jobs.push_back({eps, a, {}});
    parallel_for(jobs.size(), worker_count(), [&](std::size_t i) {
        PerturbBudget b = cfg.budget;
        b.epsilon = jobs[i].eps;
        jobs[i].campaign = run_forward_campaign(tasks, jobs[i].attack, b, cfg.optimizer);
    });

    int status = 0;
    json results = json::array();
    for (const Job& job : jobs) {
        const ForwardCampaign& c = job.campaign;
        std::string csv = "seed,sol_err_rel,rel_bound,output_err,output_bound\n";
        for (const ForwardSample& s : c.samples) {
            csv += std::to_string(cfg.seed_for(s.index)) + ',' + format_double(s.sol_err_rel) + ',' +
                   format_double(s.rel_bound) + ',' + format_double(s.output_err) + ',' +
                   format_double(s.output_bound) + '\n';
        }
        const std::string stem = std::string("forward_") + std::string(to_string(job.attack)) + "_" + eps_label(job.eps);
        write_text(cfg.outputs / (stem + ".csv"), csv);

        json entry{{"epsilon", job.eps},
                   {"attack", std::string(to_string(job.attack))},
                   {"usable", c.samples.size()},
                   {"excluded", c.excluded},
                   {"rel_violations", c.rel_violations},
                   {"output_violations", c.output_violations}};
        if (!c.samples.empty()) {
            std::vector<double> err, bound;
            for (const ForwardSample& s : c.samples) {
                err.push_back(s.sol_err_rel);
                bound.push_back(s.rel_bound);
            }
            entry["mean_sol_err_rel"] = mean(err);
            entry["mean_rel_bound"] = mean(bound);
        }
        try {
            entry["ttest"] = to_json(forward_ttest(c, cfg.xi));
        } catch (const Error& e) {
            entry["error"] = e.what();
            status = 2;
            std::cerr << "eps=" << job.eps << " " << to_string(job.attack) << ": " << c.samples.size()
                      << " usable samples; " << e.what() << "\n";
        }
        results.push_back(entry);
    }
    write_text(cfg.outputs / "verify_bounds.json", json{{"xi", cfg.xi}, {"results", results}}.dump(2) + "\n");
    std::cout << "verify-bounds: " << jobs.size() << " cells; results in "
              << (cfg.outputs / "verify_bounds.json").string() << "\n";
    return status;
}

// ---------------------------------------------------------------------------
// Diagnostics

namespace {

constexpr double kLearningRateFactors[] = {0.125, 0.25, 0.5, 1.0, 2.0};

std::string fmt(double v) { return format_double(v); }

double sor_omega(const ExperimentConfig& cfg) {
    for (const SolverConfig& s : cfg.solvers)
        if (s.kind == SolverKind::SOR) return s.omega;
    return 1.0;
}

const SolverConfig* find_solver(const ExperimentConfig& cfg, SolverKind kind) {
    for (const SolverConfig& s : cfg.solvers)
        if (s.kind == kind && s.precondition == Preconditioner::None) return &s;
    return nullptr;
}

struct DiagRows {
    std::string spectral, spectrum, eigvec, cg, smooth, lr, precond;
    bool failed = false;
};

std::size_t n_end_or_max(const Mat& a, const Vect& b, const SolverConfig& s) {
    try {
        const SolveReport r = solve(a, b, s);
        return r.converged ? r.n_end : s.effective_max_iter(a.rows());
    } catch (const Error&) {
        return s.effective_max_iter(a.rows());
    }
}

DiagRows diagnose_cell(const ExperimentConfig& cfg, const RegressionTask& task, const SweepCell& cell) {
    DiagRows out;
    const std::string key = fmt(cell.epsilon) + ',' + std::string(to_string(cell.attack)) + ',' +
                            std::to_string(cell.seed);
    const Mat a = task.x_train + cell.outcome.delta;
    const Vect& b = task.y_train;
    const double omega = sor_omega(cfg);

    try {
        const double rj = spectral_radius(stationary_iteration_matrix(a, SolverKind::Jacobi));
        const double rg = spectral_radius(stationary_iteration_matrix(a, SolverKind::GaussSeidel));
        const double rs = spectral_radius(stationary_iteration_matrix(a, SolverKind::SOR, omega));
        out.spectral = key + ',' + fmt(rj) + ',' + fmt(rg) + ',' + fmt(rs) + '\n';
    } catch (const Error&) {
        out.failed = true;
    }

    SolverConfig gmres = find_solver(cfg, SolverKind::GMRES) ? *find_solver(cfg, SolverKind::GMRES)
                                                               : solver_of(SolverKind::GMRES);
    const EigenDecomp eig = eig_general(a);
    for (std::size_t i = 0; i < eig.size(); ++i) {
        out.spectrum += key + ',' + std::to_string(i) + ',' + fmt(eig.values[i].real()) + ',' +
                        fmt(eig.values[i].imag()) + '\n';
    }
    std::string kv;
    try {
        kv = fmt(eigvec_condition(a));
    } catch (const Error&) {
        kv = "inf";
    }
    out.eigvec = key + ',' + kv + ',' + std::to_string(n_end_or_max(a, b, gmres)) + '\n';

    SolverConfig cg = find_solver(cfg, SolverKind::CG) ? *find_solver(cfg, SolverKind::CG) : solver_of(SolverKind::CG);
    const bool symmetric = is_symmetric(a, 1e-9);
    const CgAlignment al = cg_alignment(a, b, cfg.cg_leading, true);
    out.cg = key + ',' + fmt(al.smallest) + ',' + fmt(al.leading) + ',' + (symmetric ? "true" : "false") + ',' +
             std::to_string(n_end_or_max(a, b, cg)) + '\n';

    const double l = gd_smoothness(a);
    out.smooth = key + ',' + fmt(l) + '\n';
    SolverConfig gd = find_solver(cfg, SolverKind::GD) ? *find_solver(cfg, SolverKind::GD) : solver_of(SolverKind::GD);
    for (double f : kLearningRateFactors) {
        gd.step_size = f / l;
        std::size_t n_end = gd.effective_max_iter(a.rows());
        bool conv = false;
        try {
            const SolveReport r = solve(a, b, gd);
            conv = r.converged;
            if (conv) n_end = r.n_end;
        } catch (const Error&) {
        }
        out.lr += key + ',' + fmt(f) + ',' + fmt(f / l) + ',' + std::to_string(n_end) + ',' +
                  (conv ? "true" : "false") + '\n';
    }

    for (SolverConfig base : {gmres, cg}) {
        base.precondition = Preconditioner::None;
        SolverConfig pre = base;
        pre.precondition = Preconditioner::ILU0;
        out.precond += key + ',' + std::string(to_string(base.kind)) + ',' + std::to_string(n_end_or_max(a, b, base)) +
                       ',' + std::to_string(n_end_or_max(a, b, pre)) + '\n';
    }
    return out;
}

// Median of a numeric column per (epsilon, attack), in first-seen order.
std::map<std::string, std::vector<double>> medians_by_attack(const std::vector<SweepCell>& cells,
                                                             const std::vector<double>& values,
                                                             const std::vector<double>& eps) {
    std::map<std::string, std::map<double, std::vector<double>>> groups;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (std::isfinite(values[i])) groups[std::string(to_string(cells[i].attack))][cells[i].epsilon].push_back(values[i]);
    }
    std::map<std::string, std::vector<double>> out;
    for (auto& [attack, by_eps] : groups) {
        for (double e : eps) out[attack].push_back(by_eps.count(e) ? median(by_eps[e]) : NAN);
    }
    return out;
}

double first_field(const std::string& row, std::size_t field) {
    std::size_t pos = 0;
    for (std::size_t f = 0; f < field; ++f) pos = row.find(',', pos) + 1;
    return std::strtod(row.c_str() + pos, nullptr);
}

}  // namespace

int cmd_diagnose(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.generator.kind == GeneratorKind::Dense && cfg.generator.dense.n_train != cfg.generator.dense.d) {
        throw Error(ErrorCode::InvalidConfig, "diagnose needs square systems (use the sdd generator)");
    }
    ExperimentConfig attack_cfg = cfg;
    attack_cfg.solvers = {solver_of(SolverKind::GMRES)};
    std::vector<SweepCell> cells = run_sweep(attack_cfg, true);

    std::vector<RegressionTask> tasks(cfg.repeats);
    for (std::size_t r = 0; r < cfg.repeats; ++r) tasks[r] = load_or_make(cfg, cfg.seed_for(r), true);

    std::vector<DiagRows> rows(cells.size());
    parallel_for(cells.size(), worker_count(),
                 [&](std::size_t i) { rows[i] = diagnose_cell(cfg, tasks[cells[i].repeat], cells[i]); });

    std::string spectral = "epsilon,attack,seed,rho_jacobi,rho_gauss_seidel,rho_sor\n";
    std::string spectrum = "epsilon,attack,seed,index,real,imag\n";
    std::string eigvec = "epsilon,attack,seed,eigvec_cond,gmres_n_end\n";
    std::string cg = "epsilon,attack,seed,align_smallest,align_leading,symmetric,cg_n_end\n";
    std::string smooth = "epsilon,attack,seed,L\n";
    std::string lr = "epsilon,attack,seed,lr_factor,lr,n_end,converged\n";
    std::string precond = "epsilon,attack,seed,solver,n_end,n_end_ilu0\n";
    bool failed = false;
    for (const DiagRows& r : rows) {
        spectral += r.spectral;
        spectrum += r.spectrum;
        eigvec += r.eigvec;
        cg += r.cg;
        smooth += r.smooth;
        lr += r.lr;
        precond += r.precond;
        failed = failed || r.failed;
    }
    const fs::path dir = cfg.outputs / "diagnostics";
    write_text(dir / "spectral_radius.csv", spectral);
    write_text(dir / "gmres_spectrum.csv", spectrum);
    write_text(dir / "gmres_eigvec.csv", eigvec);
    write_text(dir / "cg_alignment.csv", cg);
    write_text(dir / "gd_smoothness.csv", smooth);
    write_text(dir / "gd_lr.csv", lr);
    write_text(dir / "preconditioning.csv", precond);

    if (cfg.svg) {
        auto column = [&](auto pick) {
            std::vector<double> v;
            for (const DiagRows& r : rows) v.push_back(pick(r));
            return v;
        };
        auto chart = [&](const std::string& name, const std::string& title, const std::vector<double>& values) {
            std::vector<SvgSeries> series;
            for (auto& [attack, ys] : medians_by_attack(cells, values, cfg.epsilons)) series.push_back({attack, ys});
            write_text(dir / (name + ".svg"), render_svg(title, "epsilon", cfg.epsilons, series));
        };
        chart("spectral_radius", "median rho(T_Jacobi)",
              column([](const DiagRows& r) { return r.spectral.empty() ? NAN : first_field(r.spectral, 3); }));
        chart("gmres_eigvec", "median eigenvector condition number",
              column([](const DiagRows& r) { return first_field(r.eigvec, 3); }));
        chart("cg_alignment", "median alignment with smallest eigenvector",
              column([](const DiagRows& r) { return first_field(r.cg, 3); }));
        chart("gd_smoothness", "median smoothness constant L",
              column([](const DiagRows& r) { return first_field(r.smooth, 3); }));
        chart("preconditioning", "median GMRES n_end with ILU(0)",
              column([](const DiagRows& r) { return first_field(r.precond, 5); }));
    }
    std::cout << "diagnose: " << cells.size() << " cells; CSVs in " << dir.string() << "\n";
    return failed ? 2 : 0;
}

// ---------------------------------------------------------------------------
// Report

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(line);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    return out;
}

std::string cell4(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

}  // namespace

int cmd_report(const fs::path& out_dir) {
    const fs::path metrics = out_dir / "metrics.csv";
    if (!fs::exists(metrics)) throw Error(ErrorCode::IoError, "missing " + metrics.string() + " (run sweep first)");
    std::istringstream in(read_text(metrics));
    std::string line;
    std::getline(in, line);
    if (line != kMetricsHeader) throw Error(ErrorCode::IoError, "unexpected metrics header in " + metrics.string());

    struct Acc {
        std::vector<double> abs_err, rsd, sol_rel, kappa, n_end;
        std::size_t converged = 0;
    };
    using Key = std::tuple<std::string, std::string, double>;  // solver, attack, epsilon
    std::map<Key, Acc> acc;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> f = split(line, ',');
        if (f.size() != 10) throw Error(ErrorCode::IoError, "malformed metrics row: " + line);
        Acc& a = acc[{f[2], f[1], std::stod(f[0])}];
        a.abs_err.push_back(std::stod(f[3]));
        a.rsd.push_back(std::stod(f[4]));
        a.sol_rel.push_back(std::stod(f[6]));
        a.kappa.push_back(std::stod(f[7]));
        a.n_end.push_back(std::stod(f[8]));
        a.converged += f[9] == "true" ? 1 : 0;
    }

    std::string md = "# poisonlab report\n\nMedians over repeats, from `" + metrics.string() + "`.\n";
    std::string current;
    for (const auto& [key, a] : acc) {
        const auto& [solver, attack, eps] = key;
        if (solver != current) {
            current = solver;
            md += "\n## " + solver +
                  "\n\n| attack | epsilon | abs_err | rsd | sol_err_rel | kappa | n_end | converged |\n"
                  "|---|---|---|---|---|---|---|---|\n";
        }
        md += "| " + attack + " | " + format_double(eps) + " | " + cell4(median(a.abs_err)) + " | " +
              cell4(median(a.rsd)) + " | " + cell4(median(a.sol_rel)) + " | " + cell4(median(a.kappa)) + " | " +
              cell4(median(a.n_end)) + " | " + std::to_string(a.converged) + "/" + std::to_string(a.abs_err.size()) +
              " |\n";
    }

    const fs::path vb = out_dir / "verify_bounds.json";
    if (fs::exists(vb)) {
        const json j = json::parse(read_text(vb));
        md += "\n## Forward bound t-tests (xi = " + cell4(j.value("xi", 0.05)) +
              ")\n\n| attack | epsilon | usable | mean err | mean bound | t | p | reject |\n"
              "|---|---|---|---|---|---|---|---|\n";
        for (const json& r : j.at("results")) {
            md += "| " + r.at("attack").get<std::string>() + " | " + cell4(r.at("epsilon").get<double>()) + " | " +
                  std::to_string(r.at("usable").get<std::size_t>()) + " | ";
            md += r.contains("mean_sol_err_rel") ? cell4(r["mean_sol_err_rel"].get<double>()) : "-";
            md += " | ";
            md += r.contains("mean_rel_bound") ? cell4(r["mean_rel_bound"].get<double>()) : "-";
            if (r.contains("ttest")) {
                const json& t = r["ttest"];
                md += " | " + cell4(t.at("t_stat").get<double>()) + " | " + cell4(t.at("p_value").get<double>()) +
                      " | " + (t.at("reject_null").get<bool>() ? "yes" : "no") + " |\n";
            } else {
                md += " | - | - | " + r.value("error", std::string("n/a")) + " |\n";
            }
        }
    }
    write_text(out_dir / "report.md", md);
    std::cout << "report: " << (out_dir / "report.md").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

std::string render_svg(const std::string& title, const std::string& x_label, const std::vector<double>& x,
                       const std::vector<SvgSeries>& series) {
    constexpr double W = 640, H = 400, L = 70, R = 150, T = 40, B = 50;
    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    for (double v : x) {
        xmin = std::min(xmin, v);
        xmax = std::max(xmax, v);
    }
    for (const SvgSeries& s : series)
        for (double v : s.y)
            if (std::isfinite(v)) {
                ymin = std::min(ymin, v);
                ymax = std::max(ymax, v);
            }
    if (!std::isfinite(xmin) || xmax == xmin) xmax = xmin + 1.0;
    if (!std::isfinite(ymin)) ymin = 0.0, ymax = 1.0;
    if (ymax == ymin) ymax = ymin + 1.0;
    auto px = [&](double v) { return L + (v - xmin) / (xmax - xmin) * (W - L - R); };
    auto py = [&](double v) { return H - B - (v - ymin) / (ymax - ymin) * (H - T - B); };

    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"};
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n"
      << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
      << x_label << "</text>\n"
      << "<text x=\"" << L - 6 << "\" y=\"" << H - B << "\" text-anchor=\"end\" font-size=\"11\">" << cell4(ymin)
      << "</text>\n"
      << "<text x=\"" << L - 6 << "\" y=\"" << T + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << cell4(ymax)
      << "</text>\n";
    for (double v : x) {
        s << "<text x=\"" << px(v) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
          << format_double(v) << "</text>\n";
    }
    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* color = colors[k % 5];
        s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < x.size() && i < series[k].y.size(); ++i) {
            if (std::isfinite(series[k].y[i])) s << px(x[i]) << ',' << py(series[k].y[i]) << ' ';
        }
        s << "\"/>\n<text x=\"" << W - R + 10 << "\" y=\"" << T + 16 * (k + 1) << "\" fill=\"" << color
          << "\" font-size=\"12\">" << series[k].name << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

}  // namespace poisonlab
