#pragma once

// Experiment orchestration behind the poisonlab CLI: config parsing, task
// bundles, attack + solve sweeps, forward-bound campaigns, diagnostics and
// Markdown reports. Grid cells run on a worker pool and are merged by index,
// so outputs do not depend on scheduling.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "poisonlab/analysis.hpp"
#include "poisonlab/attacks.hpp"
#include "poisonlab/datagen.hpp"
#include "poisonlab/solvers.hpp"

namespace poisonlab {

enum class GeneratorKind { Dense, Sdd };

struct GeneratorSpec {
    GeneratorKind kind = GeneratorKind::Dense;
    DenseParams dense;
    SddParams sdd;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    GeneratorSpec generator;
    std::vector<AttackKind> attacks{AttackKind::LP, AttackKind::UP};
    PerturbBudget budget;  // epsilon is taken from `epsilons`
    std::vector<double> epsilons{0.01, 0.1, 0.5, 1.0};
    std::vector<SolverConfig> solvers;
    OptimizerParams optimizer;
    std::filesystem::path outputs = "poisonlab_out";
    std::size_t repeats = 20;
    double xi = 0.05;           // verify-bounds significance level
    std::size_t cg_leading = 5;  // eigenvectors summed by the CG alignment diagnostic
    bool svg = false;

    void validate() const;
    std::uint64_t seed_for(std::size_t repeat) const { return seed + repeat; }
};

/// Defaults for a generator: dense uses NES over ε ∈ {0.01, 0.1, 0.5, 1.0};
/// sdd uses the six iterative solvers over ε ∈ {0, 0.4, …, 2.0}.
ExperimentConfig default_config(GeneratorKind kind);
/// Square n = d = 3 dense tasks, 100 repeats, ε ∈ {0.01, 0.011, 0.012, 0.013}.
ExperimentConfig default_verify_config();

/// Missing fields keep the defaults of the generator named in the file.
/// Throws InvalidConfig on malformed input.
ExperimentConfig config_from_json(const nlohmann::json& j, const ExperimentConfig& base);
nlohmann::json to_json(const ExperimentConfig& cfg);

RegressionTask make_task(const GeneratorSpec& gen, std::uint64_t seed);

/// Writes x_train.csv, y_train.csv, x_test.csv, y_test.csv, w_ref.csv and meta.json.
void write_bundle(const std::filesystem::path& dir, const RegressionTask& task, const GeneratorSpec& gen,
                  std::uint64_t seed);
RegressionTask read_bundle(const std::filesystem::path& dir);
std::filesystem::path bundle_dir(const ExperimentConfig& cfg, std::uint64_t seed);

/// ΔX for one cell; ε = 0 gives the zero matrix without running the attack.
AttackOutcome craft_perturbation(const RegressionTask& task, AttackKind attack, double epsilon,
                                 const ExperimentConfig& cfg);

struct SweepRow {
    std::size_t repeat = 0;
    double epsilon = 0.0;
    AttackKind attack = AttackKind::LP;
    std::string solver;
    EvalMetrics metrics;
};

struct SweepCell {
    std::size_t repeat = 0;
    std::uint64_t seed = 0;
    double epsilon = 0.0;
    AttackKind attack = AttackKind::LP;
    AttackOutcome outcome;
    std::vector<SweepRow> rows;  // one per solver, config order
    std::optional<std::string> error;
};

/// Runs the full grid in memory. Order: repeat, ε, attack, solver.
/// Tasks come from bundles on disk when present, otherwise from the generator.
std::vector<SweepCell> run_sweep(const ExperimentConfig& cfg, bool use_bundles = false);

inline constexpr const char* kMetricsHeader =
    "epsilon,attack,solver,abs_err,rsd,sol_err_abs,sol_err_rel,kappa,n_end,converged";

std::string metrics_csv(const std::vector<SweepCell>& cells);
/// Medians per (ε, attack, solver).
nlohmann::json sweep_summary(const std::vector<SweepCell>& cells);

/// "iter,residual,rel_residual" rows.
std::string residual_csv(const SolveReport& report);

/// Worker count from POISONLAB_THREADS (default: hardware concurrency, at least 1).
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
/// (lowest index) is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

// CLI commands. Each returns the process exit code (0 ok, 2 partial failure);
// configuration problems throw InvalidConfig.
int cmd_synth(const ExperimentConfig& cfg);
int cmd_sweep(const ExperimentConfig& cfg);
int cmd_verify_bounds(const ExperimentConfig& cfg);
int cmd_diagnose(const ExperimentConfig& cfg);
/// Aggregates <out>/metrics.csv (and verify_bounds.json if present) into <out>/report.md.
int cmd_report(const std::filesystem::path& out_dir);

/// Minimal line chart: one polyline per series over shared x values.
struct SvgSeries {
    std::string name;
    std::vector<double> y;
};
std::string render_svg(const std::string& title, const std::string& x_label, const std::vector<double>& x,
                       const std::vector<SvgSeries>& series);

}  // namespace poisonlab
