#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "poisonlab/harness.hpp"
#include "poisonlab/matrix_io.hpp"

using namespace poisonlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("poisonlab_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

ExperimentConfig small_sdd(const fs::path& out) {
    ExperimentConfig c = default_config(GeneratorKind::Sdd);
    c.generator.sdd.n = 8;
    c.repeats = 2;
    c.epsilons = {0.0, 0.8};
    c.optimizer.max_iter = 25;
    c.outputs = out;
    return c;
}

ExperimentConfig small_dense(const fs::path& out) {
    ExperimentConfig c = default_config(GeneratorKind::Dense);
    c.repeats = 3;
    c.epsilons = {0.0, 0.5};
    c.optimizer.max_iter = 25;
    c.outputs = out;
    return c;
}

std::vector<std::vector<std::string>> read_rows(const fs::path& csv) {
    std::istringstream in(read_text(csv));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, kMetricsHeader);
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        std::vector<std::string> fields;
        std::istringstream ls(line);
        std::string f;
        while (std::getline(ls, f, ',')) fields.push_back(f);
        rows.push_back(fields);
    }
    return rows;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(POISONLAB_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void near_rel(double got, double want, double tol) {
    EXPECT_LE(std::abs(got - want), tol * std::max(1.0, std::abs(want))) << got << " vs " << want;
}

}  // namespace

TEST(Config, DefaultsValidate) {
    EXPECT_NO_THROW(default_config(GeneratorKind::Dense).validate());
    EXPECT_NO_THROW(default_config(GeneratorKind::Sdd).validate());
    const ExperimentConfig v = default_verify_config();
    EXPECT_EQ(v.generator.dense.n_train, 3u);
    EXPECT_EQ(v.repeats, 100u);
    EXPECT_EQ(default_config(GeneratorKind::Sdd).solvers.size(), 6u);
}

TEST(Config, JsonRoundTrip) {
    ExperimentConfig c = default_config(GeneratorKind::Sdd);
    c.seed = 99;
    c.epsilons = {0.3, 0.6};
    c.attacks = {AttackKind::UP};
    c.budget.norm = BallNorm::Frobenius;
    const ExperimentConfig back = config_from_json(to_json(c), default_config(GeneratorKind::Dense));
    EXPECT_EQ(back.seed, 99u);
    EXPECT_EQ(back.epsilons, c.epsilons);
    EXPECT_EQ(back.generator.kind, GeneratorKind::Sdd);
    ASSERT_EQ(back.attacks.size(), 1u);
    EXPECT_EQ(back.attacks[0], AttackKind::UP);
    EXPECT_EQ(back.budget.norm, BallNorm::Frobenius);
    EXPECT_EQ(back.solvers.size(), c.solvers.size());
    EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Config, PartialFileKeepsDefaults) {
    const ExperimentConfig c =
        config_from_json(nlohmann::json::parse(R"({"repeats": 4})"), default_config(GeneratorKind::Dense));
    EXPECT_EQ(c.repeats, 4u);
    EXPECT_EQ(c.epsilons, default_config(GeneratorKind::Dense).epsilons);
}

TEST(Config, Errors) {
    const ExperimentConfig base = default_config(GeneratorKind::Dense);
    auto code_of = [&](const char* text) {
        try {
            config_from_json(nlohmann::json::parse(text), base).validate();
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::NoConvergence;
    };
    EXPECT_EQ(code_of(R"([1, 2])"), ErrorCode::InvalidConfig);
    EXPECT_EQ(code_of(R"({"repeats": "many"})"), ErrorCode::InvalidConfig);
    EXPECT_EQ(code_of(R"({"epsilons": [-0.5]})"), ErrorCode::InvalidConfig);
    EXPECT_EQ(code_of(R"({"repeats": 0})"), ErrorCode::InvalidConfig);
    EXPECT_EQ(code_of(R"({"generator": {"kind": "sparse"}})"), ErrorCode::InvalidConfig);
    EXPECT_EQ(code_of(R"({"attacks": ["XP"]})"), ErrorCode::InvalidConfig);
}

TEST(Bundles, RoundTrip) {
    const fs::path dir = scratch("bundle");
    const GeneratorSpec gen = default_config(GeneratorKind::Dense).generator;
    const RegressionTask t = make_task(gen, 7);
    write_bundle(dir, t, gen, 7);
    const RegressionTask back = read_bundle(dir);
    EXPECT_EQ(back.x_train, t.x_train);
    EXPECT_EQ(back.y_train, t.y_train);
    EXPECT_EQ(back.x_test, t.x_test);
    EXPECT_EQ(back.y_test, t.y_test);
    EXPECT_EQ(back.w_ref, t.w_ref);
    EXPECT_TRUE(fs::exists(dir / "meta.json"));
}

TEST(ParallelFor, CoversEveryIndexAndRethrowsLowest) {
    std::vector<int> hits(50, 0);
    parallel_for(50, 4, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) EXPECT_EQ(h, 1);
    try {
        parallel_for(20, 3, [](std::size_t i) {
            if (i == 5 || i == 11) throw std::runtime_error(std::to_string(i));
        });
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_STREQ(e.what(), "5");
    }
}

TEST(Sweep, DeterministicAcrossThreadCounts) {
    const ExperimentConfig c = small_sdd(scratch("threads"));
    setenv("POISONLAB_THREADS", "1", 1);
    const std::string one = metrics_csv(run_sweep(c));
    setenv("POISONLAB_THREADS", "3", 1);
    const std::string three = metrics_csv(run_sweep(c));
    unsetenv("POISONLAB_THREADS");
    EXPECT_EQ(one, three);
}

TEST(Sweep, RowOrderAndCleanRows) {
    const ExperimentConfig c = small_sdd(scratch("order"));
    const std::vector<SweepCell> cells = run_sweep(c);
    ASSERT_EQ(cells.size(), c.repeats * c.epsilons.size() * c.attacks.size());
    std::size_t k = 0;
    for (std::size_t r = 0; r < c.repeats; ++r)
        for (double eps : c.epsilons)
            for (AttackKind a : c.attacks) {
                const SweepCell& cell = cells[k++];
                EXPECT_EQ(cell.repeat, r);
                EXPECT_EQ(cell.seed, c.seed_for(r));
                EXPECT_EQ(cell.epsilon, eps);
                EXPECT_EQ(cell.attack, a);
                ASSERT_EQ(cell.rows.size(), c.solvers.size());
                for (std::size_t s = 0; s < c.solvers.size(); ++s) {
                    const EvalMetrics& m = cell.rows[s].metrics;
                    EXPECT_EQ(cell.rows[s].solver, c.solvers[s].label());
                    for (double v : {m.abs_err, m.rsd, m.sol_err_abs, m.sol_err_rel, m.kappa})
                        EXPECT_TRUE(std::isfinite(v));
                    if (eps == 0.0) {
                        EXPECT_EQ(m.sol_err_abs, 0.0);
                        EXPECT_EQ(m.sol_err_rel, 0.0);
                    }
                }
            }
}

TEST(Sweep, RowsRecomputableFromDeltaFiles) {
    const fs::path out = scratch("recompute");
    const ExperimentConfig c = small_dense(out);
    ASSERT_EQ(cmd_sweep(c), 0);
    const auto rows = read_rows(out / "metrics.csv");
    std::size_t k = 0;
    for (std::size_t r = 0; r < c.repeats; ++r) {
        const RegressionTask task = make_task(c.generator, c.seed_for(r));
        for (double eps : c.epsilons)
            for (AttackKind a : c.attacks) {
                const fs::path cell = out / "cells" / ("seed_" + std::to_string(c.seed_for(r))) /
                                      ("eps_" + format_double(eps)) / std::string(to_string(a));
                const Mat delta = read_mat_csv(cell / "delta.csv");
                EXPECT_TRUE(fs::exists(cell / "attack.json"));
                for (const SolverConfig& s : c.solvers) {
                    ASSERT_LT(k, rows.size());
                    const auto& row = rows[k++];
                    ASSERT_EQ(row.size(), 10u);
                    EXPECT_EQ(row[1], to_string(a));
                    EXPECT_EQ(row[2], s.label());
                    const EvalMetrics m = evaluate(task, delta, s);
                    near_rel(std::stod(row[3]), m.abs_err, 1e-10);
                    near_rel(std::stod(row[5]), m.sol_err_abs, 1e-10);
                    near_rel(std::stod(row[6]), m.sol_err_rel, 1e-10);
                    near_rel(std::stod(row[7]), m.kappa, 1e-10);
                    EXPECT_EQ(std::stoul(row[8]), m.n_end);
                }
            }
    }
    EXPECT_EQ(k, rows.size());
    EXPECT_TRUE(fs::exists(out / "summary.json"));
    EXPECT_TRUE(fs::exists(out / "config.json"));
}

TEST(Sweep, ResidualCsvFormat) {
    SolverConfig cfg;
    cfg.kind = SolverKind::Jacobi;
    const SolveReport r = solve(Mat{{2, 0}, {0, 2}}, Vect{2, 2}, cfg);
    const std::string csv = residual_csv(r);
    EXPECT_EQ(csv.rfind("iter,residual,rel_residual\n", 0), 0u);
    EXPECT_NE(csv.find("\n0,"), std::string::npos);
}

TEST(Svg, ContainsSeries) {
    const std::string svg = render_svg("t", "eps", {0, 1, 2}, {{"LP", {1, 2, 3}}, {"UP", {3, 2, 1}}});
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("LP"), std::string::npos);
    EXPECT_NE(svg.find("polyline"), std::string::npos);
}

TEST(Cli, ExitCodes) {
    const fs::path out = scratch("cli");
    EXPECT_EQ(run_cli("--help"), 0);
    EXPECT_EQ(run_cli(""), 1);
    EXPECT_EQ(run_cli("sweep --eps=abc"), 1);
    EXPECT_EQ(run_cli("sweep --repeats 0 -o " + out.string()), 1);
    EXPECT_EQ(run_cli("sweep -c " + (out / "missing.json").string()), 1);
    write_text(out / "bad.json", "{not json");
    EXPECT_EQ(run_cli("sweep -c " + (out / "bad.json").string()), 1);
    EXPECT_EQ(run_cli("synth --repeats 2 -o " + out.string()), 0);
    EXPECT_TRUE(fs::exists(out / "tasks" / "seed_0" / "x_train.csv"));
    EXPECT_EQ(run_cli("sweep --repeats 2 --eps 0,0.1 -o " + out.string()), 0);
    EXPECT_TRUE(fs::exists(out / "metrics.csv"));
    EXPECT_EQ(run_cli("report -o " + out.string()), 0);
    EXPECT_TRUE(fs::exists(out / "report.md"));
    EXPECT_EQ(run_cli("report -o " + (out / "nowhere").string()), 2);
}
