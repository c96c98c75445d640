// poisonlab: synthesize regression systems, poison them, solve, and check bounds.

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "poisonlab/harness.hpp"
#include "poisonlab/matrix_io.hpp"

namespace {

using poisonlab::ErrorCode;
using poisonlab::ExperimentConfig;
using poisonlab::GeneratorKind;

struct Overrides {
    std::string config;
    std::string generator;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::vector<double> eps;
    std::optional<std::size_t> repeats;
    std::vector<std::string> attacks;
    bool svg = false;
};

void add_common(CLI::App* cmd, Overrides& o, bool with_generator) {
    cmd->add_option("-c,--config", o.config, "JSON experiment config");
    if (with_generator) {
        cmd->add_option("-g,--generator", o.generator, "dense or sdd (default: from config, else dense)")
            ->check(CLI::IsMember({"dense", "sdd"}));
    }
    cmd->add_option("--seed", o.seed, "base seed; repeat r uses seed + r");
    cmd->add_option("-o,--out", o.out, "output directory");
    cmd->add_option("--eps", o.eps, "perturbation radii (comma separated or repeated)")->delimiter(',');
    cmd->add_option("--repeats", o.repeats, "number of seeds");
    cmd->add_option("--attacks", o.attacks, "LP, UP or both")->delimiter(',');
}

ExperimentConfig build_config(const Overrides& o, ExperimentConfig base) {
    if (!o.generator.empty()) {
        base = poisonlab::default_config(o.generator == "sdd" ? GeneratorKind::Sdd : GeneratorKind::Dense);
    }
    if (!o.config.empty()) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(poisonlab::read_text(o.config));
        } catch (const nlohmann::json::exception& e) {
            throw poisonlab::Error(ErrorCode::InvalidConfig, o.config + ": " + e.what());
        } catch (const poisonlab::Error& e) {
            throw poisonlab::Error(ErrorCode::InvalidConfig, e.what());
        }
        base = poisonlab::config_from_json(j, base);
    }
    if (o.seed) base.seed = *o.seed;
    if (!o.out.empty()) base.outputs = o.out;
    if (!o.eps.empty()) base.epsilons = o.eps;
    if (o.repeats) base.repeats = *o.repeats;
    if (!o.attacks.empty()) {
        base.attacks.clear();
        for (const std::string& a : o.attacks) base.attacks.push_back(poisonlab::attack_kind_from_string(a));
    }
    base.svg = base.svg || o.svg;
    base.validate();
    return base;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"poisonlab: poisoning attacks on linear solvers"};
    app.require_subcommand(1);

    Overrides synth_o, sweep_o, verify_o, diag_o;
    std::string report_dir = "poisonlab_out";

    CLI::App* synth = app.add_subcommand("synth", "write task bundles");
    add_common(synth, synth_o, true);
    CLI::App* sweep = app.add_subcommand("sweep", "attack + solve grid, metrics.csv");
    add_common(sweep, sweep_o, true);
    CLI::App* verify = app.add_subcommand("verify-bounds", "forward error bound campaign with t-tests");
    add_common(verify, verify_o, false);
    CLI::App* diag = app.add_subcommand("diagnose", "spectral and convergence diagnostics");
    add_common(diag, diag_o, true);
    diag->add_flag("--svg", diag_o.svg, "also write SVG line charts");
    CLI::App* report = app.add_subcommand("report", "Markdown summary of a sweep directory");
    report->add_option("-o,--out", report_dir, "directory holding metrics.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*synth) return poisonlab::cmd_synth(build_config(synth_o, poisonlab::default_config(GeneratorKind::Dense)));
        if (*sweep) return poisonlab::cmd_sweep(build_config(sweep_o, poisonlab::default_config(GeneratorKind::Dense)));
        if (*verify) return poisonlab::cmd_verify_bounds(build_config(verify_o, poisonlab::default_verify_config()));
        if (*diag) return poisonlab::cmd_diagnose(build_config(diag_o, poisonlab::default_config(GeneratorKind::Sdd)));
        if (*report) return poisonlab::cmd_report(report_dir);
    } catch (const poisonlab::Error& e) {
        std::cerr << "poisonlab: " << e.what() << "\n";
        return e.code() == ErrorCode::InvalidConfig ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "poisonlab: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
