// smpc run <config> [--seed S] [--runs N] [--out DIR]
// smpc check <config> [--out DIR]
//
// Exit codes: 0 success, 2 validation, 3 certificate or check failure, 4 I/O.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "smpc/config.hpp"
#include "smpc/experiment.hpp"
#include "smpc/stability.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 2;
constexpr int kCheckFailed = 3;
constexpr int kIo = 4;

std::filesystem::path output_dir(const std::string& flag, const smpc::config::ExperimentConfig& cfg) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("SMPC_OUT_DIR"); env && *env) return env;
    if (!cfg.output.directory.empty()) return cfg.output.directory;
    return "smpc_out";
}

int run_command(const std::string& path, std::optional<std::uint64_t> seed, std::optional<std::size_t> runs,
                const std::string& out) {
    namespace ex = smpc::experiment;
    const auto cfg = ex::apply(smpc::config::load_config(path), {seed, runs});
    const auto setup = ex::build(cfg);
    const auto result = ex::run_study(setup);
    const auto dir = output_dir(out, cfg);
    ex::write_study(dir, setup, result);

    auto report = [](const smpc::sim::MonteCarloSummary& s) {
        std::printf("%-8s runs %zu  aborted %zu  fallback %.4f", s.controller.c_str(), s.runs, s.aborted,
                    s.fallback_frequency);
        for (std::size_t l = 0; l < s.violation_fraction.size(); ++l) {
            std::printf("  constraint %zu satisfied in %.2f of runs", l, 1.0 - s.violation_fraction[l]);
        }
        std::printf("\n");
    };
    report(result.smpc);
    if (result.nominal) report(*result.nominal);
    std::printf("outputs in %s\n", dir.string().c_str());
    return kOk;
}

int check_command(const std::string& path, const std::string& out) {
    namespace ex = smpc::experiment;
    const auto cfg = smpc::config::load_config(path);
    const auto setup = ex::build(cfg);
    const auto report = ex::check_stability(setup);
    ex::write_stability(output_dir(out, cfg), setup, report);
    for (const auto& c : report.checks) {
        std::printf("%s %-22s worst %.6g (tol %.3g)  %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.worst,
                    c.tolerance, c.detail.c_str());
    }
    std::printf("boundedness: middle %.6g tail %.6g %s\n", report.boundedness.middle_mean,
                report.boundedness.tail_mean, report.boundedness.divergent ? "DIVERGENT" : "bounded");
    if (report.assumption) {
        std::printf("one-step assumption gap %.6g (lhs %.6g ± %.2g, rhs %.6g)\n", report.assumption->gap(),
                    report.assumption->lhs, report.assumption->lhs_se, report.assumption->rhs);
    }
    return report.passed() ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic MPC with polynomial chaos: closed-loop studies and stability checks"};
    app.require_subcommand(1);

    std::string run_config, check_config, run_out, check_out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> runs;

    auto* run = app.add_subcommand("run", "Monte Carlo study of SMPC and the nominal baseline");
    run->add_option("config", run_config, "experiment config (JSON)")->required();
    run->add_option("--seed", seed, "base seed override");
    run->add_option("--runs", runs, "number of closed-loop runs");
    run->add_option("--out", run_out, "output directory (default: $SMPC_OUT_DIR, then config)");

    auto* check = app.add_subcommand("check", "terminal certificate and stability inequalities");
    check->add_option("config", check_config, "experiment config (JSON)")->required();
    check->add_option("--out", check_out, "output directory (default: $SMPC_OUT_DIR, then config)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kValidation;
    }

    try {
        if (*run) return run_command(run_config, seed, runs, run_out);
        return check_command(check_config, check_out);
    } catch (const smpc::config::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kIo;
    } catch (const smpc::stability::StabilityError& e) {
        std::fprintf(stderr, "certificate failure: %s\n", e.what());
        return kCheckFailed;
    } catch (const smpc::Error& e) {
        std::fprintf(stderr, "invalid configuration: %s\n", e.what());
        return kValidation;
    }
}
