#pragma once

// Orchestration behind the command line: build every artifact from a config,
// run the closed-loop study or the stability suite, and write outputs.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smpc/config.hpp"
#include "smpc/controller.hpp"
#include "smpc/sim.hpp"
#include "smpc/stability.hpp"

namespace smpc::experiment {

struct Setup {
    config::ExperimentConfig config;
    controller::SmpcProblem problem;
    stability::StabilityCertificate certificate;
};

/// basis → dynamics → certificate → controller. Throws StabilityError on certificate failure.
Setup build(const config::ExperimentConfig& cfg);

std::unique_ptr<sim::NominalMpcController> make_nominal(const Setup& setup);

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> runs;
};

config::ExperimentConfig apply(config::ExperimentConfig cfg, const Overrides& overrides);

struct StudyResult {
    sim::MonteCarloSummary smpc;
    std::optional<sim::MonteCarloSummary> nominal;
};

StudyResult run_study(const Setup& setup);

/// trajectories_<c>.csv, moments_<c>.csv, histograms_<c>.csv and summary.json.
/// Throws config::IoError when the directory cannot be written.
void write_study(const std::filesystem::path& dir, const Setup& setup, const StudyResult& result);

nlohmann::json summary_json(const Setup& setup, const StudyResult& result);

struct StabilityReport {
    std::vector<stability::CheckReport> checks;  // gating
    stability::BoundednessReport boundedness;    // informational
    std::optional<stability::AssumptionGap> assumption;
    bool passed() const;
};

StabilityReport check_stability(const Setup& setup);

nlohmann::json stability_json(const Setup& setup, const StabilityReport& report);

/// stability.json; throws config::IoError.
void write_stability(const std::filesystem::path& dir, const Setup& setup, const StabilityReport& report);

}  // namespace smpc::experiment
