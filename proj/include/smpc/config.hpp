#pragma once

// JSON experiment configuration: parsing with field-path errors, and the
// echo used in summaries.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smpc/common.hpp"
#include "smpc/controller.hpp"
#include "smpc/galerkin.hpp"

namespace smpc::config {

/// Schema violation; what() starts with the offending field path.
class ConfigError : public ParameterError {
public:
    ConfigError(const std::string& path, const std::string& message)
        : ParameterError(path + ": " + message), path_(path) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

/// Unreadable config or unwritable output location.
class IoError : public Error {
public:
    using Error::Error;
};

struct ControllerBlock {
    std::size_t horizon = 10;
    controller::CostWeights weights;
    std::vector<controller::ChanceConstraint> constraints;
    controller::SolverMode mode = controller::SolverMode::fixed_gain;
    double delta = 0.1;
    std::optional<Matrix> gain;
    controller::FallbackOptions fallback;
    controller::JointOptions joint;
};

struct BaselineBlock {
    bool enabled = true;
    bool terminal_equality = true;
    std::optional<Matrix> terminal_matrix;  // n_x × n_x, cost mode
};

struct SimulationBlock {
    std::size_t steps = 60;
    std::size_t runs = 100;
    std::uint64_t seed = 20240601;
    Vector x0_mean;
    Matrix x0_cov;
    std::vector<std::size_t> histogram_times{5, 20, 60};
    std::size_t histogram_bins = 20;
    std::size_t threads = 1;
};

struct StabilityBlock {
    std::size_t drift_samples = 10000;
    std::size_t value_samples = 1000;
    std::size_t mc_points = 10;
    std::size_t mc_draws = 100000;
    std::size_t boundedness_steps = 500;
    std::size_t assumption_draws = 200;
    std::uint64_t seed = 7;
};

struct OutputBlock {
    std::string directory;
    std::vector<std::string> formats{"csv", "json"};
};

struct ExperimentConfig {
    galerkin::UncertainLinearSystem system;
    int max_degree = 0;
    ControllerBlock controller;
    BaselineBlock baseline;
    SimulationBlock simulation;
    StabilityBlock stability;
    OutputBlock output;
};

ExperimentConfig parse_config(const nlohmann::json& doc);

/// Reads JSON (comments allowed). Throws IoError when unreadable, ConfigError on schema errors.
ExperimentConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const ExperimentConfig& cfg);

}  // namespace smpc::config
