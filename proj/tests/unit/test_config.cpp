#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "smpc/config.hpp"
#include "smpc/experiment.hpp"

using namespace smpc;
using namespace smpc::config;
using nlohmann::json;

namespace {

const char* kBundled = SMPC_SOURCE_DIR "/configs/vandevusse.json";

json bundled_json() { return to_json(load_config(kBundled)); }

std::string error_path(const json& doc) {
    try {
        parse_config(doc);
    } catch (const ConfigError& e) {
        return e.path();
    }
    return "<no error>";
}

}  // namespace

TEST(Config, BundledReactor) {
    const auto cfg = load_config(kBundled);
    EXPECT_EQ(cfg.system.n_x, 2u);
    EXPECT_EQ(cfg.system.n_u, 1u);
    EXPECT_EQ(cfg.max_degree, 5);
    EXPECT_EQ(cfg.controller.horizon, 10u);
    EXPECT_EQ(cfg.controller.weights.R(0, 0), 0.0);
    EXPECT_EQ(cfg.controller.weights.epsilon, 1e-8);
    ASSERT_EQ(cfg.controller.constraints.size(), 1u);
    EXPECT_EQ(cfg.controller.constraints[0].d, 0.17);
    EXPECT_EQ(cfg.controller.constraints[0].beta, 0.95);
    EXPECT_TRUE(cfg.system.Sigma == 1e-4 * Matrix::Identity(2, 2));
    EXPECT_EQ(cfg.system.theta_dists[0], pce::MarginalDistribution::beta4(0.923, 0.963, 2, 5));
    EXPECT_EQ(cfg.simulation.runs, 100u);
    EXPECT_EQ(cfg.simulation.histogram_times, (std::vector<std::size_t>{5, 20, 60}));
    EXPECT_TRUE(cfg.baseline.terminal_equality);
}

TEST(Config, RoundTrip) {
    const json first = bundled_json();
    const auto again = parse_config(first);
    EXPECT_EQ(to_json(again), first);
    EXPECT_TRUE(again.system.A == load_config(kBundled).system.A);
}

TEST(Config, FieldPathsInErrors) {
    json doc = bundled_json();
    doc["controller"]["delta"] = 0.0;
    EXPECT_EQ(error_path(doc), "$.controller.delta");
    doc["controller"]["delta"] = -1.0;
    EXPECT_EQ(error_path(doc), "$.controller.delta");

    doc = bundled_json();
    doc["uncertainty"][0]["type"] = "cauchy";
    EXPECT_EQ(error_path(doc), "$.uncertainty[0].type");

    doc = bundled_json();
    doc["system"]["B"] = json::array({json::array({1.0})});
    EXPECT_EQ(error_path(doc).rfind("$.system.B", 0), 0u);

    doc = bundled_json();
    doc["controller"]["constraints"][0]["beta"] = 1.5;
    EXPECT_EQ(error_path(doc).rfind("$.controller.constraints[0]", 0), 0u);

    doc = bundled_json();
    doc["simulation"].erase("runs");
    EXPECT_NO_THROW(parse_config(doc));
    doc["simulation"]["runs"] = 0;
    EXPECT_EQ(error_path(doc), "$.simulation.runs");

    doc = bundled_json();
    doc.erase("system");
    EXPECT_EQ(error_path(doc), "$.system");
}

TEST(Config, MessageStartsWithPath) {
    json doc = bundled_json();
    doc["controller"]["delta"] = 0.0;
    try {
        parse_config(doc);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(std::string(e.what()).rfind("$.controller.delta: ", 0), 0u);
    }
}

TEST(Config, MissingFileIsAnIoError) {
    EXPECT_THROW(load_config("/nonexistent/config.json"), IoError);
}

TEST(Config, MalformedJson) {
    const auto path = std::filesystem::temp_directory_path() / "smpc_malformed.json";
    std::ofstream(path) << "{ \"system\": ";
    EXPECT_THROW(load_config(path), ConfigError);
    std::filesystem::remove(path);
}

TEST(Config, PointMassDegreeZeroBuilds) {
    json doc = bundled_json();
    doc["uncertainty"] = json::array({{{"type", "point"}, {"value", 0.93}}});
    doc["gpc"]["max_degree"] = 0;
    const auto setup = experiment::build(parse_config(doc));
    EXPECT_EQ(setup.problem.dyn.terms(), 1u);
    EXPECT_NEAR(setup.problem.dyn.bigA(0, 0), 0.93, 1e-15);
}

TEST(Config, PerturbedTerminalFailsLyapunovCheck) {
    const auto cfg = load_config(kBundled);
    const auto setup = experiment::build(cfg);
    auto perturbed = cfg;
    perturbed.controller.weights.terminal = controller::TerminalMode::explicit_matrix;
    perturbed.controller.weights.terminal_matrix = 1.1 * setup.certificate.P;
    const auto bad = experiment::build(parse_config(to_json(perturbed)));
    const auto rep = stability::lyapunov_check(bad.certificate);
    EXPECT_FALSE(rep.passed);
    EXPECT_GT(rep.worst, 1e-9);
    EXPECT_TRUE(stability::lyapunov_check(setup.certificate).passed);
}
