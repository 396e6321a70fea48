#include "smpc/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <random>
#include <system_error>

#include "smpc/pce.hpp"

namespace smpc::experiment {

using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw config::IoError("cannot write " + path.string());
    return out;
}

void ensure_directory(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) throw config::IoError("cannot create output directory " + dir.string());
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw config::IoError("failed writing " + path.string());
}

json summary_block(const sim::MonteCarloSummary& s) {
    json sat = json::array();
    for (double v : s.violation_fraction) sat.push_back(1.0 - v);
    return {{"runs", s.runs},
            {"aborted", s.aborted},
            {"violation_fraction", s.violation_fraction},
            {"satisfaction_fraction", sat},
            {"fallback_steps", s.fallback_steps},
            {"total_steps", s.total_steps},
            {"fallback_frequency", s.fallback_frequency}};
}

void write_controller_files(const std::filesystem::path& dir, const sim::MonteCarloSummary& s, std::size_t n_x,
                            std::size_t n_u) {
    {
        const auto path = dir / ("trajectories_" + s.controller + ".csv");
        auto out = open_output(path);
        out << "run,t";
        for (std::size_t r = 0; r < n_x; ++r) out << ",x" << r + 1;
        for (std::size_t k = 0; k < n_u; ++k) out << ",u" << k + 1;
        out << ",violated\n";
        for (std::size_t run = 0; run < s.records.size(); ++run) {
            const auto& rec = s.records[run];
            for (std::size_t t = 0; t < rec.states.size(); ++t) {
                out << run << ',' << t;
                for (Eigen::Index r = 0; r < rec.states[t].size(); ++r) out << ',' << fmt(rec.states[t](r));
                for (std::size_t k = 0; k < n_u; ++k) {
                    out << ',';
                    if (t < rec.inputs.size()) out << fmt(rec.inputs[t](static_cast<Eigen::Index>(k)));
                }
                bool any = false;
                if (t > 0) {
                    for (bool f : rec.violations[t]) any = any || f;
                }
                out << ',' << (any ? 1 : 0) << '\n';
            }
        }
        finish(out, path);
    }
    {
        const auto path = dir / ("moments_" + s.controller + ".csv");
        auto out = open_output(path);
        out << "t";
        for (std::size_t r = 0; r < n_x; ++r) out << ",mean_x" << r + 1;
        for (std::size_t r = 0; r < n_x; ++r) out << ",var_x" << r + 1;
        out << '\n';
        for (std::size_t t = 0; t < s.mean.size(); ++t) {
            out << t;
            for (Eigen::Index r = 0; r < s.mean[t].size(); ++r) out << ',' << fmt(s.mean[t](r));
            for (Eigen::Index r = 0; r < s.variance[t].size(); ++r) out << ',' << fmt(s.variance[t](r));
            out << '\n';
        }
        finish(out, path);
    }
    {
        const auto path = dir / ("histograms_" + s.controller + ".csv");
        auto out = open_output(path);
        out << "time,state,bin,lower,upper,count\n";
        for (const auto& h : s.histograms) {
            for (std::size_t k = 0; k < h.counts.size(); ++k) {
                out << h.time << ',' << h.state + 1 << ',' << k << ',' << fmt(h.edges[k]) << ',' << fmt(h.edges[k + 1])
                    << ',' << h.counts[k] << '\n';
            }
        }
        finish(out, path);
    }
}

json report_json(const stability::CheckReport& r) {
    json j = {{"name", r.name},
              {"passed", r.passed},
              {"samples", r.samples},
              {"worst", r.worst},
              {"tolerance", r.tolerance},
              {"detail", r.detail}};
    json sample = json::array();
    for (Eigen::Index i = 0; i < r.worst_sample.size(); ++i) sample.push_back(r.worst_sample(i));
    j["worst_sample"] = sample;
    return j;
}

}  // namespace

Setup build(const config::ExperimentConfig& cfg) {
    const auto basis = pce::build_basis(cfg.system.theta_dists, cfg.max_degree);
    const auto& c = cfg.controller;
    Setup setup{cfg, controller::make_problem(cfg.system, basis, c.horizon, c.weights, c.constraints, c.mode), {}};
    setup.problem.fallback = c.fallback;
    setup.problem.joint = c.joint;
    setup.certificate = stability::attach_terminal_ingredients(setup.problem, c.delta, c.gain);
    if (c.weights.terminal == controller::TerminalMode::explicit_matrix) {
        // The checks then certify the terminal weight actually in use.
        auto& cert = setup.certificate;
        cert.P = c.weights.terminal_matrix;
        cert.b = cert.P.cwiseProduct(cert.noise).sum();
    }
    return setup;
}

std::unique_ptr<sim::NominalMpcController> make_nominal(const Setup& setup) {
    const auto& cfg = setup.config;
    sim::NominalOptions opts;
    opts.fallback = cfg.controller.fallback;
    if (cfg.baseline.terminal_equality) {
        opts.terminal = sim::NominalTerminal::equality;
    } else {
        opts.terminal = sim::NominalTerminal::cost;
        if (cfg.baseline.terminal_matrix) {
            opts.terminal_weight = *cfg.baseline.terminal_matrix;
        } else {
            const Matrix& K = setup.problem.gain;
            const Matrix Acl = cfg.system.mean_A() + cfg.system.mean_B() * K;
            const Matrix M = cfg.controller.weights.Q + K.transpose() * cfg.controller.weights.R * K;
            opts.terminal_weight = stability::solve_lyapunov(Acl, M, cfg.controller.delta);
        }
    }
    return std::make_unique<sim::NominalMpcController>(cfg.system, cfg.controller.weights, cfg.controller.constraints,
                                                       cfg.controller.horizon, opts);
}

config::ExperimentConfig apply(config::ExperimentConfig cfg, const Overrides& overrides) {
    if (overrides.seed) cfg.simulation.seed = *overrides.seed;
    if (overrides.runs) {
        if (*overrides.runs < 1) throw config::ConfigError("--runs", "must be at least 1");
        cfg.simulation.runs = *overrides.runs;
    }
    return cfg;
}

StudyResult run_study(const Setup& setup) {
    const auto& sm = setup.config.simulation;
    sim::MonteCarloOptions opts;
    opts.runs = sm.runs;
    opts.steps = sm.steps;
    opts.base_seed = sm.seed;
    opts.x0_mean = sm.x0_mean;
    opts.x0_cov = sm.x0_cov;
    opts.histogram_times = sm.histogram_times;
    opts.histogram_bins = sm.histogram_bins;
    opts.threads = sm.threads;
    opts.watch = setup.config.controller.constraints;

    StudyResult result;
    const sim::SmpcController smpc(setup.problem);
    result.smpc = sim::monte_carlo(setup.config.system, smpc, opts);
    if (setup.config.baseline.enabled) {
        const auto nominal = make_nominal(setup);
        result.nominal = sim::monte_carlo(setup.config.system, *nominal, opts);
    }
    return result;
}

json summary_json(const Setup& setup, const StudyResult& result) {
    json doc;
    doc["seed"] = setup.config.simulation.seed;
    doc["runs"] = setup.config.simulation.runs;
    doc["steps"] = setup.config.simulation.steps;
    doc["certificate"] = {{"spectral_radius", setup.certificate.spectral_radius},
                          {"b", setup.certificate.b},
                          {"delta", setup.certificate.delta},
                          {"lyapunov_residual", setup.certificate.lyapunov_residual()}};
    json ctl;
    ctl["smpc"] = summary_block(result.smpc);
    if (result.nominal) ctl["nominal"] = summary_block(*result.nominal);
    doc["controllers"] = ctl;
    doc["config"] = config::to_json(setup.config);
    return doc;
}

void write_study(const std::filesystem::path& dir, const Setup& setup, const StudyResult& result) {
    ensure_directory(dir);
    const auto& formats = setup.config.output.formats;
    const bool csv = std::find(formats.begin(), formats.end(), "csv") != formats.end();
    const bool js = std::find(formats.begin(), formats.end(), "json") != formats.end();
    if (csv) {
        write_controller_files(dir, result.smpc, setup.config.system.n_x, setup.config.system.n_u);
        if (result.nominal) write_controller_files(dir, *result.nominal, setup.config.system.n_x, setup.config.system.n_u);
    }
    if (js) {
        const auto path = dir / "summary.json";
        auto out = open_output(path);
        out << summary_json(setup, result).dump(2) << '\n';
        finish(out, path);
    }
}

bool StabilityReport::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

StabilityReport check_stability(const Setup& setup) {
    const auto& st = setup.config.stability;
    StabilityReport rep;
    rep.checks.push_back(stability::lyapunov_check(setup.certificate));

    stability::DriftOptions drift;
    drift.exterior_samples = st.drift_samples;
    drift.mc_points = st.mc_points;
    drift.mc_draws = st.mc_draws;
    drift.seed = st.seed;
    for (auto& r : stability::drift_check(setup.certificate, drift)) rep.checks.push_back(std::move(r));

    stability::ValueBoundOptions vb;
    vb.samples = st.value_samples;
    vb.seed = st.seed + 1;
    for (auto& r : stability::value_bound_check(setup.problem, setup.certificate, vb)) rep.checks.push_back(std::move(r));

    if (st.boundedness_steps > 0) {
        std::mt19937_64 rng(st.seed + 2);
        const auto plant = sim::sample_plant(setup.config.system, rng);
        const sim::SmpcController ctl(setup.problem);
        const auto run = sim::simulate_closed_loop(plant, ctl, setup.config.simulation.x0_mean, st.boundedness_steps,
                                                   rng(), setup.config.controller.constraints);
        rep.boundedness = stability::boundedness_trace(run.values);
        if (st.assumption_draws > 0) {
            rep.assumption = stability::assumption_gap(setup.problem, plant.A_hat, plant.B_hat,
                                                       setup.config.simulation.x0_mean, st.assumption_draws, st.seed + 3);
        }
    }
    return rep;
}

json stability_json(const Setup& setup, const StabilityReport& report) {
    json doc;
    doc["passed"] = report.passed();
    json checks = json::array();
    for (const auto& c : report.checks) checks.push_back(report_json(c));
    doc["checks"] = checks;
    doc["certificate"] = {{"spectral_radius", setup.certificate.spectral_radius},
                          {"b", setup.certificate.b},
                          {"delta", setup.certificate.delta},
                          {"drift_level", setup.certificate.drift_level()}};
    doc["boundedness"] = {{"steps", report.boundedness.values.size()},
                          {"middle_mean", report.boundedness.middle_mean},
                          {"tail_mean", report.boundedness.tail_mean},
                          {"divergent", report.boundedness.divergent}};
    if (report.assumption) {
        doc["assumption"] = {{"lhs", report.assumption->lhs},
                             {"lhs_se", report.assumption->lhs_se},
                             {"rhs", report.assumption->rhs},
                             {"gap", report.assumption->gap()}};
    }
    return doc;
}

void write_stability(const std::filesystem::path& dir, const Setup& setup, const StabilityReport& report) {
    ensure_directory(dir);
    const auto path = dir / "stability.json";
    auto out = open_output(path);
    out << stability_json(setup, report).dump(2) << '\n';
    finish(out, path);
}

}  // namespace smpc::experiment
