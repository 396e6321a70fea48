#include "smpc/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace smpc::config {

using nlohmann::json;

namespace {

const json& require(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) throw ConfigError(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw ConfigError(path + "." + key, "missing required field");
    return *it;
}

const json* optional_field(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) throw ConfigError(path, "expected an object");
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

double number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(path, "must be finite");
    return x;
}

std::size_t count(const json& v, const std::string& path) {
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(path, "expected a nonnegative integer");
    return v.get<std::size_t>();
}

std::uint64_t seed_value(const json& v, const std::string& path) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
        throw ConfigError(path, "expected a nonnegative integer seed");
    }
    return v.get<std::uint64_t>();
}

bool boolean(const json& v, const std::string& path) {
    if (!v.is_boolean()) throw ConfigError(path, "expected true or false");
    return v.get<bool>();
}

std::string text(const json& v, const std::string& path) {
    if (!v.is_string()) throw ConfigError(path, "expected a string");
    return v.get<std::string>();
}

Vector vector_of(const json& v, const std::string& path, std::optional<std::size_t> expected = std::nullopt) {
    if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
    if (expected && v.size() != *expected) {
        throw ConfigError(path, "expected " + std::to_string(*expected) + " entries, got " + std::to_string(v.size()));
    }
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = number(v[i], path + "[" + std::to_string(i) + "]");
    return out;
}

Matrix matrix_of(const json& v, const std::string& path, std::size_t rows, std::size_t cols) {
    if (!v.is_array() || v.size() != rows) {
        throw ConfigError(path, "expected " + std::to_string(rows) + " rows");
    }
    Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        const Vector row = vector_of(v[r], path + "[" + std::to_string(r) + "]", cols);
        out.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return out;
}

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

json vector_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

galerkin::Polynomial polynomial_of(const json& v, const std::string& path, std::size_t dim) {
    if (v.is_number()) return galerkin::Polynomial::constant(number(v, path), dim);
    if (!v.is_array()) throw ConfigError(path, "expected a number or a list of monomials");
    std::vector<galerkin::Monomial> terms;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string p = path + "[" + std::to_string(i) + "]";
        const json& mi = require(v[i], "multi_index", p);
        if (!mi.is_array() || mi.size() != dim) {
            throw ConfigError(p + ".multi_index", "expected " + std::to_string(dim) + " exponents");
        }
        pce::MultiIndex idx;
        for (std::size_t d = 0; d < dim; ++d) {
            const std::size_t e = count(mi[d], p + ".multi_index[" + std::to_string(d) + "]");
            idx.push_back(static_cast<int>(e));
        }
        terms.push_back({idx, number(require(v[i], "coefficient", p), p + ".coefficient")});
    }
    return galerkin::Polynomial(std::move(terms));
}

galerkin::PolynomialMatrix poly_matrix_of(const json& v, const std::string& path, std::size_t rows, std::size_t cols,
                                          std::size_t dim) {
    if (!v.is_array() || v.size() != rows) throw ConfigError(path, "expected " + std::to_string(rows) + " rows");
    galerkin::PolynomialMatrix out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const std::string pr = path + "[" + std::to_string(r) + "]";
        if (!v[r].is_array() || v[r].size() != cols) throw ConfigError(pr, "expected " + std::to_string(cols) + " entries");
        for (std::size_t c = 0; c < cols; ++c) out(r, c) = polynomial_of(v[r][c], pr + "[" + std::to_string(c) + "]", dim);
    }
    return out;
}

json polynomial_json(const galerkin::Polynomial& p) {
    if (p.is_constant()) {
        double value = 0.0;
        for (const auto& t : p.terms()) value += t.coefficient;
        return value;
    }
    json out = json::array();
    for (const auto& t : p.terms()) out.push_back({{"multi_index", t.exponents}, {"coefficient", t.coefficient}});
    return out;
}

json poly_matrix_json(const galerkin::PolynomialMatrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(polynomial_json(m(r, c)));
        rows.push_back(std::move(row));
    }
    return rows;
}

pce::MarginalDistribution marginal_of(const json& v, const std::string& path) {
    const std::string type = text(require(v, "type", path), path + ".type");
    try {
        if (type == "uniform") {
            return pce::MarginalDistribution::uniform(number(require(v, "lower", path), path + ".lower"),
                                                      number(require(v, "upper", path), path + ".upper"));
        }
        if (type == "gaussian") {
            return pce::MarginalDistribution::gaussian(number(require(v, "mean", path), path + ".mean"),
                                                       number(require(v, "variance", path), path + ".variance"));
        }
        if (type == "beta4") {
            return pce::MarginalDistribution::beta4(number(require(v, "lower", path), path + ".lower"),
                                                    number(require(v, "upper", path), path + ".upper"),
                                                    number(require(v, "alpha", path), path + ".alpha"),
                                                    number(require(v, "beta", path), path + ".beta"));
        }
        if (type == "point") return pce::MarginalDistribution::point(number(require(v, "value", path), path + ".value"));
    } catch (const ConfigError&) {
        throw;
    } catch (const ParameterError& e) {
        throw ConfigError(path, e.what());
    }
    throw ConfigError(path + ".type", "unknown distribution '" + type + "'");
}

json marginal_json(const pce::MarginalDistribution& d) {
    switch (d.kind()) {
        case pce::DistributionKind::uniform: return {{"type", "uniform"}, {"lower", d.lower()}, {"upper", d.upper()}};
        case pce::DistributionKind::gaussian:
            return {{"type", "gaussian"}, {"mean", d.location()}, {"variance", d.gaussian_variance()}};
        case pce::DistributionKind::beta4:
            return {{"type", "beta4"},
                    {"lower", d.lower()},
                    {"upper", d.upper()},
                    {"alpha", d.shape_alpha()},
                    {"beta", d.shape_beta()}};
        case pce::DistributionKind::point: return {{"type", "point"}, {"value", d.location()}};
    }
    return {};
}

std::string terminal_name(controller::TerminalMode m) {
    switch (m) {
        case controller::TerminalMode::none: return "none";
        case controller::TerminalMode::lyapunov: return "lyapunov";
        case controller::TerminalMode::explicit_matrix: return "explicit";
    }
    return "lyapunov";
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
    ExperimentConfig cfg;
    const std::string root = "$";
    if (!doc.is_object()) throw ConfigError(root, "expected an object");

    // uncertainty
    const json& unc = require(doc, "uncertainty", root);
    if (!unc.is_array()) throw ConfigError("$.uncertainty", "expected a list of distributions");
    for (std::size_t i = 0; i < unc.size(); ++i) {
        cfg.system.theta_dists.push_back(marginal_of(unc[i], "$.uncertainty[" + std::to_string(i) + "]"));
    }
    const std::size_t dim = cfg.system.theta_dists.size();

    // system
    const json& sys = require(doc, "system", root);
    auto& s = cfg.system;
    s.n_x = count(require(sys, "n_x", "$.system"), "$.system.n_x");
    s.n_u = count(require(sys, "n_u", "$.system"), "$.system.n_u");
    s.n_w = count(require(sys, "n_w", "$.system"), "$.system.n_w");
    if (s.n_x == 0 || s.n_u == 0 || s.n_w == 0) throw ConfigError("$.system", "dimensions must be positive");
    s.A = poly_matrix_of(require(sys, "A", "$.system"), "$.system.A", s.n_x, s.n_x, dim);
    s.B = poly_matrix_of(require(sys, "B", "$.system"), "$.system.B", s.n_x, s.n_u, dim);
    s.F = matrix_of(require(sys, "F", "$.system"), "$.system.F", s.n_x, s.n_w);
    s.Sigma = matrix_of(require(sys, "Sigma", "$.system"), "$.system.Sigma", s.n_w, s.n_w);
    try {
        s.validate();
    } catch (const Error& e) {
        throw ConfigError("$.system", e.what());
    }

    // gpc
    const json& gpc = require(doc, "gpc", root);
    cfg.max_degree = static_cast<int>(count(require(gpc, "max_degree", "$.gpc"), "$.gpc.max_degree"));

    // controller
    const json& ctl = require(doc, "controller", root);
    auto& c = cfg.controller;
    c.horizon = count(require(ctl, "horizon", "$.controller"), "$.controller.horizon");
    if (c.horizon < 1) throw ConfigError("$.controller.horizon", "must be at least 1");
    c.weights.Q = matrix_of(require(ctl, "Q", "$.controller"), "$.controller.Q", s.n_x, s.n_x);
    c.weights.R = matrix_of(require(ctl, "R", "$.controller"), "$.controller.R", s.n_u, s.n_u);
    if (const json* v = optional_field(ctl, "epsilon", "$.controller")) c.weights.epsilon = number(*v, "$.controller.epsilon");
    if (const json* v = optional_field(ctl, "delta", "$.controller")) c.delta = number(*v, "$.controller.delta");
    if (!(c.delta > 0.0)) throw ConfigError("$.controller.delta", "must be positive");
    if (const json* v = optional_field(ctl, "terminal", "$.controller")) {
        const std::string t = text(*v, "$.controller.terminal");
        if (t == "none") c.weights.terminal = controller::TerminalMode::none;
        else if (t == "lyapunov") c.weights.terminal = controller::TerminalMode::lyapunov;
        else if (t == "explicit") c.weights.terminal = controller::TerminalMode::explicit_matrix;
        else throw ConfigError("$.controller.terminal", "expected none, lyapunov or explicit");
    }
    if (c.weights.terminal == controller::TerminalMode::explicit_matrix) {
        const std::size_t n = s.n_x * pce::term_count(dim, cfg.max_degree);
        c.weights.terminal_matrix =
            matrix_of(require(ctl, "terminal_matrix", "$.controller"), "$.controller.terminal_matrix", n, n);
    }
    if (const json* v = optional_field(ctl, "solver", "$.controller")) {
        const std::string m = text(*v, "$.controller.solver");
        if (m == "fixed_gain") c.mode = controller::SolverMode::fixed_gain;
        else if (m == "joint") c.mode = controller::SolverMode::joint;
        else throw ConfigError("$.controller.solver", "expected fixed_gain or joint");
    }
    if (const json* v = optional_field(ctl, "gain", "$.controller")) c.gain = matrix_of(*v, "$.controller.gain", s.n_u, s.n_x);
    if (const json* v = optional_field(ctl, "constraints", "$.controller")) {
        if (!v->is_array()) throw ConfigError("$.controller.constraints", "expected a list");
        for (std::size_t i = 0; i < v->size(); ++i) {
            const std::string p = "$.controller.constraints[" + std::to_string(i) + "]";
            controller::ChanceConstraint cc;
            cc.c = vector_of(require((*v)[i], "c", p), p + ".c", s.n_x);
            cc.d = number(require((*v)[i], "d", p), p + ".d");
            cc.beta = number(require((*v)[i], "beta", p), p + ".beta");
            try {
                cc.validate(s.n_x);
            } catch (const Error& e) {
                throw ConfigError(p, e.what());
            }
            c.constraints.push_back(std::move(cc));
        }
    }
    if (const json* fb = optional_field(ctl, "fallback", "$.controller")) {
        if (const json* v = optional_field(*fb, "enabled", "$.controller.fallback")) {
            c.fallback.enabled = boolean(*v, "$.controller.fallback.enabled");
        }
        if (const json* v = optional_field(*fb, "slack_weight", "$.controller.fallback")) {
            c.fallback.slack_weight = number(*v, "$.controller.fallback.slack_weight");
        }
    }
    if (const json* jo = optional_field(ctl, "joint", "$.controller")) {
        if (const json* v = optional_field(*jo, "max_iterations", "$.controller.joint")) {
            c.joint.max_iterations = static_cast<int>(count(*v, "$.controller.joint.max_iterations"));
        }
        if (const json* v = optional_field(*jo, "tolerance", "$.controller.joint")) {
            c.joint.tolerance = number(*v, "$.controller.joint.tolerance");
        }
        if (const json* v = optional_field(*jo, "penalty", "$.controller.joint")) {
            c.joint.penalty = number(*v, "$.controller.joint.penalty");
        }
    }
    try {
        c.weights.validate(s.n_x, s.n_u);
    } catch (const Error& e) {
        throw ConfigError("$.controller", e.what());
    }

    // baseline
    if (const json* bl = optional_field(doc, "baseline", root)) {
        if (const json* v = optional_field(*bl, "enabled", "$.baseline")) cfg.baseline.enabled = boolean(*v, "$.baseline.enabled");
        if (const json* v = optional_field(*bl, "terminal", "$.baseline")) {
            const std::string t = text(*v, "$.baseline.terminal");
            if (t == "equality") cfg.baseline.terminal_equality = true;
            else if (t == "cost") cfg.baseline.terminal_equality = false;
            else throw ConfigError("$.baseline.terminal", "expected equality or cost");
        }
        if (const json* v = optional_field(*bl, "terminal_matrix", "$.baseline")) {
            cfg.baseline.terminal_matrix = matrix_of(*v, "$.baseline.terminal_matrix", s.n_x, s.n_x);
        }
    }

    // simulation
    const json& sim = require(doc, "simulation", root);
    auto& sm = cfg.simulation;
    if (const json* v = optional_field(sim, "steps", "$.simulation")) sm.steps = count(*v, "$.simulation.steps");
    if (const json* v = optional_field(sim, "runs", "$.simulation")) sm.runs = count(*v, "$.simulation.runs");
    if (const json* v = optional_field(sim, "seed", "$.simulation")) sm.seed = seed_value(*v, "$.simulation.seed");
    if (sm.steps < 1) throw ConfigError("$.simulation.steps", "must be at least 1");
    if (sm.runs < 1) throw ConfigError("$.simulation.runs", "must be at least 1");
    sm.x0_mean = vector_of(require(sim, "x0_mean", "$.simulation"), "$.simulation.x0_mean", s.n_x);
    sm.x0_cov = matrix_of(require(sim, "x0_cov", "$.simulation"), "$.simulation.x0_cov", s.n_x, s.n_x);
    if (const json* v = optional_field(sim, "histogram_times", "$.simulation")) {
        if (!v->is_array()) throw ConfigError("$.simulation.histogram_times", "expected a list");
        sm.histogram_times.clear();
        for (std::size_t i = 0; i < v->size(); ++i) {
            sm.histogram_times.push_back(count((*v)[i], "$.simulation.histogram_times[" + std::to_string(i) + "]"));
        }
    }
    if (const json* v = optional_field(sim, "histogram_bins", "$.simulation")) {
        sm.histogram_bins = count(*v, "$.simulation.histogram_bins");
        if (sm.histogram_bins < 1) throw ConfigError("$.simulation.histogram_bins", "must be at least 1");
    }
    if (const json* v = optional_field(sim, "threads", "$.simulation")) sm.threads = std::max<std::size_t>(1, count(*v, "$.simulation.threads"));

    // stability
    if (const json* st = optional_field(doc, "stability", root)) {
        auto& b = cfg.stability;
        auto take = [&](const char* key, std::size_t& dst) {
            if (const json* v = optional_field(*st, key, "$.stability")) dst = count(*v, std::string("$.stability.") + key);
        };
        take("drift_samples", b.drift_samples);
        take("value_samples", b.value_samples);
        take("mc_points", b.mc_points);
        take("mc_draws", b.mc_draws);
        take("boundedness_steps", b.boundedness_steps);
        take("assumption_draws", b.assumption_draws);
        if (const json* v = optional_field(*st, "seed", "$.stability")) b.seed = seed_value(*v, "$.stability.seed");
    }

    // output
    if (const json* out = optional_field(doc, "output", root)) {
        if (const json* v = optional_field(*out, "directory", "$.output")) cfg.output.directory = text(*v, "$.output.directory");
        if (const json* v = optional_field(*out, "formats", "$.output")) {
            if (!v->is_array()) throw ConfigError("$.output.formats", "expected a list");
            cfg.output.formats.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                const std::string f = text((*v)[i], "$.output.formats[" + std::to_string(i) + "]");
                if (f != "csv" && f != "json") throw ConfigError("$.output.formats[" + std::to_string(i) + "]", "expected csv or json");
                cfg.output.formats.push_back(f);
            }
        }
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    json doc;
    try {
        doc = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError("$", std::string("malformed JSON: ") + e.what());
    }
    return parse_config(doc);
}

json to_json(const ExperimentConfig& cfg) {
    const auto& s = cfg.system;
    const auto& c = cfg.controller;
    json doc;
    doc["system"] = {{"n_x", s.n_x},
                     {"n_u", s.n_u},
                     {"n_w", s.n_w},
                     {"A", poly_matrix_json(s.A)},
                     {"B", poly_matrix_json(s.B)},
                     {"F", matrix_json(s.F)},
                     {"Sigma", matrix_json(s.Sigma)}};
    json unc = json::array();
    for (const auto& d : s.theta_dists) unc.push_back(marginal_json(d));
    doc["uncertainty"] = unc;
    doc["gpc"] = {{"max_degree", cfg.max_degree}};

    json ctl = {{"horizon", c.horizon},
                {"Q", matrix_json(c.weights.Q)},
                {"R", matrix_json(c.weights.R)},
                {"epsilon", c.weights.epsilon},
                {"delta", c.delta},
                {"terminal", terminal_name(c.weights.terminal)},
                {"solver", c.mode == controller::SolverMode::joint ? "joint" : "fixed_gain"},
                {"fallback", {{"enabled", c.fallback.enabled}, {"slack_weight", c.fallback.slack_weight}}},
                {"joint",
                 {{"max_iterations", c.joint.max_iterations},
                  {"tolerance", c.joint.tolerance},
                  {"penalty", c.joint.penalty}}}};
    if (c.weights.terminal == controller::TerminalMode::explicit_matrix) {
        ctl["terminal_matrix"] = matrix_json(c.weights.terminal_matrix);
    }
    if (c.gain) ctl["gain"] = matrix_json(*c.gain);
    json ccs = json::array();
    for (const auto& cc : c.constraints) ccs.push_back({{"c", vector_json(cc.c)}, {"d", cc.d}, {"beta", cc.beta}});
    ctl["constraints"] = ccs;
    doc["controller"] = ctl;

    json bl = {{"enabled", cfg.baseline.enabled}, {"terminal", cfg.baseline.terminal_equality ? "equality" : "cost"}};
    if (cfg.baseline.terminal_matrix) bl["terminal_matrix"] = matrix_json(*cfg.baseline.terminal_matrix);
    doc["baseline"] = bl;

    const auto& sm = cfg.simulation;
    doc["simulation"] = {{"steps", sm.steps},
                         {"runs", sm.runs},
                         {"seed", sm.seed},
                         {"x0_mean", vector_json(sm.x0_mean)},
                         {"x0_cov", matrix_json(sm.x0_cov)},
                         {"histogram_times", sm.histogram_times},
                         {"histogram_bins", sm.histogram_bins},
                         {"threads", sm.threads}};
    const auto& st = cfg.stability;
    doc["stability"] = {{"drift_samples", st.drift_samples},   {"value_samples", st.value_samples},
                        {"mc_points", st.mc_points},           {"mc_draws", st.mc_draws},
                        {"boundedness_steps", st.boundedness_steps}, {"assumption_draws", st.assumption_draws},
                        {"seed", st.seed}};
    doc["output"] = {{"directory", cfg.output.directory}, {"formats", cfg.output.formats}};
    return doc;
}

}  // namespace smpc::config
