#pragma once

// Closed-loop Monte Carlo harness: sampled true plants, SMPC and
// certainty-equivalence MPC controllers, run records and aggregate statistics,
// plus a vectorized open-loop ensemble simulator used as a sampling oracle.

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "smpc/common.hpp"
#include "smpc/controller.hpp"
#include "smpc/galerkin.hpp"

namespace smpc::sim {

double sample_marginal(const pce::MarginalDistribution& dist, std::mt19937_64& rng);

struct TruePlant {
    std::vector<double> theta_hat;
    Matrix A_hat;
    Matrix B_hat;
    Matrix F;
    Matrix Sigma;
};

TruePlant plant_at(const galerkin::UncertainLinearSystem& sys, std::vector<double> theta);
TruePlant sample_plant(const galerkin::UncertainLinearSystem& sys, std::mt19937_64& rng);
TruePlant sample_plant(const galerkin::UncertainLinearSystem& sys, std::uint64_t seed);

struct ControlStep {
    Vector u;
    double value = 0.0;
    bool fallback_used = false;
};

/// Stateless feedback law; step must be safe to call concurrently.
class Controller {
public:
    virtual ~Controller() = default;
    virtual ControlStep step(const Vector& x) const = 0;
    virtual std::string name() const = 0;
};

class SmpcController final : public Controller {
public:
    explicit SmpcController(controller::SmpcProblem problem) : problem_(std::move(problem)) {}
    ControlStep step(const Vector& x) const override;
    std::string name() const override { return "smpc"; }
    const controller::SmpcProblem& problem() const { return problem_; }

private:
    controller::SmpcProblem problem_;
};

enum class NominalTerminal { equality, cost };

struct NominalOptions {
    NominalTerminal terminal = NominalTerminal::equality;
    Matrix terminal_weight;  // n_x × n_x, cost mode only
    controller::FallbackOptions fallback;
};

/// Certainty-equivalence MPC on (A(E[θ]), B(E[θ])) with hard constraints on the
/// predicted states at stages 1..N−1.
class NominalMpcController final : public Controller {
public:
    NominalMpcController(const galerkin::UncertainLinearSystem& sys, const controller::CostWeights& weights,
                         std::vector<controller::ChanceConstraint> constraints, std::size_t horizon,
                         NominalOptions options = {});
    ControlStep step(const Vector& x) const override;
    std::string name() const override { return "nominal"; }

    /// Full optimal input sequence (stacked) from x.
    Vector plan(const Vector& x, double* value = nullptr, bool* fallback = nullptr) const;

private:
    std::size_t n_x_, n_u_, horizon_;
    std::vector<controller::ChanceConstraint> constraints_;
    NominalOptions options_;
    std::vector<Matrix> free_;    // x_i = free_i x + forced_i u
    std::vector<Matrix> forced_;
    Matrix H_;
    Matrix cross_;                // f = cross_ x
    Matrix constant_;             // value constant = xᵀ constant_ x
};

/// u = Kx with an optional value function for boundedness traces.
class LinearFeedbackController final : public Controller {
public:
    explicit LinearFeedbackController(Matrix K, std::function<double(const Vector&)> value = {})
        : K_(std::move(K)), value_(std::move(value)) {}
    ControlStep step(const Vector& x) const override;
    std::string name() const override { return "linear"; }

private:
    Matrix K_;
    std::function<double(const Vector&)> value_;
};

struct RunRecord {
    std::uint64_t seed = 0;
    std::vector<double> theta_hat;
    std::vector<Vector> states;  // x_0..x_T (shorter when aborted)
    std::vector<Vector> inputs;  // u_0..u_{T−1}
    std::vector<std::vector<bool>> violations;  // [t][constraint], cᵀx_t ≥ d; t = 0 never counts
    std::vector<double> values;  // controller value at each step
    std::size_t fallback_count = 0;
    bool aborted = false;
    std::string abort_reason;

    bool violated(std::size_t constraint) const;
};

/// Iterates x⁺ = Âx + B̂u + Fw with w drawn from a stream seeded by noise_seed.
RunRecord simulate_closed_loop(const TruePlant& plant, const Controller& controller, const Vector& x0,
                               std::size_t steps, std::uint64_t noise_seed,
                               const std::vector<controller::ChanceConstraint>& watch = {});

struct MonteCarloOptions {
    std::size_t runs = 100;
    std::size_t steps = 60;
    std::uint64_t base_seed = 1;
    Vector x0_mean;
    Matrix x0_cov;
    std::vector<std::size_t> histogram_times{5, 20, 60};
    std::size_t histogram_bins = 20;
    std::size_t threads = 1;
    std::vector<controller::ChanceConstraint> watch;
    bool keep_records = true;
};

struct Histogram {
    std::size_t time = 0;
    std::size_t state = 0;
    std::vector<double> edges;  // bins + 1
    std::vector<std::size_t> counts;
};

struct MonteCarloSummary {
    std::string controller;
    std::size_t runs = 0;
    std::size_t aborted = 0;
    std::vector<Vector> mean;      // per t over completed runs
    std::vector<Vector> variance;  // unbiased, per t
    std::vector<Histogram> histograms;
    std::vector<double> violation_fraction;               // per constraint, runs ever violating
    std::vector<std::vector<double>> step_violation_rate; // [constraint][t]
    std::size_t fallback_steps = 0;
    std::size_t total_steps = 0;
    double fallback_frequency = 0.0;
    std::vector<RunRecord> records;
};

/// Per-run streams derive from base_seed ^ run; results do not depend on threads.
MonteCarloSummary monte_carlo(const galerkin::UncertainLinearSystem& sys, const Controller& controller,
                              const MonteCarloOptions& options);

struct EnsembleOptions {
    std::size_t samples = 100000;
    std::uint64_t seed = 7;
    Vector x0;
    Policy policy;           // affine law used at stages 0..stages−1
    std::size_t stages = 10;
    Matrix Q;                // optional stage weights; empty → no cost
    Matrix R;
};

struct EnsembleMoments {
    std::vector<Vector> mean;  // stages 0..stages
    std::vector<Vector> variance;
    std::vector<Vector> mean_se;
    std::vector<Vector> variance_se;
    double stage_cost_mean = 0.0;  // Σ_{i<N} E‖x_i‖²_Q + ‖u_i‖²_R
    double stage_cost_se = 0.0;
};

/// Samples (θ, w) jointly and propagates x⁺ = A(θ)x + B(θ)u + Fw in structure-of-arrays
/// form with the active kernel table.
EnsembleMoments simulate_ensemble(const galerkin::UncertainLinearSystem& sys, const EnsembleOptions& options);

}  // namespace smpc::sim
