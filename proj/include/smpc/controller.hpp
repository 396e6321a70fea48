#pragma once

// Tractable SMPC program in gPC coefficient space: cost, distributionally
// robust chance-constraint surrogates, the fixed-gain (convex) and joint
// (local) solvers, and the receding-horizon step.

#include <optional>
#include <string>
#include <vector>

#include "smpc/common.hpp"
#include "smpc/galerkin.hpp"
#include "smpc/moments.hpp"

namespace smpc::controller {

/// Pr[cᵀx ≤ d] ≥ beta
struct ChanceConstraint {
    Vector c;
    double d = 0.0;
    double beta = 0.5;

    void validate(std::size_t n_x) const;
};

enum class TerminalMode { none, lyapunov, explicit_matrix };
enum class SolverMode { fixed_gain, joint };

struct CostWeights {
    Matrix Q;
    Matrix R;
    TerminalMode terminal = TerminalMode::lyapunov;
    Matrix terminal_matrix;  // lifted n × n, used with explicit_matrix
    double epsilon = 1e-8;   // added to the QP Hessian when R is singular

    void validate(std::size_t n_x, std::size_t n_u) const;
};

struct FallbackOptions {
    bool enabled = true;
    double slack_weight = 1e4;
};

struct JointOptions {
    int max_iterations = 200;
    double tolerance = 1e-7;  // on cost decrease
    double penalty = 1e3;
};

struct SmpcProblem {
    galerkin::UncertainLinearSystem system;
    galerkin::GpcDynamics dyn;
    std::size_t horizon = 10;
    CostWeights weights;
    std::vector<ChanceConstraint> constraints;
    SolverMode mode = SolverMode::fixed_gain;
    Matrix gain;      // K, n_u × n_x
    Matrix terminal;  // 𝐒 in coefficient space (n × n); zero when unset
    FallbackOptions fallback;
    JointOptions joint;

    const pce::PolyBasis& basis() const { return *dyn.basis; }
    /// 𝐐 = Q ⊗ W
    Matrix lifted_Q() const;
    /// 𝐑 = R ⊗ W
    Matrix lifted_R() const;

    void validate() const;
};

/// Problem skeleton with zero terminal weight and zero gain; callers attach
/// terminal ingredients (see stability::attach_terminal_ingredients).
SmpcProblem make_problem(galerkin::UncertainLinearSystem system, const pce::PolyBasis& basis, std::size_t horizon,
                         CostWeights weights, std::vector<ChanceConstraint> constraints,
                         SolverMode mode = SolverMode::fixed_gain);

/// Tightening multiplier √(β / (1 − β)) for satisfaction probability ≥ β.
double kappa(double beta);

/// cᵀE[φ] + κ(β)·√(cᵀVar[φ]c) − d; ≤ 0 means the surrogate holds.
double chance_constraint_value(const ChanceConstraint& cc, const moments::MomentState& ms,
                               const pce::PolyBasis& basis);

struct LiftedWeights {
    Matrix Q;  // 𝐐
    Matrix R;  // 𝐑
    Matrix S;  // terminal, n × n (may be empty → zero)
};

LiftedWeights lifted_weights(const SmpcProblem& prob);

/// Expected cost of a lifted policy along its moment trajectory (stages 0..N).
double cost(const moments::MomentTrajectory& traj, const galerkin::LiftedPolicy& lifted, const LiftedWeights& weights);

/// Cost and surrogate values of an arbitrary policy from an initial moment state.
struct PolicyEvaluation {
    double cost = 0.0;
    std::vector<double> constraint_values;  // stage-major over stages 1..N-1
    double max_constraint = -std::numeric_limits<double>::infinity();
    moments::MomentTrajectory trajectory;
};

PolicyEvaluation evaluate_policy(const SmpcProblem& prob, const moments::MomentState& init, const Policy& policy);

/// The program in the offsets g̃ with the gains held fixed:
///   V(z) = ½zᵀHz + fᵀz + constant,   Φ̄_i = offset_i + map_i z,
/// and each surrogate is cᵀΩᵀΦ̄_i + κ·√(‖spread_i(z)‖² + noise_i) − d, a
/// second-order cone constraint in z.
class GainConditionedProgram {
public:
    struct Surrogate {
        std::size_t stage;
        std::size_t index;  // into SmpcProblem::constraints
        Vector mean_row;    // z ↦ cᵀE[φ_i]
        double mean_constant;
        Matrix spread_map;  // z ↦ √W_k · Σ_r c_r Φ̄_{r,k}, k ≥ 1
        Vector spread_constant;
        double noise_variance;  // cᵀ(Γ-part)c
        double kappa;
        double d;
    };

    std::size_t variables() const { return static_cast<std::size_t>(f.size()); }
    double value(const Vector& z) const { return 0.5 * z.dot(H * z) + f.dot(z) + constant; }
    double surrogate(const Surrogate& s, const Vector& z) const;
    Vector surrogate_gradient(const Surrogate& s, const Vector& z) const;

    Matrix H;  // without regularization
    Vector f;
    double constant = 0.0;
    std::vector<Vector> mean_offset;
    std::vector<Matrix> mean_map;
    std::vector<Matrix> cov;  // Γ_i, independent of z
    std::vector<Surrogate> surrogates;
};

GainConditionedProgram condition_on_gains(const SmpcProblem& prob, const moments::MomentState& init,
                                          const std::vector<Matrix>& gains);

struct InfeasibilityReport {
    std::size_t stage = 0;
    std::size_t constraint = 0;
    double violation = 0.0;
};

class InfeasibleError : public Error {
public:
    InfeasibleError(const std::string& what, InfeasibilityReport report) : Error(what), report_(report) {}
    const InfeasibilityReport& report() const { return report_; }

private:
    InfeasibilityReport report_;
};

struct SolveResult {
    Policy policy;
    double cost = 0.0;
    bool fallback_used = false;
    bool converged = true;  // false → joint solver hit its iteration limit
    int iterations = 0;
    double max_constraint = 0.0;        // worst surrogate value at the solution
    double kkt_stationarity = 0.0;      // w.r.t. true surrogate gradients
    std::optional<InfeasibilityReport> infeasibility;  // populated when the fallback was taken
};

/// Optimal offsets with the gains fixed (default all stages = prob.gain).
SolveResult solve_with_gains(const SmpcProblem& prob, const moments::MomentState& init,
                             const std::vector<Matrix>& gains);

SolveResult solve_fixed_gain(const SmpcProblem& prob, const Vector& x);
SolveResult solve_fixed_gain(const SmpcProblem& prob, const moments::MomentState& init);

SolveResult solve_joint(const SmpcProblem& prob, const Vector& x);
SolveResult solve_joint(const SmpcProblem& prob, const moments::MomentState& init);

SolveResult solve(const SmpcProblem& prob, const moments::MomentState& init);

struct StepOutcome {
    Vector u;
    double value = 0.0;
    bool fallback_used = false;
    SolveResult solution;
};

/// Solve conditioned on x and return u = g_0* + L_0* x.
StepOutcome mpc_step(const SmpcProblem& prob, const Vector& x);

}  // namespace smpc::controller
