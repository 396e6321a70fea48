#pragma once

// Terminal ingredients (K, P, b) and sampled checks of the drift and value
// bound inequalities that back the closed-loop boundedness result.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "smpc/common.hpp"
#include "smpc/controller.hpp"
#include "smpc/galerkin.hpp"

namespace smpc::stability {

/// ρ(Acl) ≥ 1 where a Schur-stable matrix is required.
class StabilityError : public Error {
public:
    StabilityError(const std::string& what, double radius) : Error(what), radius_(radius) {}
    double spectral_radius() const { return radius_; }

private:
    double radius_;
};

/// Infinite-horizon discrete LQR gain with the u = Kx sign convention.
/// Throws ParameterError when R is not positive definite.
Matrix dlqr(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R);

/// LQR on the mean block (A_0, B_0) with R + epsilon·I, then a spectral-radius
/// check of 𝐀 + 𝐁(K ⊗ I) on the lifted system.
Matrix terminal_gain(const galerkin::GpcDynamics& dyn, const Matrix& Q, const Matrix& R, double epsilon = 1e-8);

/// P with Aclᵀ P Acl − P = −(1 + delta) M.
Matrix solve_lyapunov(const Matrix& Acl, const Matrix& M, double delta);

struct StabilityCertificate {
    Matrix K;
    Matrix bigK;
    Matrix P;
    Matrix bigM;         // 𝐐 + 𝐊ᵀ𝐑𝐊
    Matrix bigQ;
    Matrix bigR;
    Matrix closed_loop;  // 𝐀 + 𝐁𝐊
    Matrix noise;        // 𝐅 Σ 𝐅ᵀ
    double delta = 0.1;
    double b = 0.0;      // tr(𝐅ᵀ P 𝐅 Σ)
    double spectral_radius = 0.0;

    /// ΦᵀMΦ ≤ b / delta describes the drift set.
    double drift_level() const { return b / delta; }
    double lyapunov_residual() const;

    double stage_cost(const Vector& phi) const;     // c(Φ, 𝐊Φ)
    double terminal_cost(const Vector& phi) const;  // ‖Φ‖²_P
    /// −δ ΦᵀMΦ + b
    double drift(const Vector& phi) const;
    /// c(Φ, 𝐊Φ) − c_f(Φ) + E[c_f(𝐀_cl Φ + 𝐅w)], term by term.
    double drift_direct(const Vector& phi) const;
};

/// Throws ParameterError for delta ≤ 0, StabilityError when the closed loop is not Schur.
StabilityCertificate make_certificate(const galerkin::GpcDynamics& dyn, const Matrix& Q, const Matrix& R,
                                      const Matrix& K, double delta);

/// Computes K (unless given) and P, stores K in prob.gain and, in Lyapunov
/// terminal mode, P as the terminal weight.
StabilityCertificate attach_terminal_ingredients(controller::SmpcProblem& prob, double delta,
                                                 const std::optional<Matrix>& gain = std::nullopt);

struct CheckReport {
    std::string name;
    bool passed = true;
    std::size_t samples = 0;
    double worst = 0.0;  // largest violation measure (≤ tolerance when passed)
    double tolerance = 0.0;
    Vector worst_sample;
    std::string detail;
};

CheckReport lyapunov_check(const StabilityCertificate& cert, double tolerance = 1e-9);

struct DriftOptions {
    std::size_t exterior_samples = 10000;
    std::size_t mc_points = 10;
    std::size_t mc_draws = 100000;
    std::uint64_t seed = 1;
    double tolerance = 1e-8;
};

/// Exterior drift inequality, sup over D, and an MC cross-check of the expectation.
std::vector<CheckReport> drift_check(const StabilityCertificate& cert, const DriftOptions& options = {});

struct ValueBoundOptions {
    std::size_t samples = 1000;
    double radius = 10.0;
    std::uint64_t seed = 2;
    double tolerance = 1e-8;
};

/// V_N^s ≤ c_f + N·b and V_N^⋆ ≤ V_N^s on the unconstrained problem with terminal weight P.
std::vector<CheckReport> value_bound_check(const controller::SmpcProblem& prob, const StabilityCertificate& cert,
                                           const ValueBoundOptions& options = {});

struct BoundednessReport {
    std::vector<double> values;
    double middle_mean = 0.0;  // steps in [0.4T, 0.6T)
    double tail_mean = 0.0;    // steps in [0.8T, T)
    bool divergent = false;
};

BoundednessReport boundedness_trace(const std::vector<double>& values);

/// Both sides of the one-step assumption on the shifted policy at x, for the plant (A_hat, B_hat).
struct AssumptionGap {
    double lhs = 0.0;     // MC mean over w of V^f(x_1 ⊗ e)
    double lhs_se = 0.0;
    double rhs = 0.0;     // E[V^f(Φ_1)] from the predicted moments
    double gap() const { return lhs - rhs; }
};

AssumptionGap assumption_gap(const controller::SmpcProblem& prob, const Matrix& A_hat, const Matrix& B_hat,
                             const Vector& x, std::size_t draws, std::uint64_t seed);

}  // namespace smpc::stability
