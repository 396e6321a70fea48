#pragma once

// Dense strictly convex QP:
//
//   minimize ½ zᵀHz + fᵀz   s.t.  A_in z ≤ b_in,  A_eq z = b_eq
//
// solved with the Goldfarb–Idnani dual active-set method. Multipliers follow
// the Lagrangian ½zᵀHz + fᵀz + λᵀ(A_in z − b_in) + νᵀ(A_eq z − b_eq), so at
// an optimum Hz + f + A_inᵀλ + A_eqᵀν = 0 with λ ≥ 0.

#include <vector>

#include "smpc/common.hpp"

namespace smpc::qp {

struct QpProblem {
    Matrix H;
    Vector f;
    Matrix A_in;  // m_in × n (may have zero rows)
    Vector b_in;
    Matrix A_eq;  // m_eq × n (may have zero rows)
    Vector b_eq;

    static QpProblem unconstrained(Matrix H, Vector f);
};

enum class QpStatus { optimal, infeasible, iteration_limit };

struct KktResiduals {
    double stationarity = 0.0;       // ‖Hz + f + A_inᵀλ + A_eqᵀν‖∞
    double primal_inequality = 0.0;  // max(0, max(A_in z − b_in))
    double primal_equality = 0.0;    // ‖A_eq z − b_eq‖∞
    double dual_feasibility = 0.0;   // max(0, −min λ)
    double complementarity = 0.0;    // max |λ_j (A_in z − b_in)_j|

    double worst() const;
};

/// Farkas certificate: y ≥ 0, A_inᵀy + A_eqᵀν = 0, b_inᵀy + b_eqᵀν < 0.
struct InfeasibilityCertificate {
    int violated_row = -1;
    Vector y;
    Vector nu;
    double gap = 0.0;  // b_inᵀy + b_eqᵀν
};

struct QpResult {
    QpStatus status = QpStatus::iteration_limit;
    Vector z;
    Vector lambda;  // inequality multipliers
    Vector nu;      // equality multipliers
    double objective = 0.0;
    int iterations = 0;
    std::vector<int> active_inequalities;
    KktResiduals residuals;
    InfeasibilityCertificate certificate;

    bool ok() const { return status == QpStatus::optimal; }
};

struct QpOptions {
    int max_iterations = 0;          // 0 → 50·(n + m) + 100
    double feasibility_tol = 1e-12;  // relative to 1 + |b|
};

/// Throws ConditioningError when H is not (numerically) positive definite,
/// DimensionError on shape mismatch.
QpResult solve_qp(const QpProblem& problem, const QpOptions& options = {});

KktResiduals kkt_residuals(const QpProblem& problem, const Vector& z, const Vector& lambda, const Vector& nu);

}  // namespace smpc::qp
