#pragma once

// First two moments of the Gaussian coefficient process (Φ̄_i, Γ_i) and the
// physical-state moments recovered from it.

#include <vector>

#include "smpc/common.hpp"
#include "smpc/galerkin.hpp"

namespace smpc::moments {

struct MomentState {
    Vector mean;  // Φ̄, length n
    Matrix cov;   // Γ, n × n

    /// Φ̄_0 = x ⊗ e_{p+1}, Γ_0 = 0
    static MomentState observed(const Vector& x, std::size_t terms);
};

using MomentTrajectory = std::vector<MomentState>;

/// Stages 0..N under the lifted closed loop; Γ is symmetrized after every step.
MomentTrajectory propagate(const galerkin::GpcDynamics& dyn, const galerkin::LiftedPolicy& lifted,
                           const MomentState& init, std::size_t horizon);

/// Ωᵀ Φ̄
Vector state_mean(const MomentState& ms, const pce::PolyBasis& basis);

/// E[φ φᵀ] ≈ Φ W Φᵀ + [tr(W Γ_rc)]_rc, with Φ the n_x × (p+1) coefficient matrix.
Matrix state_second_moment(const MomentState& ms, const pce::PolyBasis& basis);

/// Second moment minus mean·meanᵀ, symmetrized, diagonal clamped at zero.
Matrix state_variance(const MomentState& ms, const pce::PolyBasis& basis);

}  // namespace smpc::moments
