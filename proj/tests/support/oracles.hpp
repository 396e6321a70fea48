#pragma once

// Independent reference computations for the test suites. Nothing here calls
// the Galerkin, moment or controller code paths it is used to check.

#include <cstdint>
#include <vector>

#include "smpc/common.hpp"
#include "smpc/galerkin.hpp"

namespace oracle {

using smpc::Matrix;
using smpc::Vector;

// Values computed offline (scipy / closed form) and frozen.
namespace frozen {
inline constexpr double legendre4_nodes[] = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                                             0.8611363115940526};
inline constexpr double legendre4_weights[] = {0.1739274225687269, 0.3260725774312731, 0.3260725774312731,
                                               0.1739274225687269};
inline constexpr double hermite4_nodes[] = {-2.3344142183389773, -0.7419637843027259, 0.7419637843027259,
                                            2.3344142183389773};
inline constexpr double hermite4_weights[] = {0.04587585476806855, 0.4541241452319315, 0.4541241452319315,
                                              0.04587585476806855};
// Jacobi weight (1 - s)^4 (1 + s), i.e. beta4 shapes (2, 5).
inline constexpr double jacobi3_nodes[] = {-0.7781865074876556, -0.3133731347413366, 0.2733778240471742};
inline constexpr double jacobi3_weights[] = {0.37420462612798566, 0.5256898356399008, 0.10010553823211368};
inline constexpr double jacobi_norms[] = {1.0, 5.0 / 4.0, 9.0 / 7.0, 5.0 / 4.0, 25.0 / 21.0, 9.0 / 8.0};
inline constexpr double jacobi_sigma_112 = 7.0 / 5.0;
inline constexpr double jacobi_sigma_123 = 84.0 / 55.0;
inline constexpr double legendre_sigma_112 = 0.4;
inline constexpr double beta4_mean = 0.923 + 0.04 * 2.0 / 7.0;
inline constexpr double beta4_variance = 0.04 * 0.04 * 10.0 / (49.0 * 8.0);
inline constexpr double scalar_lyapunov_P = 1.1 / 0.75;
inline constexpr double scalar_dare_P = 1.1327822185373184;
inline constexpr double scalar_dare_K = -0.26556443707463734;
}  // namespace frozen

/// Linearized reactor used across the suites (θ_1 in the (1,1) entry of A).
smpc::galerkin::UncertainLinearSystem reactor_system();

/// Scalar x⁺ = a x + b u + w with the given parameter law on a (A = θ).
smpc::galerkin::UncertainLinearSystem scalar_system(const smpc::pce::MarginalDistribution& a_law, double b,
                                                    double noise_variance);

/// Deterministic system with fixed matrices and optional noise.
smpc::galerkin::UncertainLinearSystem fixed_system(const Matrix& A, const Matrix& B, const Matrix& Sigma);

struct QpSolution {
    bool feasible = false;
    Vector z;
    double objective = 0.0;
};

/// Minimizer of ½zᵀHz + fᵀz s.t. Az ≤ b by enumerating every active set.
QpSolution enumerate_active_sets(const Matrix& H, const Vector& f, const Matrix& A, const Vector& b);

/// Open-loop LQ optimum Σ_{i<N} ‖x_i‖²_Q + ‖u_i‖²_R + ‖x_N‖²_S as a dense least-squares problem.
Vector lq_open_loop(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R, const Matrix& S,
                    const Vector& x0, std::size_t N);

/// First input of the same problem from the backward Riccati recursion.
Vector riccati_first_input(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R, const Matrix& S,
                           const Vector& x0, std::size_t N);

struct SampleMoments {
    std::vector<Vector> mean;
    std::vector<Vector> variance;
    std::vector<Vector> mean_se;
    std::vector<Vector> variance_se;
    double stage_cost = 0.0;
    double stage_cost_se = 0.0;
};

/// Plain loops over sampled (θ, w) trajectories of x⁺ = A(θ)x + B(θ)(g_i + L_i x) + Fw.
SampleMoments brute_force(const smpc::galerkin::UncertainLinearSystem& sys, const Vector& x0,
                          const smpc::Policy& policy, std::size_t stages, std::size_t samples, std::uint64_t seed,
                          const Matrix& Q = {}, const Matrix& R = {});

/// E_w[‖Φ_N(w)‖²_S] where Φ_N(w) projects θ ↦ x_N(θ, w) onto a single-parameter basis by
/// high-order quadrature; also returns its standard error.
std::pair<double, double> terminal_term(const smpc::galerkin::UncertainLinearSystem& sys, const Vector& x0,
                                        const smpc::Policy& policy, std::size_t N, const Matrix& S, int max_degree,
                                        std::size_t samples, std::uint64_t seed);

}  // namespace oracle
