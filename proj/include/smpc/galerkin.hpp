#pragma once

// Galerkin projection of x⁺ = A(θ)x + B(θ)u + Fw onto a gPC basis.
//
// Lifted vectors are ordered state-major: entry r·(p+1) + k holds the k-th
// expansion coefficient of state r.

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "smpc/common.hpp"
#include "smpc/pce.hpp"

namespace smpc {

/// Horizon-indexed affine laws u_i = g_i + L_i x_i.
struct Policy {
    std::vector<Matrix> gains;    // L_i, n_u × n_x
    std::vector<Vector> offsets;  // g_i, n_u

    std::size_t horizon() const { return gains.size(); }

    static Policy constant_gain(std::size_t horizon, const Matrix& gain);
    static Policy zero(std::size_t horizon, std::size_t n_u, std::size_t n_x);
};

}  // namespace smpc

namespace smpc::galerkin {

struct Monomial {
    pce::MultiIndex exponents;
    double coefficient;

    bool operator==(const Monomial&) const = default;
};

/// Sparse polynomial in the physical parameters θ.
class Polynomial {
public:
    Polynomial() = default;
    explicit Polynomial(std::vector<Monomial> terms) : terms_(std::move(terms)) {}
    static Polynomial constant(double value, std::size_t dimension);

    const std::vector<Monomial>& terms() const { return terms_; }
    double evaluate(std::span<const double> theta) const;
    int total_degree() const;
    bool is_constant() const { return total_degree() <= 0; }

    bool operator==(const Polynomial&) const = default;

private:
    std::vector<Monomial> terms_;
};

class PolynomialMatrix {
public:
    PolynomialMatrix() = default;
    PolynomialMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), entries_(rows * cols) {}
    static PolynomialMatrix constant(const Matrix& value, std::size_t dimension);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    Polynomial& operator()(std::size_t r, std::size_t c) { return entries_[r * cols_ + c]; }
    const Polynomial& operator()(std::size_t r, std::size_t c) const { return entries_[r * cols_ + c]; }

    Matrix evaluate(std::span<const double> theta) const;
    int total_degree() const;

    bool operator==(const PolynomialMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<Polynomial> entries_;
};

struct UncertainLinearSystem {
    std::size_t n_x = 0;
    std::size_t n_u = 0;
    std::size_t n_w = 0;
    PolynomialMatrix A;
    PolynomialMatrix B;
    Matrix F;
    Matrix Sigma;
    std::vector<pce::MarginalDistribution> theta_dists;

    /// Shape, symmetry and PSD checks; throws DimensionError / ParameterError.
    void validate() const;

    /// A(E[θ]), B(E[θ])
    Matrix mean_A() const;
    Matrix mean_B() const;
};

struct GpcDynamics {
    std::shared_ptr<const pce::PolyBasis> basis;
    std::shared_ptr<const pce::TripleProductTensor> triples;
    std::size_t n_x = 0;
    std::size_t n_u = 0;
    std::size_t n_w = 0;
    std::vector<Matrix> A_k;
    std::vector<Matrix> B_k;
    Matrix bigA;  // n × n
    Matrix bigB;  // n × r
    Matrix bigF;  // n × n_w
    Matrix Sigma;

    std::size_t terms() const { return basis->size(); }
    std::size_t lifted_states() const { return n_x * terms(); }
    std::size_t lifted_inputs() const { return n_u * terms(); }
};

struct LiftedPolicy {
    std::vector<Matrix> bigL;  // L_i ⊗ I_{p+1}
    std::vector<Vector> bigg;  // g_i ⊗ e_{p+1}

    std::size_t horizon() const { return bigL.size(); }
};

GpcDynamics project_system(const UncertainLinearSystem& sys, const pce::PolyBasis& basis);

/// x ⊗ e_{p+1}
Vector lift_state(const Vector& x, std::size_t terms);

LiftedPolicy lift_policy(const Policy& policy, std::size_t terms);

/// I_a ⊗ e_{p+1}, the map from physical vectors to their constant coefficients (Ω for a = n_x).
Matrix constant_embedding(std::size_t a, std::size_t terms);

}  // namespace smpc::galerkin
