#pragma once

// Generalized polynomial chaos bases for independent parameter marginals.
//
// Each marginal is mapped to a standardized variable s:
//   uniform(l, u), beta4(l, u, α, β):  θ = l + (u - l)(s + 1)/2,  s ∈ [-1, 1]
//   gaussian(μ, v):                    θ = μ + √v · s,             s ~ N(0, 1)
//   point(c):                          θ = c,                      s ≡ 0
// and paired with the Askey family orthogonal under that law: Legendre
// (standard normalization, P_k(1) = 1), probabilists' Hermite (monic He_k),
// or Jacobi P_k^(β-1, α-1) (standard normalization). All weights carry unit
// mass, so φ_0 ≡ 1 and ⟨φ_0²⟩ = 1.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "smpc/common.hpp"

namespace smpc::pce {

enum class DistributionKind { uniform, gaussian, beta4, point };

class MarginalDistribution {
public:
    static MarginalDistribution uniform(double lower, double upper);
    static MarginalDistribution gaussian(double mean, double variance);
    /// Four-parameter beta: support [lower, upper] with shape parameters α, β.
    static MarginalDistribution beta4(double lower, double upper, double shape_alpha, double shape_beta);
    /// Degenerate law; only admissible with a degree-0 basis in its dimension.
    static MarginalDistribution point(double value);

    DistributionKind kind() const { return kind_; }
    double lower() const { return p0_; }
    double upper() const { return p1_; }
    double shape_alpha() const { return p2_; }
    double shape_beta() const { return p3_; }
    /// Gaussian location / point value (p0) and Gaussian variance (p1).
    double location() const { return p0_; }
    double gaussian_variance() const { return p1_; }

    double mean() const;
    double variance() const;

    double to_physical(double s) const;
    double to_standard(double theta) const;

    bool operator==(const MarginalDistribution&) const = default;

private:
    MarginalDistribution(DistributionKind kind, double p0, double p1, double p2, double p3)
        : kind_(kind), p0_(p0), p1_(p1), p2_(p2), p3_(p3) {}

    DistributionKind kind_;
    double p0_;
    double p1_;
    double p2_;
    double p3_;
};

enum class FamilyKind { legendre, hermite, jacobi, constant };

/// Univariate orthogonal family in the standardized variable.
class OrthogonalFamily {
public:
    static OrthogonalFamily for_distribution(const MarginalDistribution& dist);

    FamilyKind kind() const { return kind_; }
    /// Jacobi weight (1 - s)^a (1 + s)^b.
    double jacobi_a() const { return a_; }
    double jacobi_b() const { return b_; }

    /// Monic recurrence p_{k+1} = (s - alpha_k) p_k - beta_k p_{k-1} for k < n; beta_0 = 1.
    void recurrence(std::size_t n, std::vector<double>& alpha, std::vector<double>& beta) const;

    /// Leading coefficient of φ_k, i.e. φ_k = scale(k) · p_k.
    double scale(std::size_t k) const;

    /// Values φ_0(s) … φ_max_degree(s).
    std::vector<double> evaluate(std::size_t max_degree, double s) const;

    /// ⟨φ_k²⟩ from the recurrence (closed form, for cross-checks).
    double analytic_norm(std::size_t k) const;

    std::size_t max_supported_degree() const;

private:
    OrthogonalFamily(FamilyKind kind, double a, double b) : kind_(kind), a_(a), b_(b) {}

    FamilyKind kind_;
    double a_;
    double b_;
};

struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// n-point Gauss rule of a family (Golub–Welsch on the Jacobi matrix).
GaussRule gauss_rule(const OrthogonalFamily& family, std::size_t n);

using MultiIndex = std::vector<int>;

/// Point of the full tensor grid, in physical coordinates.
struct QuadratureNode {
    std::vector<double> theta;
    std::vector<double> standard;
    double weight;
};

class PolyBasis {
public:
    std::size_t dimension() const { return distributions_.size(); }
    int max_degree() const { return max_degree_; }
    std::size_t size() const { return multi_indices_.size(); }

    const std::vector<MarginalDistribution>& distributions() const { return distributions_; }
    const std::vector<OrthogonalFamily>& families() const { return families_; }
    const std::vector<MultiIndex>& multi_indices() const { return multi_indices_; }
    const std::vector<double>& norms() const { return norms_; }
    /// Per-dimension rules in standardized coordinates.
    const std::vector<GaussRule>& quadrature() const { return rules_; }

    /// W = diag(⟨φ_0²⟩, …, ⟨φ_p²⟩)
    Matrix norm_matrix() const;

    std::vector<QuadratureNode> tensor_grid() const;

    /// Basis values at a physical parameter point.
    Vector evaluate(std::span<const double> theta) const;
    Vector evaluate_standard(std::span<const double> s) const;

    /// Basis values at many physical points; theta is dimension() × S, result size() × S.
    /// Uses the active SIMD kernel table.
    Matrix evaluate_batch(const Matrix& theta) const;

    /// Σ_k coeffs_k φ_k(θ)
    double evaluate_expansion(std::span<const double> coeffs, std::span<const double> theta) const;

    /// Per-dimension univariate triple products ⟨φ_a φ_b φ_c⟩, flattened (m+1)³.
    const std::vector<std::vector<double>>& univariate_triples() const { return triples_1d_; }

private:
    friend PolyBasis build_basis(std::vector<MarginalDistribution> dists, int max_degree);
    PolyBasis() = default;

    std::vector<MarginalDistribution> distributions_;
    std::vector<OrthogonalFamily> families_;
    int max_degree_ = 0;
    std::vector<MultiIndex> multi_indices_;
    std::vector<double> norms_;
    std::vector<GaussRule> rules_;
    std::vector<std::vector<double>> triples_1d_;
};

/// (n + m)! / (n! m!)
std::size_t term_count(std::size_t dimension, int max_degree);

/// Total-degree multi-indices in graded lexicographic order (constant first;
/// within a degree, larger leading exponents first).
std::vector<MultiIndex> graded_multi_indices(std::size_t dimension, int max_degree);

/// Node count per dimension that integrates all triple products exactly.
std::size_t quadrature_order(int max_degree);

PolyBasis build_basis(std::vector<MarginalDistribution> dists, int max_degree);

std::vector<double> basis_norms(const PolyBasis& basis);

class TripleProductTensor {
public:
    explicit TripleProductTensor(std::size_t terms);

    std::size_t size() const { return terms_; }
    /// σ_ijk = ⟨φ_i φ_j φ_k⟩ / ⟨φ_i²⟩
    double sigma(std::size_t i, std::size_t j, std::size_t k) const {
        return sigma_[(i * terms_ + j) * terms_ + k];
    }
    double& sigma(std::size_t i, std::size_t j, std::size_t k) { return sigma_[(i * terms_ + j) * terms_ + k]; }
    /// (Ψ_k)_ij = σ_ikj
    const Matrix& psi(std::size_t k) const { return psi_[k]; }

    void assemble_psi();

private:
    std::size_t terms_;
    std::vector<double> sigma_;
    std::vector<Matrix> psi_;
};

TripleProductTensor triple_products(const PolyBasis& basis);

using ScalarFunction = std::function<double(std::span<const double>)>;

/// a_k = ⟨f, φ_k⟩ / ⟨φ_k²⟩ by tensor-grid quadrature.
Vector project_function(const ScalarFunction& f, const PolyBasis& basis);

struct ExpansionMoments {
    double mean;
    double variance;
};

ExpansionMoments expansion_moments(std::span<const double> coeffs, std::span<const double> norms);

}  // namespace smpc::pce
