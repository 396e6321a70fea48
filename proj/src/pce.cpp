#include "smpc/pce.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>

#include "smpc/kernels.hpp"

namespace smpc::pce {

// ---------------------------------------------------------------------------
// Marginals

MarginalDistribution MarginalDistribution::uniform(double lower, double upper) {
    if (!(std::isfinite(lower) && std::isfinite(upper)) || !(lower < upper)) {
        throw ParameterError("uniform distribution requires finite lower < upper");
    }
    return {DistributionKind::uniform, lower, upper, 0.0, 0.0};
}

MarginalDistribution MarginalDistribution::gaussian(double mean, double variance) {
    if (!std::isfinite(mean) || !std::isfinite(variance) || !(variance > 0.0)) {
        throw ParameterError("gaussian distribution requires finite mean and variance > 0");
    }
    return {DistributionKind::gaussian, mean, variance, 0.0, 0.0};
}

MarginalDistribution MarginalDistribution::beta4(double lower, double upper, double shape_alpha,
                                                 double shape_beta) {
    if (!(std::isfinite(lower) && std::isfinite(upper)) || !(lower < upper)) {
        throw ParameterError("beta4 distribution requires finite support_lower < support_upper");
    }
    if (!(shape_alpha > 0.0) || !(shape_beta > 0.0) || !std::isfinite(shape_alpha) ||
        !std::isfinite(shape_beta)) {
        throw ParameterError("beta4 distribution requires shape_alpha > 0 and shape_beta > 0");
    }
    return {DistributionKind::beta4, lower, upper, shape_alpha, shape_beta};
}

MarginalDistribution MarginalDistribution::point(double value) {
    if (!std::isfinite(value)) throw ParameterError("point distribution requires a finite value");
    return {DistributionKind::point, value, 0.0, 0.0, 0.0};
}

double MarginalDistribution::mean() const {
    switch (kind_) {
        case DistributionKind::uniform: return 0.5 * (p0_ + p1_);
        case DistributionKind::gaussian: return p0_;
        case DistributionKind::beta4: return p0_ + (p1_ - p0_) * p2_ / (p2_ + p3_);
        case DistributionKind::point: return p0_;
    }
    return 0.0;
}

double MarginalDistribution::variance() const {
    switch (kind_) {
        case DistributionKind::uniform: return (p1_ - p0_) * (p1_ - p0_) / 12.0;
        case DistributionKind::gaussian: return p1_;
        case DistributionKind::beta4: {
            const double ab = p2_ + p3_;
            const double width = p1_ - p0_;
            return width * width * p2_ * p3_ / (ab * ab * (ab + 1.0));
        }
        case DistributionKind::point: return 0.0;
    }
    return 0.0;
}

double MarginalDistribution::to_physical(double s) const {
    switch (kind_) {
        case DistributionKind::uniform:
        case DistributionKind::beta4: return p0_ + (p1_ - p0_) * 0.5 * (s + 1.0);
        case DistributionKind::gaussian: return p0_ + std::sqrt(p1_) * s;
        case DistributionKind::point: return p0_;
    }
    return 0.0;
}

double MarginalDistribution::to_standard(double theta) const {
    switch (kind_) {
        case DistributionKind::uniform:
        case DistributionKind::beta4: return 2.0 * (theta - p0_) / (p1_ - p0_) - 1.0;
        case DistributionKind::gaussian: return (theta - p0_) / std::sqrt(p1_);
        case DistributionKind::point: return 0.0;
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// Univariate families

OrthogonalFamily OrthogonalFamily::for_distribution(const MarginalDistribution& dist) {
    switch (dist.kind()) {
        case DistributionKind::uniform: return {FamilyKind::legendre, 0.0, 0.0};
        case DistributionKind::gaussian: return {FamilyKind::hermite, 0.0, 0.0};
        case DistributionKind::beta4:
            return {FamilyKind::jacobi, dist.shape_beta() - 1.0, dist.shape_alpha() - 1.0};
        case DistributionKind::point: return {FamilyKind::constant, 0.0, 0.0};
    }
    return {FamilyKind::constant, 0.0, 0.0};
}

std::size_t OrthogonalFamily::max_supported_degree() const {
    return kind_ == FamilyKind::constant ? 0 : static_cast<std::size_t>(-1);
}

void OrthogonalFamily::recurrence(std::size_t n, std::vector<double>& alpha, std::vector<double>& beta) const {
    alpha.assign(n, 0.0);
    beta.assign(n, 0.0);
    if (n == 0) return;
    beta[0] = 1.0;
    switch (kind_) {
        case FamilyKind::constant: return;
        case FamilyKind::hermite:
            for (std::size_t k = 1; k < n; ++k) beta[k] = static_cast<double>(k);
            return;
        case FamilyKind::legendre:
            for (std::size_t k = 1; k < n; ++k) {
                const double kk = static_cast<double>(k);
                beta[k] = kk * kk / (4.0 * kk * kk - 1.0);
            }
            return;
        case FamilyKind::jacobi: {
            const double a = a_;
            const double b = b_;
            const double ab = a + b;
            alpha[0] = (b - a) / (ab + 2.0);
            for (std::size_t k = 1; k < n; ++k) {
                const double kk = static_cast<double>(k);
                const double s = 2.0 * kk + ab;
                alpha[k] = (b * b - a * a) / (s * (s + 2.0));
                if (k == 1) {
                    beta[k] = 4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab) * (2.0 + ab) * (3.0 + ab));
                } else {
                    beta[k] = 4.0 * kk * (kk + a) * (kk + b) * (kk + ab) / (s * s * (s + 1.0) * (s - 1.0));
                }
            }
            return;
        }
    }
}

double OrthogonalFamily::scale(std::size_t k) const {
    if (k == 0) return 1.0;
    switch (kind_) {
        case FamilyKind::hermite:
        case FamilyKind::constant: return 1.0;
        case FamilyKind::legendre:
        case FamilyKind::jacobi: {
            // Γ(2k+a+b+1) / (2^k k! Γ(k+a+b+1))
            const double kk = static_cast<double>(k);
            const double ab = a_ + b_;
            const double log_c = std::lgamma(2.0 * kk + ab + 1.0) - kk * std::log(2.0) - std::lgamma(kk + 1.0) -
                                 std::lgamma(kk + ab + 1.0);
            return std::exp(log_c);
        }
    }
    return 1.0;
}

std::vector<double> OrthogonalFamily::evaluate(std::size_t max_degree, double s) const {
    std::vector<double> alpha;
    std::vector<double> beta;
    recurrence(max_degree + 1, alpha, beta);
    std::vector<double> out(max_degree + 1, 0.0);
    double prev = 0.0;
    double cur = 1.0;
    out[0] = 1.0;
    for (std::size_t k = 0; k < max_degree; ++k) {
        const double next = (s - alpha[k]) * cur - (k == 0 ? 0.0 : beta[k] * prev);
        prev = cur;
        cur = next;
        out[k + 1] = scale(k + 1) * cur;
    }
    return out;
}

double OrthogonalFamily::analytic_norm(std::size_t k) const {
    std::vector<double> alpha;
    std::vector<double> beta;
    recurrence(k + 1, alpha, beta);
    double norm = 1.0;
    for (std::size_t j = 1; j <= k; ++j) norm *= beta[j];
    const double c = scale(k);
    return c * c * norm;
}

GaussRule gauss_rule(const OrthogonalFamily& family, std::size_t n) {
    if (n == 0) throw ParameterError("gauss_rule requires at least one node");
    if (family.kind() == FamilyKind::constant) return {{0.0}, {1.0}};
    std::vector<double> alpha;
    std::vector<double> beta;
    family.recurrence(n, alpha, beta);
    Vector diag(static_cast<Eigen::Index>(n));
    Vector sub(static_cast<Eigen::Index>(n > 1 ? n - 1 : 0));
    for (std::size_t k = 0; k < n; ++k) diag(static_cast<Eigen::Index>(k)) = alpha[k];
    for (std::size_t k = 1; k < n; ++k) sub(static_cast<Eigen::Index>(k - 1)) = std::sqrt(beta[k]);

    GaussRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    if (n == 1) {
        rule.nodes[0] = alpha[0];
        rule.weights[0] = 1.0;
        return rule;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> solver;
    solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success) throw ConditioningError("Golub-Welsch eigen decomposition failed");
    for (std::size_t k = 0; k < n; ++k) {
        const auto idx = static_cast<Eigen::Index>(k);
        rule.nodes[k] = solver.eigenvalues()(idx);
        const double v0 = solver.eigenvectors()(0, idx);
        rule.weights[k] = v0 * v0;
    }
    return rule;
}

// ---------------------------------------------------------------------------
// Multivariate basis

std::size_t term_count(std::size_t dimension, int max_degree) {
    // C(n + m, m) computed incrementally to stay exact for the sizes in use.
    std::size_t result = 1;
    for (int k = 1; k <= max_degree; ++k) {
        result = result * (dimension + static_cast<std::size_t>(k)) / static_cast<std::size_t>(k);
    }
    return result;
}

namespace {

void append_with_degree(std::size_t dim, int remaining, MultiIndex& prefix, std::vector<MultiIndex>& out) {
    if (prefix.size() + 1 == dim) {
        prefix.push_back(remaining);
        out.push_back(prefix);
        prefix.pop_back();
        return;
    }
    for (int first = remaining; first >= 0; --first) {
        prefix.push_back(first);
        append_with_degree(dim, remaining - first, prefix, out);
        prefix.pop_back();
    }
}

}  // namespace

std::vector<MultiIndex> graded_multi_indices(std::size_t dimension, int max_degree) {
    std::vector<MultiIndex> out;
    MultiIndex prefix;
    for (int d = 0; d <= max_degree; ++d) append_with_degree(dimension, d, prefix, out);
    return out;
}

std::size_t quadrature_order(int max_degree) {
    // ⌈(3m + 2) / 2⌉
    return static_cast<std::size_t>((3 * max_degree + 3) / 2);
}

PolyBasis build_basis(std::vector<MarginalDistribution> dists, int max_degree) {
    if (dists.empty()) throw ParameterError("build_basis requires at least one distribution");
    if (max_degree < 0) throw ParameterError("build_basis requires max_degree >= 0");

    PolyBasis basis;
    basis.max_degree_ = max_degree;
    basis.distributions_ = std::move(dists);
    const auto m = static_cast<std::size_t>(max_degree);
    const std::size_t nodes = quadrature_order(max_degree);
    for (const auto& dist : basis.distributions_) {
        OrthogonalFamily family = OrthogonalFamily::for_distribution(dist);
        if (family.max_supported_degree() < m) {
            throw ParameterError("point-mass parameters only admit a degree-0 basis (max_degree = 0)");
        }
        basis.families_.push_back(family);
        basis.rules_.push_back(gauss_rule(family, family.kind() == FamilyKind::constant ? 1 : nodes));
    }

    basis.multi_indices_ = graded_multi_indices(basis.dimension(), max_degree);

    // Univariate norms and triple products under each stored rule; the tensor
    // grid factorizes, so products of these equal full-grid sums.
    std::vector<std::vector<double>> norms_1d;
    for (std::size_t d = 0; d < basis.dimension(); ++d) {
        const auto& rule = basis.rules_[d];
        const auto& family = basis.families_[d];
        std::vector<std::vector<double>> values;
        values.reserve(rule.nodes.size());
        for (double s : rule.nodes) values.push_back(family.evaluate(m, s));

        std::vector<double> norms(m + 1, 0.0);
        std::vector<double> triples((m + 1) * (m + 1) * (m + 1), 0.0);
        for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
            const double w = rule.weights[q];
            const auto& v = values[q];
            for (std::size_t a = 0; a <= m; ++a) {
                norms[a] += w * v[a] * v[a];
                for (std::size_t b = 0; b <= m; ++b) {
                    const double wab = w * v[a] * v[b];
                    for (std::size_t c = 0; c <= m; ++c) triples[(a * (m + 1) + b) * (m + 1) + c] += wab * v[c];
                }
            }
        }
        // φ_0 ≡ 1 under a probability measure: pin the exact entries.
        norms[0] = 1.0;
        for (std::size_t a = 0; a <= m; ++a) {
            for (std::size_t b = 0; b <= m; ++b) {
                const double exact = a == b ? norms[a] : 0.0;
                triples[(0 * (m + 1) + a) * (m + 1) + b] = exact;
                triples[(a * (m + 1) + 0) * (m + 1) + b] = exact;
                triples[(a * (m + 1) + b) * (m + 1) + 0] = exact;
            }
        }
        norms_1d.push_back(std::move(norms));
        basis.triples_1d_.push_back(std::move(triples));
    }

    basis.norms_.resize(basis.size());
    for (std::size_t k = 0; k < basis.size(); ++k) {
        double norm = 1.0;
        for (std::size_t d = 0; d < basis.dimension(); ++d) {
            norm *= norms_1d[d][static_cast<std::size_t>(basis.multi_indices_[k][d])];
        }
        basis.norms_[k] = norm;
    }
    return basis;
}

Matrix PolyBasis::norm_matrix() const {
    Matrix w = Matrix::Zero(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(size()));
    for (std::size_t k = 0; k < size(); ++k) w(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = norms_[k];
    return w;
}

std::vector<QuadratureNode> PolyBasis::tensor_grid() const {
    std::vector<QuadratureNode> grid{{{}, {}, 1.0}};
    for (std::size_t d = 0; d < dimension(); ++d) {
        std::vector<QuadratureNode> next;
        next.reserve(grid.size() * rules_[d].nodes.size());
        for (const auto& node : grid) {
            for (std::size_t q = 0; q < rules_[d].nodes.size(); ++q) {
                QuadratureNode extended = node;
                extended.standard.push_back(rules_[d].nodes[q]);
                extended.theta.push_back(distributions_[d].to_physical(rules_[d].nodes[q]));
                extended.weight *= rules_[d].weights[q];
                next.push_back(std::move(extended));
            }
        }
        grid = std::move(next);
    }
    return grid;
}

Vector PolyBasis::evaluate_standard(std::span<const double> s) const {
    if (s.size() != dimension()) throw DimensionError("basis evaluation point has wrong dimension");
    const auto m = static_cast<std::size_t>(max_degree_);
    std::vector<std::vector<double>> uni;
    uni.reserve(dimension());
    for (std::size_t d = 0; d < dimension(); ++d) uni.push_back(families_[d].evaluate(m, s[d]));
    Vector out(static_cast<Eigen::Index>(size()));
    for (std::size_t k = 0; k < size(); ++k) {
        double v = 1.0;
        for (std::size_t d = 0; d < dimension(); ++d) v *= uni[d][static_cast<std::size_t>(multi_indices_[k][d])];
        out(static_cast<Eigen::Index>(k)) = v;
    }
    return out;
}

Vector PolyBasis::evaluate(std::span<const double> theta) const {
    if (theta.size() != dimension()) throw DimensionError("basis evaluation point has wrong dimension");
    std::vector<double> s(dimension());
    for (std::size_t d = 0; d < dimension(); ++d) s[d] = distributions_[d].to_standard(theta[d]);
    return evaluate_standard(s);
}

Matrix PolyBasis::evaluate_batch(const Matrix& theta) const {
    if (static_cast<std::size_t>(theta.rows()) != dimension()) {
        throw DimensionError("batched basis evaluation expects dimension() rows");
    }
    const auto samples = static_cast<std::size_t>(theta.cols());
    const auto m = static_cast<std::size_t>(max_degree_);
    const auto& k = kernels::active();

    // uni[d] is (m+1) × S, stored row-major so each degree is contiguous.
    std::vector<std::vector<double>> uni(dimension(), std::vector<double>((m + 1) * samples, 0.0));
    std::vector<double> s(samples);
    std::vector<double> alpha;
    std::vector<double> beta;
    for (std::size_t d = 0; d < dimension(); ++d) {
        for (std::size_t j = 0; j < samples; ++j) {
            s[j] = distributions_[d].to_standard(theta(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j)));
        }
        families_[d].recurrence(m + 1, alpha, beta);
        auto row = [&](std::size_t deg) { return uni[d].data() + deg * samples; };
        std::fill(row(0), row(0) + samples, 1.0);
        // Monic values first; rescaled below.
        for (std::size_t deg = 0; deg < m; ++deg) {
            double* next = row(deg + 1);
            k.axpy(-alpha[deg], row(deg), next, samples);
            if (deg > 0) k.axpy(-beta[deg], row(deg - 1), next, samples);
            k.fma_elementwise(s.data(), row(deg), next, samples);
        }
        for (std::size_t deg = 1; deg <= m; ++deg) {
            const double c = families_[d].scale(deg);
            double* r = row(deg);
            for (std::size_t j = 0; j < samples; ++j) r[j] *= c;
        }
    }

    Matrix out(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(samples));
    std::vector<double> acc(samples);
    std::vector<double> tmp(samples);
    for (std::size_t term = 0; term < size(); ++term) {
        const auto& alpha_idx = multi_indices_[term];
        const double* first = uni[0].data() + static_cast<std::size_t>(alpha_idx[0]) * samples;
        std::copy(first, first + samples, acc.begin());
        for (std::size_t d = 1; d < dimension(); ++d) {
            std::fill(tmp.begin(), tmp.end(), 0.0);
            k.fma_elementwise(acc.data(), uni[d].data() + static_cast<std::size_t>(alpha_idx[d]) * samples, tmp.data(),
                              samples);
            acc.swap(tmp);
        }
        for (std::size_t j = 0; j < samples; ++j) {
            out(static_cast<Eigen::Index>(term), static_cast<Eigen::Index>(j)) = acc[j];
        }
    }
    return out;
}

double PolyBasis::evaluate_expansion(std::span<const double> coeffs, std::span<const double> theta) const {
    if (coeffs.size() != size()) throw DimensionError("expansion coefficient count does not match basis size");
    const Vector phi = evaluate(theta);
    double v = 0.0;
    for (std::size_t k = 0; k < size(); ++k) v += coeffs[k] * phi(static_cast<Eigen::Index>(k));
    return v;
}

std::vector<double> basis_norms(const PolyBasis& basis) { return basis.norms(); }

// ---------------------------------------------------------------------------
// Triple products

TripleProductTensor::TripleProductTensor(std::size_t terms) : terms_(terms), sigma_(terms * terms * terms, 0.0) {}

void TripleProductTensor::assemble_psi() {
    const auto n = static_cast<Eigen::Index>(terms_);
    psi_.assign(terms_, Matrix::Zero(n, n));
    for (std::size_t k = 0; k < terms_; ++k) {
        for (std::size_t i = 0; i < terms_; ++i) {
            for (std::size_t j = 0; j < terms_; ++j) {
                psi_[k](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = sigma(i, k, j);
            }
        }
    }
}

TripleProductTensor triple_products(const PolyBasis& basis) {
    const std::size_t p1 = basis.size();
    const auto m1 = static_cast<std::size_t>(basis.max_degree()) + 1;
    const auto& idx = basis.multi_indices();
    TripleProductTensor tensor(p1);
    for (std::size_t i = 0; i < p1; ++i) {
        for (std::size_t j = 0; j < p1; ++j) {
            for (std::size_t k = 0; k < p1; ++k) {
                double v = 1.0;
                for (std::size_t d = 0; d < basis.dimension() && v != 0.0; ++d) {
                    const auto a = static_cast<std::size_t>(idx[i][d]);
                    const auto b = static_cast<std::size_t>(idx[j][d]);
                    const auto c = static_cast<std::size_t>(idx[k][d]);
                    v *= basis.univariate_triples()[d][(a * m1 + b) * m1 + c];
                }
                tensor.sigma(i, j, k) = v / basis.norms()[i];
            }
        }
    }
    tensor.assemble_psi();
    return tensor;
}

// ---------------------------------------------------------------------------
// Projection and moments

Vector project_function(const ScalarFunction& f, const PolyBasis& basis) {
    Vector a = Vector::Zero(static_cast<Eigen::Index>(basis.size()));
    for (const auto& node : basis.tensor_grid()) {
        const double value = f(node.theta);
        if (!std::isfinite(value)) {
            throw EvaluationError("project_function: non-finite function value at a quadrature node");
        }
        a += (node.weight * value) * basis.evaluate_standard(node.standard);
    }
    for (std::size_t k = 0; k < basis.size(); ++k) a(static_cast<Eigen::Index>(k)) /= basis.norms()[k];
    return a;
}

ExpansionMoments expansion_moments(std::span<const double> coeffs, std::span<const double> norms) {
    if (coeffs.size() != norms.size() || coeffs.empty()) {
        throw DimensionError("expansion_moments: coefficient and norm lengths differ");
    }
    // Second moment minus mean², grouped so the a_0² terms cancel exactly.
    const double mean = coeffs[0];
    double variance = mean * mean * (norms[0] - 1.0);
    for (std::size_t k = 1; k < coeffs.size(); ++k) variance += coeffs[k] * coeffs[k] * norms[k];
    return {mean, variance};
}

}  // namespace smpc::pce
