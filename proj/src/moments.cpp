#include "smpc/moments.hpp"

#include <algorithm>
#include <string>

namespace smpc::moments {

MomentState MomentState::observed(const Vector& x, std::size_t terms) {
    const Vector mean = galerkin::lift_state(x, terms);
    return {mean, Matrix::Zero(mean.size(), mean.size())};
}

MomentTrajectory propagate(const galerkin::GpcDynamics& dyn, const galerkin::LiftedPolicy& lifted,
                           const MomentState& init, std::size_t horizon) {
    const auto n = static_cast<Eigen::Index>(dyn.lifted_states());
    if (init.mean.size() != n || init.cov.rows() != n || init.cov.cols() != n) {
        throw DimensionError("initial moment state does not match the lifted dimension");
    }
    if (lifted.horizon() < horizon) {
        throw DimensionError("policy horizon " + std::to_string(lifted.horizon()) + " shorter than " +
                             std::to_string(horizon));
    }
    const Matrix noise = dyn.bigF * dyn.Sigma * dyn.bigF.transpose();

    MomentTrajectory traj;
    traj.reserve(horizon + 1);
    traj.push_back(init);
    for (std::size_t i = 0; i < horizon; ++i) {
        const Matrix closed = dyn.bigA + dyn.bigB * lifted.bigL[i];
        const MomentState& cur = traj.back();
        MomentState next;
        next.mean = closed * cur.mean + dyn.bigB * lifted.bigg[i];
        next.cov = symmetrized(closed * cur.cov * closed.transpose() + noise);
        traj.push_back(std::move(next));
    }
    return traj;
}

namespace {

// n_x × (p+1) view of a lifted vector.
Matrix coefficient_matrix(const Vector& lifted, std::size_t terms) {
    const auto p1 = static_cast<Eigen::Index>(terms);
    const Eigen::Index nx = lifted.size() / p1;
    Matrix out(nx, p1);
    for (Eigen::Index r = 0; r < nx; ++r) out.row(r) = lifted.segment(r * p1, p1).transpose();
    return out;
}

}  // namespace

Vector state_mean(const MomentState& ms, const pce::PolyBasis& basis) {
    const auto p1 = static_cast<Eigen::Index>(basis.size());
    const Eigen::Index nx = ms.mean.size() / p1;
    Vector out(nx);
    for (Eigen::Index r = 0; r < nx; ++r) out(r) = ms.mean(r * p1);
    return out;
}

Matrix state_second_moment(const MomentState& ms, const pce::PolyBasis& basis) {
    const auto p1 = static_cast<Eigen::Index>(basis.size());
    const Eigen::Index nx = ms.mean.size() / p1;
    Eigen::Map<const Vector> w(basis.norms().data(), p1);

    const Matrix phi = coefficient_matrix(ms.mean, basis.size());
    Matrix out = phi * w.asDiagonal() * phi.transpose();
    for (Eigen::Index r = 0; r < nx; ++r) {
        for (Eigen::Index c = 0; c < nx; ++c) {
            out(r, c) += ms.cov.block(r * p1, c * p1, p1, p1).diagonal().dot(w);
        }
    }
    return symmetrized(out);
}

Matrix state_variance(const MomentState& ms, const pce::PolyBasis& basis) {
    // Same as second moment minus mean·meanᵀ, but with the constant-term
    // products cancelled analytically rather than in floating point.
    const auto p1 = static_cast<Eigen::Index>(basis.size());
    const Eigen::Index nx = ms.mean.size() / p1;
    Eigen::Map<const Vector> w(basis.norms().data(), p1);
    const Matrix phi = coefficient_matrix(ms.mean, basis.size());
    const Vector mean = phi.col(0);
    Matrix var = (w(0) - 1.0) * mean * mean.transpose();
    if (p1 > 1) {
        const Matrix hi = phi.rightCols(p1 - 1);
        var += hi * w.tail(p1 - 1).asDiagonal() * hi.transpose();
    }
    for (Eigen::Index r = 0; r < nx; ++r) {
        for (Eigen::Index c = 0; c < nx; ++c) var(r, c) += ms.cov.block(r * p1, c * p1, p1, p1).diagonal().dot(w);
    }
    var = symmetrized(var);
    for (Eigen::Index r = 0; r < var.rows(); ++r) var(r, r) = std::max(var(r, r), 0.0);
    return var;
}

}  // namespace smpc::moments
