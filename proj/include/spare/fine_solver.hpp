#pragma once

#include <chrono>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "spare/energy.hpp"
#include "spare/linear_solver.hpp"
#include "spare/rotation.hpp"
#include "spare/spatial_index.hpp"
#include "spare/variants.hpp"

namespace spare {

struct FineSolverConfig {
    int max_iters = 30;
    double tol = 1e-4;
    /// sigma <= 0 in `weights` means "median initial closest-point distance".
    EnergyWeights weights{200.0, 0.0, 0.0};
    MetricKind metric = MetricKind::SP2P;
    WeightSettings weighting{};
    /// Proximal diagonal guard added to every position system.
    double regularization = 1e-10;
};

/// One row of a solver iteration log.
struct IterationRecord {
    int iter = 0;
    double energy = 0.0;
    double displacement = 0.0;
    double alpha_mean = 0.0;
    double seconds = 0.0;
};

using IterationObserver = std::function<void(int iter, const DeformationState& state)>;

struct FineResult {
    DeformationState state;
    std::vector<IterationRecord> log;
    double sigma = 0.0;
    bool converged = false;
};

/// Closest target point for every deformed source point, and the pair weight
/// evaluated at the current (pre-update) deformed position and normal.
inline CorrespondenceSet update_correspondences(const DeformationState& state, const Surface& target,
                                                const SpatialIndex& target_index, double sigma,
                                                const WeightSettings& weighting = {},
                                                MetricKind metric = MetricKind::SP2P) {
    CorrespondenceSet corr;
    const std::size_t n = state.positions.size();
    corr.target.resize(n);
    corr.weight.resize(n);
    for (Index i = 0; i < n; ++i) {
        const Index t = target_index.nearest(state.positions[i]);
        corr.target[i] = t;
        corr.weight[i] = pair_weight(weighting, metric, state.positions[i], state.normals[i], target.points()[t],
                                     target.normals()[t], sigma);
    }
    return corr;
}

/// Normal equations of the position subproblem (rotations, correspondences and
/// weights fixed), before the proximal guard.
struct PositionSystem {
    SparseMatrix matrix;
    Eigen::VectorXd rhs;
    /// Positions the proximal guard pulls towards (the current iterate).
    Eigen::VectorXd anchor;
    double regularization = 0.0;
};

inline PositionSystem assemble_position_system(const Surface& source, const Surface& target,
                                               const CorrespondenceSet& corr, const DeformationState& state,
                                               const EnergyWeights& weights, std::span<const Landmark> landmarks = {},
                                               MetricKind metric = MetricKind::SP2P, double regularization = 1e-10) {
    const std::size_t n = source.size();
    const auto dim = static_cast<Eigen::Index>(3 * n);
    const double inv_n = n ? 1.0 / static_cast<double>(n) : 0.0;
    const double arap_scale =
        source.edges().empty() ? 0.0 : weights.w_arap / (2.0 * static_cast<double>(source.edges().size()));

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(9 * n + 12 * source.edges().size());
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);

    // Alignment rows: full 3x3 diagonal blocks so the pattern never depends on weights.
    for (Index i = 0; i < n; ++i) {
        const Index t = corr.target[i];
        const MetricRows rows =
            metric_rows(metric, state.rotations[i] * source.normals()[i], target.points()[t], target.normals()[t],
                        corr.weight[i]);
        Mat3 block = Mat3::Zero();
        Vec3 b = Vec3::Zero();
        for (int r = 0; r < rows.count; ++r) {
            block += rows.rows[r].coef * rows.rows[r].coef.transpose();
            b += rows.rows[r].coef * rows.rows[r].rhs;
        }
        block *= inv_n;
        const auto base = static_cast<Eigen::Index>(3 * i);
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) triplets.emplace_back(base + r, base + c, block(r, c));
        }
        rhs.segment<3>(base) += inv_n * b;
    }

    // ARAP: residual (v^_i - v^_j) - R_i (v_i - v_j), scaled by 1/sqrt(|N(i)|).
    const Points& v = source.points();
    for (Index i = 0; i < n; ++i) {
        const auto nbrs = source.neighbors(i);
        if (nbrs.empty()) continue;
        const double c = arap_scale / static_cast<double>(nbrs.size());
        const auto bi = static_cast<Eigen::Index>(3 * i);
        for (Index j : nbrs) {
            const auto bj = static_cast<Eigen::Index>(3 * j);
            const Vec3 y = state.rotations[i] * (v[i] - v[j]);
            for (int k = 0; k < 3; ++k) {
                triplets.emplace_back(bi + k, bi + k, c);
                triplets.emplace_back(bj + k, bj + k, c);
                triplets.emplace_back(bi + k, bj + k, -c);
                triplets.emplace_back(bj + k, bi + k, -c);
            }
            rhs.segment<3>(bi) += c * y;
            rhs.segment<3>(bj) -= c * y;
        }
    }

    for (const Landmark& l : landmarks) {
        if (l.source >= n) throw InputError("landmark index out of range");
        const auto base = static_cast<Eigen::Index>(3 * l.source);
        for (int k = 0; k < 3; ++k) triplets.emplace_back(base + k, base + k, weights.w_landmark);
        rhs.segment<3>(base) += weights.w_landmark * l.target;
    }

    PositionSystem system;
    system.matrix.resize(dim, dim);
    system.matrix.setFromTriplets(triplets.begin(), triplets.end());
    system.matrix.makeCompressed();
    system.rhs = std::move(rhs);
    system.anchor = stack_points(state.positions);
    system.regularization = regularization;
    return system;
}

inline Points solve_positions(const PositionSystem& system, CachedCholesky& solver) {
    SparseMatrix a = system.matrix;
    Eigen::VectorXd b = system.rhs;
    add_proximal_term(a, b, system.anchor, system.regularization);
    return unstack_points(solver.solve(a, b));
}

inline Points solve_positions(const PositionSystem& system) {
    CachedCholesky solver;
    return solve_positions(system, solver);
}

/// omega = w_ARAP |V| / (|N(i)| * 2|E|): weight of point i's ARAP sum relative to its
/// alignment term once the fine objective is multiplied by |V|.
inline double arap_rotation_weight(double w_arap, std::size_t point_count, std::size_t neighbor_count,
                                   std::size_t edge_count) {
    if (neighbor_count == 0 || edge_count == 0) return 0.0;
    return w_arap * static_cast<double>(point_count) /
           (static_cast<double>(neighbor_count) * 2.0 * static_cast<double>(edge_count));
}

/// Cross-covariance S of the rotation subproblem for one point. The alignment
/// part is alpha ||d||^2 n (h*)^T and disappears when d = 0.
inline Mat3 rotation_cross_covariance(const Vec3& normal, const Mat3& previous_rotation, const Vec3& target_normal,
                                      const Vec3& d, double alignment_weight, double omega,
                                      std::span<const Vec3> rest_edges, std::span<const Vec3> deformed_edges) {
    Mat3 s = Mat3::Zero();
    if (alignment_weight > 0.0 && d.squaredNorm() > 0.0) {
        const Vec3 h = project_to_constraint_plane(previous_rotation * normal, target_normal, d);
        s += alignment_weight * d.squaredNorm() * normal * h.transpose();
    }
    if (omega > 0.0) {
        for (std::size_t k = 0; k < rest_edges.size(); ++k) s += omega * rest_edges[k] * deformed_edges[k].transpose();
    }
    return s;
}

/// Closed-form rotation minimizing the majorized subproblem; S = 0 keeps the previous rotation.
inline Mat3 rotation_from_cross_covariance(const Mat3& s, const Mat3& previous_rotation) {
    if (s.cwiseAbs().maxCoeff() == 0.0) return previous_rotation;
    return rotation_maximizing_trace(s);
}

/// Rotation update for point i given new positions in `state` and the previous rotation
/// state.rotations[i]. Non-SP2P metrics do not depend on R_i, so only ARAP remains.
inline Mat3 update_rotation(Index i, const DeformationState& state, const Surface& source, const Surface& target,
                            const CorrespondenceSet& corr, const EnergyWeights& weights,
                            MetricKind metric = MetricKind::SP2P) {
    const auto nbrs = source.neighbors(i);
    const Points& v = source.points();
    const Points& w = state.positions;
    thread_local std::vector<Vec3> rest, deformed;
    rest.clear();
    deformed.clear();
    for (Index j : nbrs) {
        rest.push_back(v[i] - v[j]);
        deformed.push_back(w[i] - w[j]);
    }
    const double omega = arap_rotation_weight(weights.w_arap, source.size(), nbrs.size(), source.edges().size());
    const Index t = corr.target[i];
    const double align = metric == MetricKind::SP2P ? corr.weight[i] : 0.0;
    const Mat3 s = rotation_cross_covariance(source.normals()[i], state.rotations[i], target.normals()[t],
                                             w[i] - target.points()[t], align, omega, rest, deformed);
    return rotation_from_cross_covariance(s, state.rotations[i]);
}

/// Per-point rotation subproblem objective: alpha f(R) + omega sum ||e'_ij - R e_ij||^2.
inline double rotation_subproblem_objective(const Mat3& r, Index i, const DeformationState& state,
                                            const Surface& source, const Surface& target,
                                            const CorrespondenceSet& corr, const EnergyWeights& weights,
                                            MetricKind metric = MetricKind::SP2P) {
    const auto nbrs = source.neighbors(i);
    const Points& v = source.points();
    const Points& w = state.positions;
    const Index t = corr.target[i];
    double value = 0.0;
    if (metric == MetricKind::SP2P) {
        value += corr.weight[i] *
                 sp2p_rotation_term(r, source.normals()[i], target.normals()[t], w[i] - target.points()[t]);
    }
    const double omega = arap_rotation_weight(weights.w_arap, source.size(), nbrs.size(), source.edges().size());
    for (Index j : nbrs) value += omega * ((w[i] - w[j]) - r * (v[i] - v[j])).squaredNorm();
    return value;
}

inline double mean_weight(const CorrespondenceSet& corr) {
    if (corr.weight.empty()) return 0.0;
    return std::accumulate(corr.weight.begin(), corr.weight.end(), 0.0) / static_cast<double>(corr.weight.size());
}

/// Alternating closest-point / position / rotation minimization of the fine objective.
/// Stops once the RMS position change of an iteration drops below tol, or after max_iters.
inline FineResult run_fine(const Surface& source, const Surface& target, DeformationState state,
                           const FineSolverConfig& config, std::span<const Landmark> landmarks = {},
                           const IterationObserver& observer = {}) {
    if (config.max_iters < 1 || !(config.tol > 0.0)) throw InputError("fine solver: need max_iters >= 1 and tol > 0");
    if (state.positions.size() != source.size()) throw InputError("fine solver: initial state size mismatch");
    const SpatialIndex target_index(target.points());
    state.refresh_normals(source);

    FineResult result;
    EnergyWeights weights = config.weights;
    weights.sigma = weights.sigma > 0.0 ? weights.sigma : compute_sigma(state.positions, target_index);
    result.sigma = weights.sigma;

    CachedCholesky solver;
    for (int k = 0; k < config.max_iters; ++k) {
        const auto start = std::chrono::steady_clock::now();
        const CorrespondenceSet corr =
            update_correspondences(state, target, target_index, weights.sigma, config.weighting, config.metric);
        const PositionSystem system = assemble_position_system(source, target, corr, state, weights, landmarks,
                                                               config.metric, config.regularization);

        DeformationState next;
        next.positions = solve_positions(system, solver);
        next.rotations = state.rotations;
        std::vector<Mat3> rotations(source.size());
        for (Index i = 0; i < source.size(); ++i) {
            rotations[i] = update_rotation(i, next, source, target, corr, weights, config.metric);
        }
        next.rotations = std::move(rotations);
        next.refresh_normals(source);

        IterationRecord rec;
        rec.iter = k + 1;
        rec.displacement = rms_displacement(next.positions, state.positions);
        rec.energy = total_fine_energy(next, source, target, corr, weights, landmarks, config.metric);
        rec.alpha_mean = mean_weight(corr);
        state = std::move(next);
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.log.push_back(rec);
        if (observer) observer(rec.iter, state);
        if (rec.displacement < config.tol) {
            result.converged = true;
            break;
        }
    }
    result.state = std::move(state);
    return result;
}

}  // namespace spare
