#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "spare/core.hpp"
#include "spare/spatial_index.hpp"
#include "spare/surface.hpp"

namespace spare {

/// Alignment metric used by both solver stages.
enum class MetricKind { SP2P, P2P, P2PL };

/// Per-source-point closest target index and the weight of that pair.
struct CorrespondenceSet {
    std::vector<Index> target;
    std::vector<double> weight;

    std::size_t size() const { return target.size(); }
};

/// Fine-stage unknowns: deformed positions and per-point rotations.
/// normals[i] caches rotations[i] * (source normal i).
struct DeformationState {
    Points positions;
    std::vector<Mat3> rotations;
    Points normals;

    static DeformationState identity(const Surface& source) {
        return {source.points(), std::vector<Mat3>(source.size(), Mat3::Identity()), source.normals()};
    }

    void refresh_normals(const Surface& source) {
        normals.resize(rotations.size());
        for (std::size_t i = 0; i < rotations.size(); ++i) normals[i] = rotations[i] * source.normals()[i];
    }
};

struct Landmark {
    Index source = 0;
    Vec3 target = Vec3::Zero();
};
using Landmarks = std::vector<Landmark>;

struct EnergyWeights {
    double w_arap = 200.0;
    double sigma = 1.0;
    double w_landmark = 0.0;
};

/// Default landmark weight 100 / |L|.
inline double default_landmark_weight(std::size_t count) {
    return count == 0 ? 0.0 : 100.0 / static_cast<double>(count);
}

inline double p2p_error(const Vec3& deformed, const Vec3& target) {
    return (deformed - target).squaredNorm();
}

inline double p2pl_error(const Vec3& deformed, const Vec3& target, const Vec3& target_normal) {
    const double r = target_normal.dot(deformed - target);
    return r * r;
}

inline double sp2p_error(const Vec3& deformed, const Vec3& deformed_normal, const Vec3& target,
                         const Vec3& target_normal) {
    const double r = (deformed_normal + target_normal).dot(deformed - target);
    return r * r;
}

inline double metric_error(MetricKind kind, const Vec3& deformed, const Vec3& deformed_normal, const Vec3& target,
                           const Vec3& target_normal) {
    switch (kind) {
        case MetricKind::P2P: return p2p_error(deformed, target);
        case MetricKind::P2PL: return p2pl_error(deformed, target, target_normal);
        case MetricKind::SP2P: break;
    }
    return sp2p_error(deformed, deformed_normal, target, target_normal);
}

/// Gaussian confidence gated by normal agreement. A strictly negative normal
/// dot product zeroes the weight; a zero dot product keeps the Gaussian.
inline double robust_weight(const Vec3& prev_deformed, const Vec3& prev_normal, const Vec3& target,
                            const Vec3& target_normal, double sigma) {
    if (prev_normal.dot(target_normal) < 0.0) return 0.0;
    return std::exp(-(prev_deformed - target).squaredNorm() / (2.0 * sigma * sigma));
}

inline constexpr double kMinSigma = 1e-8;

/// Lower median of the source-to-nearest-target distances, clamped below at 1e-8.
inline double compute_sigma(const Points& source, const SpatialIndex& target) {
    if (source.empty()) throw InputError("compute_sigma: empty source");
    std::vector<double> d(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) d[i] = (source[i] - target.point(target.nearest(source[i]))).norm();
    const std::size_t mid = (d.size() - 1) / 2;
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
    return std::max(d[mid], kMinSigma);
}

/// (1/|N(i)|) * sum_j ||(v^_i - v^_j) - R_i (v_i - v_j)||^2
inline double arap_point_energy(const DeformationState& state, const Surface& surface, Index i) {
    const auto nbrs = surface.neighbors(i);
    if (nbrs.empty()) throw InputError("empty neighborhood at point " + std::to_string(i));
    const Points& v = surface.points();
    const Points& w = state.positions;
    double sum = 0.0;
    for (Index j : nbrs) sum += ((w[i] - w[j]) - state.rotations[i] * (v[i] - v[j])).squaredNorm();
    return sum / static_cast<double>(nbrs.size());
}

/// E_ARAP = 1/(2|E|) * sum_i E_ARAP^i; isolated points contribute nothing.
inline double arap_energy(const DeformationState& state, const Surface& surface) {
    if (surface.edges().empty()) return 0.0;
    double sum = 0.0;
    for (Index i = 0; i < surface.size(); ++i) {
        if (!surface.neighbors(i).empty()) sum += arap_point_energy(state, surface, i);
    }
    return sum / (2.0 * static_cast<double>(surface.edges().size()));
}

inline double landmark_energy(const DeformationState& state, std::span<const Landmark> landmarks) {
    double sum = 0.0;
    for (const Landmark& l : landmarks) {
        if (l.source >= state.positions.size()) throw InputError("landmark index out of range");
        sum += (state.positions[l.source] - l.target).squaredNorm();
    }
    return sum;
}

/// E_align = (1/|V|) * sum_i alpha_i * metric_i.
inline double alignment_energy(const DeformationState& state, const Surface& target, const CorrespondenceSet& corr,
                               MetricKind metric = MetricKind::SP2P) {
    const std::size_t n = state.positions.size();
    if (n == 0) return 0.0;
    double sum = 0.0;
    for (Index i = 0; i < n; ++i) {
        const Index t = corr.target[i];
        sum += corr.weight[i] * metric_error(metric, state.positions[i], state.normals[i], target.points()[t],
                                             target.normals()[t]);
    }
    return sum / static_cast<double>(n);
}

/// E_align + w_ARAP * E_ARAP (+ w_landmark * E_landmark), the fine-stage objective.
inline double total_fine_energy(const DeformationState& state, const Surface& source, const Surface& target,
                                const CorrespondenceSet& corr, const EnergyWeights& weights,
                                std::span<const Landmark> landmarks = {}, MetricKind metric = MetricKind::SP2P) {
    double e = alignment_energy(state, target, corr, metric) + weights.w_arap * arap_energy(state, source);
    if (!landmarks.empty()) e += weights.w_landmark * landmark_energy(state, landmarks);
    return e;
}

}  // namespace spare
