#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spare/geodesic.hpp"
#include "spare/spatial_index.hpp"
#include "spare/surface.hpp"

namespace spare {

/// (source index i, target index j) pairs known to correspond.
using CorrespondencePairs = std::vector<std::pair<Index, Index>>;

struct GroundTruth {
    std::optional<Points> positions;  // v^*_i in the same units as the source
    CorrespondencePairs pairs;

    bool empty() const { return !positions && pairs.empty(); }
};

enum class DistanceMode { Geodesic, Euclidean };

inline double rmse(const Points& result, const Points& truth) {
    if (result.size() != truth.size()) {
        throw InputError("rmse: " + std::to_string(result.size()) + " result points vs " +
                         std::to_string(truth.size()) + " ground-truth points");
    }
    if (result.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < result.size(); ++i) sum += (result[i] - truth[i]).squaredNorm();
    return std::sqrt(sum / static_cast<double>(result.size()));
}

inline std::vector<double> point_errors(const Points& result, const Points& truth) {
    if (result.size() != truth.size()) throw InputError("point_errors: length mismatch");
    std::vector<double> e(result.size());
    for (std::size_t i = 0; i < result.size(); ++i) e[i] = (result[i] - truth[i]).norm();
    return e;
}

/// Per-pair error: for (i, j), tau_j is the source point whose deformed position is
/// nearest to u_j, and the error is the distance between v_tau and v_i on the source.
inline std::vector<double> correspondence_errors(const Points& deformed, const Surface& source, const Points& target,
                                                 const CorrespondencePairs& pairs, DistanceMode mode) {
    if (pairs.empty()) throw InputError("corr_err: empty correspondence set");
    if (deformed.size() != source.size()) throw InputError("corr_err: deformed/source size mismatch");
    const SpatialIndex index(deformed);
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& [i, j] : pairs) {
        if (i >= source.size() || j >= target.size()) throw InputError("corr_err: correspondence index out of range");
        const Index tau = index.nearest(target[j]);
        if (mode == DistanceMode::Euclidean) {
            out.push_back((source.points()[tau] - source.points()[i]).norm());
            continue;
        }
        const auto d = geodesic_distance(source, tau, i);
        if (!d) {
            throw InputError("corr_err: points " + std::to_string(tau) + " and " + std::to_string(i) +
                             " lie in disconnected components; use euclidean distance mode");
        }
        out.push_back(*d);
    }
    return out;
}

inline double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double corr_err(const Points& deformed, const Surface& source, const Points& target,
                       const CorrespondencePairs& pairs, DistanceMode mode) {
    return mean(correspondence_errors(deformed, source, target, pairs, mode));
}

using CumulativeCurve = std::vector<std::pair<double, double>>;

/// Fraction of errors <= each threshold. Thresholds must be ascending.
inline CumulativeCurve cumulative_curve(std::vector<double> errors, const std::vector<double>& thresholds) {
    if (!std::is_sorted(thresholds.begin(), thresholds.end())) throw InputError("cumulative_curve: unsorted thresholds");
    std::sort(errors.begin(), errors.end());
    CumulativeCurve curve;
    curve.reserve(thresholds.size());
    for (double t : thresholds) {
        const auto count = std::upper_bound(errors.begin(), errors.end(), t) - errors.begin();
        curve.emplace_back(t, errors.empty() ? 1.0 : static_cast<double>(count) / static_cast<double>(errors.size()));
    }
    return curve;
}

/// Nearest-rank 95th percentile.
inline double percentile95(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(v.size())));
    return v[std::max<std::size_t>(rank, 1) - 1];
}

inline constexpr std::size_t kThresholdCount = 100;

/// 100 uniform thresholds from 0 to the 95th percentile of `errors`.
inline std::vector<double> threshold_grid(const std::vector<double>& errors, std::size_t count = kThresholdCount) {
    const double top = percentile95(errors);
    std::vector<double> t(count);
    for (std::size_t k = 0; k < count; ++k) {
        t[k] = count > 1 ? top * (static_cast<double>(k) / static_cast<double>(count - 1)) : top;
    }
    return t;
}

/// Trapezoidal area under the curve divided by the threshold range. A degenerate
/// range reduces to the fraction at the first threshold.
inline double auc(const CumulativeCurve& curve) {
    if (curve.empty()) return 0.0;
    const double range = curve.back().first - curve.front().first;
    if (!(range > 0.0)) return curve.front().second;
    double area = 0.0;
    for (std::size_t k = 1; k < curve.size(); ++k) {
        area += 0.5 * (curve[k].second + curve[k - 1].second) * (curve[k].first - curve[k - 1].first);
    }
    return std::clamp(area / range, 0.0, 1.0);
}

/// Fraction of ground-truth positions closer than l_t / sqrt(3) to the target, with
/// l_t the mean target edge length.
inline double overlap_ratio(const Points& truth, const Surface& target) {
    if (truth.empty()) return 0.0;
    const double threshold = mean_edge_length(target) / std::sqrt(3.0);
    const SpatialIndex index(target.points());
    std::size_t inside = 0;
    for (const Vec3& p : truth) {
        if ((target.points()[index.nearest(p)] - p).norm() < threshold) ++inside;
    }
    return static_cast<double>(inside) / static_cast<double>(truth.size());
}

using Rgb = std::array<std::uint8_t, 3>;

/// Linear blue-to-red ramp over [0, scale_max]; values past the ends are clamped.
inline Rgb error_color(double error, double scale_max) {
    double c = scale_max > 0.0 ? error / scale_max : (error > 0.0 ? 1.0 : 0.0);
    c = std::clamp(c, 0.0, 1.0);
    return {static_cast<std::uint8_t>(std::lround(255.0 * c)), 0,
            static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - c)))};
}

inline std::vector<Rgb> error_map(const std::vector<double>& errors, double scale_max) {
    std::vector<Rgb> colors;
    colors.reserve(errors.size());
    for (double e : errors) {
        if (!std::isfinite(e)) throw InputError("error_map: non-finite error");
        colors.push_back(error_color(e, scale_max));
    }
    return colors;
}

struct ErrorReport {
    std::optional<double> rmse;
    std::optional<double> corr_err;
    std::optional<double> overlap;
    double auc = 0.0;
    std::vector<double> thresholds;
    CumulativeCurve cumulative_curve;
    std::vector<double> per_point_errors;  // position error per source point, if positions are known
    std::vector<double> pair_errors;       // per correspondence pair, if pairs are known

    /// Errors that feed the cumulative curve: pair errors when present, else point errors.
    const std::vector<double>& curve_errors() const { return pair_errors.empty() ? per_point_errors : pair_errors; }
};

/// Recomputes the curve and AUC of `report` on a given threshold grid.
inline void apply_threshold_grid(ErrorReport& report, std::vector<double> thresholds) {
    report.thresholds = std::move(thresholds);
    report.cumulative_curve = cumulative_curve(report.curve_errors(), report.thresholds);
    report.auc = auc(report.cumulative_curve);
}

}  // namespace spare
