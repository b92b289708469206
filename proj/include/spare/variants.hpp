#pragma once

#include <array>
#include <cmath>
#include <string>
#include <string_view>

#include "spare/energy.hpp"

namespace spare {

/// How the per-pair weight alpha_i is produced each iteration.
enum class WeightScheme { RobustGaussian, None, HardThreshold, Welsch, Huber, GemanMcClure };

inline std::string_view to_string(MetricKind m) {
    switch (m) {
        case MetricKind::P2P: return "p2p";
        case MetricKind::P2PL: return "p2pl";
        case MetricKind::SP2P: break;
    }
    return "sp2p";
}

inline std::string_view to_string(WeightScheme w) {
    switch (w) {
        case WeightScheme::None: return "none";
        case WeightScheme::HardThreshold: return "hard";
        case WeightScheme::Welsch: return "welsch";
        case WeightScheme::Huber: return "huber";
        case WeightScheme::GemanMcClure: return "gm";
        case WeightScheme::RobustGaussian: break;
    }
    return "robust";
}

inline MetricKind parse_metric(std::string_view s) {
    if (s == "sp2p") return MetricKind::SP2P;
    if (s == "p2p") return MetricKind::P2P;
    if (s == "p2pl") return MetricKind::P2PL;
    throw InputError("unknown metric '" + std::string(s) + "' (expected sp2p, p2p or p2pl)");
}

inline WeightScheme parse_weight_scheme(std::string_view s) {
    if (s == "robust") return WeightScheme::RobustGaussian;
    if (s == "none") return WeightScheme::None;
    if (s == "hard") return WeightScheme::HardThreshold;
    if (s == "welsch") return WeightScheme::Welsch;
    if (s == "huber") return WeightScheme::Huber;
    if (s == "gm") return WeightScheme::GemanMcClure;
    throw InputError("unknown weight scheme '" + std::string(s) + "'");
}

/// 0 if the pair is farther apart than 3 sigma or its normals oppose, else 1.
inline double hard_threshold_weight(const Vec3& prev_deformed, const Vec3& prev_normal, const Vec3& target,
                                    const Vec3& target_normal, double sigma) {
    if ((prev_deformed - target).norm() > 3.0 * sigma) return 0.0;
    if (prev_normal.dot(target_normal) < 0.0) return 0.0;
    return 1.0;
}

/// IRLS weight phi'(r) / (2r) for the robust losses, normalized so that w(0) = 1.
/// Non-robust schemes return 1.
inline double irls_weight(double residual, WeightScheme loss, double scale) {
    const double r2 = residual * residual;
    const double nu2 = scale * scale;
    switch (loss) {
        case WeightScheme::Welsch: return std::exp(-r2 / nu2);
        case WeightScheme::Huber: {
            const double r = std::abs(residual);
            return r <= scale ? 1.0 : scale / r;
        }
        case WeightScheme::GemanMcClure: {
            const double q = nu2 / (nu2 + r2);
            return q * q;
        }
        default: return 1.0;
    }
}

/// Signed residual of one pair under the given metric (Euclidean length for P2P).
inline double metric_residual(MetricKind kind, const Vec3& deformed, const Vec3& deformed_normal, const Vec3& target,
                              const Vec3& target_normal) {
    const Vec3 d = deformed - target;
    switch (kind) {
        case MetricKind::P2P: return d.norm();
        case MetricKind::P2PL: return target_normal.dot(d);
        case MetricKind::SP2P: break;
    }
    return (deformed_normal + target_normal).dot(d);
}

struct WeightSettings {
    WeightScheme scheme = WeightScheme::RobustGaussian;
    /// Scale of the robust losses; non-positive means "use sigma".
    double loss_scale = 0.0;
};

/// Weight of a freshly matched pair, evaluated at the previous deformed position and normal.
inline double pair_weight(const WeightSettings& ws, MetricKind metric, const Vec3& prev_deformed,
                          const Vec3& prev_normal, const Vec3& target, const Vec3& target_normal, double sigma) {
    switch (ws.scheme) {
        case WeightScheme::RobustGaussian:
            return robust_weight(prev_deformed, prev_normal, target, target_normal, sigma);
        case WeightScheme::None: return 1.0;
        case WeightScheme::HardThreshold:
            return hard_threshold_weight(prev_deformed, prev_normal, target, target_normal, sigma);
        case WeightScheme::Welsch:
        case WeightScheme::Huber:
        case WeightScheme::GemanMcClure: {
            if (prev_normal.dot(target_normal) < 0.0) return 0.0;
            const double scale = ws.loss_scale > 0.0 ? ws.loss_scale : sigma;
            const double r = metric_residual(metric, prev_deformed, prev_normal, target, target_normal);
            return irls_weight(r, ws.scheme, scale);
        }
    }
    return 1.0;
}

/// One linear residual row: coef . x - rhs.
struct MetricRow {
    Vec3 coef = Vec3::Zero();
    double rhs = 0.0;
};

/// Linear rows that one source point contributes to a position least-squares problem,
/// already scaled by sqrt(weight). P2P yields three rows, the plane metrics one.
struct MetricRows {
    std::array<MetricRow, 3> rows{};
    int count = 0;
};

inline MetricRows metric_rows(MetricKind kind, const Vec3& deformed_normal, const Vec3& target,
                              const Vec3& target_normal, double weight) {
    const double s = std::sqrt(weight);
    MetricRows out;
    switch (kind) {
        case MetricKind::P2P:
            out.count = 3;
            for (int c = 0; c < 3; ++c) {
                out.rows[c].coef = s * Vec3::Unit(c);
                out.rows[c].rhs = s * target[c];
            }
            return out;
        case MetricKind::P2PL: out.rows[0].coef = s * target_normal; break;
        case MetricKind::SP2P: out.rows[0].coef = s * (deformed_normal + target_normal); break;
    }
    out.count = 1;
    out.rows[0].rhs = out.rows[0].coef.dot(target);
    return out;
}

}  // namespace spare
