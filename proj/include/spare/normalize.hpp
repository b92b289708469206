#pragma once

#include <tuple>

#include "spare/surface.hpp"

namespace spare {

/// x' = scale * x + translation, shared by source and target.
struct NormalizationTransform {
    double scale = 1.0;
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& x) const { return scale * x + translation; }
    Vec3 invert(const Vec3& y) const { return (y - translation) / scale; }

    Points apply(const Points& pts) const {
        Points out(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) out[i] = apply(pts[i]);
        return out;
    }
    Points invert(const Points& pts) const {
        Points out(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) out[i] = invert(pts[i]);
        return out;
    }
};

struct NormalizedPair {
    NormalizationTransform transform;
    Surface source;
    Surface target;
};

/// Scale and center both surfaces so that their joint axis-aligned bounding box
/// has unit diagonal. Normals are left untouched.
inline NormalizedPair normalize_pair(const Surface& source, const Surface& target) {
    if (source.empty() || target.empty()) throw InputError("normalize_pair: empty surface");
    Vec3 lo = source.points().front(), hi = lo;
    for (const Surface* s : {&source, &target}) {
        for (const Vec3& p : s->points()) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
    }
    const double diagonal = (hi - lo).norm();
    if (!(diagonal > 0.0)) throw InputError("degenerate extent");
    NormalizationTransform t;
    t.scale = 1.0 / diagonal;
    t.translation = -t.scale * 0.5 * (lo + hi);
    return {t, source.with_points(t.apply(source.points())), target.with_points(t.apply(target.points()))};
}

}  // namespace spare
