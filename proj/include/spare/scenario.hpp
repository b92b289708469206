#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Geometry>

#include "spare/evaluation.hpp"
#include "spare/surface.hpp"

namespace spare {

enum class ScenarioKind { BentPlane, ArticulatedBar, TwistedCylinder, PartialCrop };

inline std::string_view to_string(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::ArticulatedBar: return "bar";
        case ScenarioKind::TwistedCylinder: return "cylinder";
        case ScenarioKind::PartialCrop: return "crop";
        case ScenarioKind::BentPlane: break;
    }
    return "plane";
}

inline ScenarioKind parse_scenario_kind(std::string_view s) {
    if (s == "plane") return ScenarioKind::BentPlane;
    if (s == "bar") return ScenarioKind::ArticulatedBar;
    if (s == "cylinder") return ScenarioKind::TwistedCylinder;
    if (s == "crop") return ScenarioKind::PartialCrop;
    throw InputError("unknown scenario '" + std::string(s) + "' (expected plane, bar, cylinder or crop)");
}

struct SyntheticScenario {
    ScenarioKind kind = ScenarioKind::BentPlane;
    /// Samples along the main direction; the plane is resolution x resolution.
    std::size_t resolution = 40;
    /// Bend, joint or twist angle in degrees.
    double magnitude = 30.0;
    /// Standard deviation of Gaussian noise along the target normals.
    double noise = 0.0;
    std::uint64_t seed = 0;
    /// Target parameter-domain shift in units of the sample spacing; 0 makes the
    /// target the exactly deformed source. A seeded jitter of +-40% is added.
    double resample_offset = 0.0;
    /// Fraction of target points removed by the crop scenario.
    double crop_fraction = 0.4;
    /// Rigid motion applied after the deformation (random axis from the seed).
    double rigid_angle = 0.0;
    double rigid_translation = 0.0;
    /// Number of correspondence pairs in the ground truth.
    std::size_t pair_count = 200;
    /// Height scale of the plane's bumps; 0 gives a flat sheet.
    double relief = 1.0;
};

struct ScenarioData {
    Surface source;
    Surface target;
    GroundTruth truth;
};

namespace detail {

/// Uniform doubles and normals from raw 64-bit draws so output does not depend on
/// the standard library's distribution implementations.
class ScenarioRng {
public:
    explicit ScenarioRng(std::uint64_t seed) : engine_(seed) {}
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }
    Vec3 unit_vector() {
        Vec3 v;
        do {
            v = Vec3(normal(), normal(), normal());
        } while (v.norm() < 1e-12);
        return v.normalized();
    }

private:
    std::mt19937_64 engine_;
};

struct Parametric {
    std::vector<Eigen::Vector2d> params;
    std::vector<Face> faces;
};

/// Grid over [u0, u0 + nu - 1] x [v0, v0 + nv - 1] (in sample units); v wraps when `closed`.
inline Parametric grid_param(std::size_t nu, std::size_t nv, double du, double dv, bool closed) {
    Parametric g;
    for (std::size_t a = 0; a < nu; ++a) {
        for (std::size_t b = 0; b < nv; ++b) g.params.emplace_back(static_cast<double>(a) + du, static_cast<double>(b) + dv);
    }
    const std::size_t bmax = closed ? nv : nv - 1;
    for (std::size_t a = 0; a + 1 < nu; ++a) {
        for (std::size_t b = 0; b < bmax; ++b) {
            const Index p00 = a * nv + b, p10 = (a + 1) * nv + b;
            const Index p01 = a * nv + (b + 1) % nv, p11 = (a + 1) * nv + (b + 1) % nv;
            g.faces.push_back(Face{p00, p10, p11});
            g.faces.push_back(Face{p00, p11, p01});
        }
    }
    return g;
}

}  // namespace detail

/// Deterministic synthetic source/target pair with exact ground truth.
inline ScenarioData generate_scenario(const SyntheticScenario& spec) {
    if (spec.resolution < 4) throw InputError("scenario resolution must be at least 4");
    if (!(spec.crop_fraction >= 0.0 && spec.crop_fraction < 1.0)) throw InputError("crop fraction must lie in [0, 1)");
    if (!(spec.noise >= 0.0)) throw InputError("scenario noise must be >= 0");
    if (!(spec.relief >= 0.0)) throw InputError("scenario relief must be >= 0");
    detail::ScenarioRng rng(spec.seed * 0x9E3779B97F4A7C15ULL + 0x5EED);
    const double theta = spec.magnitude * std::numbers::pi / 180.0;
    const std::size_t n = spec.resolution;

    // Source and target share a parametric domain; `embed` maps parameters to
    // rest positions and `deform` is the analytic deformation.
    std::size_t nu = n, nv = n;
    bool closed = false;
    std::function<Vec3(const Eigen::Vector2d&)> embed;
    std::function<Vec3(const Vec3&)> deform;
    switch (spec.kind) {
        case ScenarioKind::BentPlane:
        case ScenarioKind::PartialCrop: {
            // Height field with seeded Gaussian bumps so the surface has no sliding symmetry.
            struct Bump {
                Eigen::Vector2d c;
                double a;
            };
            std::vector<Bump> bumps;
            for (int k = 0; k < 8; ++k) {
                const Eigen::Vector2d c(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4));
                bumps.push_back({c, spec.relief * rng.uniform(0.08, 0.15) * (k % 2 ? -1.0 : 1.0)});
            }
            const double h = 1.0 / static_cast<double>(n - 1);
            embed = [h, bumps](const Eigen::Vector2d& p) {
                const Eigen::Vector2d q(p.x() * h - 0.5, p.y() * h - 0.5);
                double z = 0.0;
                for (const Bump& b : bumps) z += b.a * std::exp(-(q - b.c).squaredNorm() / (2.0 * 0.1 * 0.1));
                return Vec3(q.x(), q.y(), z);
            };
            // Bend around an axis parallel to y at height 1/theta: the z = 0 sheet maps
            // isometrically onto a circular arc of total angle theta.
            deform = [theta](const Vec3& x) {
                if (theta == 0.0) return x;
                const double rho = 1.0 / theta - x.z();
                return Vec3(rho * std::sin(theta * x.x()), x.y(), 1.0 / theta - rho * std::cos(theta * x.x()));
            };
            break;
        }
        case ScenarioKind::ArticulatedBar: {
            // Tapered bar with an elliptic, axially varying cross-section.
            nv = std::max<std::size_t>(8, 3 * n / 5);
            closed = true;
            const double h = 1.0 / static_cast<double>(nu - 1);
            const double dphi = 2.0 * std::numbers::pi / static_cast<double>(nv);
            const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
            embed = [h, dphi, phase](const Eigen::Vector2d& p) {
                const double x = p.x() * h - 0.5;
                const double phi = p.y() * dphi;
                const double r = 0.1 * (1.0 + 0.3 * std::cos(2.0 * phi)) * (1.0 + 0.2 * std::sin(8.0 * x + phase)) *
                                 std::sqrt(1.0 - 3.0 * x * x);
                return Vec3(x, r * std::cos(phi), r * std::sin(phi));
            };
            // The two halves turn by +-theta/2 about the z axis through the joint.
            const Mat3 r = Eigen::AngleAxisd(0.5 * theta, Vec3::UnitZ()).toRotationMatrix();
            deform = [r](const Vec3& x) { return x.x() > 0.0 ? Vec3(r * x) : Vec3(r.transpose() * x); };
            break;
        }
        case ScenarioKind::TwistedCylinder: {
            nv = std::max<std::size_t>(8, n);
            closed = true;
            const double h = 1.0 / static_cast<double>(nu - 1);
            const double dphi = 2.0 * std::numbers::pi / static_cast<double>(nv);
            const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
            embed = [h, dphi, phase](const Eigen::Vector2d& p) {
                const double z = p.x() * h - 0.5;
                const double phi = p.y() * dphi;
                const double r = 0.2 * (1.0 + 0.2 * std::cos(2.0 * phi)) * (1.0 + 0.15 * std::sin(7.0 * z + phase));
                return Vec3(r * std::cos(phi), r * std::sin(phi), z);
            };
            deform = [theta](const Vec3& x) {
                return Vec3(Eigen::AngleAxisd(theta * (x.z() + 0.5), Vec3::UnitZ()) * x);
            };
            break;
        }
    }

    Mat3 rigid_r = Mat3::Identity();
    Vec3 rigid_t = Vec3::Zero();
    if (spec.rigid_angle != 0.0 || spec.rigid_translation != 0.0) {
        rigid_r = Eigen::AngleAxisd(spec.rigid_angle * std::numbers::pi / 180.0, rng.unit_vector()).toRotationMatrix();
        rigid_t = spec.rigid_translation * rng.unit_vector();
    }
    auto full = [&](const Vec3& x) { return Vec3(rigid_r * deform(x) + rigid_t); };

    const detail::Parametric src_param = detail::grid_param(nu, nv, 0.0, 0.0, closed);
    Points src_points;
    for (const auto& p : src_param.params) src_points.push_back(embed(p));
    Points gt;
    for (const Vec3& p : src_points) gt.push_back(full(p));

    double du = 0.0, dv = 0.0;
    if (spec.resample_offset != 0.0) {
        du = spec.resample_offset * rng.uniform(0.6, 1.4);
        dv = spec.resample_offset * rng.uniform(0.6, 1.4);
    }
    // Keep the target inside the source domain along open directions.
    detail::Parametric tgt_param = detail::grid_param(du != 0.0 ? nu - 1 : nu, closed || dv == 0.0 ? nv : nv - 1, du, dv, closed);
    Points tgt_points;
    for (const auto& p : tgt_param.params) tgt_points.push_back(full(embed(p)));
    Points tgt_normals = face_normals_average(tgt_points, tgt_param.faces);
    Points src_normals = face_normals_average(src_points, src_param.faces);
    if (spec.noise > 0.0) {
        for (std::size_t i = 0; i < tgt_points.size(); ++i) tgt_points[i] += spec.noise * rng.normal() * tgt_normals[i];
        tgt_normals = face_normals_average(tgt_points, tgt_param.faces);
    }

    std::vector<Face> tgt_faces = tgt_param.faces;
    if (spec.kind == ScenarioKind::PartialCrop && spec.crop_fraction > 0.0) {
        // Remove the points farthest along a random in-plane view direction.
        const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const Vec3 dir(std::cos(a), std::sin(a), 0.0);
        std::vector<std::pair<double, Index>> order;
        for (Index i = 0; i < tgt_param.params.size(); ++i) order.emplace_back(dir.dot(embed(tgt_param.params[i])), i);
        std::sort(order.begin(), order.end());
        const auto keep = static_cast<std::size_t>(std::llround((1.0 - spec.crop_fraction) * static_cast<double>(order.size())));
        std::vector<Index> remap(tgt_points.size(), static_cast<Index>(-1));
        std::vector<Index> kept;
        for (std::size_t q = 0; q < keep; ++q) kept.push_back(order[q].second);
        std::sort(kept.begin(), kept.end());
        Points p2, n2;
        for (Index i : kept) {
            remap[i] = p2.size();
            p2.push_back(tgt_points[i]);
            n2.push_back(tgt_normals[i]);
        }
        std::vector<Face> f2;
        for (const Face& f : tgt_faces) {
            if (remap[f[0]] != static_cast<Index>(-1) && remap[f[1]] != static_cast<Index>(-1) &&
                remap[f[2]] != static_cast<Index>(-1)) {
                f2.push_back(Face{remap[f[0]], remap[f[1]], remap[f[2]]});
            }
        }
        tgt_points = std::move(p2);
        tgt_normals = std::move(n2);
        tgt_faces = std::move(f2);
    }

    ScenarioData out;
    out.source = Surface(src_points, src_normals, edges_from_faces(src_param.faces), src_param.faces);
    out.target = Surface(tgt_points, tgt_normals, edges_from_faces(tgt_faces), tgt_faces);

    // Pairs: evenly strided target points matched to the nearest ground-truth source point.
    const SpatialIndex gt_index(gt);
    const std::size_t m = out.target.size();
    const std::size_t count = std::min(spec.pair_count, m);
    for (std::size_t q = 0; q < count; ++q) {
        const Index j = q * m / count;
        out.truth.pairs.emplace_back(gt_index.nearest(out.target.points()[j]), j);
    }
    out.truth.positions = std::move(gt);
    return out;
}

}  // namespace spare
