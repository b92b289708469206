#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <queue>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "spare/core.hpp"
#include "spare/spatial_index.hpp"

namespace spare {

/// Undirected edge, stored with a < b.
struct Edge {
    Index a = 0;
    Index b = 0;
    auto operator<=>(const Edge&) const = default;
};

using Face = std::array<Index, 3>;

/// Sample points with unit normals and an undirected neighbor graph.
///
/// Meshes and point clouds share this representation: a mesh contributes its
/// face edges, a point cloud its symmetrized k-NN edges. Faces are optional and
/// only kept for output and for normal averaging.
class Surface {
public:
    Surface() = default;

    Surface(Points points, Points normals, std::vector<Edge> edges, std::vector<Face> faces = {})
        : points_(std::move(points)), normals_(std::move(normals)), faces_(std::move(faces)) {
        if (normals_.size() != points_.size()) {
            throw InputError("surface: " + std::to_string(normals_.size()) + " normals for " +
                             std::to_string(points_.size()) + " points");
        }
        for (std::size_t i = 0; i < normals_.size(); ++i) {
            if (!(std::abs(normals_[i].norm() - 1.0) <= 1e-6)) {
                throw InputError("surface: normal " + std::to_string(i) + " is not unit length");
            }
        }
        for (const Face& f : faces_) {
            for (Index v : f) {
                if (v >= points_.size()) throw InputError("surface: face index out of range");
            }
        }
        for (Edge& e : edges) {
            if (e.a == e.b) throw InputError("surface: self-loop edge at " + std::to_string(e.a));
            if (e.a >= points_.size() || e.b >= points_.size()) {
                throw InputError("surface: edge index out of range");
            }
            if (e.a > e.b) std::swap(e.a, e.b);
        }
        std::sort(edges.begin(), edges.end());
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
        edges_ = std::move(edges);
        build_adjacency();
    }

    std::size_t size() const { return points_.size(); }
    bool empty() const { return points_.empty(); }
    const Points& points() const { return points_; }
    const Points& normals() const { return normals_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::vector<Face>& faces() const { return faces_; }
    bool has_faces() const { return !faces_.empty(); }

    std::span<const Index> neighbors(Index i) const {
        return {adjacency_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
    }

    /// Same topology and normals, new sample positions.
    Surface with_points(Points points) const {
        Surface out = *this;
        if (points.size() != points_.size()) throw InputError("with_points: size mismatch");
        out.points_ = std::move(points);
        return out;
    }

    Surface with_normals(Points normals) const {
        return Surface(points_, std::move(normals), edges_, faces_);
    }

private:
    void build_adjacency() {
        offsets_.assign(points_.size() + 1, 0);
        for (const Edge& e : edges_) {
            ++offsets_[e.a + 1];
            ++offsets_[e.b + 1];
        }
        for (std::size_t i = 0; i < points_.size(); ++i) offsets_[i + 1] += offsets_[i];
        adjacency_.assign(offsets_.back(), 0);
        std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
        for (const Edge& e : edges_) {
            adjacency_[fill[e.a]++] = e.b;
            adjacency_[fill[e.b]++] = e.a;
        }
        for (std::size_t i = 0; i < points_.size(); ++i) {
            std::sort(adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[i]),
                      adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[i + 1]));
        }
    }

    Points points_;
    Points normals_;
    std::vector<Edge> edges_;
    std::vector<Face> faces_;
    std::vector<std::size_t> offsets_{0};
    std::vector<Index> adjacency_;
};

/// Symmetric k-NN edge set: (i, j) is present if j is among i's k nearest or vice versa.
inline std::vector<Edge> build_knn_edges(const Points& points, std::size_t k) {
    if (k == 0) throw InputError("build_knn_edges: k must be positive");
    if (points.size() < k + 1) throw InputError("insufficient points");
    const SpatialIndex index(points);
    std::vector<Edge> edges;
    edges.reserve(points.size() * k);
    for (Index i = 0; i < points.size(); ++i) {
        std::size_t taken = 0;
        // k + 1 candidates: the query point itself (or a duplicate of it) comes first.
        for (const auto& [j, dist] : index.k_nearest(points[i], k + 1)) {
            if (j == i || taken == k) continue;
            edges.push_back(Edge{std::min(i, j), std::max(i, j)});
            ++taken;
        }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

inline std::vector<Edge> edges_from_faces(const std::vector<Face>& faces) {
    std::vector<Edge> edges;
    edges.reserve(3 * faces.size());
    for (const Face& f : faces) {
        for (int c = 0; c < 3; ++c) {
            const Index a = f[c], b = f[(c + 1) % 3];
            if (a != b) edges.push_back(Edge{std::min(a, b), std::max(a, b)});
        }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

namespace detail {

// Flip normals so that neighbors agree, walking a minimum spanning tree of the
// k-NN graph weighted by 1 - |n_i . n_j|. Each connected component is seeded at
// its highest point, whose normal is made to point towards +z.
inline void orient_normals_mst(const Points& points, Points& normals,
                               const std::vector<std::vector<Index>>& graph) {
    const std::size_t n = points.size();
    std::vector<char> done(n, 0);
    std::vector<int> component(n, -1);
    int components = 0;
    for (Index s = 0; s < n; ++s) {
        if (component[s] >= 0) continue;
        std::vector<Index> stack{s};
        component[s] = components;
        Index seed = s;
        while (!stack.empty()) {
            const Index v = stack.back();
            stack.pop_back();
            if (points[v].z() > points[seed].z() || (points[v].z() == points[seed].z() && v < seed)) seed = v;
            for (Index w : graph[v]) {
                if (component[w] < 0) {
                    component[w] = components;
                    stack.push_back(w);
                }
            }
        }
        ++components;

        if (normals[seed].z() < 0.0) normals[seed] = -normals[seed];
        using Item = std::tuple<double, Index, Index>;  // cost, vertex, parent
        std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
        queue.emplace(0.0, seed, seed);
        while (!queue.empty()) {
            const auto [cost, v, parent] = queue.top();
            queue.pop();
            if (done[v]) continue;
            done[v] = 1;
            if (v != parent && normals[v].dot(normals[parent]) < 0.0) normals[v] = -normals[v];
            for (Index w : graph[v]) {
                if (!done[w]) queue.emplace(1.0 - std::abs(normals[v].dot(normals[w])), w, v);
            }
        }
    }
}

}  // namespace detail

/// PCA normals from the k nearest neighbors (the point itself included), with
/// orientation propagated along a minimum spanning tree.
inline Points estimate_normals(const Points& points, std::size_t k) {
    if (k < 3) throw InputError("estimate_normals: k must be at least 3");
    if (points.empty()) return {};
    const SpatialIndex index(points);
    const std::size_t n = points.size();
    Points normals(n);
    std::vector<std::vector<Index>> graph(n);
    for (Index i = 0; i < n; ++i) {
        const auto knn = index.k_nearest(points[i], k);
        Vec3 mean = Vec3::Zero();
        for (const auto& [j, d] : knn) mean += points[j];
        mean /= static_cast<double>(knn.size());
        Mat3 cov = Mat3::Zero();
        for (const auto& [j, d] : knn) {
            const Vec3 r = points[j] - mean;
            cov += r * r.transpose();
        }
        if (!(cov.trace() > 1e-30)) throw InputError("degenerate neighborhood");
        Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
        normals[i] = eig.eigenvectors().col(0).normalized();
        for (const auto& [j, d] : knn) {
            if (j == i) continue;
            graph[i].push_back(j);
            graph[j].push_back(i);
        }
    }
    for (auto& adj : graph) {
        std::sort(adj.begin(), adj.end());
        adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
    }
    detail::orient_normals_mst(points, normals, graph);
    return normals;
}

/// Per-vertex normals as the normalized sum of area-weighted incident face normals.
inline Points face_normals_average(const Points& points, const std::vector<Face>& faces) {
    Points sums(points.size(), Vec3::Zero());
    std::vector<int> incident(points.size(), 0);
    for (const Face& f : faces) {
        for (Index v : f) {
            if (v >= points.size()) throw InputError("face index out of range");
        }
        // Cross product length is twice the triangle area.
        const Vec3 area_normal = (points[f[1]] - points[f[0]]).cross(points[f[2]] - points[f[0]]);
        for (Index v : f) {
            sums[v] += area_normal;
            ++incident[v];
        }
    }
    Points normals(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (incident[i] == 0) throw InputError("vertex with no incident face: " + std::to_string(i));
        const double len = sums[i].norm();
        if (!(len > 0.0)) throw InputError("vertex with degenerate incident faces: " + std::to_string(i));
        normals[i] = sums[i] / len;
    }
    return normals;
}

inline double mean_edge_length(const Surface& surface) {
    if (surface.edges().empty()) return 0.0;
    double sum = 0.0;
    for (const Edge& e : surface.edges()) sum += (surface.points()[e.a] - surface.points()[e.b]).norm();
    return sum / static_cast<double>(surface.edges().size());
}

inline void normalize_in_place(Points& normals) {
    for (std::size_t i = 0; i < normals.size(); ++i) {
        const double len = normals[i].norm();
        if (!(len > 0.0) || !std::isfinite(len)) throw InputError("zero or invalid normal at " + std::to_string(i));
        normals[i] /= len;
    }
}

/// Mesh surface: edges from faces; normals averaged from faces unless given.
inline Surface make_mesh_surface(Points points, std::vector<Face> faces, Points normals = {}) {
    if (normals.empty()) {
        normals = face_normals_average(points, faces);
    } else {
        normalize_in_place(normals);
    }
    auto edges = edges_from_faces(faces);
    return Surface(std::move(points), std::move(normals), std::move(edges), std::move(faces));
}

/// Point-cloud surface: symmetrized k-NN edges; PCA normals unless given.
inline Surface make_cloud_surface(Points points, Points normals = {}, std::size_t edge_k = 6,
                                  std::size_t normal_k = 10) {
    if (normals.empty()) {
        normals = estimate_normals(points, normal_k);
    } else {
        normalize_in_place(normals);
    }
    auto edges = build_knn_edges(points, std::min(edge_k, points.size() > 1 ? points.size() - 1 : 1));
    return Surface(std::move(points), std::move(normals), std::move(edges));
}

}  // namespace spare
