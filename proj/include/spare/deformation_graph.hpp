#pragma once

#include <algorithm>
#include <limits>
#include <vector>

#include "spare/geodesic.hpp"
#include "spare/rotation.hpp"
#include "spare/surface.hpp"

namespace spare {

struct NodeInfluence {
    Index node = 0;
    double weight = 0.0;
};

/// Embedded deformation graph: sparse nodes on the source surface carrying affine
/// transforms, blended into a dense deformation by per-point influence weights.
struct DeformationGraph {
    std::vector<Index> node_points;  // source point index of each node
    Points nodes;                    // node positions p_j
    std::vector<Edge> edges;         // node index pairs
    std::vector<std::vector<Index>> node_neighbors;
    std::vector<Mat3> linear;        // A_j
    Points translation;              // t_j
    std::vector<std::vector<NodeInfluence>> influence;  // per source point
    double radius = 0.0;

    std::size_t node_count() const { return nodes.size(); }

    void reset_transforms() {
        linear.assign(nodes.size(), Mat3::Identity());
        translation.assign(nodes.size(), Vec3::Zero());
    }
};

/// Deformation graph over explicitly chosen node points. Influence sets hold the
/// nodes within geodesic distance `radius`, weighted by (1 - D^2/R^2)^3 and
/// normalized per point; nodes closer than `radius` to each other are connected.
inline DeformationGraph build_graph_from_nodes(const Surface& surface, std::vector<Index> node_points, double radius,
                                               std::vector<DistanceMap> node_distances = {}) {
    if (!(radius > 0.0)) throw InputError("deformation graph: radius must be positive");
    if (node_points.empty()) throw InputError("deformation graph: no nodes");
    DeformationGraph g;
    g.radius = radius;
    g.node_points = std::move(node_points);
    if (node_distances.size() != g.node_points.size()) {
        node_distances.clear();
        for (Index p : g.node_points) node_distances.push_back(geodesic_distances(surface, p, radius));
    }
    for (Index p : g.node_points) {
        if (p >= surface.size()) throw InputError("deformation graph: node index out of range");
        g.nodes.push_back(surface.points()[p]);
    }
    g.reset_transforms();

    const double r2 = radius * radius;
    g.influence.assign(surface.size(), {});
    for (Index j = 0; j < g.node_points.size(); ++j) {
        for (const auto& [i, dist] : node_distances[j]) {
            const double q = 1.0 - dist * dist / r2;
            g.influence[i].push_back(NodeInfluence{j, q * q * q});
        }
    }
    for (Index i = 0; i < surface.size(); ++i) {
        auto& inf = g.influence[i];
        double sum = 0.0;
        for (const auto& e : inf) sum += e.weight;
        if (inf.empty() || !(sum > 0.0)) {
            throw InputError("uncovered point " + std::to_string(i) + "; increase radius");
        }
        for (auto& e : inf) e.weight /= sum;
    }

    std::vector<Index> node_of_point(surface.size(), std::numeric_limits<Index>::max());
    for (Index j = 0; j < g.node_points.size(); ++j) node_of_point[g.node_points[j]] = j;
    for (Index j = 0; j < g.node_points.size(); ++j) {
        for (const auto& [i, dist] : node_distances[j]) {
            const Index other = node_of_point[i];
            if (other == std::numeric_limits<Index>::max() || other == j) continue;
            g.edges.push_back(Edge{std::min(j, other), std::max(j, other)});
        }
    }
    std::sort(g.edges.begin(), g.edges.end());
    g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
    g.node_neighbors.assign(g.node_points.size(), {});
    for (const Edge& e : g.edges) {
        g.node_neighbors[e.a].push_back(e.b);
        g.node_neighbors[e.b].push_back(e.a);
    }
    for (auto& nb : g.node_neighbors) std::sort(nb.begin(), nb.end());
    return g;
}

/// Farthest-point node sampling in geodesic distance, seeded at point 0, until
/// every source point lies within radius/2 of a node.
inline DeformationGraph build_graph(const Surface& surface, double radius) {
    if (surface.empty()) throw InputError("deformation graph: empty surface");
    if (!(radius > 0.0)) throw InputError("deformation graph: radius must be positive");
    const std::size_t n = surface.size();
    std::vector<double> nearest_node(n, std::numeric_limits<double>::infinity());
    std::vector<Index> nodes;
    std::vector<DistanceMap> maps;
    Index next = 0;
    while (true) {
        nodes.push_back(next);
        maps.push_back(geodesic_distances(surface, next, radius));
        for (const auto& [i, d] : maps.back()) nearest_node[i] = std::min(nearest_node[i], d);
        next = static_cast<Index>(std::max_element(nearest_node.begin(), nearest_node.end()) - nearest_node.begin());
        if (nearest_node[next] <= 0.5 * radius) break;
    }
    return build_graph_from_nodes(surface, std::move(nodes), radius, std::move(maps));
}

/// v^_i = sum_j w_ij (A_j (v_i - p_j) + p_j + t_j)
inline Points deform_points(const DeformationGraph& graph, const Surface& surface) {
    Points out(surface.size(), Vec3::Zero());
    for (Index i = 0; i < surface.size(); ++i) {
        const Vec3& v = surface.points()[i];
        for (const auto& [j, w] : graph.influence[i]) {
            out[i] += w * (graph.linear[j] * (v - graph.nodes[j]) + graph.nodes[j] + graph.translation[j]);
        }
    }
    return out;
}

/// Inverse-length normalization weights r_ij per directed node pair, in the order
/// of node_neighbors. Their mean over all directed pairs is 1.
inline std::vector<std::vector<double>> smoothness_weights(const DeformationGraph& g) {
    double total = 0.0;
    for (Index i = 0; i < g.node_count(); ++i) {
        for (Index j : g.node_neighbors[i]) total += 1.0 / (g.nodes[i] - g.nodes[j]).norm();
    }
    const double twice_edges = 2.0 * static_cast<double>(g.edges.size());
    std::vector<std::vector<double>> r(g.node_count());
    for (Index i = 0; i < g.node_count(); ++i) {
        for (Index j : g.node_neighbors[i]) r[i].push_back(twice_edges / (g.nodes[i] - g.nodes[j]).norm() / total);
    }
    return r;
}

/// E_smo = 1/(2|E_G|) sum_i sum_{j in N(p_i)} ||r_ij [A_j (p_i - p_j) + p_j + t_j - (p_i + t_i)]||^2
inline double smoothness_energy(const DeformationGraph& g) {
    if (g.edges.empty()) return 0.0;
    const auto r = smoothness_weights(g);
    double sum = 0.0;
    for (Index i = 0; i < g.node_count(); ++i) {
        for (std::size_t k = 0; k < g.node_neighbors[i].size(); ++k) {
            const Index j = g.node_neighbors[i][k];
            const Vec3 d = r[i][k] * (g.linear[j] * (g.nodes[i] - g.nodes[j]) + g.nodes[j] + g.translation[j] -
                                      (g.nodes[i] + g.translation[i]));
            sum += d.squaredNorm();
        }
    }
    return sum / (2.0 * static_cast<double>(g.edges.size()));
}

/// E_rot = 1/|V_G| sum_j ||A_j - proj_R(A_j)||_F^2
inline double rotation_energy(const DeformationGraph& g) {
    if (g.node_count() == 0) return 0.0;
    double sum = 0.0;
    for (const Mat3& a : g.linear) sum += (a - project_rotation(a)).squaredNorm();
    return sum / static_cast<double>(g.node_count());
}

/// Euclidean farthest-point sampling of min(count, |V|) indices seeded at index 0.
/// Returns 0..|V|-1 in order when count covers the whole surface.
inline std::vector<Index> sample_alignment_subset(const Surface& surface, std::size_t count) {
    if (count == 0) throw InputError("sample count must be at least 1");
    const std::size_t n = surface.size();
    std::vector<Index> out;
    if (count >= n) {
        out.resize(n);
        for (Index i = 0; i < n; ++i) out[i] = i;
        return out;
    }
    const Points& p = surface.points();
    std::vector<double> d(n, std::numeric_limits<double>::infinity());
    Index next = 0;
    out.reserve(count);
    while (out.size() < count) {
        out.push_back(next);
        for (Index i = 0; i < n; ++i) d[i] = std::min(d[i], (p[i] - p[next]).squaredNorm());
        next = static_cast<Index>(std::max_element(d.begin(), d.end()) - d.begin());
    }
    return out;
}

}  // namespace spare
