#pragma once

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <utility>
#include <vector>

#include "spare/surface.hpp"

namespace spare {

using DistanceMap = std::map<Index, double>;

/// Dijkstra distances over the edge graph with Euclidean edge lengths.
/// Only entries strictly below `radius` are returned; unreachable points are absent.
inline DistanceMap geodesic_distances(const Surface& surface, Index source, double radius) {
    if (source >= surface.size()) throw InputError("geodesic_distances: source out of range");
    DistanceMap settled;
    if (!(radius > 0.0)) return settled;
    using Item = std::pair<double, Index>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    std::map<Index, double> tentative;
    queue.emplace(0.0, source);
    tentative[source] = 0.0;
    const Points& p = surface.points();
    while (!queue.empty()) {
        const auto [d, v] = queue.top();
        queue.pop();
        if (settled.count(v) || d > tentative[v]) continue;
        settled.emplace(v, d);
        for (Index w : surface.neighbors(v)) {
            if (settled.count(w)) continue;
            const double nd = d + (p[v] - p[w]).norm();
            if (nd >= radius) continue;
            auto it = tentative.find(w);
            if (it == tentative.end() || nd < it->second) {
                tentative[w] = nd;
                queue.emplace(nd, w);
            }
        }
    }
    return settled;
}

/// Single-pair geodesic distance; std::nullopt when b is unreachable from a.
inline std::optional<double> geodesic_distance(const Surface& surface, Index a, Index b) {
    if (a >= surface.size() || b >= surface.size()) throw InputError("geodesic_distance: index out of range");
    if (a == b) return 0.0;
    const Points& p = surface.points();
    std::vector<double> dist(surface.size(), std::numeric_limits<double>::infinity());
    using Item = std::pair<double, Index>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    dist[a] = 0.0;
    queue.emplace(0.0, a);
    while (!queue.empty()) {
        const auto [d, v] = queue.top();
        queue.pop();
        if (d > dist[v]) continue;
        if (v == b) return d;
        for (Index w : surface.neighbors(v)) {
            const double nd = d + (p[v] - p[w]).norm();
            if (nd < dist[w]) {
                dist[w] = nd;
                queue.emplace(nd, w);
            }
        }
    }
    return std::nullopt;
}

}  // namespace spare
