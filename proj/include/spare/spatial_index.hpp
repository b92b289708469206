#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "spare/core.hpp"

namespace spare {

/// Exact k-d tree over a fixed point set.
///
/// Every query is exact: nearest() returns the index minimizing the Euclidean
/// distance, and among equidistant points the smallest index wins. Pruning uses
/// a strict comparison so that equidistant candidates in other cells are still
/// visited. The tree is immutable after construction and safe for concurrent
/// queries.
class SpatialIndex {
public:
    explicit SpatialIndex(Points points, std::size_t leaf_size = 8)
        : points_(std::move(points)), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
        if (points_.empty()) throw InputError("spatial index over an empty point set");
        order_.resize(points_.size());
        std::iota(order_.begin(), order_.end(), Index{0});
        nodes_.reserve(2 * points_.size() / leaf_size_ + 1);
        build(0, order_.size());
    }

    std::size_t size() const { return points_.size(); }
    const Points& points() const { return points_; }
    const Vec3& point(Index i) const { return points_[i]; }

    Index nearest(const Vec3& query) const {
        Candidate best{std::numeric_limits<double>::infinity(), 0};
        search_nearest(0, query, best);
        return best.index;
    }

    /// Up to k nearest points sorted by (distance, index).
    std::vector<std::pair<Index, double>> k_nearest(const Vec3& query, std::size_t k) const {
        k = std::min(k, points_.size());
        std::vector<Candidate> heap;
        heap.reserve(k + 1);
        if (k > 0) search_k(0, query, k, heap);
        std::sort(heap.begin(), heap.end());
        std::vector<std::pair<Index, double>> out;
        out.reserve(heap.size());
        for (const auto& c : heap) out.emplace_back(c.index, std::sqrt(c.dist2));
        return out;
    }

private:
    struct Candidate {
        double dist2;
        Index index;
        bool operator<(const Candidate& o) const {
            return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index);
        }
    };

    struct Node {
        std::size_t begin = 0, end = 0;
        int axis = -1;  // -1 marks a leaf
        double split = 0.0;
        std::size_t left = 0, right = 0;
    };

    std::size_t build(std::size_t begin, std::size_t end) {
        const std::size_t id = nodes_.size();
        nodes_.push_back(Node{begin, end});
        if (end - begin <= leaf_size_) return id;

        Vec3 lo = points_[order_[begin]], hi = lo;
        for (std::size_t i = begin; i < end; ++i) {
            lo = lo.cwiseMin(points_[order_[i]]);
            hi = hi.cwiseMax(points_[order_[i]]);
        }
        int axis = 0;
        (hi - lo).maxCoeff(&axis);
        if (hi[axis] == lo[axis]) return id;  // all coincident: keep as leaf

        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                         order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(end),
                         [&](Index a, Index b) { return points_[a][axis] < points_[b][axis]; });
        const double split = points_[order_[mid]][axis];
        const std::size_t left = build(begin, mid);
        const std::size_t right = build(mid, end);
        Node& node = nodes_[id];
        node.axis = axis;
        node.split = split;
        node.left = left;
        node.right = right;
        return id;
    }

    // Points in [begin, mid) have coordinate <= split and [mid, end) have >= split.
    void search_nearest(std::size_t id, const Vec3& q, Candidate& best) const {
        const Node& node = nodes_[id];
        if (node.axis < 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) {
                const Candidate c{(points_[order_[i]] - q).squaredNorm(), order_[i]};
                if (c < best) best = c;
            }
            return;
        }
        const double diff = q[node.axis] - node.split;
        const std::size_t first = diff <= 0.0 ? node.left : node.right;
        const std::size_t second = diff <= 0.0 ? node.right : node.left;
        search_nearest(first, q, best);
        if (diff * diff <= best.dist2) search_nearest(second, q, best);
    }

    void search_k(std::size_t id, const Vec3& q, std::size_t k, std::vector<Candidate>& heap) const {
        const Node& node = nodes_[id];
        if (node.axis < 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) {
                const Candidate c{(points_[order_[i]] - q).squaredNorm(), order_[i]};
                if (heap.size() < k) {
                    heap.push_back(c);
                    std::push_heap(heap.begin(), heap.end());
                } else if (c < heap.front()) {
                    std::pop_heap(heap.begin(), heap.end());
                    heap.back() = c;
                    std::push_heap(heap.begin(), heap.end());
                }
            }
            return;
        }
        const double diff = q[node.axis] - node.split;
        const std::size_t first = diff <= 0.0 ? node.left : node.right;
        const std::size_t second = diff <= 0.0 ? node.right : node.left;
        search_k(first, q, k, heap);
        if (heap.size() < k || diff * diff <= heap.front().dist2) search_k(second, q, k, heap);
    }

    Points points_;
    std::size_t leaf_size_;
    std::vector<Index> order_;
    std::vector<Node> nodes_;
};

}  // namespace spare
