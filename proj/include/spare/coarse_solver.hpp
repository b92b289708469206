#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <span>
#include <utility>
#include <vector>

#include "spare/deformation_graph.hpp"
#include "spare/energy.hpp"
#include "spare/fine_solver.hpp"
#include "spare/linear_solver.hpp"
#include "spare/variants.hpp"

namespace spare {

struct CoarseConfig {
    double w_arap = 500.0;
    double w_smo = 0.01;
    double w_rot = 1e-4;
    double w_landmark = 0.0;
    std::size_t sample_count = 3000;
    double radius_multiplier = 10.0;
    int max_iters = 30;
    double tol = 1e-3;
    /// <= 0 selects the median initial closest-point distance.
    double sigma = 0.0;
    MetricKind metric = MetricKind::SP2P;
    WeightSettings weighting{};
    double regularization = 1e-10;
};

/// Graph over the source with radius R = radius_multiplier * mean source edge length.
inline DeformationGraph build_graph(const Surface& surface, const CoarseConfig& config) {
    const double mean_len = mean_edge_length(surface);
    if (!(mean_len > 0.0)) throw InputError("deformation graph: source has no edges");
    return build_graph(surface, config.radius_multiplier * mean_len);
}

/// Normal equations K X = b of the transform subproblem, before the proximal guard.
struct CoarseSystem {
    SparseMatrix matrix;
    Eigen::VectorXd rhs;
    Eigen::VectorXd anchor;
    double regularization = 0.0;
};

/// Packs node transforms as X_j = [A_j column 0; column 1; column 2; t_j].
inline Eigen::VectorXd pack_transforms(const DeformationGraph& g) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(12 * g.node_count()));
    for (Index j = 0; j < g.node_count(); ++j) {
        const auto b = static_cast<Eigen::Index>(12 * j);
        for (int c = 0; c < 3; ++c) x.segment<3>(b + 3 * c) = g.linear[j].col(c);
        x.segment<3>(b + 9) = g.translation[j];
    }
    return x;
}

inline void unpack_transforms(const Eigen::VectorXd& x, DeformationGraph& g) {
    for (Index j = 0; j < g.node_count(); ++j) {
        const auto b = static_cast<Eigen::Index>(12 * j);
        for (int c = 0; c < 3; ++c) g.linear[j].col(c) = x.segment<3>(b + 3 * c);
        g.translation[j] = x.segment<3>(b + 9);
    }
}

/// Precomputed structure of the coarse problem for one source surface and graph.
///
/// Each deformed point is linear in the node transforms: v^_i = sum_j sum_k g_ijk x_jk + c_i
/// with x_jk the k-th 3-vector slot of X_j, g_ij = w_ij [v_i - p_j; 1] and c_i = sum_j w_ij p_j.
/// The ARAP, smoothness and rotation terms act identically on every coordinate, so their
/// quadratic parts are stored as 4x4 slot blocks and expanded with I_3 at assembly. The
/// ARAP and smoothness matrices do not change between iterations and are built once.
class CoarseProblem {
public:
    struct Blend {
        std::vector<Index> nodes;
        std::vector<std::array<double, 4>> g;
        Vec3 offset = Vec3::Zero();
    };

    CoarseProblem(const Surface& source, DeformationGraph graph, std::vector<Index> subset, const CoarseConfig& config,
                  Landmarks landmarks = {})
        : source_(&source), graph_(std::move(graph)), subset_(std::move(subset)), config_(config),
          landmarks_(std::move(landmarks)) {
        const std::size_t n = source.size();
        if (graph_.influence.size() != n) throw InputError("coarse problem: graph does not match the source");
        in_subset_.assign(n, 0);
        for (Index i : subset_) {
            if (i >= n) throw InputError("coarse problem: subset index out of range");
            in_subset_[i] = 1;
        }
        if (subset_.empty()) throw InputError("coarse problem: empty alignment subset");
        for (const Landmark& l : landmarks_) {
            if (l.source >= n) throw InputError("landmark index out of range");
        }
        build_blends();
        build_pattern();
        build_constant_terms();
    }

    const DeformationGraph& graph() const { return graph_; }
    DeformationGraph& graph() { return graph_; }
    const std::vector<Index>& subset() const { return subset_; }
    bool in_subset(Index i) const { return in_subset_[i] != 0; }
    const Blend& blend(Index i) const { return blends_[i]; }
    std::size_t unknowns() const { return 12 * graph_.node_count(); }

    Points deformed() const { return deform_points(graph_, *source_); }

    /// K and b for fixed correspondences (weights zero outside the subset), fixed
    /// rotations R_i, and E_rot linearized at the current node transforms.
    CoarseSystem assemble(const Surface& target, const CorrespondenceSet& corr,
                          const std::vector<Mat3>& rotations) const {
        const std::size_t nodes = graph_.node_count();
        std::vector<double> blocks(144 * block_count_, 0.0);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(12 * nodes));

        // Slot-space constant terms, expanded with I_3.
        for (std::size_t b = 0; b < block_count_; ++b) {
            double* blk = &blocks[144 * b];
            const auto& s = slot_blocks_[b];
            for (int k = 0; k < 4; ++k) {
                for (int kk = 0; kk < 4; ++kk) {
                    const double v = s[4 * k + kk];
                    if (v == 0.0) continue;
                    for (int d = 0; d < 3; ++d) blk[12 * (3 * k + d) + 3 * kk + d] += v;
                }
            }
        }
        rhs += constant_rhs_;

        // Rotation term linearized at the current A_j: target proj_R(A_j).
        const double rot_scale = nodes ? config_.w_rot / static_cast<double>(nodes) : 0.0;
        for (Index j = 0; j < nodes; ++j) {
            const Mat3 z = project_rotation(graph_.linear[j]);
            for (int c = 0; c < 3; ++c) rhs.segment<3>(static_cast<Eigen::Index>(12 * j + 3 * c)) += rot_scale * z.col(c);
        }

        // ARAP right-hand side: R_i (v_i - v_j) - (c_i - c_j) per directed edge.
        const Points& v = source_->points();
        for (std::size_t e = 0; e < arap_pairs_.size(); ++e) {
            const ArapPair& p = arap_pairs_[e];
            const Vec3 y = rotations[p.i] * (v[p.i] - v[p.j]) - (blends_[p.i].offset - blends_[p.j].offset);
            for (const auto& [node, a] : p.slots) {
                for (int k = 0; k < 4; ++k) {
                    rhs.segment<3>(static_cast<Eigen::Index>(12 * node + 3 * k)) += p.scale * a[k] * y;
                }
            }
        }

        // Alignment rows on the subset.
        const double align_scale = 1.0 / static_cast<double>(subset_.size());
        for (Index i : subset_) {
            const Index t = corr.target[i];
            const MetricRows rows = metric_rows(config_.metric, rotations[i] * source_->normals()[i],
                                                target.points()[t], target.normals()[t], corr.weight[i]);
            Mat3 m = Mat3::Zero();
            Vec3 r = Vec3::Zero();
            for (int q = 0; q < rows.count; ++q) {
                m += rows.rows[q].coef * rows.rows[q].coef.transpose();
                r += rows.rows[q].coef * (rows.rows[q].rhs - rows.rows[q].coef.dot(blends_[i].offset));
            }
            add_point_term(i, align_scale * m, align_scale * r, blocks, rhs);
        }

        for (const Landmark& l : landmarks_) {
            add_point_term(l.source, config_.w_landmark * Mat3::Identity(),
                           config_.w_landmark * (l.target - blends_[l.source].offset), blocks, rhs);
        }

        std::vector<Eigen::Triplet<double>> triplets;
        triplets.reserve(144 * block_count_);
        for (Index a = 0; a < nodes; ++a) {
            for (const auto& [b, id] : pattern_[a]) {
                const double* blk = &blocks[144 * id];
                for (int r = 0; r < 12; ++r) {
                    for (int c = 0; c < 12; ++c) {
                        triplets.emplace_back(static_cast<int>(12 * a + r), static_cast<int>(12 * b + c),
                                              blk[12 * r + c]);
                    }
                }
            }
        }
        CoarseSystem sys;
        const auto dim = static_cast<Eigen::Index>(12 * nodes);
        sys.matrix.resize(dim, dim);
        sys.matrix.setFromTriplets(triplets.begin(), triplets.end());
        sys.matrix.makeCompressed();
        sys.rhs = std::move(rhs);
        sys.anchor = pack_transforms(graph_);
        sys.regularization = config_.regularization;
        return sys;
    }

    /// Coarse objective at the current graph transforms and positions. With
    /// `frozen_rotation_targets` the rotation term uses those targets in place of proj_R(A_j).
    double objective(const Surface& target, const CorrespondenceSet& corr, const std::vector<Mat3>& rotations,
                     const Points& positions, const std::vector<Mat3>* frozen_rotation_targets = nullptr) const {
        double align = 0.0;
        for (Index i : subset_) {
            const Index t = corr.target[i];
            align += corr.weight[i] * metric_error(config_.metric, positions[i], rotations[i] * source_->normals()[i],
                                                   target.points()[t], target.normals()[t]);
        }
        align /= static_cast<double>(subset_.size());

        const DeformationState st{positions, rotations, {}};
        double e = align + config_.w_arap * arap_energy(st, *source_) + config_.w_smo * smoothness_energy(graph_);
        if (graph_.node_count() > 0) {
            double rot = 0.0;
            for (Index j = 0; j < graph_.node_count(); ++j) {
                const Mat3 z = frozen_rotation_targets ? (*frozen_rotation_targets)[j] : project_rotation(graph_.linear[j]);
                rot += (graph_.linear[j] - z).squaredNorm();
            }
            e += config_.w_rot * rot / static_cast<double>(graph_.node_count());
        }
        if (!landmarks_.empty()) e += config_.w_landmark * landmark_energy(st, landmarks_);
        return e;
    }

    /// omega for point i in the coarse rotation subproblem: w_ARAP^C |S| / (|N(i)| 2|E|).
    double rotation_arap_weight(Index i) const {
        return arap_rotation_weight(config_.w_arap, subset_.size(), source_->neighbors(i).size(),
                                    source_->edges().size());
    }

private:
    struct ArapPair {
        Index i = 0, j = 0;
        double scale = 0.0;
        std::vector<std::pair<Index, std::array<double, 4>>> slots;  // (F_i - F_j) in slot space
    };

    void build_blends() {
        const Points& v = source_->points();
        blends_.resize(source_->size());
        for (Index i = 0; i < source_->size(); ++i) {
            auto inf = graph_.influence[i];
            std::sort(inf.begin(), inf.end(), [](const auto& a, const auto& b) { return a.node < b.node; });
            Blend& b = blends_[i];
            for (const auto& [j, w] : inf) {
                const Vec3 r = v[i] - graph_.nodes[j];
                b.nodes.push_back(j);
                b.g.push_back({w * r.x(), w * r.y(), w * r.z(), w});
                b.offset += w * graph_.nodes[j];
            }
        }
    }

    void build_pattern() {
        const std::size_t nodes = graph_.node_count();
        std::vector<std::pair<Index, Index>> pairs;
        for (Index j = 0; j < nodes; ++j) pairs.emplace_back(j, j);
        for (const Edge& e : graph_.edges) {
            pairs.emplace_back(e.a, e.b);
            pairs.emplace_back(e.b, e.a);
        }
        auto add_all = [&](const std::vector<Index>& ns) {
            for (Index a : ns) {
                for (Index b : ns) pairs.emplace_back(a, b);
            }
        };
        for (Index i = 0; i < source_->size(); ++i) {
            for (Index j : source_->neighbors(i)) {
                std::vector<Index> ns = blends_[i].nodes;
                ns.insert(ns.end(), blends_[j].nodes.begin(), blends_[j].nodes.end());
                std::sort(ns.begin(), ns.end());
                ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
                add_all(ns);
            }
        }
        for (Index i : subset_) add_all(blends_[i].nodes);
        for (const Landmark& l : landmarks_) add_all(blends_[l.source].nodes);
        std::sort(pairs.begin(), pairs.end());
        pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
        pattern_.assign(nodes, {});
        block_count_ = pairs.size();
        for (std::size_t id = 0; id < pairs.size(); ++id) pattern_[pairs[id].first].emplace_back(pairs[id].second, id);
    }

    std::size_t block_id(Index a, Index b) const {
        const auto& row = pattern_[a];
        const auto it = std::lower_bound(row.begin(), row.end(), std::make_pair(b, std::size_t{0}),
                                         [](const auto& x, const auto& y) { return x.first < y.first; });
        return it->second;
    }

    void build_constant_terms() {
        const std::size_t nodes = graph_.node_count();
        slot_blocks_.assign(block_count_, std::array<double, 16>{});
        constant_rhs_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(12 * nodes));

        // ARAP: residual (F_i - F_j) X + (c_i - c_j) - R_i (v_i - v_j).
        const std::size_t edge_count = source_->edges().size();
        const double arap_scale = edge_count ? config_.w_arap / (2.0 * static_cast<double>(edge_count)) : 0.0;
        for (Index i = 0; i < source_->size(); ++i) {
            const auto nbrs = source_->neighbors(i);
            for (Index j : nbrs) {
                ArapPair p;
                p.i = i;
                p.j = j;
                p.scale = arap_scale / static_cast<double>(nbrs.size());
                const Blend& bi = blends_[i];
                const Blend& bj = blends_[j];
                std::size_t x = 0, y = 0;
                while (x < bi.nodes.size() || y < bj.nodes.size()) {
                    std::array<double, 4> a{};
                    Index node;
                    if (y == bj.nodes.size() || (x < bi.nodes.size() && bi.nodes[x] < bj.nodes[y])) {
                        node = bi.nodes[x];
                        a = bi.g[x++];
                    } else if (x == bi.nodes.size() || bj.nodes[y] < bi.nodes[x]) {
                        node = bj.nodes[y];
                        for (int k = 0; k < 4; ++k) a[k] = -bj.g[y][k];
                        ++y;
                    } else {
                        node = bi.nodes[x];
                        for (int k = 0; k < 4; ++k) a[k] = bi.g[x][k] - bj.g[y][k];
                        ++x;
                        ++y;
                    }
                    p.slots.emplace_back(node, a);
                }
                for (const auto& [na, aa] : p.slots) {
                    for (const auto& [nb, ab] : p.slots) {
                        auto& blk = slot_blocks_[block_id(na, nb)];
                        for (int k = 0; k < 4; ++k) {
                            for (int kk = 0; kk < 4; ++kk) blk[4 * k + kk] += p.scale * aa[k] * ab[kk];
                        }
                    }
                }
                arap_pairs_.push_back(std::move(p));
            }
        }

        // Smoothness: D_ij = r_ij [A_j (p_i - p_j) + p_j + t_j - (p_i + t_i)].
        if (!graph_.edges.empty()) {
            const double smo_scale = config_.w_smo / (2.0 * static_cast<double>(graph_.edges.size()));
            const auto r = smoothness_weights(graph_);
            for (Index i = 0; i < nodes; ++i) {
                for (std::size_t q = 0; q < graph_.node_neighbors[i].size(); ++q) {
                    const Index j = graph_.node_neighbors[i][q];
                    const Vec3 dp = graph_.nodes[i] - graph_.nodes[j];
                    const double rij = r[i][q];
                    const std::array<std::pair<Index, std::array<double, 4>>, 2> slots{
                        std::make_pair(j, std::array<double, 4>{rij * dp.x(), rij * dp.y(), rij * dp.z(), rij}),
                        std::make_pair(i, std::array<double, 4>{0.0, 0.0, 0.0, -rij})};
                    const Vec3 y = rij * dp;
                    for (const auto& [na, aa] : slots) {
                        for (const auto& [nb, ab] : slots) {
                            auto& blk = slot_blocks_[block_id(na, nb)];
                            for (int k = 0; k < 4; ++k) {
                                for (int kk = 0; kk < 4; ++kk) blk[4 * k + kk] += smo_scale * aa[k] * ab[kk];
                            }
                        }
                        for (int k = 0; k < 4; ++k) {
                            constant_rhs_.segment<3>(static_cast<Eigen::Index>(12 * na + 3 * k)) +=
                                smo_scale * aa[k] * y;
                        }
                    }
                }
            }
        }

        // Rotation term: identity on the nine linear slots.
        if (nodes > 0) {
            const double rot_scale = config_.w_rot / static_cast<double>(nodes);
            for (Index j = 0; j < nodes; ++j) {
                auto& blk = slot_blocks_[block_id(j, j)];
                for (int k = 0; k < 3; ++k) blk[4 * k + k] += rot_scale;
            }
        }
    }

    // Adds (F_i^T M F_i, F_i^T r) for a point-level quadratic ||M^(1/2)(v^_i) - ...||^2.
    void add_point_term(Index i, const Mat3& m, const Vec3& r, std::vector<double>& blocks,
                        Eigen::VectorXd& rhs) const {
        const Blend& b = blends_[i];
        for (std::size_t x = 0; x < b.nodes.size(); ++x) {
            for (std::size_t y = 0; y < b.nodes.size(); ++y) {
                double* blk = &blocks[144 * block_id(b.nodes[x], b.nodes[y])];
                for (int k = 0; k < 4; ++k) {
                    for (int kk = 0; kk < 4; ++kk) {
                        const double gg = b.g[x][k] * b.g[y][kk];
                        for (int d = 0; d < 3; ++d) {
                            for (int dd = 0; dd < 3; ++dd) blk[12 * (3 * k + d) + 3 * kk + dd] += gg * m(d, dd);
                        }
                    }
                }
            }
            for (int k = 0; k < 4; ++k) {
                rhs.segment<3>(static_cast<Eigen::Index>(12 * b.nodes[x] + 3 * k)) += b.g[x][k] * r;
            }
        }
    }

    const Surface* source_;
    DeformationGraph graph_;
    std::vector<Index> subset_;
    std::vector<char> in_subset_;
    CoarseConfig config_;
    Landmarks landmarks_;
    std::vector<Blend> blends_;
    std::vector<std::vector<std::pair<Index, std::size_t>>> pattern_;
    std::size_t block_count_ = 0;
    std::vector<std::array<double, 16>> slot_blocks_;
    Eigen::VectorXd constant_rhs_;
    std::vector<ArapPair> arap_pairs_;
};

/// One-shot assembly of the coarse system (rebuilds the constant structure).
inline CoarseSystem assemble_coarse_system(const DeformationGraph& graph, const Surface& source, const Surface& target,
                                           const std::vector<Index>& subset, const CorrespondenceSet& corr,
                                           const std::vector<Mat3>& rotations, const CoarseConfig& config,
                                           const Landmarks& landmarks = {}) {
    const CoarseProblem problem(source, graph, subset, config, landmarks);
    return problem.assemble(target, corr, rotations);
}

inline Eigen::VectorXd solve_coarse_system(const CoarseSystem& system, CachedCholesky& solver) {
    SparseMatrix a = system.matrix;
    Eigen::VectorXd b = system.rhs;
    add_proximal_term(a, b, system.anchor, system.regularization);
    return solver.solve(a, b);
}

struct CoarseResult {
    DeformationState state;
    DeformationGraph graph;
    std::vector<Index> subset;
    std::vector<IterationRecord> log;
    double sigma = 0.0;
    bool converged = false;
};

/// Closest points and weights for the subset members; all other points get weight 0.
inline CorrespondenceSet subset_correspondences(const CoarseProblem& problem, const DeformationState& state,
                                                const Surface& target, const SpatialIndex& target_index, double sigma,
                                                const WeightSettings& weighting, MetricKind metric) {
    CorrespondenceSet corr;
    corr.target.assign(state.positions.size(), 0);
    corr.weight.assign(state.positions.size(), 0.0);
    for (Index i : problem.subset()) {
        const Index t = target_index.nearest(state.positions[i]);
        corr.target[i] = t;
        corr.weight[i] = pair_weight(weighting, metric, state.positions[i], state.normals[i], target.points()[t],
                                     target.normals()[t], sigma);
    }
    return corr;
}

/// Rotation update for every source point after a transform solve; only subset
/// members carry an alignment contribution.
inline std::vector<Mat3> update_coarse_rotations(const CoarseProblem& problem, const Surface& source,
                                                 const Surface& target, const CorrespondenceSet& corr,
                                                 const std::vector<Mat3>& previous, const Points& positions,
                                                 MetricKind metric) {
    std::vector<Mat3> out(source.size());
    std::vector<Vec3> rest, deformed;
    const Points& v = source.points();
    for (Index i = 0; i < source.size(); ++i) {
        rest.clear();
        deformed.clear();
        for (Index j : source.neighbors(i)) {
            rest.push_back(v[i] - v[j]);
            deformed.push_back(positions[i] - positions[j]);
        }
        const bool aligned = problem.in_subset(i) && metric == MetricKind::SP2P;
        const Index t = corr.target[i];
        const Mat3 s = rotation_cross_covariance(source.normals()[i], previous[i], target.normals()[t],
                                                 positions[i] - target.points()[t], aligned ? corr.weight[i] : 0.0,
                                                 problem.rotation_arap_weight(i), rest, deformed);
        out[i] = rotation_from_cross_covariance(s, previous[i]);
    }
    return out;
}

/// Deformation-graph coarse alignment. Returns a dense state for all source points.
inline CoarseResult run_coarse(const Surface& source, const Surface& target, const CoarseConfig& config,
                               const Landmarks& landmarks = {}, const IterationObserver& observer = {}) {
    if (config.max_iters < 1 || !(config.tol > 0.0)) throw InputError("coarse solver: need max_iters >= 1 and tol > 0");
    const SpatialIndex target_index(target.points());
    CoarseProblem problem(source, build_graph(source, config), sample_alignment_subset(source, config.sample_count),
                          config, landmarks);

    CoarseResult result;
    result.sigma = config.sigma > 0.0 ? config.sigma : compute_sigma(source.points(), target_index);
    DeformationState state = DeformationState::identity(source);
    state.positions = problem.deformed();

    CachedCholesky solver;
    for (int k = 0; k < config.max_iters; ++k) {
        const auto start = std::chrono::steady_clock::now();
        const CorrespondenceSet corr = subset_correspondences(problem, state, target, target_index, result.sigma,
                                                              config.weighting, config.metric);
        const CoarseSystem system = problem.assemble(target, corr, state.rotations);
        unpack_transforms(solve_coarse_system(system, solver), problem.graph());

        DeformationState next;
        next.positions = problem.deformed();
        next.rotations = update_coarse_rotations(problem, source, target, corr, state.rotations, next.positions,
                                                 config.metric);
        next.refresh_normals(source);

        IterationRecord rec;
        rec.iter = k + 1;
        rec.displacement = rms_displacement(next.positions, state.positions);
        rec.energy = problem.objective(target, corr, next.rotations, next.positions);
        double wsum = 0.0;
        for (Index i : problem.subset()) wsum += corr.weight[i];
        rec.alpha_mean = wsum / static_cast<double>(problem.subset().size());
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
    result.graph = problem.graph();
    result.subset = problem.subset();
    return result;
}

}  // namespace spare
