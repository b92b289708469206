#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"

using namespace spare;

namespace {

Surface unit_triangle() {
    return make_mesh_surface({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)}, {Face{0, 1, 2}});
}

}  // namespace

TEST(Surface, RejectsNonUnitNormals) {
    EXPECT_THROW(Surface({Vec3::Zero(), Vec3::UnitX()}, {Vec3::UnitZ(), Vec3(0, 0, 2)}, {Edge{0, 1}}), InputError);
}

TEST(Surface, RejectsBadIndices) {
    const Points p{Vec3::Zero(), Vec3::UnitX()};
    const Points n{Vec3::UnitZ(), Vec3::UnitZ()};
    EXPECT_THROW(Surface(p, n, {Edge{0, 2}}), InputError);
    EXPECT_THROW(Surface(p, n, {Edge{1, 1}}), InputError);
    EXPECT_THROW(Surface(p, n, {}, {Face{0, 1, 5}}), InputError);
    EXPECT_THROW(Surface(p, {Vec3::UnitZ()}, {}), InputError);
}

TEST(Surface, CanonicalEdgesAndSortedNeighbors) {
    const Points p{Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY()};
    const Points n(3, Vec3::UnitZ());
    const Surface s(p, n, {Edge{2, 0}, Edge{0, 2}, Edge{1, 0}, Edge{2, 1}});
    ASSERT_EQ(s.edges().size(), 3u);
    for (const Edge& e : s.edges()) EXPECT_LT(e.a, e.b);
    const auto nb = s.neighbors(0);
    ASSERT_EQ(nb.size(), 2u);
    EXPECT_EQ(nb[0], 1u);
    EXPECT_EQ(nb[1], 2u);
}

TEST(Surface, NeighborRelationIsSymmetric) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        oracle::Gen g(seed);
        const Surface s = oracle::random_cloud(g, 40, 5);
        for (Index i = 0; i < s.size(); ++i) {
            for (Index j : s.neighbors(i)) {
                const auto back = s.neighbors(j);
                EXPECT_TRUE(std::binary_search(back.begin(), back.end(), i));
            }
        }
    }
}

TEST(Surface, WithPointsKeepsTopology) {
    const Surface s = unit_triangle();
    const Surface moved = s.with_points({Vec3(1, 1, 1), Vec3(2, 1, 1), Vec3(1, 2, 1)});
    EXPECT_EQ(moved.edges().size(), 3u);
    EXPECT_EQ(moved.faces().size(), 1u);
    EXPECT_THROW(s.with_points({Vec3::Zero()}), InputError);
}

TEST(Surface, EdgesFromFacesShareEdges) {
    const auto edges = edges_from_faces({Face{0, 1, 2}, Face{0, 2, 3}});
    EXPECT_EQ(edges.size(), 5u);
}

TEST(Surface, FaceNormalsOfPlanarGridAreAxisAligned) {
    Points p;
    std::vector<Face> f;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) p.emplace_back(i, j, 0.0);
    }
    for (Index i = 0; i < 3; ++i) {
        for (Index j = 0; j < 3; ++j) {
            f.push_back({i * 4 + j, (i + 1) * 4 + j, (i + 1) * 4 + j + 1});
            f.push_back({i * 4 + j, (i + 1) * 4 + j + 1, i * 4 + j + 1});
        }
    }
    for (const Vec3& n : face_normals_average(p, f)) EXPECT_NEAR(std::abs(n.z()), 1.0, 1e-12);
}

TEST(Surface, FaceNormalsRejectIsolatedVertex) {
    EXPECT_THROW(face_normals_average({Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()}, {Face{0, 1, 2}}),
                 InputError);
}

TEST(Surface, EstimatedNormalsOnPlaneAreConsistent) {
    oracle::Gen g(3);
    Points p;
    for (int i = 0; i < 200; ++i) p.emplace_back(g.uniform(), g.uniform(), 0.0);
    const Points n = estimate_normals(p, 8);
    for (const Vec3& v : n) EXPECT_NEAR(v.z(), 1.0, 1e-9);
}

TEST(Surface, EstimatedNormalsOnSphereAgreeOnOrientation) {
    oracle::Gen g(4);
    Points p;
    for (int i = 0; i < 400; ++i) p.push_back(g.unit());
    const Points n = estimate_normals(p, 10);
    const double sign = n[0].dot(p[0]) > 0 ? 1.0 : -1.0;
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_GT(sign * n[i].dot(p[i]), 0.9);
}

TEST(Surface, MeanEdgeLength) {
    EXPECT_NEAR(mean_edge_length(unit_triangle()), (2.0 + std::sqrt(2.0)) / 3.0, 1e-15);
}

TEST(SpatialIndex, NearestMatchesLinearScan) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        oracle::Gen g(seed);
        Points pts(1 + g.index(300));
        for (auto& p : pts) p = g.vec();
        const SpatialIndex index(pts, 1 + g.index(12));
        for (int q = 0; q < 100; ++q) {
            const Vec3 x = g.vec(1.5);
            const Index got = index.nearest(x);
            const Index want = oracle::nearest(pts, x);
            EXPECT_DOUBLE_EQ((pts[got] - x).norm(), (pts[want] - x).norm());
        }
    }
}

TEST(SpatialIndex, KNearestMatchesSortedScan) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        oracle::Gen g(seed);
        Points pts(50 + g.index(100));
        for (auto& p : pts) p = g.vec();
        const SpatialIndex index(pts);
        const Vec3 x = g.vec();
        const std::size_t k = 1 + g.index(20);
        std::vector<std::pair<double, Index>> all;
        for (Index i = 0; i < pts.size(); ++i) all.emplace_back((pts[i] - x).norm(), i);
        std::sort(all.begin(), all.end());
        const auto got = index.k_nearest(x, k);
        ASSERT_EQ(got.size(), k);
        for (std::size_t r = 0; r < k; ++r) {
            EXPECT_EQ(got[r].first, all[r].second);
            EXPECT_DOUBLE_EQ(got[r].second, all[r].first);
        }
    }
}

TEST(SpatialIndex, KNearestTiesBreakByIndex) {
    const Points pts{Vec3::UnitX(), -Vec3::UnitX(), Vec3::UnitY(), Vec3::Zero()};
    const SpatialIndex index(pts);
    const auto got = index.k_nearest(Vec3::Zero(), 4);
    EXPECT_EQ(got[0].first, 3u);
    EXPECT_EQ(got[1].first, 0u);
    EXPECT_EQ(got[2].first, 1u);
    EXPECT_EQ(got[3].first, 2u);
    EXPECT_EQ(index.k_nearest(Vec3::Zero(), 10).size(), 4u);
}

TEST(SpatialIndex, EmptySetThrows) { EXPECT_THROW(SpatialIndex(Points{}), InputError); }

TEST(KnnEdges, ContainEveryPointsNearestNeighbors) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        oracle::Gen g(seed);
        Points pts(60);
        for (auto& p : pts) p = g.vec();
        const std::size_t k = 2 + g.index(5);
        const auto edges = build_knn_edges(pts, k);
        const std::set<std::pair<Index, Index>> have = [&] {
            std::set<std::pair<Index, Index>> s;
            for (const Edge& e : edges) s.emplace(e.a, e.b);
            return s;
        }();
        for (Index i = 0; i < pts.size(); ++i) {
            std::vector<std::pair<double, Index>> d;
            for (Index j = 0; j < pts.size(); ++j) {
                if (j != i) d.emplace_back((pts[i] - pts[j]).norm(), j);
            }
            std::sort(d.begin(), d.end());
            for (std::size_t r = 0; r < k; ++r) {
                EXPECT_TRUE(have.count({std::min(i, d[r].second), std::max(i, d[r].second)}));
            }
        }
    }
}

TEST(KnnEdges, TooFewPointsThrows) {
    EXPECT_THROW(build_knn_edges({Vec3::Zero(), Vec3::UnitX()}, 2), InputError);
}

TEST(Geodesic, DistancesMatchDenseDijkstra) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        oracle::Gen g(seed);
        const Surface s = oracle::grid_surface(g, 6 + g.index(6), 6 + g.index(6));
        const Index src = g.index(s.size());
        const double radius = g.uniform(0.1, 1.0);
        const auto want = oracle::all_geodesics(s, src);
        const DistanceMap got = geodesic_distances(s, src, radius);
        for (Index i = 0; i < s.size(); ++i) {
            if (want[i] < radius) {
                ASSERT_TRUE(got.count(i));
                EXPECT_NEAR(got.at(i), want[i], 1e-12);
            } else {
                EXPECT_FALSE(got.count(i) && want[i] > radius + 1e-12);
            }
        }
        for (const auto& [i, d] : got) EXPECT_LT(d, radius);
        const Index other = g.index(s.size());
        EXPECT_NEAR(*geodesic_distance(s, src, other), want[other], 1e-12);
    }
}

TEST(Geodesic, DisconnectedPointsHaveNoDistance) {
    const Points p{Vec3::Zero(), Vec3::UnitX(), Vec3(5, 0, 0), Vec3(6, 0, 0)};
    const Surface s(p, Points(4, Vec3::UnitZ()), {Edge{0, 1}, Edge{2, 3}});
    EXPECT_FALSE(geodesic_distance(s, 0, 3).has_value());
    EXPECT_EQ(geodesic_distances(s, 0, 100.0).size(), 2u);
    EXPECT_TRUE(geodesic_distances(s, 0, 0.0).empty());
}

TEST(Normalize, JointBoxHasUnitDiagonalAndIsCentered) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        oracle::Gen g(seed);
        Surface a = oracle::random_cloud(g, 30);
        Surface b = oracle::random_cloud(g, 20);
        const double scale = g.uniform(0.1, 50.0);
        const Vec3 shift = g.vec(10.0);
        Points pa = a.points(), pb = b.points();
        for (auto& p : pa) p = scale * p + shift;
        for (auto& p : pb) p = scale * p + shift + g.vec(0.1) * scale;
        a = a.with_points(pa);
        b = b.with_points(pb);
        const NormalizedPair n = normalize_pair(a, b);
        Vec3 lo = n.source.points()[0], hi = lo;
        for (const Surface* s : {&n.source, &n.target}) {
            for (const Vec3& p : s->points()) {
                lo = lo.cwiseMin(p);
                hi = hi.cwiseMax(p);
            }
        }
        EXPECT_NEAR((hi - lo).norm(), 1.0, 1e-12);
        EXPECT_LT((lo + hi).norm(), 1e-12);
        for (std::size_t i = 0; i < pa.size(); ++i) {
            EXPECT_LT((n.transform.invert(n.source.points()[i]) - pa[i]).norm(), 1e-9 * scale);
        }
        EXPECT_EQ(n.source.normals(), a.normals());
    }
}

TEST(Normalize, DegenerateExtentThrows) {
    const Surface s(Points(3, Vec3::Ones()), Points(3, Vec3::UnitZ()), {});
    EXPECT_THROW(normalize_pair(s, s), InputError);
}

TEST(Rotation, ProjectionFixesRotations) {
    oracle::Gen g(1);
    for (int t = 0; t < 200; ++t) {
        const Mat3 r = g.rotation();
        EXPECT_LT((project_rotation(r) - r).norm(), 1e-12);
        EXPECT_TRUE(is_rotation(project_rotation(r + 0.3 * Mat3::Random())));
    }
}

TEST(Rotation, ProjectionIsNearestAmongSamples) {
    oracle::Gen g(2);
    for (int t = 0; t < 100; ++t) {
        Mat3 a;
        for (int k = 0; k < 9; ++k) a(k / 3, k % 3) = g.normal();
        const Mat3 p = project_rotation(a);
        ASSERT_TRUE(is_rotation(p));
        for (int s = 0; s < 50; ++s) EXPECT_LE((a - p).norm(), (a - g.rotation()).norm() + 1e-12);
    }
}

TEST(Rotation, TraceMaximizerBeatsRandomRotations) {
    oracle::Gen g(3);
    for (int t = 0; t < 100; ++t) {
        Mat3 s;
        for (int k = 0; k < 9; ++k) s(k / 3, k % 3) = g.normal();
        const Mat3 r = rotation_maximizing_trace(s);
        ASSERT_TRUE(is_rotation(r));
        for (int q = 0; q < 50; ++q) EXPECT_GE((r * s).trace(), (g.rotation() * s).trace() - 1e-12);
    }
}

TEST(Rotation, KabschAgreesWithTraceMaximizer) {
    oracle::Gen g(4);
    for (int t = 0; t < 50; ++t) {
        Points a(10), b(10);
        const Mat3 r = g.rotation();
        Mat3 s = Mat3::Zero();
        for (int i = 0; i < 10; ++i) {
            a[i] = g.vec();
            b[i] = r * a[i] + g.vec(0.01);
        }
        const oracle::Rigid fit = oracle::kabsch(a, b);
        Vec3 ca = Vec3::Zero(), cb = Vec3::Zero();
        for (int i = 0; i < 10; ++i) {
            ca += a[i] / 10.0;
            cb += b[i] / 10.0;
        }
        for (int i = 0; i < 10; ++i) s += (a[i] - ca) * (b[i] - cb).transpose();
        EXPECT_LT((rotation_maximizing_trace(s) - fit.r).norm(), 1e-9);
    }
}

TEST(DeformationGraph, InfluenceWeightsArePartitionOfUnity) {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        oracle::Gen g(seed);
        const Surface s = oracle::grid_surface(g, 12, 12);
        const double radius = g.uniform(0.2, 0.5);
        const DeformationGraph graph = build_graph(s, radius);
        ASSERT_EQ(graph.influence.size(), s.size());
        for (Index i = 0; i < s.size(); ++i) {
            double sum = 0.0;
            for (const auto& inf : graph.influence[i]) {
                EXPECT_GT(inf.weight, 0.0);
                sum += inf.weight;
            }
            EXPECT_NEAR(sum, 1.0, 1e-12);
        }
        // Coverage: each point within radius/2 of some node, geodesically.
        for (Index i = 0; i < s.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (Index p : graph.node_points) best = std::min(best, oracle::all_geodesics(s, p)[i]);
            EXPECT_LE(best, 0.5 * radius + 1e-12);
        }
        EXPECT_EQ(graph.node_points.front(), 0u);
    }
}

TEST(DeformationGraph, InfluenceMatchesBruteForceWeights) {
    oracle::Gen g(11);
    const Surface s = oracle::grid_surface(g, 10, 10);
    const double radius = 0.35;
    const DeformationGraph graph = build_graph(s, radius);
    for (Index i = 0; i < s.size(); ++i) {
        std::vector<double> raw(graph.node_count(), 0.0);
        double sum = 0.0;
        for (Index j = 0; j < graph.node_count(); ++j) {
            const double d = oracle::all_geodesics(s, graph.node_points[j])[i];
            if (d < radius) {
                const double q = 1.0 - d * d / (radius * radius);
                raw[j] = q * q * q;
                sum += raw[j];
            }
        }
        for (const auto& inf : graph.influence[i]) EXPECT_NEAR(inf.weight, raw[inf.node] / sum, 1e-12);
    }
}

TEST(DeformationGraph, IdentityAndRigidTransformsAreReproduced) {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        oracle::Gen g(seed);
        const Surface s = oracle::grid_surface(g, 10, 10);
        DeformationGraph graph = build_graph(s, 0.3);
        Points id = deform_points(graph, s);
        for (Index i = 0; i < s.size(); ++i) EXPECT_LT((id[i] - s.points()[i]).norm(), 1e-12);

        const Mat3 r = g.rotation();
        const Vec3 t = g.vec();
        for (Index j = 0; j < graph.node_count(); ++j) {
            graph.linear[j] = r;
            graph.translation[j] = r * graph.nodes[j] + t - graph.nodes[j];
        }
        const Points moved = deform_points(graph, s);
        for (Index i = 0; i < s.size(); ++i) EXPECT_LT((moved[i] - (r * s.points()[i] + t)).norm(), 1e-12);
        EXPECT_LT(smoothness_energy(graph), 1e-24);
        EXPECT_LT(rotation_energy(graph), 1e-24);
    }
}

TEST(DeformationGraph, SmoothnessWeightsHaveUnitMean) {
    oracle::Gen g(5);
    const Surface s = oracle::grid_surface(g, 12, 12);
    const DeformationGraph graph = build_graph(s, 0.3);
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& row : smoothness_weights(graph)) {
        for (double r : row) {
            sum += r;
            ++count;
        }
    }
    ASSERT_EQ(count, 2 * graph.edges.size());
    EXPECT_NEAR(sum / static_cast<double>(count), 1.0, 1e-12);
}

TEST(DeformationGraph, UncoveredPointThrows) {
    oracle::Gen g(6);
    const Surface s = oracle::grid_surface(g, 8, 8);
    EXPECT_THROW(build_graph_from_nodes(s, {0}, 0.1), InputError);
    EXPECT_THROW(build_graph(s, 0.0), InputError);
}

TEST(AlignmentSubset, FarthestPointOrder) {
    oracle::Gen g(7);
    const Surface s = oracle::random_cloud(g, 80);
    const auto sub = sample_alignment_subset(s, 20);
    ASSERT_EQ(sub.size(), 20u);
    EXPECT_EQ(sub[0], 0u);
    EXPECT_EQ(std::set<Index>(sub.begin(), sub.end()).size(), 20u);
    for (std::size_t k = 1; k < sub.size(); ++k) {
        auto dist_to_set = [&](Index i) {
            double d = std::numeric_limits<double>::infinity();
            for (std::size_t q = 0; q < k; ++q) d = std::min(d, (s.points()[i] - s.points()[sub[q]]).norm());
            return d;
        };
        const double chosen = dist_to_set(sub[k]);
        for (Index i = 0; i < s.size(); ++i) EXPECT_LE(dist_to_set(i), chosen + 1e-15);
    }
    const auto all = sample_alignment_subset(s, 1000);
    ASSERT_EQ(all.size(), s.size());
    for (Index i = 0; i < s.size(); ++i) EXPECT_EQ(all[i], i);
    EXPECT_THROW(sample_alignment_subset(s, 0), InputError);
}
