#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"

using namespace spare;
namespace fs = std::filesystem;

namespace {

fs::path workdir() {
    static const fs::path dir = [] {
        const fs::path d = fs::path(testing::TempDir()) / "spare_pipeline";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

/// Runs the CLI with `args`, returns its exit status. Output goes to `log`.
int cli(const std::string& args, const std::string& log = "cli.log") {
    const std::string cmd = std::string("\"") + SPARE_CLI_PATH + "\" " + args + " > \"" + (workdir() / log).string() +
                            "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
    std::istringstream in(slurp(p));
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) out.push_back(item);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

/// Generates a small bent-plane triple once and returns its directory.
fs::path plane_data() {
    static const fs::path dir = [] {
        const fs::path d = workdir() / "plane";
        EXPECT_EQ(cli("generate --scenario plane --resolution 14 --magnitude 20 --offset 0.3 --seed 1 --out " + q(d)), 0);
        return d;
    }();
    return dir;
}

double normalized_rmse(const ScenarioData& d, const PipelineResult& r) {
    const NormalizationTransform& t = r.transform;
    return rmse(t.apply(r.deformed.points()), t.apply(*d.truth.positions));
}

}  // namespace

TEST(Cli, GenerateWritesTriple) {
    const fs::path d = plane_data();
    EXPECT_TRUE(fs::exists(d / "source.ply"));
    EXPECT_TRUE(fs::exists(d / "target.ply"));
    const GroundTruth gt = load_ground_truth(d / "gt.txt");
    EXPECT_EQ(gt.positions->size(), load_surface(d / "source.ply").size());
    EXPECT_FALSE(gt.pairs.empty());
}

TEST(Cli, RegisterWritesAllOutputs) {
    const fs::path d = plane_data(), out = workdir() / "reg";
    ASSERT_EQ(cli("register " + q(d / "source.ply") + " " + q(d / "target.ply") + " --gt " + q(d / "gt.txt") +
                  " --out " + q(out)),
              0)
        << slurp(workdir() / "cli.log");
    for (const char* f : {"deformed.ply", "errormap.ply", "metrics.csv", "iterations_coarse.csv", "iterations_fine.csv",
                          "timings.csv"}) {
        EXPECT_TRUE(fs::exists(out / f)) << f;
    }
    const auto m = lines(out / "metrics.csv");
    ASSERT_EQ(m.size(), 2u);
    EXPECT_EQ(m[0], "rmse,corr_err,auc,overlap,auc_threshold_max,coarse_iters,fine_iters");
    const auto row = split(m[1]);
    ASSERT_EQ(row.size(), 7u);
    EXPECT_LT(std::stod(row[0]), 0.05);
    EXPECT_FALSE(row[1].empty());
    EXPECT_EQ(lines(out / "iterations_fine.csv").front(), "iter,energy,displacement,alpha_mean");
    EXPECT_EQ(lines(out / "timings.csv").front(), "stage,iter,seconds");

    const MeshData colored = read_ply(out / "errormap.ply");
    EXPECT_EQ(colored.colors.size(), colored.points.size());
    EXPECT_EQ(read_ply(out / "deformed.ply").faces, read_ply(d / "source.ply").faces);
}

TEST(Cli, RegisterIsDeterministic) {
    const fs::path d = plane_data(), a = workdir() / "det_a", b = workdir() / "det_b";
    const std::string base = "register " + q(d / "source.ply") + " " + q(d / "target.ply") + " --gt " + q(d / "gt.txt");
    ASSERT_EQ(cli(base + " --out " + q(a)), 0);
    ASSERT_EQ(cli(base + " --out " + q(b)), 0);
    for (const char* f : {"deformed.ply", "errormap.ply", "metrics.csv", "iterations_coarse.csv", "iterations_fine.csv"}) {
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
}

TEST(Cli, SkipCoarseKeepsTopology) {
    const fs::path d = plane_data(), out = workdir() / "skip";
    ASSERT_EQ(cli("register " + q(d / "source.ply") + " " + q(d / "target.ply") + " --skip-coarse --out " + q(out)), 0);
    EXPECT_EQ(lines(out / "iterations_coarse.csv").size(), 1u);
    EXPECT_GT(lines(out / "iterations_fine.csv").size(), 1u);
    const MeshData src = read_ply(d / "source.ply"), res = read_ply(out / "deformed.ply");
    EXPECT_EQ(res.points.size(), src.points.size());
    EXPECT_EQ(res.faces, src.faces);
    // Without ground truth the metric columns stay empty.
    EXPECT_EQ(split(lines(out / "metrics.csv")[1])[0], "");
}

TEST(Cli, LandmarksAndGroundTruthPassThrough) {
    const fs::path d = plane_data(), out = workdir() / "lm";
    std::ofstream(workdir() / "lm.txt") << "0 0\n13 13\n";
    ASSERT_EQ(cli("register " + q(d / "source.ply") + " " + q(d / "target.ply") + " --landmarks " +
                  q(workdir() / "lm.txt") + " --w-landmark 1e4 --gt " + q(d / "gt.txt") + " --out " + q(out)),
              0)
        << slurp(workdir() / "cli.log");
    const MeshData res = read_ply(out / "deformed.ply"), tgt = read_ply(d / "target.ply");
    EXPECT_LT((res.points[0] - tgt.points[0]).norm(), 1e-3);
    EXPECT_LT((res.points[13] - tgt.points[13]).norm(), 1e-3);
    EXPECT_FALSE(split(lines(out / "metrics.csv")[1])[0].empty());
}

TEST(Cli, EvaluateSubcommand) {
    const fs::path d = plane_data();
    ASSERT_EQ(cli("evaluate " + q(d / "source.ply") + " --gt " + q(d / "gt.txt") + " --source " + q(d / "source.ply") +
                  " --target " + q(d / "target.ply") + " --out " + q(workdir() / "eval.csv"),
                  "eval.log"),
              0);
    const auto row = split(lines(workdir() / "eval.csv")[1]);
    const GroundTruth gt = load_ground_truth(d / "gt.txt");
    const MeshData src = read_ply(d / "source.ply");
    EXPECT_NEAR(std::stod(row[0]), rmse(src.points, *gt.positions), 1e-12);
    EXPECT_NE(slurp(workdir() / "eval.log").find("rmse "), std::string::npos);
}

TEST(Cli, InputErrorsExitWithTwo) {
    const fs::path d = plane_data(), out = workdir() / "bad";
    const std::string pair = q(d / "source.ply") + " " + q(d / "target.ply") + " --out " + q(out);
    EXPECT_EQ(cli("register " + q(workdir() / "none.ply") + " " + q(d / "target.ply")), 2);
    EXPECT_EQ(cli("register " + pair + " --metric p2q"), 2);
    EXPECT_EQ(cli("register " + pair + " --w-arap -1"), 2);
    EXPECT_NE(slurp(workdir() / "cli.log").find("fine.w_arap"), std::string::npos);
    std::ofstream(workdir() / "lm_bad.txt") << "0 100000\n";
    EXPECT_EQ(cli("register " + pair + " --landmarks " + q(workdir() / "lm_bad.txt")), 2);
    std::ofstream(workdir() / "bad.ini") << "[fine]\nw_arap = -3\n";
    EXPECT_EQ(cli("register " + pair + " --config " + q(workdir() / "bad.ini")), 2);
    EXPECT_EQ(cli("frobnicate"), 2);
    EXPECT_EQ(cli("generate --scenario sphere --out " + q(out)), 2);
}

TEST(Cli, SolverFailureExitsWithThree) {
    // Two copies of one landmark at the largest finite weight overflow the system diagonal.
    const fs::path d = plane_data();
    std::ofstream(workdir() / "lm_dup.txt") << "0 0\n0 0\n";
    EXPECT_EQ(cli("register " + q(d / "source.ply") + " " + q(d / "target.ply") + " --landmarks " +
                  q(workdir() / "lm_dup.txt") + " --w-landmark 1e308 --out " + q(workdir() / "fail")),
              3)
        << slurp(workdir() / "cli.log");
    EXPECT_NE(slurp(workdir() / "cli.log").find("factorization failed"), std::string::npos);
}

TEST(Cli, BenchEmptySpecGivesHeaderOnly) {
    std::ofstream(workdir() / "empty.txt") << "# nothing\n\n";
    ASSERT_EQ(cli("bench --spec " + q(workdir() / "empty.txt") + " --out " + q(workdir() / "empty.csv")), 0);
    const auto l = lines(workdir() / "empty.csv");
    ASSERT_EQ(l.size(), 1u);
    EXPECT_EQ(l[0], "scenario,seed,metric,weights,rmse,corr_err,auc,overlap,auc_threshold_max,coarse_iters,fine_iters");
}

TEST(Cli, BenchRowsPerScenarioAndMetric) {
    std::ofstream(workdir() / "three.txt")
        << "kind=plane seed=0 resolution=10\nkind=bar seed=1 resolution=10\nkind=crop seed=2 resolution=10\n";
    ASSERT_EQ(cli("bench --spec " + q(workdir() / "three.txt") + " --metrics sp2p,p2pl,p2p --out " +
                  q(workdir() / "nine.csv") + " --timings " + q(workdir() / "nine_t.csv")),
              0)
        << slurp(workdir() / "cli.log");
    const auto l = lines(workdir() / "nine.csv");
    ASSERT_EQ(l.size(), 10u);
    EXPECT_EQ(l[1].rfind("plane,0,sp2p,robust,", 0), 0u) << l[1];
    EXPECT_EQ(l[9].rfind("crop,2,p2p,robust,", 0), 0u) << l[9];
    for (std::size_t k = 1; k < l.size(); ++k) EXPECT_EQ(split(l[k]).size(), 11u);
    EXPECT_EQ(lines(workdir() / "nine_t.csv").size(), 10u);
}

TEST(Pipeline, IdenticalInputsAreAFixedPoint) {
    const ScenarioData d = generate_scenario({.kind = ScenarioKind::BentPlane, .resolution = 20, .magnitude = 0.0});
    const PipelineResult r = register_surfaces(d.source, d.source, RunConfig{}, {}, &d.truth);
    EXPECT_LT(*r.report->rmse, 1e-6);
    EXPECT_LE(r.coarse_log.size(), 2u);
    EXPECT_EQ(r.fine_log.size(), 1u);
}

namespace {

/// The bent-plane scenario shared by the pipeline examples: a resampled target so
/// that no target vertex coincides with a ground-truth position.
SyntheticScenario bent_plane(std::uint64_t seed) {
    return {.kind = ScenarioKind::BentPlane, .resolution = 30, .magnitude = 10.0, .seed = seed, .resample_offset = 0.3};
}

}  // namespace

TEST(Pipeline, BentPlaneTenDegrees) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const ScenarioData d = generate_scenario(bent_plane(seed));
        const PipelineResult r = register_surfaces(d.source, d.target, RunConfig{}, {}, &d.truth);
        EXPECT_LT(normalized_rmse(d, r), 1e-3) << "seed " << seed;
        for (const Mat3& rot : r.state.rotations) EXPECT_TRUE(is_rotation(rot));
    }
}

TEST(Pipeline, PointToPointTrailsSymmetricMetric) {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const ScenarioData d = generate_scenario(bent_plane(seed));
        RunConfig sp2p, p2p;
        p2p.metric = MetricKind::P2P;
        const double e_sym = *register_surfaces(d.source, d.target, sp2p, {}, &d.truth).report->rmse;
        const double e_p2p = *register_surfaces(d.source, d.target, p2p, {}, &d.truth).report->rmse;
        wins += e_p2p > e_sym ? 1 : 0;
    }
    EXPECT_GE(wins, 8);
}

TEST(Pipeline, DenormalizationRoundTrips) {
    const ScenarioData d = generate_scenario({.kind = ScenarioKind::TwistedCylinder, .resolution = 16, .magnitude = 20.0});
    // Far from the origin and in large units.
    Points src = d.source.points(), tgt = d.target.points();
    for (Vec3& p : src) p = 250.0 * p + Vec3(1e3, -2e3, 5e2);
    for (Vec3& p : tgt) p = 250.0 * p + Vec3(1e3, -2e3, 5e2);
    const Surface s = d.source.with_points(src), t = d.target.with_points(tgt);
    const PipelineResult r = register_surfaces(s, t, RunConfig{});
    const Points back = r.transform.apply(r.deformed.points());
    for (Index i = 0; i < back.size(); ++i) {
        EXPECT_LT((back[i] - r.state.positions[i]).norm(), 1e-12 * (1.0 + r.state.positions[i].norm()));
    }
    // Scaling the inputs scales the result.
    const PipelineResult unit = register_surfaces(d.source, d.target, RunConfig{});
    for (Index i = 0; i < src.size(); ++i) {
        const Vec3 want = 250.0 * unit.deformed.points()[i] + Vec3(1e3, -2e3, 5e2);
        EXPECT_LT((r.deformed.points()[i] - want).norm(), 1e-6 * 250.0);
    }
}

TEST(Pipeline, SkipBothStagesReturnsSource) {
    const ScenarioData d = generate_scenario({.kind = ScenarioKind::BentPlane, .resolution = 10});
    RunConfig c;
    c.skip_coarse = true;
    c.skip_fine = true;
    const PipelineResult r = register_surfaces(d.source, d.target, c);
    for (Index i = 0; i < d.source.size(); ++i) {
        EXPECT_LT((r.deformed.points()[i] - d.source.points()[i]).norm(), 1e-12);
    }
}

TEST(Pipeline, BenchIsDeterministicInProcess) {
    const std::vector<SyntheticScenario> s{{.kind = ScenarioKind::PartialCrop, .resolution = 12, .seed = 3}};
    std::ostringstream a, b;
    write_bench_csv(a, bench(s, {MetricKind::SP2P, MetricKind::P2PL}, {WeightScheme::RobustGaussian}, RunConfig{}));
    write_bench_csv(b, bench(s, {MetricKind::SP2P, MetricKind::P2PL}, {WeightScheme::RobustGaussian}, RunConfig{}));
    EXPECT_EQ(a.str(), b.str());
}
