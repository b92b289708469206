// spare: command-line front end for registration, evaluation, benchmarking and
// synthetic data generation.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spare/spare.hpp"

namespace {

constexpr int kExitInput = 2;
constexpr int kExitSolver = 3;

struct Overrides {
    std::optional<std::string> config;
    std::optional<std::string> metric;
    std::optional<std::string> weights;
    std::optional<double> loss_scale;
    bool skip_coarse = false;
    bool skip_fine = false;
    std::optional<std::string> landmarks;
    std::optional<std::string> gt;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<double> w_arap;
    std::optional<double> w_arap_coarse;
    std::optional<double> w_smo;
    std::optional<double> w_rot;
    std::optional<double> w_landmark;
    std::optional<int> fine_iters;
    std::optional<int> coarse_iters;
    std::optional<double> fine_tol;
    std::optional<double> coarse_tol;
    std::optional<std::size_t> samples;
    std::optional<double> radius_multiplier;
    bool euclidean = false;
};

void add_run_options(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--metric", o.metric, "alignment metric: sp2p, p2p or p2pl");
    cmd->add_option("--weights", o.weights, "weight scheme: robust, none, hard, welsch, huber or gm");
    cmd->add_option("--loss-scale", o.loss_scale, "scale of the welsch/huber/gm losses (default sigma)");
    cmd->add_flag("--skip-coarse", o.skip_coarse, "start the fine stage from the identity");
    cmd->add_flag("--skip-fine", o.skip_fine, "stop after the coarse stage");
    cmd->add_option("--seed", o.seed, "random seed");
    cmd->add_option("--w-arap", o.w_arap, "fine ARAP weight");
    cmd->add_option("--w-arap-coarse", o.w_arap_coarse, "coarse ARAP weight");
    cmd->add_option("--w-smo", o.w_smo, "graph smoothness weight");
    cmd->add_option("--w-rot", o.w_rot, "graph rotation weight");
    cmd->add_option("--w-landmark", o.w_landmark, "landmark weight (default 100/|L|)");
    cmd->add_option("--fine-iters", o.fine_iters, "fine iteration limit");
    cmd->add_option("--coarse-iters", o.coarse_iters, "coarse iteration limit");
    cmd->add_option("--fine-tol", o.fine_tol, "fine stopping tolerance");
    cmd->add_option("--coarse-tol", o.coarse_tol, "coarse stopping tolerance");
    cmd->add_option("--samples", o.samples, "coarse alignment sample count");
    cmd->add_option("--radius-multiplier", o.radius_multiplier, "graph radius in mean edge lengths");
    cmd->add_flag("--euclidean", o.euclidean, "euclidean instead of geodesic correspondence error");
}

spare::RunConfig make_config(const Overrides& o) {
    spare::RunConfig c = o.config ? spare::load_config(*o.config) : spare::RunConfig{};
    if (o.metric) c.metric = spare::parse_metric(*o.metric);
    if (o.weights) c.weighting.scheme = spare::parse_weight_scheme(*o.weights);
    if (o.loss_scale) c.weighting.loss_scale = *o.loss_scale;
    if (o.skip_coarse) c.skip_coarse = true;
    if (o.skip_fine) c.skip_fine = true;
    if (o.landmarks) c.landmarks = *o.landmarks;
    if (o.gt) c.ground_truth = *o.gt;
    if (o.seed) c.seed = *o.seed;
    if (o.out) c.output_dir = *o.out;
    if (o.w_arap) c.fine.weights.w_arap = *o.w_arap;
    if (o.w_arap_coarse) c.coarse.w_arap = *o.w_arap_coarse;
    if (o.w_smo) c.coarse.w_smo = *o.w_smo;
    if (o.w_rot) c.coarse.w_rot = *o.w_rot;
    if (o.w_landmark) c.w_landmark = *o.w_landmark;
    if (o.fine_iters) c.fine.max_iters = *o.fine_iters;
    if (o.coarse_iters) c.coarse.max_iters = *o.coarse_iters;
    if (o.fine_tol) c.fine.tol = *o.fine_tol;
    if (o.coarse_tol) c.coarse.tol = *o.coarse_tol;
    if (o.samples) c.coarse.sample_count = *o.samples;
    if (o.radius_multiplier) c.coarse.radius_multiplier = *o.radius_multiplier;
    if (o.euclidean) c.distance_mode = spare::DistanceMode::Euclidean;
    c.sync_stages();
    spare::validate(c);
    return c;
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& s, Parse parse) {
    std::vector<T> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) {
        if (!item.empty()) out.push_back(parse(item));
    }
    return out;
}

void print_report(const spare::ErrorReport& r) {
    auto show = [](const char* name, const std::optional<double>& v) {
        if (v) std::cout << name << ' ' << spare::format_number(*v) << '\n';
    };
    show("rmse", r.rmse);
    show("corr_err", r.corr_err);
    std::cout << "auc " << spare::format_number(r.auc) << '\n';
    show("overlap", r.overlap);
}

int cmd_register(const std::string& source_path, const std::string& target_path, const Overrides& o) {
    const spare::RunConfig cfg = make_config(o);
    const spare::Surface source = spare::load_surface(source_path);
    const spare::Surface target = spare::load_surface(target_path);
    spare::Landmarks landmarks;
    if (cfg.landmarks) landmarks = spare::load_landmarks(*cfg.landmarks, source.size(), target.points());
    std::optional<spare::GroundTruth> gt;
    if (cfg.ground_truth) gt = spare::load_ground_truth(*cfg.ground_truth);

    const spare::PipelineResult r = spare::register_surfaces(source, target, cfg, landmarks, gt ? &*gt : nullptr);
    spare::write_outputs(cfg.output_dir, r, target);
    std::cout << "coarse iterations " << r.coarse_log.size() << ", fine iterations " << r.fine_log.size() << ", "
              << spare::format_number(r.total_seconds) << " s\n";
    if (r.report) print_report(*r.report);
    std::cout << "wrote " << cfg.output_dir.string() << '\n';
    return 0;
}

int cmd_evaluate(const std::string& result_path, const std::string& gt_path, const std::optional<std::string>& source_path,
                 const std::optional<std::string>& target_path, const std::optional<std::string>& out, bool euclidean) {
    const spare::MeshData result = spare::read_mesh(result_path);
    const spare::GroundTruth gt = spare::load_ground_truth(gt_path);
    std::optional<spare::Surface> source, target;
    if (source_path) source = spare::load_surface(*source_path);
    if (target_path) target = spare::load_surface(*target_path);
    const spare::ErrorReport r =
        spare::evaluate_result(result.points, source ? &*source : nullptr, target ? &*target : nullptr, gt,
                               euclidean ? spare::DistanceMode::Euclidean : spare::DistanceMode::Geodesic);
    print_report(r);
    if (out) {
        std::ofstream f(*out);
        if (!f) throw spare::InputError("cannot write " + *out);
        spare::write_metrics_csv(f, &r, 0, 0);
    }
    return 0;
}

int cmd_bench(const std::optional<std::string>& spec, const std::string& scenarios, int seeds, int resolution,
              const std::string& metrics, const std::string& schemes, const Overrides& o,
              const std::optional<std::string>& out, const std::optional<std::string>& timings) {
    const spare::RunConfig cfg = make_config(o);
    std::vector<spare::SyntheticScenario> list;
    if (spec) {
        list = spare::load_scenarios(*spec);
    } else {
        for (const auto kind : parse_list<spare::ScenarioKind>(scenarios, [](const std::string& s) {
                 return spare::parse_scenario_kind(s);
             })) {
            for (int s = 0; s < seeds; ++s) {
                spare::SyntheticScenario sc;
                sc.kind = kind;
                sc.seed = static_cast<std::uint64_t>(s) + cfg.seed;
                sc.resolution = static_cast<std::size_t>(resolution);
                sc.resample_offset = 0.3;
                list.push_back(sc);
            }
        }
    }
    const auto ms = parse_list<spare::MetricKind>(metrics, [](const std::string& s) { return spare::parse_metric(s); });
    const auto ws =
        parse_list<spare::WeightScheme>(schemes, [](const std::string& s) { return spare::parse_weight_scheme(s); });
    const auto rows = spare::bench(list, ms, ws, cfg);
    if (out) {
        std::ofstream f(*out);
        if (!f) throw spare::InputError("cannot write " + *out);
        spare::write_bench_csv(f, rows);
    } else {
        spare::write_bench_csv(std::cout, rows);
    }
    if (timings) {
        std::ofstream f(*timings);
        if (!f) throw spare::InputError("cannot write " + *timings);
        spare::write_bench_timings(f, rows);
    }
    return 0;
}

int cmd_generate(const spare::SyntheticScenario& sc, const std::string& out) {
    const spare::ScenarioData d = spare::generate_scenario(sc);
    std::filesystem::create_directories(out);
    const std::filesystem::path dir(out);
    spare::save_surface(dir / "source.ply", d.source);
    spare::save_surface(dir / "target.ply", d.target);
    spare::save_ground_truth(dir / "gt.txt", d.truth);
    std::cout << "wrote " << dir.string() << " (" << d.source.size() << " source, " << d.target.size()
              << " target points)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Non-rigid surface registration"};
    app.require_subcommand(1);

    Overrides reg;
    std::string source_path, target_path;
    auto* reg_cmd = app.add_subcommand("register", "register SOURCE onto TARGET");
    reg_cmd->add_option("source", source_path, "source surface (.ply or .obj)")->required();
    reg_cmd->add_option("target", target_path, "target surface (.ply or .obj)")->required();
    add_run_options(reg_cmd, reg);
    reg_cmd->add_option("--landmarks", reg.landmarks, "landmark file")->check(CLI::ExistingFile);
    reg_cmd->add_option("--gt", reg.gt, "ground-truth file")->check(CLI::ExistingFile);
    reg_cmd->add_option("--out", reg.out, "output directory");

    std::string result_path, gt_path;
    std::optional<std::string> eval_source, eval_target, eval_out;
    bool eval_euclidean = false;
    auto* eval_cmd = app.add_subcommand("evaluate", "compare a result against ground truth");
    eval_cmd->add_option("result", result_path, "deformed surface")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--gt", gt_path, "ground-truth file")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--source", eval_source, "source surface (needed for correspondence pairs)");
    eval_cmd->add_option("--target", eval_target, "target surface (needed for pairs and overlap)");
    eval_cmd->add_option("--out", eval_out, "metrics CSV path");
    eval_cmd->add_flag("--euclidean", eval_euclidean, "euclidean correspondence error");

    Overrides bench_opts;
    std::optional<std::string> bench_spec, bench_out, bench_timings;
    std::string bench_scenarios = "plane,bar,crop", bench_metrics = "sp2p,p2pl,p2p", bench_schemes = "robust";
    int bench_seeds = 1, bench_resolution = 30;
    auto* bench_cmd = app.add_subcommand("bench", "run synthetic scenarios and tabulate metrics");
    bench_cmd->add_option("--spec", bench_spec, "scenario list, one 'kind=... seed=...' line each")
        ->check(CLI::ExistingFile);
    bench_cmd->add_option("--scenarios", bench_scenarios, "comma-separated kinds when no --spec is given");
    bench_cmd->add_option("--seeds", bench_seeds, "seeds per kind when no --spec is given");
    bench_cmd->add_option("--resolution", bench_resolution, "scenario resolution when no --spec is given");
    bench_cmd->add_option("--metrics", bench_metrics, "comma-separated metrics");
    bench_cmd->add_option("--schemes", bench_schemes, "comma-separated weight schemes");
    bench_cmd->add_option("--out", bench_out, "CSV path (default stdout)");
    bench_cmd->add_option("--timings", bench_timings, "wall-time CSV path");
    add_run_options(bench_cmd, bench_opts);

    spare::SyntheticScenario gen;
    std::string gen_kind = "plane", gen_out;
    auto* gen_cmd = app.add_subcommand("generate", "write a synthetic source/target/ground-truth triple");
    gen_cmd->add_option("--scenario", gen_kind, "plane, bar, cylinder or crop");
    gen_cmd->add_option("--seed", gen.seed, "random seed");
    gen_cmd->add_option("--resolution", gen.resolution, "samples along the main direction");
    gen_cmd->add_option("--magnitude", gen.magnitude, "deformation angle in degrees");
    gen_cmd->add_option("--offset", gen.resample_offset, "target resampling offset in sample spacings");
    gen_cmd->add_option("--crop", gen.crop_fraction, "fraction of target removed (crop scenario)");
    gen_cmd->add_option("--noise", gen.noise, "target noise standard deviation");
    gen_cmd->add_option("--rigid-angle", gen.rigid_angle, "extra rigid rotation in degrees");
    gen_cmd->add_option("--rigid-translation", gen.rigid_translation, "extra rigid translation length");
    gen_cmd->add_option("--relief", gen.relief, "bump height scale of the plane scenarios");
    gen_cmd->add_option("--out", gen_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    }

    try {
        if (*reg_cmd) return cmd_register(source_path, target_path, reg);
        if (*eval_cmd) return cmd_evaluate(result_path, gt_path, eval_source, eval_target, eval_out, eval_euclidean);
        if (*bench_cmd) {
            return cmd_bench(bench_spec, bench_scenarios, bench_seeds, bench_resolution, bench_metrics, bench_schemes,
                             bench_opts, bench_out, bench_timings);
        }
        if (*gen_cmd) {
            gen.kind = spare::parse_scenario_kind(gen_kind);
            return cmd_generate(gen, gen_out);
        }
    } catch (const spare::SolverError& e) {
        std::cerr << "solver failure: " << e.what() << '\n';
        return kExitSolver;
    } catch (const spare::InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitInput;
    }
    return 0;
}
