#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "spare/coarse_solver.hpp"
#include "spare/config.hpp"
#include "spare/evaluation.hpp"
#include "spare/fine_solver.hpp"
#include "spare/mesh_io.hpp"
#include "spare/normalize.hpp"
#include "spare/scenario.hpp"

namespace spare {

struct PipelineResult {
    Surface deformed;  // original units, source topology
    DeformationState state;  // normalized units
    NormalizationTransform transform;
    std::vector<IterationRecord> coarse_log;
    std::vector<IterationRecord> fine_log;
    std::optional<ErrorReport> report;
    double coarse_seconds = 0.0;
    double fine_seconds = 0.0;
    double total_seconds = 0.0;
};

namespace detail {

template <typename F>
auto run_stage(const char* stage, F&& f) {
    try {
        return f();
    } catch (const SolverError& e) {
        throw SolverError(std::string(stage) + " stage: " + e.what());
    } catch (const InputError& e) {
        throw InputError(std::string(stage) + " stage: " + e.what());
    }
}

inline double seconds_since(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

}  // namespace detail

/// Metrics for a result against ground truth. Source and target may be null, in
/// which case the quantities that need them are left unset; pairs need both.
inline ErrorReport evaluate_result(const Points& deformed, const Surface* source, const Surface* target,
                                   const GroundTruth& gt, DistanceMode mode = DistanceMode::Geodesic) {
    if (gt.empty()) throw InputError("evaluate: empty ground truth");
    ErrorReport report;
    if (gt.positions) {
        report.rmse = rmse(deformed, *gt.positions);
        report.per_point_errors = point_errors(deformed, *gt.positions);
        if (target) report.overlap = overlap_ratio(*gt.positions, *target);
    }
    if (!gt.pairs.empty()) {
        if (!source || !target) throw InputError("evaluate: correspondence pairs need the source and target surfaces");
        if (source->size() != deformed.size()) throw InputError("evaluate: result and source point counts differ");
        report.pair_errors = correspondence_errors(deformed, *source, target->points(), gt.pairs, mode);
        report.corr_err = mean(report.pair_errors);
    }
    apply_threshold_grid(report, threshold_grid(report.curve_errors()));
    return report;
}

/// normalize -> coarse -> fine -> de-normalize, then evaluation when ground truth is given.
inline PipelineResult register_surfaces(const Surface& source, const Surface& target, RunConfig config,
                                        const Landmarks& landmarks = {}, const GroundTruth* truth = nullptr) {
    const auto start = std::chrono::steady_clock::now();
    config.sync_stages();
    validate(config);
    PipelineResult result;
    const NormalizedPair pair = detail::run_stage("normalize", [&] { return normalize_pair(source, target); });
    result.transform = pair.transform;

    Landmarks scaled = landmarks;
    for (Landmark& l : scaled) {
        if (l.source >= source.size()) throw InputError("landmark source index out of range");
        l.target = pair.transform.apply(l.target);
    }
    const double w_landmark = config.w_landmark ? *config.w_landmark : default_landmark_weight(scaled.size());
    config.coarse.w_landmark = w_landmark;
    config.fine.weights.w_landmark = w_landmark;

    DeformationState state = DeformationState::identity(pair.source);
    if (!config.skip_coarse) {
        const auto t = std::chrono::steady_clock::now();
        CoarseResult coarse =
            detail::run_stage("coarse", [&] { return run_coarse(pair.source, pair.target, config.coarse, scaled); });
        state = std::move(coarse.state);
        result.coarse_log = std::move(coarse.log);
        result.coarse_seconds = detail::seconds_since(t);
    }
    if (!config.skip_fine) {
        const auto t = std::chrono::steady_clock::now();
        FineResult fine =
            detail::run_stage("fine", [&] { return run_fine(pair.source, pair.target, state, config.fine, scaled); });
        state = std::move(fine.state);
        result.fine_log = std::move(fine.log);
        result.fine_seconds = detail::seconds_since(t);
    }
    result.deformed = source.with_points(pair.transform.invert(state.positions)).with_normals(state.normals);
    result.state = std::move(state);
    if (truth) {
        result.report = detail::run_stage("evaluate", [&] {
            return evaluate_result(result.deformed.points(), &source, &target, *truth, config.distance_mode);
        });
    }
    result.total_seconds = detail::seconds_since(start);
    return result;
}

// ---- CSV output -----------------------------------------------------------

/// Shortest decimal text that reads back to the same double.
inline std::string format_number(double v) {
    char buf[64];
    for (int precision = 6; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

inline void write_iteration_log(std::ostream& out, const std::vector<IterationRecord>& log) {
    out << "iter,energy,displacement,alpha_mean\n";
    for (const auto& r : log) {
        out << r.iter << ',' << format_number(r.energy) << ',' << format_number(r.displacement) << ','
            << format_number(r.alpha_mean) << '\n';
    }
}

inline void write_metrics_csv(std::ostream& out, const ErrorReport* report, std::size_t coarse_iters,
                              std::size_t fine_iters) {
    out << "rmse,corr_err,auc,overlap,auc_threshold_max,coarse_iters,fine_iters\n";
    if (report) {
        out << format_optional(report->rmse) << ',' << format_optional(report->corr_err) << ','
            << format_number(report->auc) << ',' << format_optional(report->overlap) << ','
            << format_number(report->thresholds.empty() ? 0.0 : report->thresholds.back());
    } else {
        out << ",,,,";
    }
    out << ',' << coarse_iters << ',' << fine_iters << '\n';
}

/// Per-point error used for the error map: ground-truth distance when known,
/// else the distance to the closest target point.
inline std::vector<double> error_map_values(const PipelineResult& r, const Surface& target) {
    if (r.report && !r.report->per_point_errors.empty()) return r.report->per_point_errors;
    const SpatialIndex index(target.points());
    std::vector<double> e;
    for (const Vec3& p : r.deformed.points()) e.push_back((target.points()[index.nearest(p)] - p).norm());
    return e;
}

/// Wall times: one row per stage iteration, then the stage totals. Kept apart from
/// the other CSVs, which are byte-identical across runs.
inline void write_timings(std::ostream& out, const PipelineResult& r) {
    out << "stage,iter,seconds\n";
    for (const auto& it : r.coarse_log) out << "coarse," << it.iter << ',' << format_number(it.seconds) << '\n';
    for (const auto& it : r.fine_log) out << "fine," << it.iter << ',' << format_number(it.seconds) << '\n';
    out << "coarse,total," << format_number(r.coarse_seconds) << "\nfine,total," << format_number(r.fine_seconds)
        << "\ntotal,total," << format_number(r.total_seconds) << '\n';
}

/// deformed.ply, errormap.ply, metrics.csv, iterations_coarse.csv, iterations_fine.csv, timings.csv.
inline void write_outputs(const std::filesystem::path& dir, const PipelineResult& r, const Surface& target) {
    std::filesystem::create_directories(dir);
    save_surface(dir / "deformed.ply", r.deformed);

    const std::vector<double> errors = error_map_values(r, target);
    double top = 0.0;
    for (double e : errors) top = std::max(top, e);
    MeshData colored = mesh_from_surface(r.deformed);
    colored.colors = error_map(errors, top);
    write_ply(dir / "errormap.ply", colored);

    auto open = [&](const char* name) {
        std::ofstream f(dir / name);
        if (!f) throw InputError("cannot write " + (dir / name).string());
        return f;
    };
    {
        auto f = open("metrics.csv");
        write_metrics_csv(f, r.report ? &*r.report : nullptr, r.coarse_log.size(), r.fine_log.size());
    }
    {
        auto f = open("iterations_coarse.csv");
        write_iteration_log(f, r.coarse_log);
    }
    {
        auto f = open("iterations_fine.csv");
        write_iteration_log(f, r.fine_log);
    }
    {
        auto f = open("timings.csv");
        write_timings(f, r);
    }
}

// ---- Bench ----------------------------------------------------------------

struct BenchRow {
    std::string scenario;
    std::uint64_t seed = 0;
    MetricKind metric = MetricKind::SP2P;
    WeightScheme weights = WeightScheme::RobustGaussian;
    ErrorReport report;
    std::size_t coarse_iters = 0;
    std::size_t fine_iters = 0;
    double seconds = 0.0;
};

/// Parses "kind=bar seed=3 resolution=30 magnitude=30 offset=0.3 crop=0.4 noise=0
/// rigid_angle=0 rigid_translation=0 pairs=200 relief=1"; omitted keys keep their defaults.
inline SyntheticScenario parse_scenario_line(const std::string& line) {
    SyntheticScenario s;
    std::istringstream ls(line);
    for (std::string tok; ls >> tok;) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw InputError("scenario: expected key=value, got '" + tok + "'");
        const std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
        if (k == "kind") s.kind = parse_scenario_kind(v);
        else if (k == "seed") s.seed = static_cast<std::uint64_t>(detail::parse_integer(v, k));
        else if (k == "resolution") s.resolution = static_cast<std::size_t>(detail::parse_integer(v, k));
        else if (k == "magnitude") s.magnitude = detail::parse_double(v, k);
        else if (k == "offset") s.resample_offset = detail::parse_double(v, k);
        else if (k == "crop") s.crop_fraction = detail::parse_double(v, k);
        else if (k == "noise") s.noise = detail::parse_double(v, k);
        else if (k == "rigid_angle") s.rigid_angle = detail::parse_double(v, k);
        else if (k == "rigid_translation") s.rigid_translation = detail::parse_double(v, k);
        else if (k == "pairs") s.pair_count = static_cast<std::size_t>(detail::parse_integer(v, k));
        else if (k == "relief") s.relief = detail::parse_double(v, k);
        else throw InputError("scenario: unknown key '" + k + "'");
    }
    return s;
}

inline std::vector<SyntheticScenario> load_scenarios(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open scenario list " + path.string());
    std::vector<SyntheticScenario> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (detail::trim(line).empty()) continue;
        try {
            out.push_back(parse_scenario_line(line));
        } catch (const InputError& e) {
            throw InputError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

/// One registration per (scenario, metric, weight scheme). AUC thresholds are shared by
/// all runs of a scenario: 100 steps up to the 95th percentile of their pooled errors.
inline std::vector<BenchRow> bench(const std::vector<SyntheticScenario>& scenarios, const std::vector<MetricKind>& metrics,
                                   const std::vector<WeightScheme>& schemes, const RunConfig& base) {
    std::vector<BenchRow> rows;
    for (const SyntheticScenario& s : scenarios) {
        const ScenarioData data = generate_scenario(s);
        const std::size_t first = rows.size();
        for (MetricKind m : metrics) {
            for (WeightScheme w : schemes) {
                RunConfig c = base;
                c.metric = m;
                c.weighting.scheme = w;
                const PipelineResult r = register_surfaces(data.source, data.target, c, {}, &data.truth);
                BenchRow row;
                row.scenario = std::string(to_string(s.kind));
                row.seed = s.seed;
                row.metric = m;
                row.weights = w;
                row.report = *r.report;
                row.coarse_iters = r.coarse_log.size();
                row.fine_iters = r.fine_log.size();
                row.seconds = r.total_seconds;
                rows.push_back(std::move(row));
            }
        }
        std::vector<double> pooled;
        for (std::size_t k = first; k < rows.size(); ++k) {
            const auto& e = rows[k].report.curve_errors();
            pooled.insert(pooled.end(), e.begin(), e.end());
        }
        const std::vector<double> grid = threshold_grid(pooled);
        for (std::size_t k = first; k < rows.size(); ++k) apply_threshold_grid(rows[k].report, grid);
    }
    return rows;
}

/// Deterministic columns only; wall times go to write_bench_timings.
inline void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
    out << "scenario,seed,metric,weights,rmse,corr_err,auc,overlap,auc_threshold_max,coarse_iters,fine_iters\n";
    for (const auto& r : rows) {
        out << r.scenario << ',' << r.seed << ',' << to_string(r.metric) << ',' << to_string(r.weights) << ','
            << format_optional(r.report.rmse) << ',' << format_optional(r.report.corr_err) << ','
            << format_number(r.report.auc) << ',' << format_optional(r.report.overlap) << ','
            << format_number(r.report.thresholds.empty() ? 0.0 : r.report.thresholds.back()) << ',' << r.coarse_iters
            << ',' << r.fine_iters << '\n';
    }
}

inline void write_bench_timings(std::ostream& out, const std::vector<BenchRow>& rows) {
    out << "scenario,seed,metric,weights,seconds\n";
    for (const auto& r : rows) {
        out << r.scenario << ',' << r.seed << ',' << to_string(r.metric) << ',' << to_string(r.weights) << ','
            << format_number(r.seconds) << '\n';
    }
}

}  // namespace spare
