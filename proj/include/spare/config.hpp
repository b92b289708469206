#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "spare/coarse_solver.hpp"
#include "spare/evaluation.hpp"
#include "spare/fine_solver.hpp"
#include "spare/variants.hpp"

namespace spare {

struct RunConfig {
    MetricKind metric = MetricKind::SP2P;
    WeightSettings weighting{};
    CoarseConfig coarse{};
    FineSolverConfig fine{};
    /// Landmark weight; unset means 100 / |L|.
    std::optional<double> w_landmark;
    std::optional<std::filesystem::path> landmarks;
    std::optional<std::filesystem::path> ground_truth;
    std::filesystem::path output_dir = "spare_out";
    std::uint64_t seed = 0;
    bool skip_coarse = false;
    bool skip_fine = false;
    DistanceMode distance_mode = DistanceMode::Geodesic;
    std::size_t edge_k = 6;
    std::size_t normal_k = 10;

    /// Pushes the shared metric and weighting choice into both stage configs.
    void sync_stages() {
        coarse.metric = metric;
        fine.metric = metric;
        coarse.weighting = weighting;
        fine.weighting = weighting;
    }
};

/// Throws InputError naming the first invalid field.
inline void validate(const RunConfig& c) {
    auto nonneg = [](double v, const char* name) {
        if (!(v >= 0.0)) throw InputError(std::string("invalid value for ") + name + ": must be >= 0");
    };
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0)) throw InputError(std::string("invalid value for ") + name + ": must be > 0");
    };
    nonneg(c.coarse.w_arap, "coarse.w_arap");
    nonneg(c.coarse.w_smo, "coarse.w_smo");
    nonneg(c.coarse.w_rot, "coarse.w_rot");
    nonneg(c.coarse.sigma, "coarse.sigma");
    positive(c.coarse.tol, "coarse.tol");
    positive(c.coarse.radius_multiplier, "coarse.radius_multiplier");
    if (c.coarse.max_iters < 1) throw InputError("invalid value for coarse.max_iters: must be >= 1");
    if (c.coarse.sample_count < 1) throw InputError("invalid value for coarse.sample_count: must be >= 1");
    nonneg(c.fine.weights.w_arap, "fine.w_arap");
    nonneg(c.fine.weights.sigma, "fine.sigma");
    positive(c.fine.tol, "fine.tol");
    if (c.fine.max_iters < 1) throw InputError("invalid value for fine.max_iters: must be >= 1");
    if (c.w_landmark) nonneg(*c.w_landmark, "landmark.weight");
    nonneg(c.weighting.loss_scale, "pipeline.loss_scale");
    if (c.edge_k < 1) throw InputError("invalid value for geometry.edge_k: must be >= 1");
    if (c.normal_k < 3) throw InputError("invalid value for geometry.normal_k: must be >= 3");
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& v, const std::string& field) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw InputError("invalid value for " + field + ": '" + v + "' is not a number");
}

inline long long parse_integer(const std::string& v, const std::string& field) {
    try {
        std::size_t used = 0;
        const long long d = std::stoll(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw InputError("invalid value for " + field + ": '" + v + "' is not an integer");
}

inline bool parse_bool(const std::string& v, const std::string& field) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw InputError("invalid value for " + field + ": '" + v + "' is not a boolean");
}

}  // namespace detail

/// Applies one "section.key = value" setting. Returns false for unknown keys.
inline bool apply_setting(RunConfig& c, const std::string& field, const std::string& v,
                          const std::filesystem::path& base_dir = {}) {
    using namespace detail;
    auto count = [&](const std::string& f) {
        const long long n = parse_integer(v, f);
        if (n < 0) throw InputError("invalid value for " + f + ": must be >= 0");
        return n;
    };
    auto path = [&](const std::string& f) {
        std::filesystem::path p = v;
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        if (!std::filesystem::exists(p)) throw InputError("invalid value for " + f + ": no such file " + p.string());
        return p;
    };
    const std::map<std::string, std::function<void()>> setters = {
        {"pipeline.metric", [&] { c.metric = parse_metric(v); }},
        {"pipeline.weights", [&] { c.weighting.scheme = parse_weight_scheme(v); }},
        {"pipeline.loss_scale", [&] { c.weighting.loss_scale = parse_double(v, field); }},
        {"pipeline.skip_coarse", [&] { c.skip_coarse = parse_bool(v, field); }},
        {"pipeline.skip_fine", [&] { c.skip_fine = parse_bool(v, field); }},
        {"pipeline.seed", [&] { c.seed = static_cast<std::uint64_t>(count(field)); }},
        {"pipeline.output_dir", [&] { c.output_dir = v; }},
        {"pipeline.landmarks", [&] { c.landmarks = path(field); }},
        {"pipeline.ground_truth", [&] { c.ground_truth = path(field); }},
        {"pipeline.distance_mode",
         [&] {
             if (v == "geodesic") c.distance_mode = DistanceMode::Geodesic;
             else if (v == "euclidean") c.distance_mode = DistanceMode::Euclidean;
             else throw InputError("invalid value for " + field + ": expected geodesic or euclidean");
         }},
        {"coarse.w_arap", [&] { c.coarse.w_arap = parse_double(v, field); }},
        {"coarse.w_smo", [&] { c.coarse.w_smo = parse_double(v, field); }},
        {"coarse.w_rot", [&] { c.coarse.w_rot = parse_double(v, field); }},
        {"coarse.sample_count", [&] { c.coarse.sample_count = static_cast<std::size_t>(count(field)); }},
        {"coarse.radius_multiplier", [&] { c.coarse.radius_multiplier = parse_double(v, field); }},
        {"coarse.max_iters", [&] { c.coarse.max_iters = static_cast<int>(count(field)); }},
        {"coarse.tol", [&] { c.coarse.tol = parse_double(v, field); }},
        {"coarse.sigma", [&] { c.coarse.sigma = parse_double(v, field); }},
        {"fine.w_arap", [&] { c.fine.weights.w_arap = parse_double(v, field); }},
        {"fine.max_iters", [&] { c.fine.max_iters = static_cast<int>(count(field)); }},
        {"fine.tol", [&] { c.fine.tol = parse_double(v, field); }},
        {"fine.sigma", [&] { c.fine.weights.sigma = parse_double(v, field); }},
        {"landmark.weight", [&] { c.w_landmark = parse_double(v, field); }},
        {"geometry.edge_k", [&] { c.edge_k = static_cast<std::size_t>(count(field)); }},
        {"geometry.normal_k", [&] { c.normal_k = static_cast<std::size_t>(count(field)); }},
    };
    const auto it = setters.find(field);
    if (it == setters.end()) return false;
    it->second();
    return true;
}

/// Parses an INI-style text: "[section]" headers, "key = value" lines, '#' comments.
inline RunConfig parse_config(std::istream& in, const std::string& name = "config",
                              const std::filesystem::path& base_dir = {}) {
    RunConfig c;
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::string where = name + ":" + std::to_string(line_no) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') throw InputError(where + "unterminated section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            if (section != "pipeline" && section != "coarse" && section != "fine" && section != "landmark" &&
                section != "geometry") {
                throw InputError(where + "unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw InputError(where + "expected key = value");
        if (section.empty()) throw InputError(where + "key outside of a section");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        try {
            if (!apply_setting(c, section + "." + key, value, base_dir)) {
                throw InputError("unknown key '" + key + "' in [" + section + "]");
            }
        } catch (const InputError& e) {
            throw InputError(where + e.what());
        }
    }
    c.sync_stages();
    validate(c);
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config " + path.string());
    return parse_config(in, path.string(), path.parent_path());
}

/// Landmark text file, one pair per line: "source_index target_index" or
/// "source_index x y z". Target indices are resolved against `target_points`.
inline Landmarks load_landmarks(const std::filesystem::path& path, std::size_t source_size, const Points& target_points) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open landmarks " + path.string());
    Landmarks out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (tok.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
        try {
            const long long src = detail::parse_integer(tok[0], "source index");
            if (src < 0 || static_cast<std::size_t>(src) >= source_size) {
                throw InputError("source index " + tok[0] + " out of range");
            }
            Landmark l;
            l.source = static_cast<Index>(src);
            if (tok.size() == 2) {
                const long long t = detail::parse_integer(tok[1], "target index");
                if (t < 0 || static_cast<std::size_t>(t) >= target_points.size()) {
                    throw InputError("target index " + tok[1] + " out of range");
                }
                l.target = target_points[static_cast<std::size_t>(t)];
            } else if (tok.size() == 4) {
                for (int d = 0; d < 3; ++d) l.target[d] = detail::parse_double(tok[1 + d], "target coordinate");
            } else {
                throw InputError("expected 'source target' or 'source x y z'");
            }
            out.push_back(l);
        } catch (const InputError& e) {
            throw InputError(where + e.what());
        }
    }
    return out;
}

/// Ground-truth file: lines "p x y z" give per-point positions in source order,
/// lines "c i j" give correspondence pairs. Either kind may be omitted.
inline GroundTruth load_ground_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open ground truth " + path.string());
    GroundTruth gt;
    Points positions;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string kind;
        if (!(ls >> kind)) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
        if (kind == "p") {
            Vec3 p;
            if (!(ls >> p.x() >> p.y() >> p.z())) throw InputError(where + "expected 'p x y z'");
            positions.push_back(p);
        } else if (kind == "c") {
            long long i = -1, j = -1;
            if (!(ls >> i >> j) || i < 0 || j < 0) throw InputError(where + "expected 'c source_index target_index'");
            gt.pairs.emplace_back(static_cast<Index>(i), static_cast<Index>(j));
        } else {
            throw InputError(where + "unknown record '" + kind + "'");
        }
    }
    if (!positions.empty()) gt.positions = std::move(positions);
    if (gt.empty()) throw InputError(path.string() + ": no ground truth records");
    return gt;
}

inline void save_ground_truth(const std::filesystem::path& path, const GroundTruth& gt) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out.precision(17);
    if (gt.positions) {
        for (const Vec3& p : *gt.positions) out << "p " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
    }
    for (const auto& [i, j] : gt.pairs) out << "c " << i << ' ' << j << '\n';
}

}  // namespace spare
