#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spare/deformation_graph.hpp"
#include "spare/evaluation.hpp"
#include "spare/surface.hpp"

namespace spare {

/// Raw geometry as stored on disk. Normals and colors are empty when absent.
struct MeshData {
    Points points;
    Points normals;
    std::vector<Face> faces;
    std::vector<Rgb> colors;
};

namespace detail {

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

inline PlyType parse_ply_type(const std::string& s) {
    if (s == "char" || s == "int8") return PlyType::Int8;
    if (s == "uchar" || s == "uint8") return PlyType::UInt8;
    if (s == "short" || s == "int16") return PlyType::Int16;
    if (s == "ushort" || s == "uint16") return PlyType::UInt16;
    if (s == "int" || s == "int32") return PlyType::Int32;
    if (s == "uint" || s == "uint32") return PlyType::UInt32;
    if (s == "float" || s == "float32") return PlyType::Float32;
    if (s == "double" || s == "float64") return PlyType::Float64;
    throw InputError("ply: unknown property type '" + s + "'");
}

inline std::size_t ply_type_size(PlyType t) {
    switch (t) {
        case PlyType::Int8:
        case PlyType::UInt8: return 1;
        case PlyType::Int16:
        case PlyType::UInt16: return 2;
        case PlyType::Int32:
        case PlyType::UInt32:
        case PlyType::Float32: return 4;
        case PlyType::Float64: return 8;
    }
    return 0;
}

struct PlyProperty {
    std::string name;
    PlyType type = PlyType::Float32;
    bool is_list = false;
    PlyType count_type = PlyType::UInt8;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> props;
};

template <typename T>
T byteswap_value(T v) {
    std::array<unsigned char, sizeof(T)> b;
    std::memcpy(b.data(), &v, sizeof(T));
    std::reverse(b.begin(), b.end());
    std::memcpy(&v, b.data(), sizeof(T));
    return v;
}

class PlyValueReader {
public:
    PlyValueReader(std::istream& in, int format) : in_(in), format_(format) {}

    double read(PlyType t) {
        if (format_ == 0) {
            double v;
            if (!(in_ >> v)) throw InputError("ply: truncated ascii data");
            return v;
        }
        switch (t) {
            case PlyType::Int8: return raw<std::int8_t>();
            case PlyType::UInt8: return raw<std::uint8_t>();
            case PlyType::Int16: return raw<std::int16_t>();
            case PlyType::UInt16: return raw<std::uint16_t>();
            case PlyType::Int32: return raw<std::int32_t>();
            case PlyType::UInt32: return raw<std::uint32_t>();
            case PlyType::Float32: return raw<float>();
            case PlyType::Float64: return raw<double>();
        }
        return 0.0;
    }

private:
    template <typename T>
    double raw() {
        T v;
        if (!in_.read(reinterpret_cast<char*>(&v), sizeof(T))) throw InputError("ply: truncated binary data");
        const bool file_little = format_ == 1;
        if (file_little != (std::endian::native == std::endian::little)) v = byteswap_value(v);
        return static_cast<double>(v);
    }

    std::istream& in_;
    int format_;  // 0 ascii, 1 little endian, 2 big endian
};

inline Index checked_index(double v, std::size_t n, const char* what) {
    if (!(v >= 0.0) || v != std::floor(v) || v >= static_cast<double>(n)) {
        throw InputError(std::string(what) + " index out of range");
    }
    return static_cast<Index>(v);
}

/// Triangle fan over a polygon.
inline void add_polygon(std::vector<Face>& faces, const std::vector<Index>& poly) {
    for (std::size_t k = 1; k + 1 < poly.size(); ++k) faces.push_back(Face{poly[0], poly[k], poly[k + 1]});
}

}  // namespace detail

inline MeshData read_ply(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("ply", 0) != 0) throw InputError(path.string() + ": not a PLY file");

    int format = -1;
    std::vector<detail::PlyElement> elements;
    while (true) {
        if (!std::getline(in, line)) throw InputError(path.string() + ": unterminated PLY header");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "end_header") break;
        if (key == "comment" || key == "obj_info" || key.empty()) continue;
        if (key == "format") {
            std::string f;
            ls >> f;
            if (f == "ascii") format = 0;
            else if (f == "binary_little_endian") format = 1;
            else if (f == "binary_big_endian") format = 2;
            else throw InputError(path.string() + ": unknown PLY format '" + f + "'");
        } else if (key == "element") {
            detail::PlyElement e;
            ls >> e.name >> e.count;
            if (!ls) throw InputError(path.string() + ": bad element line");
            elements.push_back(e);
        } else if (key == "property") {
            if (elements.empty()) throw InputError(path.string() + ": property before element");
            detail::PlyProperty p;
            std::string type;
            ls >> type;
            if (type == "list") {
                std::string ct, it;
                ls >> ct >> it >> p.name;
                p.is_list = true;
                p.count_type = detail::parse_ply_type(ct);
                p.type = detail::parse_ply_type(it);
            } else {
                p.type = detail::parse_ply_type(type);
                ls >> p.name;
            }
            if (!ls) throw InputError(path.string() + ": bad property line");
            elements.back().props.push_back(p);
        } else {
            throw InputError(path.string() + ": unexpected PLY header keyword '" + key + "'");
        }
    }
    if (format < 0) throw InputError(path.string() + ": missing PLY format line");

    MeshData mesh;
    detail::PlyValueReader reader(in, format);
    for (const auto& e : elements) {
        if (e.name == "vertex") {
            auto find = [&](const char* n) -> int {
                for (std::size_t k = 0; k < e.props.size(); ++k) {
                    if (e.props[k].name == n && !e.props[k].is_list) return static_cast<int>(k);
                }
                return -1;
            };
            const std::array<int, 3> xyz{find("x"), find("y"), find("z")};
            const std::array<int, 3> nxyz{find("nx"), find("ny"), find("nz")};
            const std::array<int, 3> rgb{find("red"), find("green"), find("blue")};
            if (xyz[0] < 0 || xyz[1] < 0 || xyz[2] < 0) throw InputError(path.string() + ": vertex without x/y/z");
            const bool has_n = nxyz[0] >= 0 && nxyz[1] >= 0 && nxyz[2] >= 0;
            const bool has_c = rgb[0] >= 0 && rgb[1] >= 0 && rgb[2] >= 0;
            std::vector<double> vals(e.props.size());
            for (std::size_t i = 0; i < e.count; ++i) {
                for (std::size_t k = 0; k < e.props.size(); ++k) {
                    if (e.props[k].is_list) {
                        const auto n = static_cast<std::size_t>(reader.read(e.props[k].count_type));
                        for (std::size_t q = 0; q < n; ++q) reader.read(e.props[k].type);
                        vals[k] = 0.0;
                    } else {
                        vals[k] = reader.read(e.props[k].type);
                    }
                }
                mesh.points.emplace_back(vals[xyz[0]], vals[xyz[1]], vals[xyz[2]]);
                if (has_n) mesh.normals.emplace_back(vals[nxyz[0]], vals[nxyz[1]], vals[nxyz[2]]);
                if (has_c) {
                    mesh.colors.push_back({static_cast<std::uint8_t>(vals[rgb[0]]), static_cast<std::uint8_t>(vals[rgb[1]]),
                                           static_cast<std::uint8_t>(vals[rgb[2]])});
                }
            }
        } else {
            const bool is_face = e.name == "face";
            std::vector<Index> poly;
            for (std::size_t i = 0; i < e.count; ++i) {
                for (const auto& p : e.props) {
                    const bool indices = is_face && p.is_list && (p.name == "vertex_indices" || p.name == "vertex_index");
                    if (!p.is_list) {
                        reader.read(p.type);
                        continue;
                    }
                    const auto n = static_cast<std::size_t>(reader.read(p.count_type));
                    poly.clear();
                    for (std::size_t q = 0; q < n; ++q) {
                        const double v = reader.read(p.type);
                        if (indices) poly.push_back(detail::checked_index(v, mesh.points.size(), "face vertex"));
                    }
                    if (indices) detail::add_polygon(mesh.faces, poly);
                }
            }
        }
    }
    return mesh;
}

struct PlyWriteOptions {
    bool binary = true;
    bool write_normals = true;
};

/// Writes vertices as doubles so binary output round-trips bit-exactly.
inline void write_ply(const std::filesystem::path& path, const MeshData& mesh, const PlyWriteOptions& opt = {}) {
    const bool normals = opt.write_normals && !mesh.normals.empty();
    const bool colors = !mesh.colors.empty();
    if (normals && mesh.normals.size() != mesh.points.size()) throw InputError("write_ply: normal count mismatch");
    if (colors && mesh.colors.size() != mesh.points.size()) throw InputError("write_ply: color count mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());

    out << "ply\nformat " << (opt.binary ? "binary_little_endian" : "ascii") << " 1.0\n";
    out << "element vertex " << mesh.points.size() << "\n";
    out << "property double x\nproperty double y\nproperty double z\n";
    if (normals) out << "property double nx\nproperty double ny\nproperty double nz\n";
    if (colors) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "element face " << mesh.faces.size() << "\n";
    out << "property list uchar int vertex_indices\nend_header\n";

    auto put = [&](auto v) {
        if constexpr (std::endian::native != std::endian::little) v = detail::byteswap_value(v);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    };
    if (opt.binary) {
        for (std::size_t i = 0; i < mesh.points.size(); ++i) {
            for (int c = 0; c < 3; ++c) put(mesh.points[i][c]);
            if (normals) {
                for (int c = 0; c < 3; ++c) put(mesh.normals[i][c]);
            }
            if (colors) {
                for (int c = 0; c < 3; ++c) put(mesh.colors[i][c]);
            }
        }
        for (const Face& f : mesh.faces) {
            put(std::uint8_t{3});
            for (Index v : f) put(static_cast<std::int32_t>(v));
        }
    } else {
        out.precision(17);
        for (std::size_t i = 0; i < mesh.points.size(); ++i) {
            out << mesh.points[i].x() << ' ' << mesh.points[i].y() << ' ' << mesh.points[i].z();
            if (normals) out << ' ' << mesh.normals[i].x() << ' ' << mesh.normals[i].y() << ' ' << mesh.normals[i].z();
            if (colors) out << ' ' << int(mesh.colors[i][0]) << ' ' << int(mesh.colors[i][1]) << ' ' << int(mesh.colors[i][2]);
            out << '\n';
        }
        for (const Face& f : mesh.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    }
    if (!out) throw InputError("write failed: " + path.string());
}

/// Wavefront OBJ: v, vn and f records; polygons are fanned into triangles.
/// Normals are kept only when there is exactly one per vertex.
inline MeshData read_obj(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    MeshData mesh;
    Points vn;
    std::string line;
    std::size_t line_no = 0;
    std::vector<long> raw;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "v") {
            Vec3 p;
            if (!(ls >> p.x() >> p.y() >> p.z())) throw InputError(path.string() + ":" + std::to_string(line_no) + ": bad vertex");
            mesh.points.push_back(p);
        } else if (key == "vn") {
            Vec3 n;
            if (!(ls >> n.x() >> n.y() >> n.z())) throw InputError(path.string() + ":" + std::to_string(line_no) + ": bad normal");
            vn.push_back(n);
        } else if (key == "f") {
            std::string tok;
            std::vector<Index> poly;
            while (ls >> tok) {
                long v = 0;
                try {
                    v = std::stol(tok.substr(0, tok.find('/')));
                } catch (const std::exception&) {
                    throw InputError(path.string() + ":" + std::to_string(line_no) + ": bad face index");
                }
                const long n = static_cast<long>(mesh.points.size());
                const long idx = v < 0 ? n + v : v - 1;
                if (idx < 0 || idx >= n) throw InputError(path.string() + ":" + std::to_string(line_no) + ": face index out of range");
                poly.push_back(static_cast<Index>(idx));
            }
            detail::add_polygon(mesh.faces, poly);
        }
    }
    if (vn.size() == mesh.points.size()) mesh.normals = std::move(vn);
    return mesh;
}

inline MeshData read_mesh(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".ply") return read_ply(path);
    if (ext == ".obj") return read_obj(path);
    throw InputError("unsupported file type: " + path.string());
}

/// Surface from stored data: face meshes use face edges, point clouds k-NN edges.
/// Stored normals are renormalized; missing normals are estimated.
inline Surface surface_from_mesh(MeshData mesh) {
    if (mesh.points.empty()) throw InputError("surface has no points");
    if (!mesh.faces.empty()) return make_mesh_surface(std::move(mesh.points), std::move(mesh.faces), std::move(mesh.normals));
    return make_cloud_surface(std::move(mesh.points), std::move(mesh.normals));
}

inline Surface load_surface(const std::filesystem::path& path) { return surface_from_mesh(read_mesh(path)); }

inline MeshData mesh_from_surface(const Surface& s) {
    MeshData m;
    m.points = s.points();
    m.normals = s.normals();
    m.faces = s.faces();
    return m;
}

inline void save_surface(const std::filesystem::path& path, const Surface& s, const PlyWriteOptions& opt = {}) {
    write_ply(path, mesh_from_surface(s), opt);
}

/// Node positions and graph edges as an ASCII PLY for inspection.
inline void write_graph_ply(const std::filesystem::path& path, const DeformationGraph& g) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out.precision(17);
    out << "ply\nformat ascii 1.0\nelement vertex " << g.node_count()
        << "\nproperty double x\nproperty double y\nproperty double z\nelement edge " << g.edges.size()
        << "\nproperty int vertex1\nproperty int vertex2\nend_header\n";
    for (Index j = 0; j < g.node_count(); ++j) {
        const Vec3 p = g.nodes[j] + g.translation[j];
        out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
    }
    for (const Edge& e : g.edges) out << e.a << ' ' << e.b << '\n';
}

}  // namespace spare
