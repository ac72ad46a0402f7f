// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include "realism/geometry.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "realism/errors.hpp"

namespace realism {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; }

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && is_space(line[i])) ++i;
        const std::size_t start = i;
        while (i < line.size() && !is_space(line[i])) ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

bool parse_double(std::string_view tok, double& out) {
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
    const auto* first = tok.data();
    const auto* last = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

bool parse_int(std::string_view tok, long long& out) {
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
    const auto* first = tok.data();
    const auto* last = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

void append_fan(std::vector<Face>& faces, const std::vector<std::uint32_t>& poly) {
    for (std::size_t i = 1; i + 1 < poly.size(); ++i) faces.push_back({poly[0], poly[i], poly[i + 1]});
}

void format_double(std::string& out, double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
}

}  // namespace

void Mesh::validate() const {
    if (vertices.empty()) throw EmptyMeshError("mesh '" + name + "' has no vertices");
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        for (double c : vertices[i]) {
            if (!std::isfinite(c)) {
                throw ValidationError("mesh '" + name + "': vertex " + std::to_string(i) + " has a non-finite coordinate");
            }
        }
    }
    const auto n = vertices.size();
    for (std::size_t f = 0; f < faces.size(); ++f) {
        for (auto idx : faces[f]) {
            if (idx >= n) {
                throw ValidationError("mesh '" + name + "': face " + std::to_string(f) + " index " + std::to_string(idx) +
                                      " out of range (" + std::to_string(n) + " vertices)");
            }
        }
    }
}

//
// Wavefront OBJ
//

Mesh parse_obj(std::string_view text, std::string name) {
    Mesh mesh;
    mesh.name = std::move(name);
    std::size_t line_no = 0;
    std::size_t pos = 0;
    std::vector<std::uint32_t> poly;
    // Indices are validated once the full vertex list is known.
    std::vector<long long> raw_faces_flat;

    while (pos <= text.size()) {
        const std::size_t end = std::min(text.find('\n', pos), text.size());
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        const auto toks = split_ws(line);
        if (toks.empty()) {
            if (end == text.size()) break;
            continue;
        }
        if (toks[0] == "v") {
            if (toks.size() < 4) throw ParseError("obj: vertex needs three coordinates", line_no);
            Vec3 v{};
            for (int k = 0; k < 3; ++k) {
                if (!parse_double(toks[k + 1], v[k])) {
                    throw ParseError("obj: malformed number '" + std::string(toks[k + 1]) + "'", line_no);
                }
            }
            mesh.vertices.push_back(v);
        } else if (toks[0] == "f") {
            if (toks.size() < 4) throw ParseError("obj: face needs at least three vertices", line_no);
            poly.clear();
            for (std::size_t k = 1; k < toks.size(); ++k) {
                auto ref = toks[k];
                ref = ref.substr(0, ref.find('/'));
                long long idx = 0;
                if (!parse_int(ref, idx) || idx == 0) {
                    throw ParseError("obj: malformed face index '" + std::string(toks[k]) + "'", line_no);
                }
                long long resolved = idx > 0 ? idx - 1 : static_cast<long long>(mesh.vertices.size()) + idx;
                if (resolved < 0) {
                    throw ValidationError("obj: face index " + std::to_string(idx) + " out of range at line " +
                                          std::to_string(line_no));
                }
                if (resolved > std::numeric_limits<std::uint32_t>::max()) {
                    throw ValidationError("obj: face index " + std::to_string(idx) + " out of range at line " +
                                          std::to_string(line_no));
                }
                poly.push_back(static_cast<std::uint32_t>(resolved));
            }
            append_fan(mesh.faces, poly);
        } else if (toks[0] == "o" && mesh.name.empty() && toks.size() > 1) {
            mesh.name = std::string(toks[1]);
        }
        // vt, vn, g, s, usemtl, mtllib and friends carry no geometry we use.
        if (end == text.size()) break;
    }
    mesh.validate();
    return mesh;
}

std::string write_obj(const Mesh& mesh) {
    std::string out;
    if (!mesh.name.empty()) out += "o " + mesh.name + "\n";
    for (const auto& v : mesh.vertices) {
        out += "v ";
        format_double(out, v[0]);
        out += ' ';
        format_double(out, v[1]);
        out += ' ';
        format_double(out, v[2]);
        out += '\n';
    }
    for (const auto& f : mesh.faces) {
        out += "f " + std::to_string(f[0] + 1) + ' ' + std::to_string(f[1] + 1) + ' ' + std::to_string(f[2] + 1) + '\n';
    }
    return out;
}

//
// PLY
//

namespace {

enum class PlyType { Char, UChar, Short, UShort, Int, UInt, Float, Double };

struct PlyTypeName {
    std::string_view name;
    PlyType type;
};

constexpr PlyTypeName kPlyTypes[] = {
    {"char", PlyType::Char},     {"uchar", PlyType::UChar},   {"short", PlyType::Short},
    {"ushort", PlyType::UShort}, {"int", PlyType::Int},       {"uint", PlyType::UInt},
    {"float", PlyType::Float},   {"double", PlyType::Double}, {"int8", PlyType::Char},
    {"uint8", PlyType::UChar},   {"int16", PlyType::Short},   {"uint16", PlyType::UShort},
    {"int32", PlyType::Int},     {"uint32", PlyType::UInt},   {"float32", PlyType::Float},
    {"float64", PlyType::Double},
};

std::size_t type_size(PlyType t) {
    switch (t) {
        case PlyType::Char:
        case PlyType::UChar: return 1;
        case PlyType::Short:
        case PlyType::UShort: return 2;
        case PlyType::Int:
        case PlyType::UInt:
        case PlyType::Float: return 4;
        case PlyType::Double: return 8;
    }
    return 0;
}

PlyType lookup_type(std::string_view name, std::size_t line) {
    for (const auto& t : kPlyTypes) {
        if (t.name == name) return t.type;
    }
    throw ParseError("ply: unknown property type '" + std::string(name) + "'", line);
}

struct PlyProperty {
    std::string name;
    PlyType type = PlyType::Float;
    bool is_list = false;
    PlyType count_type = PlyType::UChar;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> properties;
};

template <typename T>
T load_le(const std::byte* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
        auto* b = reinterpret_cast<unsigned char*>(&v);
        std::reverse(b, b + sizeof(T));
    }
    return v;
}

double load_scalar(const std::byte* p, PlyType t) {
    switch (t) {
        case PlyType::Char: return static_cast<double>(load_le<std::int8_t>(p));
        case PlyType::UChar: return static_cast<double>(load_le<std::uint8_t>(p));
        case PlyType::Short: return static_cast<double>(load_le<std::int16_t>(p));
        case PlyType::UShort: return static_cast<double>(load_le<std::uint16_t>(p));
        case PlyType::Int: return static_cast<double>(load_le<std::int32_t>(p));
        case PlyType::UInt: return static_cast<double>(load_le<std::uint32_t>(p));
        case PlyType::Float: return static_cast<double>(load_le<float>(p));
        case PlyType::Double: return load_le<double>(p);
    }
    return 0.0;
}

// Reads scalars either from an ASCII token stream or from a binary cursor.
class PlyReader {
public:
    PlyReader(std::string_view body, bool binary) : body_(body), binary_(binary) {}

    double scalar(PlyType t, const std::string& element) {
        if (binary_) {
            const auto n = type_size(t);
            if (pos_ + n > body_.size()) {
                throw ParseError("ply: truncated payload in element '" + element + "'");
            }
            const double v = load_scalar(reinterpret_cast<const std::byte*>(body_.data() + pos_), t);
            pos_ += n;
            return v;
        }
        while (pos_ < body_.size() && is_space(body_[pos_])) ++pos_;
        const auto start = pos_;
        while (pos_ < body_.size() && !is_space(body_[pos_])) ++pos_;
        if (start == pos_) throw ParseError("ply: truncated payload in element '" + element + "'");
        double v = 0;
        if (!parse_double(body_.substr(start, pos_ - start), v)) {
            throw ParseError("ply: malformed number '" + std::string(body_.substr(start, pos_ - start)) +
                             "' in element '" + element + "'");
        }
        return v;
    }

    void skip(PlyType t, const std::string& element) {
        if (binary_) {
            const auto n = type_size(t);
            if (pos_ + n > body_.size()) throw ParseError("ply: truncated payload in element '" + element + "'");
            pos_ += n;
        } else {
            scalar(t, element);
        }
    }

private:
    std::string_view body_;
    bool binary_;
    std::size_t pos_ = 0;
};

}  // namespace

Mesh parse_ply(std::string_view bytes, std::string name) {
    Mesh mesh;
    mesh.name = std::move(name);

    std::size_t pos = 0;
    std::size_t line_no = 0;
    auto next_line = [&]() -> std::string_view {
        if (pos >= bytes.size()) throw ParseError("ply: header ends before 'end_header'", line_no);
        const auto end = std::min(bytes.find('\n', pos), bytes.size());
        auto line = bytes.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        return line;
    };

    if (bytes.substr(0, 3) != "ply") throw ParseError("ply: missing 'ply' magic", 1);
    if (split_ws(next_line()) != std::vector<std::string_view>{"ply"}) {
        throw ParseError("ply: missing 'ply' magic", 1);
    }

    bool binary = false;
    bool have_format = false;
    std::vector<PlyElement> elements;
    for (;;) {
        const auto line = next_line();
        const auto toks = split_ws(line);
        if (toks.empty()) continue;
        if (toks[0] == "end_header") break;
        if (toks[0] == "comment" || toks[0] == "obj_info") continue;
        if (toks[0] == "format") {
            if (toks.size() != 3 || toks[2] != "1.0") throw ParseError("ply: unsupported format line", line_no);
            if (toks[1] == "ascii") {
                binary = false;
            } else if (toks[1] == "binary_little_endian") {
                binary = true;
            } else {
                throw ParseError("ply: unsupported format '" + std::string(toks[1]) + "'", line_no);
            }
            have_format = true;
        } else if (toks[0] == "element") {
            long long count = 0;
            if (toks.size() != 3 || !parse_int(toks[2], count) || count < 0) {
                throw ParseError("ply: malformed element line", line_no);
            }
            elements.push_back({std::string(toks[1]), static_cast<std::size_t>(count), {}});
        } else if (toks[0] == "property") {
            if (elements.empty()) throw ParseError("ply: property before any element", line_no);
            PlyProperty prop;
            if (toks.size() == 5 && toks[1] == "list") {
                prop.is_list = true;
                prop.count_type = lookup_type(toks[2], line_no);
                prop.type = lookup_type(toks[3], line_no);
                prop.name = std::string(toks[4]);
            } else if (toks.size() == 3) {
                prop.type = lookup_type(toks[1], line_no);
                prop.name = std::string(toks[2]);
            } else {
                throw ParseError("ply: malformed property in element '" + elements.back().name + "'", line_no);
            }
            elements.back().properties.push_back(std::move(prop));
        } else {
            throw ParseError("ply: unexpected header keyword '" + std::string(toks[0]) + "'", line_no);
        }
    }
    if (!have_format) throw ParseError("ply: missing format line");

    PlyReader reader(bytes.substr(std::min(pos, bytes.size())), binary);
    std::vector<std::uint32_t> poly;
    for (const auto& el : elements) {
        const bool is_vertex = el.name == "vertex";
        const bool is_face = el.name == "face";
        int xyz[3] = {-1, -1, -1};
        if (is_vertex) {
            for (std::size_t p = 0; p < el.properties.size(); ++p) {
                const auto& name = el.properties[p].name;
                if (el.properties[p].is_list) continue;
                if (name == "x") xyz[0] = static_cast<int>(p);
                if (name == "y") xyz[1] = static_cast<int>(p);
                if (name == "z") xyz[2] = static_cast<int>(p);
            }
            if (xyz[0] < 0 || xyz[1] < 0 || xyz[2] < 0) {
                throw ParseError("ply: element 'vertex' lacks x/y/z properties");
            }
            mesh.vertices.reserve(el.count);
        }
        for (std::size_t i = 0; i < el.count; ++i) {
            Vec3 v{};
            for (std::size_t p = 0; p < el.properties.size(); ++p) {
                const auto& prop = el.properties[p];
                if (prop.is_list) {
                    const double n = reader.scalar(prop.count_type, el.name);
                    if (n < 0 || n != std::floor(n)) throw ParseError("ply: bad list length in element '" + el.name + "'");
                    const bool indices = is_face && (prop.name == "vertex_indices" || prop.name == "vertex_index");
                    poly.clear();
                    for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k) {
                        if (indices) {
                            const double idx = reader.scalar(prop.type, el.name);
                            if (idx < 0 || idx != std::floor(idx) || idx > std::numeric_limits<std::uint32_t>::max()) {
                                throw ValidationError("ply: face index out of range in element 'face'");
                            }
                            poly.push_back(static_cast<std::uint32_t>(idx));
                        } else {
                            reader.skip(prop.type, el.name);
                        }
                    }
                    if (indices) {
                        if (poly.size() < 3) throw ParseError("ply: face with fewer than three vertices");
                        append_fan(mesh.faces, poly);
                    }
                } else if (is_vertex && (static_cast<int>(p) == xyz[0] || static_cast<int>(p) == xyz[1] ||
                                         static_cast<int>(p) == xyz[2])) {
                    const double value = reader.scalar(prop.type, el.name);
                    for (int k = 0; k < 3; ++k) {
                        if (static_cast<int>(p) == xyz[k]) v[k] = value;
                    }
                } else {
                    reader.skip(prop.type, el.name);
                }
            }
            if (is_vertex) mesh.vertices.push_back(v);
        }
    }
    mesh.validate();
    return mesh;
}

Mesh parse_ply(std::span<const std::byte> bytes, std::string name) {
    return parse_ply(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), std::move(name));
}

namespace {

std::string ply_header(const Mesh& mesh, std::string_view format) {
    std::string out = "ply\nformat ";
    out += format;
    out += " 1.0\n";
    if (!mesh.name.empty()) out += "comment name " + mesh.name + "\n";
    out += "element vertex " + std::to_string(mesh.vertices.size()) + "\n";
    out += "property double x\nproperty double y\nproperty double z\n";
    out += "element face " + std::to_string(mesh.faces.size()) + "\n";
    out += "property list uchar uint vertex_indices\nend_header\n";
    return out;
}

template <typename T>
void store_le(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) std::reverse(buf, buf + sizeof(T));
    out.append(buf, sizeof(T));
}

}  // namespace

std::string write_ply_ascii(const Mesh& mesh) {
    std::string out = ply_header(mesh, "ascii");
    for (const auto& v : mesh.vertices) {
        format_double(out, v[0]);
        out += ' ';
        format_double(out, v[1]);
        out += ' ';
        format_double(out, v[2]);
        out += '\n';
    }
    for (const auto& f : mesh.faces) {
        out += "3 " + std::to_string(f[0]) + ' ' + std::to_string(f[1]) + ' ' + std::to_string(f[2]) + '\n';
    }
    return out;
}

std::string write_ply_binary(const Mesh& mesh) {
    std::string out = ply_header(mesh, "binary_little_endian");
    for (const auto& v : mesh.vertices) {
        for (double c : v) store_le(out, c);
    }
    for (const auto& f : mesh.faces) {
        store_le<std::uint8_t>(out, 3);
        for (auto idx : f) store_le<std::uint32_t>(out, idx);
    }
    return out;
}

Mesh parse_mesh(std::string_view bytes, std::string name) {
    if (bytes.substr(0, 3) == "ply") return parse_ply(bytes, std::move(name));
    return parse_obj(bytes, std::move(name));
}

Mesh load_mesh(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open mesh file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    auto stem = path.substr(path.find_last_of("/\\") + 1);
    stem = stem.substr(0, stem.find_last_of('.'));
    return parse_mesh(ss.str(), stem);
}

//
// Point clouds
//

double distance(const Vec3& a, const Vec3& b) noexcept {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

PointCloud mesh_to_point_cloud(const Mesh& mesh) {
    mesh.validate();
    return PointCloud{mesh.vertices, false};
}

PointCloud normalize_point_cloud(const PointCloud& pc) {
    if (pc.points.empty()) throw EmptyMeshError("cannot normalize an empty point cloud");
    const bool all_same = std::all_of(pc.points.begin(), pc.points.end(),
                                      [&](const Vec3& p) { return p == pc.points.front(); });
    if (all_same) throw DegenerateGeometryError("all points coincide; point cloud has zero extent");

    Vec3 centroid{0, 0, 0};
    for (const auto& p : pc.points) {
        for (int k = 0; k < 3; ++k) centroid[k] += p[k];
    }
    const double n = static_cast<double>(pc.points.size());
    for (auto& c : centroid) c /= n;

    double max_norm = 0;
    for (const auto& p : pc.points) max_norm = std::max(max_norm, distance(p, centroid));
    if (!(max_norm > 0) || !std::isfinite(max_norm)) {
        throw DegenerateGeometryError("point cloud has zero or non-finite extent");
    }

    PointCloud out;
    out.normalized = true;
    out.points.reserve(pc.points.size());
    for (const auto& p : pc.points) {
        out.points.push_back({(p[0] - centroid[0]) / max_norm, (p[1] - centroid[1]) / max_norm,
                              (p[2] - centroid[2]) / max_norm});
    }
    return out;
}

std::vector<std::size_t> farthest_point_indices(const PointCloud& pc, std::size_t k, std::size_t start_index) {
    const std::size_t n = pc.points.size();
    if (k < 1 || k > n) {
        throw ValidationError("farthest point sampling: k=" + std::to_string(k) + " must lie in [1, " +
                              std::to_string(n) + "]");
    }
    if (start_index >= n) throw ValidationError("farthest point sampling: start index out of range");

    std::vector<double> min_sq(n, std::numeric_limits<double>::infinity());
    std::vector<char> taken(n, 0);
    std::vector<std::size_t> order;
    order.reserve(k);
    std::size_t current = start_index;
    for (std::size_t step = 0; step < k; ++step) {
        order.push_back(current);
        taken[current] = 1;
        if (step + 1 == k) break;
        const auto& c = pc.points[current];
        std::size_t best = n;
        double best_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            const auto& p = pc.points[i];
            const double dx = p[0] - c[0], dy = p[1] - c[1], dz = p[2] - c[2];
            min_sq[i] = std::min(min_sq[i], dx * dx + dy * dy + dz * dz);
            if (min_sq[i] > best_d) {
                best_d = min_sq[i];
                best = i;
            }
        }
        current = best;
    }
    return order;
}

PointCloud farthest_point_sample(const PointCloud& pc, std::size_t k, std::size_t start_index) {
    PointCloud out;
    out.normalized = pc.normalized;
    for (auto i : farthest_point_indices(pc, k, start_index)) out.points.push_back(pc.points[i]);
    return out;
}

PointCloud canonical_order(const PointCloud& pc) {
    PointCloud out = pc;
    std::sort(out.points.begin(), out.points.end());
    return out;
}

PointCloud resample_to(const PointCloud& pc, std::size_t count, std::size_t start_index) {
    if (pc.points.empty()) throw EmptyMeshError("cannot resample an empty point cloud");
    if (count == 0) throw ValidationError("resample target must be positive");
    if (pc.points.size() > count) return farthest_point_sample(pc, count, start_index);
    PointCloud out;
    out.normalized = pc.normalized;
    out.points.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.points.push_back(pc.points[i % pc.points.size()]);
    return out;
}

}  // namespace realism
