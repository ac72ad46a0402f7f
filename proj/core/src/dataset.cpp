// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include "realism/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include <json.hpp>

#include "realism/errors.hpp"
#include "realism/random.hpp"

namespace realism {

using nlohmann::json;
namespace fs = std::filesystem;

std::size_t Dataset::mesh_count() const noexcept {
    std::size_t n = 0;
    for (const auto& o : objects) n += o.meshes.size();
    return n;
}

std::size_t Dataset::record_count() const noexcept {
    std::size_t n = 0;
    for (const auto& o : objects) {
        for (const auto& m : o.meshes) n += m.records.size();
    }
    return n;
}

Dataset export_dataset(std::span<const AnnotationSession> sessions, const std::map<std::string, std::string>& mesh_files) {
    Dataset d;
    // object -> mesh -> records
    std::map<std::string, std::map<std::string, std::vector<DatasetRecord>>> grouped;
    std::size_t complete = 0;
    for (const auto& s : sessions) {
        if (!s.complete()) {
            d.warnings.push_back("session '" + s.session_id + "' is incomplete and was skipped");
            continue;
        }
        ++complete;
        for (const auto& r : session_scores(s)) {
            grouped[s.object_id][r.mesh_id].push_back({r.subject_id, s.session_id, r.wins, r.played, r.normalized});
        }
    }
    if (complete == 0) throw ValidationError("export_dataset: no completed sessions");
    for (auto& [object_id, meshes] : grouped) {
        DatasetObject o;
        o.id = object_id;
        for (auto& [mesh_id, records] : meshes) {
            std::vector<RealismRecord> rr;
            for (const auto& r : records) rr.push_back({mesh_id, r.subject_id, r.wins, r.played, r.score});
            const auto agg = aggregate(rr).front();
            DatasetMesh m;
            m.id = mesh_id;
            m.label = agg.mean;
            m.n = agg.n;
            m.sigma = agg.sigma;
            m.ci95 = agg.ci95;
            m.records = std::move(records);
            if (auto it = mesh_files.find(mesh_id); it != mesh_files.end()) {
                m.file = it->second;
            } else {
                d.warnings.push_back("mesh '" + mesh_id + "' of object '" + object_id + "' has no file");
            }
            o.meshes.push_back(std::move(m));
        }
        d.objects.push_back(std::move(o));
    }
    return d;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

}  // namespace

std::string dataset_to_json(const Dataset& d) {
    json j;
    j["format"] = "realism-dataset";
    j["version"] = d.version;
    j["objects"] = json::array();
    for (const auto& o : d.objects) {
        json jo = {{"id", o.id}, {"meshes", json::array()}};
        for (const auto& m : o.meshes) {
            json jm = {{"id", m.id},   {"file", m.file},           {"label", m.label},
                       {"n", m.n},     {"sigma", opt(m.sigma)},     {"ci95", opt(m.ci95)},
                       {"records", json::array()}};
            for (const auto& r : m.records) {
                jm["records"].push_back({{"subject", r.subject_id},
                                         {"session", r.session_id},
                                         {"wins", r.wins},
                                         {"played", r.played},
                                         {"score", r.score}});
            }
            jo["meshes"].push_back(std::move(jm));
        }
        j["objects"].push_back(std::move(jo));
    }
    j["warnings"] = d.warnings;
    return j.dump(2);
}

Dataset dataset_from_json(std::string_view text) {
    const json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ParseError("dataset: not a JSON object");
    Dataset d;
    try {
        d.version = j.at("version").get<int>();
        if (d.version != kDatasetVersion) {
            throw ValidationError("dataset: unsupported version " + std::to_string(d.version));
        }
        for (const auto& jo : j.at("objects")) {
            DatasetObject o;
            o.id = jo.at("id").get<std::string>();
            for (const auto& jm : jo.at("meshes")) {
                DatasetMesh m;
                m.id = jm.at("id").get<std::string>();
                m.file = jm.value("file", "");
                m.label = jm.at("label").get<double>();
                if (!(m.label >= 0.0 && m.label <= 1.0)) {
                    throw ValidationError("dataset: label of mesh '" + m.id + "' outside [0, 1]");
                }
                m.n = jm.value("n", std::size_t{0});
                m.sigma = opt_from(jm, "sigma");
                m.ci95 = opt_from(jm, "ci95");
                if (jm.contains("records")) {
                    for (const auto& jr : jm.at("records")) {
                        m.records.push_back({jr.at("subject").get<std::string>(), jr.value("session", ""),
                                             jr.at("wins").get<int>(), jr.at("played").get<int>(),
                                             jr.at("score").get<double>()});
                    }
                }
                o.meshes.push_back(std::move(m));
            }
            d.objects.push_back(std::move(o));
        }
        if (j.contains("warnings")) d.warnings = j.at("warnings").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("dataset: ") + e.what());
    }
    std::sort(d.objects.begin(), d.objects.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return d;
}

void save_dataset(const Dataset& d, const fs::path& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error("cannot write dataset " + path.string());
    f << dataset_to_json(d) << '\n';
    if (!f) throw Error("write failed for " + path.string());
}

Dataset load_dataset(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot read dataset " + path.string());
    const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return dataset_from_json(text);
}

std::vector<LabeledMesh> load_samples(const Dataset& d, const fs::path& base_dir) {
    std::vector<LabeledMesh> out;
    for (const auto& o : d.objects) {
        for (const auto& m : o.meshes) {
            if (m.file.empty()) continue;
            const fs::path p = fs::path(m.file).is_absolute() ? fs::path(m.file) : base_dir / m.file;
            auto mesh = load_mesh(p.string());
            mesh.name = m.id;
            out.push_back({std::move(mesh), m.label, o.id});
        }
    }
    if (out.empty()) throw ValidationError("dataset holds no meshes with files");
    return out;
}

std::vector<LabeledMesh> load_samples(const fs::path& dataset_path) {
    return load_samples(load_dataset(dataset_path), dataset_path.parent_path());
}

// Primitives -----------------------------------------------------------------

namespace {


// Grid over [0,1]^2; wrap_u joins u=1 back to u=0. Poles collapse are left to
// the surface function, duplicates are harmless for scoring.
Mesh grid_mesh(std::string name, int nu, int nv, bool wrap_u, const std::function<Vec3(double, double)>& f) {
    Mesh m;
    m.name = std::move(name);
    const int cols = wrap_u ? nu : nu + 1;
    for (int j = 0; j <= nv; ++j) {
        for (int i = 0; i < cols; ++i) m.vertices.push_back(f(static_cast<double>(i) / nu, static_cast<double>(j) / nv));
    }
    auto at = [&](int i, int j) { return static_cast<std::uint32_t>(j * cols + (wrap_u ? i % nu : i)); };
    for (int j = 0; j < nv; ++j) {
        for (int i = 0; i < nu; ++i) {
            m.faces.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
            m.faces.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
        }
    }
    return m;
}

void append(Mesh& dst, const Mesh& src) {
    const auto base = static_cast<std::uint32_t>(dst.vertices.size());
    dst.vertices.insert(dst.vertices.end(), src.vertices.begin(), src.vertices.end());
    for (auto f : src.faces) dst.faces.push_back({f[0] + base, f[1] + base, f[2] + base});
}

constexpr double kPi = std::numbers::pi;

}  // namespace

std::vector<std::string> ladder_primitives() {
    return {"sphere", "cube", "cylinder", "torus", "cone", "capsule", "ellipsoid", "wedge"};
}

Mesh primitive_mesh(std::string_view kind, int n) {
    if (n < 3) throw ValidationError("primitive resolution must be at least 3");
    const std::string name(kind);
    if (kind == "sphere" || kind == "ellipsoid") {
        const double sx = kind == "sphere" ? 1.0 : 1.0, sy = kind == "sphere" ? 1.0 : 0.6, sz = kind == "sphere" ? 1.0 : 0.4;
        return grid_mesh(name, n, n, true, [=](double u, double v) {
            const double th = kPi * v, ph = 2 * kPi * u;
            return Vec3{sx * std::sin(th) * std::cos(ph), sy * std::sin(th) * std::sin(ph), sz * std::cos(th)};
        });
    }
    if (kind == "cube" || kind == "wedge") {
        Mesh m;
        m.name = name;
        // About as many vertices as the n×(n+1) grids of the other kinds.
        const int k = std::max(2, static_cast<int>(std::lround(std::sqrt(n * (n + 1) / 6.0))) - 1);
        const double top = kind == "cube" ? 1.0 : 0.2;
        // Six faces of [-1,1]^3; the wedge narrows its +z side.
        for (int axis = 0; axis < 3; ++axis) {
            for (double sign : {-1.0, 1.0}) {
                append(m, grid_mesh(name, k, k, false, [=](double u, double v) {
                    Vec3 p{};
                    p[axis] = sign;
                    p[(axis + 1) % 3] = 2 * u - 1;
                    p[(axis + 2) % 3] = 2 * v - 1;
                    const double t = (p[2] + 1) / 2;
                    p[0] *= 1 - t * (1 - top);
                    return p;
                }));
            }
        }
        return m;
    }
    if (kind == "cylinder") {
        return grid_mesh(name, n, n, true, [](double u, double v) {
            return Vec3{std::cos(2 * kPi * u), std::sin(2 * kPi * u), 2 * v - 1};
        });
    }
    if (kind == "cone") {
        return grid_mesh(name, n, n, true, [](double u, double v) {
            const double r = 1 - 0.95 * v;
            return Vec3{r * std::cos(2 * kPi * u), r * std::sin(2 * kPi * u), 2 * v - 1};
        });
    }
    if (kind == "torus") {
        return grid_mesh(name, n, n, true, [](double u, double v) {
            const double a = 2 * kPi * u, b = 2 * kPi * v, r = 1 + 0.35 * std::cos(b);
            return Vec3{r * std::cos(a), r * std::sin(a), 0.35 * std::sin(b)};
        });
    }
    if (kind == "capsule") {
        return grid_mesh(name, n, n, true, [](double u, double v) {
            const double th = kPi * v, ph = 2 * kPi * u;
            const double z = 0.5 * std::cos(th) + (v < 0.5 ? 0.8 : -0.8);
            return Vec3{0.5 * std::sin(th) * std::cos(ph), 0.5 * std::sin(th) * std::sin(ph), z};
        });
    }
    throw ValidationError("unknown primitive '" + name + "'");
}

std::vector<LabeledMesh> make_distortion_ladder(std::size_t objects, std::size_t levels, std::uint64_t seed,
                                                double noise_step, int resolution) {
    const auto kinds = ladder_primitives();
    if (objects < 1 || objects > kinds.size()) {
        throw ValidationError("ladder: objects must lie in [1, " + std::to_string(kinds.size()) + "]");
    }
    if (levels < 2) throw ValidationError("ladder: need at least 2 levels");
    std::vector<LabeledMesh> out;
    for (std::size_t o = 0; o < objects; ++o) {
        const Mesh base = primitive_mesh(kinds[o], resolution);
        for (std::size_t l = 0; l < levels; ++l) {
            Mesh m = base;
            char id[64];
            std::snprintf(id, sizeof id, "%s_l%zu", kinds[o].c_str(), l);
            m.name = id;
            Rng rng(derive_seed(seed, o * levels + l));
            const double sigma = noise_step * static_cast<double>(l);
            for (auto& v : m.vertices) {
                for (auto& c : v) c += sigma * rng.normal();
            }
            const double label = 1.0 - static_cast<double>(l) / static_cast<double>(levels - 1);
            out.push_back({std::move(m), label, kinds[o]});
        }
    }
    return out;
}

fs::path write_ladder(const fs::path& dir, std::span<const LabeledMesh> ladder) {
    fs::create_directories(dir / "meshes");
    Dataset d;
    std::map<std::string, DatasetObject> objects;
    for (const auto& s : ladder) {
        const std::string rel = "meshes/" + s.mesh.name + ".obj";
        std::ofstream f(dir / rel, std::ios::trunc);
        if (!f) throw Error("cannot write " + (dir / rel).string());
        f << write_obj(s.mesh);
        auto& o = objects[s.object_id];
        o.id = s.object_id;
        DatasetMesh m;
        m.id = s.mesh.name;
        m.file = rel;
        m.label = s.label;
        o.meshes.push_back(std::move(m));
    }
    for (auto& [id, o] : objects) d.objects.push_back(std::move(o));
    const auto path = dir / "dataset.json";
    save_dataset(d, path);
    return path;
}

}  // namespace realism
