// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace realism {

using Vec3 = std::array<double, 3>;
using Face = std::array<std::uint32_t, 3>;

/// Triangle mesh in model units. Only the vertices feed the scoring pipeline;
/// faces are kept so meshes can be written back out.
struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    std::string name;

    /// Throws ValidationError / EmptyMeshError when an invariant is broken.
    void validate() const;

    friend bool operator==(const Mesh&, const Mesh&) = default;
};

struct PointCloud {
    std::vector<Vec3> points;
    bool normalized = false;

    [[nodiscard]] std::size_t size() const noexcept { return points.size(); }
    friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

enum class MeshFormat { Obj, Ply };

Mesh parse_obj(std::string_view text, std::string name = {});
Mesh parse_ply(std::span<const std::byte> bytes, std::string name = {});
Mesh parse_ply(std::string_view bytes, std::string name = {});

/// Sniffs the format from the leading bytes ("ply" magic, otherwise OBJ).
Mesh parse_mesh(std::string_view bytes, std::string name = {});
Mesh load_mesh(const std::string& path);

std::string write_obj(const Mesh& mesh);
std::string write_ply_ascii(const Mesh& mesh);
std::string write_ply_binary(const Mesh& mesh);

PointCloud mesh_to_point_cloud(const Mesh& mesh);

/// Centers on the centroid and scales so the farthest point has norm 1.
PointCloud normalize_point_cloud(const PointCloud& pc);

/// Greedy farthest point sampling. Ties on the max-min distance resolve to the
/// lowest index. Returns points in selection order.
PointCloud farthest_point_sample(const PointCloud& pc, std::size_t k, std::size_t start_index = 0);

/// Same selection as farthest_point_sample, returned as indices into `pc`.
std::vector<std::size_t> farthest_point_indices(const PointCloud& pc, std::size_t k, std::size_t start_index = 0);

/// Sorts points lexicographically so downstream sampling does not depend on
/// vertex order.
PointCloud canonical_order(const PointCloud& pc);

/// Brings a cloud to exactly `count` points: FPS when larger, cyclic
/// repetition of points when smaller.
PointCloud resample_to(const PointCloud& pc, std::size_t count, std::size_t start_index = 0);

double distance(const Vec3& a, const Vec3& b) noexcept;

}  // namespace realism
