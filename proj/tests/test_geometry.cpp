// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <set>

#include "oracles.hpp"
#include "realism/errors.hpp"
#include "realism/geometry.hpp"
#include "realism/random.hpp"

using namespace realism;

namespace {

PointCloud cloud(std::vector<Vec3> pts) { return PointCloud{std::move(pts), false}; }

std::string binary_ply(const std::vector<Vec3>& v) {
    std::string s = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(v.size()) +
                    "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
    for (const auto& p : v) {
        for (double c : p) {
            const float f = static_cast<float>(c);
            char b[4];
            std::memcpy(b, &f, 4);
            s.append(b, 4);
        }
    }
    return s;
}

Mesh random_mesh(Rng& rng, int n) {
    Mesh m;
    m.name = "r";
    for (int i = 0; i < n; ++i) m.vertices.push_back({rng.normal(), rng.normal(), rng.normal()});
    for (int i = 0; i + 2 < n; i += 3) {
        m.faces.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i + 1),
                           static_cast<std::uint32_t>(i + 2)});
    }
    return m;
}

}  // namespace

TEST_CASE("parse_obj: minimal file and fan triangulation") {
    const auto m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3");
    REQUIRE(m.vertices.size() == 3);
    REQUIRE(m.faces.size() == 1);
    CHECK(m.faces[0] == Face{0, 1, 2});

    const auto quad = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4");
    REQUIRE(quad.faces.size() == 2);
    CHECK(quad.faces[0] == Face{0, 1, 2});
    CHECK(quad.faces[1] == Face{0, 2, 3});
}

TEST_CASE("parse_obj: negative indices, slashes, comments and CRLF") {
    const auto m = parse_obj("# c\r\nv 0 0 0\r\nv 1 0 0\r\nv 0 1 0\r\nvn 0 0 1\r\nf -3/1/1 -2//1 -1\r\n");
    REQUIRE(m.faces.size() == 1);
    CHECK(m.faces[0] == Face{0, 1, 2});
}

TEST_CASE("parse_obj: errors") {
    CHECK_THROWS_AS(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 5"), ValidationError);
    CHECK_THROWS_AS(parse_obj("# nothing\n"), EmptyMeshError);
    try {
        parse_obj("v 0 0 0\nv 1 x 0\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(parse_obj("v 0 nan 0\n"), Error);
}

TEST_CASE("parse_ply: ascii, binary and truncation") {
    const std::string ascii =
        "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
        "end_header\n0 0 0\n1 0 0\n0 1 0\n";
    const auto a = parse_ply(ascii);
    CHECK(a.vertices.size() == 3);
    CHECK(a.faces.empty());

    const auto b = parse_ply(binary_ply({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}));
    CHECK(a.vertices == b.vertices);
    CHECK(a.faces == b.faces);

    auto truncated = binary_ply({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}});
    truncated.resize(truncated.size() - 5);
    CHECK_THROWS_AS(parse_ply(truncated), ParseError);
    CHECK_THROWS_AS(parse_ply(std::string("plx\nformat ascii 1.0\nend_header\n")), ParseError);
    CHECK_THROWS_AS(parse_ply(std::string("ply\nformat binary_big_endian 1.0\nend_header\n")), ParseError);
}

TEST_CASE("parse_ply: unknown properties are skipped") {
    const std::string text =
        "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty uchar red\nproperty float y\n"
        "property float z\nelement face 0\nproperty list uchar int vertex_indices\nend_header\n1 255 2 3\n4 0 5 6\n";
    const auto m = parse_ply(text);
    REQUIRE(m.vertices.size() == 2);
    CHECK(m.vertices[1] == Vec3{4, 5, 6});
}

TEST_CASE("parse_mesh sniffs the format") {
    CHECK(parse_mesh("v 0 0 0\n").vertices.size() == 1);
    CHECK(parse_mesh(binary_ply({{1, 2, 3}})).vertices[0] == Vec3{1, 2, 3});
}

TEST_CASE("round trips: OBJ, ASCII PLY and binary PLY") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Mesh m = random_mesh(rng, 3 + trial);
        CHECK(parse_obj(write_obj(m), "r") == m);
        CHECK(parse_ply(write_ply_ascii(m), "r") == m);
        CHECK(parse_ply(write_ply_binary(m), "r") == m);
    }
}

TEST_CASE("Mesh::validate") {
    Mesh m{{{0, 0, 0}}, {}, "m"};
    CHECK_NOTHROW(m.validate());
    m.faces.push_back({0, 0, 1});
    CHECK_THROWS_AS(m.validate(), ValidationError);
    m.faces.clear();
    m.vertices[0][1] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(m.validate(), ValidationError);
    CHECK_THROWS_AS(Mesh{}.validate(), EmptyMeshError);
}

TEST_CASE("mesh_to_point_cloud keeps vertices, order and duplicates") {
    Mesh a{{{0, 0, 0}, {1, 0, 0}, {1, 0, 0}}, {{0, 1, 2}}, "a"};
    Mesh b = a;
    b.faces.clear();
    const auto pa = mesh_to_point_cloud(a);
    CHECK(pa.points == a.vertices);
    CHECK_FALSE(pa.normalized);
    CHECK(pa == mesh_to_point_cloud(b));
}

TEST_CASE("normalize_point_cloud") {
    CHECK_THROWS_AS(normalize_point_cloud(cloud({{1, 1, 1}, {1, 1, 1}})), DegenerateGeometryError);
    CHECK(normalize_point_cloud(cloud({{-1, 0, 0}, {1, 0, 0}})).points == std::vector<Vec3>{{-1, 0, 0}, {1, 0, 0}});
    const auto n = normalize_point_cloud(cloud({{0, 0, 0}, {2, 0, 0}}));
    CHECK(n.points == std::vector<Vec3>{{-1, 0, 0}, {1, 0, 0}});
    CHECK(n.normalized);
}

TEST_CASE("property: normalization invariants and idempotence") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        PointCloud pc;
        const int n = 2 + trial;
        for (int i = 0; i < n; ++i) pc.points.push_back({5 + 3 * rng.normal(), rng.normal(), -2 * rng.normal()});
        const auto a = normalize_point_cloud(pc);
        Vec3 c{0, 0, 0};
        double r = 0;
        for (const auto& p : a.points) {
            for (int k = 0; k < 3; ++k) c[k] += p[k] / n;
            r = std::max(r, std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]));
        }
        CHECK(std::abs(c[0]) < 1e-6);
        CHECK(std::abs(c[1]) < 1e-6);
        CHECK(std::abs(c[2]) < 1e-6);
        CHECK(r == doctest::Approx(1.0).epsilon(1e-9));
        const auto b = normalize_point_cloud(a);
        for (std::size_t i = 0; i < a.points.size(); ++i) {
            for (int k = 0; k < 3; ++k) CHECK(std::abs(a.points[i][k] - b.points[i][k]) < 1e-6);
        }
    }
}

TEST_CASE("farthest_point_sample examples") {
    const auto pc = cloud({{0, 0, 0}, {0.1, 0, 0}, {1, 0, 0}});
    CHECK(farthest_point_sample(pc, 2, 0).points == std::vector<Vec3>{{0, 0, 0}, {1, 0, 0}});
    CHECK(farthest_point_sample(pc, 1, 1).points == std::vector<Vec3>{{0.1, 0, 0}});
    CHECK(farthest_point_sample(pc, 3, 0).size() == 3);
    CHECK_THROWS_AS(farthest_point_sample(pc, 4, 0), ValidationError);
    CHECK_THROWS_AS(farthest_point_sample(pc, 1, 3), ValidationError);
    CHECK_THROWS_AS(farthest_point_sample(pc, 0, 0), ValidationError);
}

TEST_CASE("farthest_point_sample ties go to the lowest index") {
    // (1,0,0) and (-1,0,0) are equally far from the seed.
    const auto pc = cloud({{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}});
    CHECK(farthest_point_indices(pc, 2, 0) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("property: FPS is a duplicate-free subset satisfying the greedy rule") {
    Rng rng(21);
    for (int trial = 0; trial < 30; ++trial) {
        PointCloud pc;
        const std::size_t n = 5 + static_cast<std::size_t>(trial) * 3;
        for (std::size_t i = 0; i < n; ++i) pc.points.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
        const std::size_t k = 1 + static_cast<std::size_t>(rng.uniform() * static_cast<double>(n - 1));
        const std::size_t start = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n)) % n;
        const auto idx = farthest_point_indices(pc, k, start);
        REQUIRE(idx.size() == k);
        CHECK(idx[0] == start);
        CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == k);
        const auto pts = farthest_point_sample(pc, k, start);
        for (std::size_t j = 0; j < k; ++j) CHECK(pts.points[j] == pc.points[idx[j]]);
        for (std::size_t j = 1; j < k; ++j) {
            auto mind = [&](std::size_t q) {
                double best = std::numeric_limits<double>::infinity();
                for (std::size_t s = 0; s < j; ++s) best = std::min(best, distance(pc.points[q], pc.points[idx[s]]));
                return best;
            };
            const double chosen = mind(idx[j]);
            for (std::size_t q = 0; q < n; ++q) {
                if (std::find(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(j), q) !=
                    idx.begin() + static_cast<std::ptrdiff_t>(j)) {
                    continue;
                }
                CHECK(chosen >= mind(q));
            }
        }
    }
}

TEST_CASE("canonical_order and resample_to") {
    const auto pc = cloud({{1, 0, 0}, {0, 2, 0}, {0, 1, 0}});
    CHECK(canonical_order(pc).points == std::vector<Vec3>{{0, 1, 0}, {0, 2, 0}, {1, 0, 0}});
    const auto up = resample_to(pc, 7);
    REQUIRE(up.size() == 7);
    for (std::size_t i = 0; i < 7; ++i) CHECK(up.points[i] == pc.points[i % 3]);
    CHECK(resample_to(pc, 2).points == farthest_point_sample(pc, 2).points);
    CHECK(resample_to(pc, 3).points == pc.points);
}
