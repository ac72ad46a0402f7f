// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "realism/autograd.hpp"
#include "realism/geometry.hpp"
#include "realism/params.hpp"

namespace realism {

struct EncoderConfig {
    std::size_t groups = 32;      // G, patches per cloud
    std::size_t group_size = 32;  // S, points per patch
    std::size_t hidden = 64;      // width of the shared per-point MLP
    std::size_t d_model = 64;     // token width, shared with the bridge

    void validate() const;
    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Local neighborhoods around FPS centers. Patch g occupies rows
/// [g*S, (g+1)*S) of `relative`, each row a neighbor minus its center.
struct PatchSet {
    Matrix centers;   // G×3
    Matrix relative;  // (G*S)×3
    std::size_t group_size = 0;

    [[nodiscard]] std::size_t groups() const noexcept { return static_cast<std::size_t>(centers.rows()); }
};

struct ShapeTokens {
    Matrix embeddings;  // G×d_model

    [[nodiscard]] std::size_t groups() const noexcept { return static_cast<std::size_t>(embeddings.rows()); }
};

/// Token = project(maxpool(MLP(relative points))) + posenc(center).
struct EncoderWeights {
    Matrix mlp1_w, mlp1_b;  // 3×H, 1×H
    Matrix mlp2_w, mlp2_b;  // H×H, 1×H
    Matrix proj_w, proj_b;  // H×D, 1×D
    Matrix pos1_w, pos1_b;  // 3×D, 1×D
    Matrix pos2_w, pos2_b;  // D×D, 1×D

    template <typename Self, typename F>
    static void visit(Self& self, F&& f) {
        f("encoder.mlp1.weight", self.mlp1_w);
        f("encoder.mlp1.bias", self.mlp1_b);
        f("encoder.mlp2.weight", self.mlp2_w);
        f("encoder.mlp2.bias", self.mlp2_b);
        f("encoder.proj.weight", self.proj_w);
        f("encoder.proj.bias", self.proj_b);
        f("encoder.pos1.weight", self.pos1_w);
        f("encoder.pos1.bias", self.pos1_b);
        f("encoder.pos2.weight", self.pos2_w);
        f("encoder.pos2.bias", self.pos2_b);
    }
};

/// PointNet global feature for the point-based baseline: shared per-point MLP
/// (3 -> H -> H -> D) followed by a max-pool over all points.
struct BaselineWeights {
    Matrix mlp1_w, mlp1_b;
    Matrix mlp2_w, mlp2_b;
    Matrix mlp3_w, mlp3_b;

    template <typename Self, typename F>
    static void visit(Self& self, F&& f) {
        f("baseline.mlp1.weight", self.mlp1_w);
        f("baseline.mlp1.bias", self.mlp1_b);
        f("baseline.mlp2.weight", self.mlp2_w);
        f("baseline.mlp2.bias", self.mlp2_b);
        f("baseline.mlp3.weight", self.mlp3_w);
        f("baseline.mlp3.bias", self.mlp3_b);
    }
};

class Rng;

EncoderWeights init_encoder(const EncoderConfig& cfg, Rng& rng);
BaselineWeights init_baseline(const EncoderConfig& cfg, Rng& rng);

/// Centers are FPS(pc, G, 0); patch g holds the S nearest neighbors of center
/// g, nearest first, ties broken by lower point index.
PatchSet group_patches(const PointCloud& pc, std::size_t groups, std::size_t group_size);

ShapeTokens embed_patches(const PatchSet& ps, const EncoderWeights& w);
ad::Var embed_patches(Binder& bind, const PatchSet& ps, const EncoderWeights& w);

/// 1×D feature vector.
Matrix pointnet_global_feature(const PointCloud& pc, const BaselineWeights& w);
ad::Var pointnet_global_feature(Binder& bind, const Matrix& points, const BaselineWeights& w);

/// N×3 matrix view of a cloud.
Matrix to_matrix(const PointCloud& pc);

}  // namespace realism
