// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include "realism/shape_encoder.hpp"

#include <algorithm>
#include <numeric>

#include "realism/errors.hpp"
#include "realism/random.hpp"

namespace realism {

void EncoderConfig::validate() const {
    if (groups == 0 || group_size == 0 || hidden == 0 || d_model == 0) {
        throw ValidationError("encoder config: groups, group_size, hidden and d_model must be positive");
    }
}

EncoderWeights init_encoder(const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    const long h = static_cast<long>(cfg.hidden);
    const long d = static_cast<long>(cfg.d_model);
    EncoderWeights w;
    w.mlp1_w = init_uniform(rng, 3, h, 3);
    w.mlp1_b = Matrix::Zero(1, h);
    w.mlp2_w = init_uniform(rng, h, h, h);
    w.mlp2_b = Matrix::Zero(1, h);
    w.proj_w = init_uniform(rng, h, d, h);
    w.proj_b = Matrix::Zero(1, d);
    w.pos1_w = init_uniform(rng, 3, d, 3);
    w.pos1_b = Matrix::Zero(1, d);
    // Start position embeddings small relative to the patch features.
    w.pos2_w = init_uniform(rng, d, d, d) * 0.1;
    round_to_float(w.pos2_w);
    w.pos2_b = Matrix::Zero(1, d);
    return w;
}

BaselineWeights init_baseline(const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    const long h = static_cast<long>(cfg.hidden);
    const long d = static_cast<long>(cfg.d_model);
    BaselineWeights w;
    w.mlp1_w = init_uniform(rng, 3, h, 3);
    w.mlp1_b = Matrix::Zero(1, h);
    w.mlp2_w = init_uniform(rng, h, h, h);
    w.mlp2_b = Matrix::Zero(1, h);
    w.mlp3_w = init_uniform(rng, h, d, h);
    w.mlp3_b = Matrix::Zero(1, d);
    return w;
}

Matrix to_matrix(const PointCloud& pc) {
    Matrix m(static_cast<Eigen::Index>(pc.points.size()), 3);
    for (std::size_t i = 0; i < pc.points.size(); ++i) {
        for (int k = 0; k < 3; ++k) m(static_cast<Eigen::Index>(i), k) = pc.points[i][k];
    }
    return m;
}

PatchSet group_patches(const PointCloud& pc, std::size_t groups, std::size_t group_size) {
    const std::size_t n = pc.points.size();
    if (groups == 0 || group_size == 0) throw ValidationError("group_patches: G and S must be positive");
    if (groups > n || group_size > n) {
        throw ValidationError("group_patches: G=" + std::to_string(groups) + ", S=" + std::to_string(group_size) +
                              " exceed the cloud size " + std::to_string(n));
    }
    const auto centers = farthest_point_indices(pc, groups, 0);

    PatchSet ps;
    ps.group_size = group_size;
    ps.centers.resize(static_cast<Eigen::Index>(groups), 3);
    ps.relative.resize(static_cast<Eigen::Index>(groups * group_size), 3);

    std::vector<double> d2(n);
    std::vector<std::size_t> order(n);
    for (std::size_t g = 0; g < groups; ++g) {
        const auto& c = pc.points[centers[g]];
        for (int k = 0; k < 3; ++k) ps.centers(static_cast<Eigen::Index>(g), k) = c[k];
        for (std::size_t i = 0; i < n; ++i) {
            const auto& p = pc.points[i];
            const double dx = p[0] - c[0], dy = p[1] - c[1], dz = p[2] - c[2];
            d2[i] = dx * dx + dy * dy + dz * dz;
        }
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(group_size), order.end(),
                          [&](std::size_t a, std::size_t b) { return d2[a] < d2[b] || (d2[a] == d2[b] && a < b); });
        for (std::size_t s = 0; s < group_size; ++s) {
            const auto& p = pc.points[order[s]];
            const auto row = static_cast<Eigen::Index>(g * group_size + s);
            for (int k = 0; k < 3; ++k) ps.relative(row, k) = p[k] - c[k];
        }
    }
    return ps;
}

namespace {

template <typename W>
void require_finite(const W& w) {
    W::visit(w, [](const std::string& name, const Matrix& m) {
        if (!m.allFinite()) throw NumericError("non-finite weight in " + name);
    });
}

ad::Var dense(Binder& bind, ad::Var x, const std::string& prefix, const Matrix& w, const Matrix& b) {
    auto& g = bind.graph();
    return g.add_row(g.matmul(x, bind(prefix + ".weight", w)), bind(prefix + ".bias", b));
}

}  // namespace

ad::Var embed_patches(Binder& bind, const PatchSet& ps, const EncoderWeights& w) {
    require_finite(w);
    auto& g = bind.graph();
    const auto rel = g.constant_ref(ps.relative);
    auto h = g.gelu(dense(bind, rel, "encoder.mlp1", w.mlp1_w, w.mlp1_b));
    h = dense(bind, h, "encoder.mlp2", w.mlp2_w, w.mlp2_b);
    const auto pooled = g.segment_max(h, static_cast<int>(ps.group_size));
    const auto patch_token = dense(bind, pooled, "encoder.proj", w.proj_w, w.proj_b);

    const auto centers = g.constant_ref(ps.centers);
    auto pos = g.gelu(dense(bind, centers, "encoder.pos1", w.pos1_w, w.pos1_b));
    pos = dense(bind, pos, "encoder.pos2", w.pos2_w, w.pos2_b);
    return g.add(patch_token, pos);
}

ShapeTokens embed_patches(const PatchSet& ps, const EncoderWeights& w) {
    ad::Graph g;
    Binder bind(g);
    const auto out = embed_patches(bind, ps, w);
    return ShapeTokens{g.value(out)};
}

ad::Var pointnet_global_feature(Binder& bind, const Matrix& points, const BaselineWeights& w) {
    require_finite(w);
    auto& g = bind.graph();
    const auto x = g.constant_ref(points);
    auto h = g.gelu(dense(bind, x, "baseline.mlp1", w.mlp1_w, w.mlp1_b));
    h = g.gelu(dense(bind, h, "baseline.mlp2", w.mlp2_w, w.mlp2_b));
    h = dense(bind, h, "baseline.mlp3", w.mlp3_w, w.mlp3_b);
    return g.segment_max(h, static_cast<int>(points.rows()));
}

Matrix pointnet_global_feature(const PointCloud& pc, const BaselineWeights& w) {
    if (pc.points.empty()) throw EmptyMeshError("pointnet_global_feature: empty cloud");
    const Matrix pts = to_matrix(pc);
    ad::Graph g;
    Binder bind(g);
    return g.value(pointnet_global_feature(bind, pts, w));
}

}  // namespace realism
