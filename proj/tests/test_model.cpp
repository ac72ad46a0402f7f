// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "realism/bridge.hpp"
#include "realism/errors.hpp"
#include "realism/model.hpp"
#include "realism/random.hpp"
#include "realism/realism_head.hpp"
#include "realism/shape_encoder.hpp"

using namespace realism;

namespace {

PointCloud unit_cloud(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    PointCloud pc;
    for (std::size_t i = 0; i < n; ++i) pc.points.push_back({rng.normal(), rng.normal(), rng.normal()});
    return normalize_point_cloud(pc);
}

double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

template <typename W>
void zero_all(W& w) {
    W::visit(w, [](const std::string&, Matrix& m) { m.setZero(); });
}

Matrix hidden_states(const ModelBundle& m, const PreparedShape& shape) {
    const auto tokens = embed_patches(shape.patches, m.encoder);
    const auto seq = assemble_sequence(m.config.prompts, tokens, m.bridge, m.config.bridge);
    return transformer_forward(seq, m.bridge, m.config.bridge);
}

}  // namespace

// Shape encoder ---------------------------------------------------------------

TEST_CASE("group_patches: one patch holding the whole cloud") {
    const auto pc = unit_cloud(20, 1);
    const auto ps = group_patches(pc, 1, 20);
    CHECK(ps.groups() == 1);
    for (int k = 0; k < 3; ++k) CHECK(ps.centers(0, k) == pc.points[0][k]);
    CHECK(ps.relative.rows() == 20);
}

TEST_CASE("group_patches: unit-square corners") {
    const PointCloud pc{{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}}, true};
    const auto ps = group_patches(pc, 2, 2);
    CHECK(ps.centers.row(0) == Matrix{{0, 0, 0}});
    CHECK(ps.centers.row(1) == Matrix{{1, 1, 0}});
    // Nearest-first with the center itself at offset zero; the tie between the
    // two adjacent corners goes to the lower index.
    CHECK(ps.relative.row(0) == Matrix{{0, 0, 0}});
    CHECK(ps.relative.row(1) == Matrix{{1, 0, 0}});
    CHECK(ps.relative.row(2) == Matrix{{0, 0, 0}});
    CHECK(ps.relative.row(3) == Matrix{{0, -1, 0}});
    CHECK_THROWS_AS(group_patches(pc, 5, 2), ValidationError);
    CHECK_THROWS_AS(group_patches(pc, 2, 5), ValidationError);
}

TEST_CASE("property: patches are the S nearest neighbours of FPS centers") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto pc = unit_cloud(60, seed);
        const std::size_t G = 6, S = 7;
        const auto ps = group_patches(pc, G, S);
        const auto centers = farthest_point_sample(pc, G, 0);
        for (std::size_t g = 0; g < G; ++g) {
            std::vector<double> d;
            for (const auto& p : pc.points) d.push_back(distance(p, centers.points[g]));
            std::sort(d.begin(), d.end());
            for (std::size_t s = 0; s < S; ++s) {
                const auto row = ps.relative.row(static_cast<Eigen::Index>(g * S + s));
                CHECK(row.norm() == doctest::Approx(d[s]).epsilon(1e-12));
            }
            CHECK(ps.relative.row(static_cast<Eigen::Index>(g * S)).norm() == 0.0);
        }
    }
}

TEST_CASE("embed_patches: zero weights leave only the positional encoding") {
    Rng rng(3);
    EncoderConfig cfg{4, 5, 8, 16};
    auto w = init_encoder(cfg, rng);
    const auto ps = group_patches(unit_cloud(30, 2), 4, 5);
    for (Matrix* m : {&w.mlp1_w, &w.mlp1_b, &w.mlp2_w, &w.mlp2_b, &w.proj_w, &w.proj_b}) m->setZero();
    const auto tokens = embed_patches(ps, w).embeddings;
    for (Eigen::Index g = 0; g < 4; ++g) {
        const Matrix c = ps.centers.row(g);
        Matrix h = c * w.pos1_w + w.pos1_b;
        h = h.unaryExpr([](double x) {
            const double c = std::sqrt(2.0 / std::numbers::pi);
            return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
        });
        const Matrix pos = h * w.pos2_w + w.pos2_b;
        CHECK(max_abs_diff(tokens.row(g), pos) < 1e-12);
    }
}

TEST_CASE("embed_patches: permutation and duplicate invariance, token count") {
    Rng rng(4);
    EncoderConfig cfg{5, 6, 12, 16};
    const auto w = init_encoder(cfg, rng);
    auto ps = group_patches(unit_cloud(50, 5), 5, 6);
    const auto base = embed_patches(ps, w).embeddings;
    CHECK(base.rows() == 5);
    CHECK(base.allFinite());

    auto perm = ps;
    perm.relative.row(7).swap(perm.relative.row(10));
    CHECK(embed_patches(perm, w).embeddings == base);

    auto dup = ps;
    dup.relative.row(8) = dup.relative.row(9);  // patch 1 now holds point 9 twice, point 8 dropped
    auto ref = ps;
    ref.relative.row(8) = ref.relative.row(9);
    CHECK(embed_patches(dup, w).embeddings == embed_patches(ref, w).embeddings);

    auto bad = w;
    bad.mlp2_w(0, 0) = std::nan("");
    CHECK_THROWS_AS(embed_patches(ps, bad), NumericError);

    for (std::size_t n : {5u, 40u, 200u}) {
        CHECK(embed_patches(group_patches(unit_cloud(n, n), 5, 5), w).embeddings.rows() == 5);
    }
}

TEST_CASE("pointnet_global_feature: permutation invariance and zero weights") {
    Rng rng(8);
    EncoderConfig cfg{4, 4, 8, 16};
    auto w = init_baseline(cfg, rng);
    auto pc = unit_cloud(25, 9);
    const auto f = pointnet_global_feature(pc, w);
    CHECK(f.rows() == 1);
    CHECK(f.cols() == 16);
    std::reverse(pc.points.begin(), pc.points.end());
    CHECK(pointnet_global_feature(pc, w) == f);
    zero_all(w);
    CHECK(pointnet_global_feature(pc, w).isZero(0.0));
}

// Bridge ----------------------------------------------------------------------

TEST_CASE("tokenize_text") {
    CHECK(tokenize_text("AB") == std::vector<int>{65, 66});
    CHECK(tokenize_text("").empty());
    const std::string s = "pr\xc3\xbc" "fen \xe2\x9c\x93";
    const auto ids = tokenize_text(s);
    CHECK(detokenize(ids) == s);
    CHECK(std::all_of(ids.begin(), ids.end(), [](int id) { return id >= 0 && id < 256; }));
}

TEST_CASE("prompt substitution") {
    PromptSet p;
    p.include_object_name = true;
    p.object_name = "dog";
    CHECK(p.realism_final() == "Evaluate the quality of this point cloud dog and provide your rating.");
    CHECK(substitute_object_name("object objects an object.", "cat") == "cat objects an cat.");
    PromptSet q;
    q.realism_text = "";
    CHECK_THROWS_AS(q.validate(), ValidationError);
    PromptSet r;
    r.include_object_name = true;
    CHECK_THROWS_AS(r.validate(), ValidationError);
}

TEST_CASE("assemble_sequence: layout and length arithmetic") {
    BridgeConfig cfg;
    cfg.d_model = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.max_seq = 128;
    Rng rng(1);
    const auto w = init_bridge(cfg, rng);
    PromptSet p;
    p.system_text = "";
    p.realism_text = std::string(40, 'x');
    ShapeTokens shape{Matrix::Random(32, 16)};
    const auto seq = assemble_sequence(p, shape, w, cfg);
    CHECK(seq.length() == 74);
    CHECK(sequence_length(p, 32) == 74);
    CHECK(seq.embeddings.row(0) == w.token_embedding.row(kBosToken));
    CHECK(seq.embeddings.middleRows(1, 32) == shape.embeddings);
    CHECK(seq.embeddings.row(33) == w.token_embedding.row('x'));
    CHECK(seq.embeddings.row(73) == w.token_embedding.row(kScoreToken));
    CHECK(seq.segments[1] == Segment::Shape);
    CHECK(seq.segments[33] == Segment::Realism);

    p.system_text = "hello";
    const auto seq2 = assemble_sequence(p, shape, w, cfg);
    CHECK(seq2.length() == 79);
    CHECK(seq2.segments[1] == Segment::System);
    CHECK(seq2.segments[6] == Segment::Shape);
    // Segments are contiguous: system*, shape*, realism*.
    CHECK(std::is_sorted(seq2.segments.begin(), seq2.segments.end()));

    p.realism_text = std::string(200, 'x');
    CHECK_THROWS_AS(assemble_sequence(p, shape, w, cfg), SequenceTooLongError);
}

TEST_CASE("bridge config validation") {
    BridgeConfig c;
    c.d_model = 30;
    c.n_heads = 4;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = {};
    c.finetune = FinetuneMode::lora(0);
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c.finetune = FinetuneMode::lora(c.d_model + 1);
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c.finetune = FinetuneMode::prefix(0);
    CHECK_THROWS_AS(c.validate(), ValidationError);
    CHECK(FinetuneMode::parse("lora:4") == FinetuneMode::lora(4));
    CHECK(FinetuneMode::parse("prefix") == FinetuneMode::prefix(8));
    CHECK(FinetuneMode::parse("prefix:3") == FinetuneMode::prefix(3));
    CHECK(FinetuneMode::parse("full") == FinetuneMode::full());
    CHECK_THROWS_AS(FinetuneMode::parse("lora"), ValidationError);
    CHECK_THROWS_AS(FinetuneMode::parse("lora:x"), ValidationError);
}

TEST_CASE("zero-initialized LoRA equals full mode bit for bit") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto full_cfg = oracle::tiny_config(FinetuneMode::full());
        auto lora_cfg = oracle::tiny_config(FinetuneMode::lora(4));
        const auto full = init_model(full_cfg, seed);
        const auto lora = init_model(lora_cfg, seed);
        const auto shape = prepare_shape(oracle::sphere_mesh(6, 9), full_cfg);
        CHECK(hidden_states(full, shape) == hidden_states(lora, shape));
        CHECK(score_prepared(full, shape).value == score_prepared(lora, shape).value);
    }
}

TEST_CASE("prefix mode keeps the output length") {
    auto cfg = oracle::tiny_config(FinetuneMode::prefix(5));
    const auto m = init_model(cfg, 4);
    const auto shape = prepare_shape(oracle::sphere_mesh(6, 9), cfg);
    const auto tokens = embed_patches(shape.patches, m.encoder);
    const auto seq = assemble_sequence(cfg.prompts, tokens, m.bridge, cfg.bridge);
    CHECK(transformer_forward(seq, m.bridge, cfg.bridge).rows() == static_cast<Eigen::Index>(seq.length()));
}

TEST_CASE("causality: later positions never influence earlier ones") {
    for (auto mode : {FinetuneMode::full(), FinetuneMode::prefix(3)}) {
        auto cfg = oracle::tiny_config(mode);
        const auto m = init_model(cfg, 6);
        const auto shape = prepare_shape(oracle::sphere_mesh(6, 9), cfg);
        const auto tokens = embed_patches(shape.patches, m.encoder);
        auto seq = assemble_sequence(cfg.prompts, tokens, m.bridge, cfg.bridge);
        const auto base = transformer_forward(seq, m.bridge, cfg.bridge);
        const Eigen::Index j = 9;
        seq.embeddings.row(j).array() += 0.5;
        const auto after = transformer_forward(seq, m.bridge, cfg.bridge);
        CHECK(after.topRows(j) == base.topRows(j));
        CHECK(max_abs_diff(after.bottomRows(after.rows() - j), base.bottomRows(base.rows() - j)) > 0.0);
    }
}

TEST_CASE("transformer rejects non-finite activations") {
    auto cfg = oracle::tiny_config();
    auto m = init_model(cfg, 2);
    const auto shape = prepare_shape(oracle::sphere_mesh(6, 9), cfg);
    auto seq = assemble_sequence(cfg.prompts, embed_patches(shape.patches, m.encoder), m.bridge, cfg.bridge);
    seq.embeddings(3, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(transformer_forward(seq, m.bridge, cfg.bridge), NumericError);
}

TEST_CASE("trainable parameter selections") {
    BridgeConfig c;
    c.d_model = 64;
    c.n_layers = 2;
    c.n_heads = 4;
    Rng rng(1);

    c.finetune = FinetuneMode::lora(4);
    auto w = init_bridge(c, rng);
    auto sel = trainable_parameters(w, c);
    CHECK(sel.size() == 2 * 4);  // q and v, A and B, per layer
    CHECK(w.layers[0].lora_q_a.size() + w.layers[0].lora_q_b.size() == 64 * 4 + 4 * 64);
    CHECK(w.layers[0].lora_q_b.isZero(0.0));
    CHECK(w.layers[1].lora_v_b.isZero(0.0));

    c.finetune = FinetuneMode::prefix(8);
    w = init_bridge(c, rng);
    sel = trainable_parameters(w, c);
    CHECK(sel.size() == 2 * 2);
    std::size_t params = 0;
    BridgeWeights::visit(w, [&](const std::string& name, const Matrix& m) {
        if (sel.contains(name)) params += static_cast<std::size_t>(m.size());
    });
    CHECK(params == 2 * 2 * 8 * 64);

    c.finetune = FinetuneMode::full();
    w = init_bridge(c, rng);
    sel = trainable_parameters(w, c);
    std::size_t all = 0;
    BridgeWeights::visit(w, [&](const std::string& name, const Matrix&) {
        ++all;
        CHECK(sel.contains(name));
    });
    CHECK(sel.size() == all);
}

TEST_CASE("model-level selection: decoder always, encoder only when unfrozen") {
    auto cfg = oracle::tiny_config(FinetuneMode::lora(2));
    const auto m = init_model(cfg, 1);
    const auto frozen = trainable_parameters(m, true);
    CHECK(frozen.contains("decoder.w1.weight"));
    CHECK_FALSE(frozen.contains("encoder.mlp1.weight"));
    CHECK_FALSE(frozen.contains("bridge.layers.0.attn.wq.weight"));
    CHECK(trainable_parameters(m, false).contains("encoder.mlp1.weight"));
}

// Realism head ----------------------------------------------------------------

TEST_CASE("decode_realism: zero network, range and monotonicity") {
    Rng rng(2);
    auto w = init_decoder(8, 8, rng);
    zero_all(w);
    CHECK(decode_realism(Matrix::Random(3, 8), w).value == 0.5);

    // 1-d path with positive weights; GELU is monotone for x >= 0.
    w.w1.setZero();
    w.w1(0, 0) = 1.0;
    w.w2.setZero();
    w.w2(0, 0) = 2.0;
    double prev = -1.0;
    for (double x = 0; x <= 3; x += 0.25) {
        Matrix h = Matrix::Zero(2, 8);
        h(1, 0) = x;
        const double s = decode_realism(h, w).value;
        CHECK(s > prev);
        CHECK(s > 0.0);
        CHECK(s < 1.0);
        prev = s;
    }
    auto r = init_decoder(8, 16, rng);
    for (int i = 0; i < 100; ++i) {
        const double s = decode_realism(Matrix::Random(4, 8) * 50.0, r).value;
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
    }
    Matrix bad = Matrix::Zero(1, 8);
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(decode_realism(bad, r), NumericError);
}

TEST_CASE("generation head: quantization, digits and ties") {
    CHECK(quantize_label(0.67) == 4);
    CHECK(quantize_label(0.0) == 0);
    CHECK(quantize_label(1.0) == 6);
    for (int i = 0; i <= 1000; ++i) {
        const double y = i / 1000.0;
        CHECK(std::abs(dequantize_digit(quantize_label(y)) - y) <= 1.0 / 12.0 + 1e-12);
    }
    Matrix logits = Matrix::Zero(1, static_cast<Eigen::Index>(kVocabSize));
    logits(0, '6') = 5.0;
    logits(0, 'A') = 50.0;  // non-digit tokens are ignored
    CHECK(score_from_logits(logits).value == 1.0);
    logits(0, '0') = 9.0;
    CHECK(score_from_logits(logits).value == 0.0);
    logits.setZero();
    CHECK(score_from_logits(logits).value == 0.0);  // all tied: lowest digit
    logits(0, '3') = 1.0;
    logits(0, '5') = 1.0;
    CHECK(score_from_logits(logits).value == doctest::Approx(0.5));
}

// End-to-end scoring -----------------------------------------------------------

TEST_CASE("score_mesh is deterministic and invariant to order, translation and scale") {
    for (auto scorer : {ScorerKind::Bridge, ScorerKind::Baseline}) {
        auto cfg = oracle::tiny_config();
        cfg.scorer = scorer;
        const auto m = init_model(cfg, 12);
        const auto mesh = oracle::noisy(oracle::sphere_mesh(8, 11), 0.05, 4);
        const double s = score_mesh(mesh, m).value;
        CHECK(s > 0.0);
        CHECK(s < 1.0);
        CHECK(score_mesh(mesh, m).value == s);

        Mesh reversed = mesh;
        std::reverse(reversed.vertices.begin(), reversed.vertices.end());
        reversed.faces.clear();
        CHECK(std::abs(score_mesh(reversed, m).value - s) < 1e-6);

        Mesh moved = mesh;
        for (auto& v : moved.vertices) v = {v[0] + 3.0, v[1] - 7.5, v[2] + 0.25};
        CHECK(std::abs(score_mesh(moved, m).value - s) < 1e-6);

        Mesh scaled = mesh;
        for (auto& v : scaled.vertices) v = {v[0] * 4.0, v[1] * 4.0, v[2] * 4.0};
        CHECK(std::abs(score_mesh(scaled, m).value - s) < 1e-6);
    }
}

TEST_CASE("generation-mode scores lie on the 7-level grid") {
    auto cfg = oracle::tiny_config(FinetuneMode::full(), LossMode::Generation);
    const auto m = init_model(cfg, 5);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const double s = score_mesh(oracle::noisy(oracle::sphere_mesh(8, 11), 0.05, seed), m).value;
        const double k = s * 6.0;
        CHECK(std::abs(k - std::round(k)) < 1e-12);
    }
}

TEST_CASE("model config validation") {
    auto cfg = oracle::tiny_config();
    cfg.encoder.d_model = 16;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = oracle::tiny_config();
    cfg.max_points = 4;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = oracle::tiny_config(FinetuneMode::full(), LossMode::Generation);
    cfg.scorer = ScorerKind::Baseline;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = oracle::tiny_config();
    cfg.prompts.realism_text = std::string(100, 'x');
    CHECK_THROWS_AS(cfg.validate(), SequenceTooLongError);
    CHECK(parse_scorer("sram") == ScorerKind::Bridge);
    CHECK(parse_scorer("baseline") == ScorerKind::Baseline);
    CHECK_THROWS_AS(parse_scorer("nope"), ValidationError);
}
