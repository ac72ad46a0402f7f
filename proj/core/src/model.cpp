// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include "realism/model.hpp"

#include "realism/errors.hpp"
#include "realism/random.hpp"

namespace realism {

std::string to_string(ScorerKind kind) { return kind == ScorerKind::Bridge ? "bridge" : "baseline"; }
std::string to_string(LossMode mode) { return mode == LossMode::Regression ? "regression" : "generation"; }

ScorerKind parse_scorer(std::string_view text) {
    if (text == "bridge" || text == "sram") return ScorerKind::Bridge;
    if (text == "baseline") return ScorerKind::Baseline;
    throw ValidationError("unknown scorer '" + std::string(text) + "' (expected bridge or baseline)");
}

LossMode parse_loss_mode(std::string_view text) {
    if (text == "regression") return LossMode::Regression;
    if (text == "generation") return LossMode::Generation;
    throw ValidationError("unknown loss mode '" + std::string(text) + "' (expected regression or generation)");
}

void ModelConfig::validate() const {
    encoder.validate();
    bridge.validate();
    if (encoder.d_model != bridge.d_model) {
        throw ValidationError("model config: encoder d_model " + std::to_string(encoder.d_model) +
                              " differs from bridge d_model " + std::to_string(bridge.d_model));
    }
    if (prompts.realism_text.empty()) throw ValidationError("model config: realism prompt must not be empty");
    if (max_points < encoder.groups || max_points < encoder.group_size) {
        throw ValidationError("model config: max_points must be at least groups and group_size");
    }
    if (scorer == ScorerKind::Baseline && loss_mode == LossMode::Generation) {
        throw ValidationError("model config: the baseline scorer has no generation head");
    }
    // Longest legal prompt is checked per sample; the template without a name
    // must fit at least.
    if (scorer == ScorerKind::Bridge) {
        PromptSet p = prompts;
        p.include_object_name = false;
        p.object_name.reset();
        const auto len = sequence_length(p, encoder.groups);
        if (len > bridge.max_seq) {
            throw SequenceTooLongError("model config: prompt and shape tokens need " + std::to_string(len) +
                                       " positions, max_seq is " + std::to_string(bridge.max_seq));
        }
    }
}

PromptSet ModelConfig::prompts_for(std::string_view object_name) const {
    PromptSet p = prompts;
    if (p.include_object_name) {
        p.object_name = std::string(object_name);
    } else {
        p.object_name.reset();
    }
    return p;
}

ModelBundle init_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelBundle m;
    m.config = cfg;
    // Independent streams keep each component's init stable when another
    // component's shape changes.
    Rng enc(derive_seed(seed, 0)), br(derive_seed(seed, 1)), dec(derive_seed(seed, 2)), base(derive_seed(seed, 3));
    if (cfg.scorer == ScorerKind::Baseline) {
        m.baseline = init_baseline(cfg.encoder, base);
    } else {
        m.encoder = init_encoder(cfg.encoder, enc);
        m.bridge = init_bridge(cfg.bridge, br);
    }
    m.decoder = init_decoder(cfg.bridge.d_model, cfg.decoder_width(), dec);
    return m;
}

PreparedShape prepare_shape(const Mesh& mesh, const ModelConfig& cfg) {
    PreparedShape s;
    s.cloud = resample_to(normalize_point_cloud(canonical_order(mesh_to_point_cloud(mesh))), cfg.max_points);
    s.cloud.normalized = true;
    s.points = to_matrix(s.cloud);
    if (cfg.scorer == ScorerKind::Bridge) s.patches = group_patches(s.cloud, cfg.encoder.groups, cfg.encoder.group_size);
    return s;
}

ad::Var build_forward(Binder& bind, const ModelBundle& model, const PreparedShape& shape,
                      std::string_view object_name, const Matrix* tokens) {
    const auto& cfg = model.config;
    auto& g = bind.graph();
    if (cfg.scorer == ScorerKind::Baseline) {
        const auto feature = pointnet_global_feature(bind, shape.points, model.baseline);
        return decode_realism(bind, feature, model.decoder);
    }
    const auto shape_tokens = tokens ? g.constant_ref(*tokens) : embed_patches(bind, shape.patches, model.encoder);
    const auto seq = assemble_sequence(bind, cfg.prompts_for(object_name), shape_tokens, model.bridge, cfg.bridge);
    const auto hidden = transformer_forward(bind, seq, model.bridge, cfg.bridge);
    if (cfg.loss_mode == LossMode::Generation) return generation_logits(bind, hidden, model.bridge);
    return decode_realism(bind, hidden, model.decoder);
}

RealismScore score_prepared(const ModelBundle& model, const PreparedShape& shape, std::string_view object_name) {
    ad::Graph g;
    Binder bind(g);
    const auto out = build_forward(bind, model, shape, object_name);
    if (model.config.loss_mode == LossMode::Generation) return score_from_logits(g.value(out));
    return RealismScore{g.value(out)(0, 0)};
}

RealismScore score_mesh(const Mesh& mesh, const ModelBundle& model) {
    return score_prepared(model, prepare_shape(mesh, model.config), mesh.name);
}

ParameterSelection trainable_parameters(const ModelBundle& model, bool encoder_frozen) {
    ParameterSelection sel;
    if (model.config.scorer == ScorerKind::Baseline) {
        BaselineWeights::visit(model.baseline, [&](const std::string& n, const Matrix&) { sel.insert(n); });
    } else {
        sel = trainable_parameters(model.bridge, model.config.bridge);
        if (!encoder_frozen) {
            EncoderWeights::visit(model.encoder, [&](const std::string& n, const Matrix&) { sel.insert(n); });
        }
    }
    if (model.config.loss_mode == LossMode::Regression) {
        DecoderWeights::visit(model.decoder, [&](const std::string& n, const Matrix&) { sel.insert(n); });
    }
    return sel;
}

}  // namespace realism
