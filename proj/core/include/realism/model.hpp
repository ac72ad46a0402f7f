// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "realism/bridge.hpp"
#include "realism/geometry.hpp"
#include "realism/realism_head.hpp"
#include "realism/shape_encoder.hpp"

namespace realism {

enum class ScorerKind { Bridge, Baseline };
enum class LossMode { Regression, Generation };

std::string to_string(ScorerKind kind);
std::string to_string(LossMode mode);
/// Accepts "bridge" (alias "sram") and "baseline".
ScorerKind parse_scorer(std::string_view text);
LossMode parse_loss_mode(std::string_view text);

struct ModelConfig {
    EncoderConfig encoder;
    BridgeConfig bridge;
    /// Prompt template; the object name is filled in per sample.
    PromptSet prompts;
    /// Clouds are brought to exactly this many points before grouping.
    std::size_t max_points = 512;
    std::size_t decoder_hidden = 0;  // 0 means d_model
    ScorerKind scorer = ScorerKind::Bridge;
    LossMode loss_mode = LossMode::Regression;

    void validate() const;
    [[nodiscard]] std::size_t decoder_width() const noexcept {
        return decoder_hidden == 0 ? bridge.d_model : decoder_hidden;
    }
    /// The template with `object_name` substituted when names are enabled.
    [[nodiscard]] PromptSet prompts_for(std::string_view object_name) const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ModelBundle {
    ModelConfig config;
    EncoderWeights encoder;
    BridgeWeights bridge;
    DecoderWeights decoder;
    BaselineWeights baseline;

    /// Visits the tensors the configured scorer uses.
    template <typename Self, typename F>
    static void visit(Self& self, F&& f) {
        if (self.config.scorer == ScorerKind::Baseline) {
            BaselineWeights::visit(self.baseline, f);
        } else {
            EncoderWeights::visit(self.encoder, f);
            BridgeWeights::visit(self.bridge, f);
        }
        DecoderWeights::visit(self.decoder, f);
    }
};

ModelBundle init_model(const ModelConfig& cfg, std::uint64_t seed);

/// Everything about a mesh the scorer needs, computed once.
struct PreparedShape {
    PointCloud cloud;  // normalized, exactly max_points points
    Matrix points;     // cloud as N×3
    PatchSet patches;
};

/// mesh -> cloud -> canonical order -> normalize -> FPS/pad -> patches.
PreparedShape prepare_shape(const Mesh& mesh, const ModelConfig& cfg);

/// Builds the scoring graph. Returns a 1×1 score in regression mode or 1×V
/// logits in generation mode. `tokens`, when given, replaces the encoder.
ad::Var build_forward(Binder& bind, const ModelBundle& model, const PreparedShape& shape,
                      std::string_view object_name = {}, const Matrix* tokens = nullptr);

RealismScore score_prepared(const ModelBundle& model, const PreparedShape& shape, std::string_view object_name = {});
RealismScore score_mesh(const Mesh& mesh, const ModelBundle& model);

/// Tensors that receive updates for a given finetune mode and freeze flag.
ParameterSelection trainable_parameters(const ModelBundle& model, bool encoder_frozen);

}  // namespace realism
