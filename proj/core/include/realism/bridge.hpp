// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "realism/autograd.hpp"
#include "realism/params.hpp"
#include "realism/shape_encoder.hpp"

namespace realism {

// Byte-level vocabulary: ids 0..255 are raw bytes, specials follow.
inline constexpr int kBosToken = 256;
inline constexpr int kEosToken = 257;
inline constexpr int kScoreToken = 258;
inline constexpr std::size_t kVocabSize = 259;

inline constexpr std::string_view kDefaultSystemPrompt =
    "A chat between a user and an assistant that inspects 3D shapes.";
inline constexpr std::string_view kDefaultRealismPrompt =
    "Evaluate the quality of this point cloud object and provide your rating.";

std::vector<int> tokenize_text(std::string_view text);
/// Inverse of tokenize_text; special ids are dropped.
std::string detokenize(std::span<const int> ids);

struct PromptSet {
    std::string system_text{kDefaultSystemPrompt};
    std::string realism_text{kDefaultRealismPrompt};
    bool include_object_name = false;
    std::optional<std::string> object_name;

    void validate() const;
    /// Realism text with the word "object" replaced by the object name when
    /// include_object_name is set.
    [[nodiscard]] std::string realism_final() const;

    friend bool operator==(const PromptSet&, const PromptSet&) = default;
};

/// Replaces every whole-word occurrence of "object" in `text` with `name`.
std::string substitute_object_name(std::string_view text, std::string_view name);

enum class FinetuneKind { Full, Lora, Prefix };

struct FinetuneMode {
    FinetuneKind kind = FinetuneKind::Full;
    std::size_t size = 0;  // LoRA rank or prefix length

    static FinetuneMode full() { return {}; }
    static FinetuneMode lora(std::size_t rank) { return {FinetuneKind::Lora, rank}; }
    static FinetuneMode prefix(std::size_t length) { return {FinetuneKind::Prefix, length}; }

    /// Accepts "full", "lora:<r>", "prefix" (length 8) and "prefix:<p>".
    static FinetuneMode parse(std::string_view text);
    [[nodiscard]] std::string to_string() const;

    friend bool operator==(const FinetuneMode&, const FinetuneMode&) = default;
};

struct BridgeConfig {
    std::size_t vocab_size = kVocabSize;
    std::size_t d_model = 64;
    std::size_t n_layers = 4;
    std::size_t n_heads = 4;
    std::size_t max_seq = 256;
    std::size_t mlp_ratio = 4;
    FinetuneMode finetune;

    void validate() const;
    friend bool operator==(const BridgeConfig&, const BridgeConfig&) = default;
};

struct LayerWeights {
    Matrix ln1_g, ln1_b;
    Matrix wq, bq, wk, bk, wv, bv, wo, bo;
    Matrix ln2_g, ln2_b;
    Matrix w1, b1, w2, b2;
    // Present only in LoRA mode: delta = x·A·B, A is D×r, B is r×D.
    Matrix lora_q_a, lora_q_b, lora_v_a, lora_v_b;
    // Present only in prefix mode: p×D learned keys and values.
    Matrix prefix_k, prefix_v;
};

struct BridgeWeights {
    Matrix token_embedding;     // V×D
    Matrix position_embedding;  // max_seq×D
    std::vector<LayerWeights> layers;
    Matrix lnf_g, lnf_b;
    Matrix lm_head;  // D×V, used by the token-generation head

    /// Visits every allocated tensor with its parameter path.
    template <typename Self, typename F>
    static void visit(Self& self, F&& f) {
        f("bridge.token_embedding", self.token_embedding);
        f("bridge.position_embedding", self.position_embedding);
        for (std::size_t i = 0; i < self.layers.size(); ++i) {
            auto& l = self.layers[i];
            const std::string p = "bridge.layers." + std::to_string(i) + ".";
            f(p + "ln1.gamma", l.ln1_g);
            f(p + "ln1.beta", l.ln1_b);
            f(p + "attn.wq.weight", l.wq);
            f(p + "attn.wq.bias", l.bq);
            f(p + "attn.wk.weight", l.wk);
            f(p + "attn.wk.bias", l.bk);
            f(p + "attn.wv.weight", l.wv);
            f(p + "attn.wv.bias", l.bv);
            f(p + "attn.wo.weight", l.wo);
            f(p + "attn.wo.bias", l.bo);
            f(p + "ln2.gamma", l.ln2_g);
            f(p + "ln2.beta", l.ln2_b);
            f(p + "mlp.w1.weight", l.w1);
            f(p + "mlp.w1.bias", l.b1);
            f(p + "mlp.w2.weight", l.w2);
            f(p + "mlp.w2.bias", l.b2);
            if (l.lora_q_a.size() != 0) {
                f(p + "lora.q.A", l.lora_q_a);
                f(p + "lora.q.B", l.lora_q_b);
                f(p + "lora.v.A", l.lora_v_a);
                f(p + "lora.v.B", l.lora_v_b);
            }
            if (l.prefix_k.size() != 0) {
                f(p + "prefix.keys", l.prefix_k);
                f(p + "prefix.values", l.prefix_v);
            }
        }
        f("bridge.lnf.gamma", self.lnf_g);
        f("bridge.lnf.beta", self.lnf_b);
        f("bridge.lm_head", self.lm_head);
    }
};

class Rng;

BridgeWeights init_bridge(const BridgeConfig& cfg, Rng& rng);

enum class Segment { System, Shape, Realism };

struct EmbeddedSequence {
    Matrix embeddings;  // L×D
    std::vector<Segment> segments;

    [[nodiscard]] std::size_t length() const noexcept { return segments.size(); }
};

/// [BOS; system tokens; shape tokens; realism tokens; SCORE].
EmbeddedSequence assemble_sequence(const PromptSet& prompts, const ShapeTokens& shape, const BridgeWeights& w,
                                   const BridgeConfig& cfg);
ad::Var assemble_sequence(Binder& bind, const PromptSet& prompts, ad::Var shape_tokens, const BridgeWeights& w,
                          const BridgeConfig& cfg);
/// Sequence length assemble_sequence would produce for `groups` shape tokens.
std::size_t sequence_length(const PromptSet& prompts, std::size_t groups);

/// Pre-norm causal transformer; returns final-normalized hidden states (L×D).
Matrix transformer_forward(const EmbeddedSequence& seq, const BridgeWeights& w, const BridgeConfig& cfg);
ad::Var transformer_forward(Binder& bind, ad::Var sequence, const BridgeWeights& w, const BridgeConfig& cfg);

/// Bridge tensors updated under the configured finetune mode.
ParameterSelection trainable_parameters(const BridgeWeights& w, const BridgeConfig& cfg);

}  // namespace realism
