// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include "realism/bridge.hpp"

#include <cctype>
#include <cmath>
#include <charconv>

#include "realism/errors.hpp"
#include "realism/random.hpp"

namespace realism {

std::vector<int> tokenize_text(std::string_view text) {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(static_cast<int>(c));
    return ids;
}

std::string detokenize(std::span<const int> ids) {
    std::string out;
    out.reserve(ids.size());
    for (int id : ids) {
        if (id >= 0 && id < 256) out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
    }
    return out;
}

std::string substitute_object_name(std::string_view text, std::string_view name) {
    constexpr std::string_view kWord = "object";
    auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text.substr(i, kWord.size()) == kWord && (i == 0 || !is_word(text[i - 1])) &&
            (i + kWord.size() == text.size() || !is_word(text[i + kWord.size()]))) {
            out += name;
            i += kWord.size();
        } else {
            out.push_back(text[i++]);
        }
    }
    return out;
}

void PromptSet::validate() const {
    if (realism_text.empty()) throw ValidationError("prompt set: realism text must not be empty");
    if (include_object_name != object_name.has_value()) {
        throw ValidationError("prompt set: object_name must be present exactly when include_object_name is set");
    }
}

std::string PromptSet::realism_final() const {
    validate();
    if (!include_object_name) return realism_text;
    return substitute_object_name(realism_text, *object_name);
}

FinetuneMode FinetuneMode::parse(std::string_view text) {
    auto number = [&](std::string_view digits) {
        std::size_t v = 0;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
        if (ec != std::errc{} || ptr != digits.data() + digits.size() || v == 0) {
            throw ValidationError("finetune mode: bad size in '" + std::string(text) + "'");
        }
        return v;
    };
    if (text == "full") return full();
    if (text == "prefix") return prefix(8);
    if (text.starts_with("lora:")) return lora(number(text.substr(5)));
    if (text.starts_with("prefix:")) return prefix(number(text.substr(7)));
    throw ValidationError("finetune mode: expected full, lora:<r> or prefix[:<p>], got '" + std::string(text) + "'");
}

std::string FinetuneMode::to_string() const {
    switch (kind) {
        case FinetuneKind::Full: return "full";
        case FinetuneKind::Lora: return "lora:" + std::to_string(size);
        case FinetuneKind::Prefix: return "prefix:" + std::to_string(size);
    }
    return "full";
}

void BridgeConfig::validate() const {
    if (d_model == 0 || n_heads == 0 || n_layers == 0 || max_seq == 0 || mlp_ratio == 0) {
        throw ValidationError("bridge config: sizes must be positive");
    }
    if (d_model % n_heads != 0) throw ValidationError("bridge config: d_model must be divisible by n_heads");
    if (vocab_size < kVocabSize) throw ValidationError("bridge config: vocabulary too small for byte tokens");
    if (finetune.kind == FinetuneKind::Lora && (finetune.size < 1 || finetune.size > d_model)) {
        throw ValidationError("bridge config: LoRA rank must lie in [1, d_model]");
    }
    if (finetune.kind == FinetuneKind::Prefix && finetune.size < 1) {
        throw ValidationError("bridge config: prefix length must be at least 1");
    }
}

BridgeWeights init_bridge(const BridgeConfig& cfg, Rng& rng) {
    cfg.validate();
    const long d = static_cast<long>(cfg.d_model);
    const long v = static_cast<long>(cfg.vocab_size);
    const long ff = d * static_cast<long>(cfg.mlp_ratio);
    BridgeWeights w;
    w.token_embedding = init_uniform(rng, v, d, d);
    w.position_embedding = init_uniform(rng, static_cast<long>(cfg.max_seq), d, d);
    w.layers.resize(cfg.n_layers);
    for (auto& l : w.layers) {
        l.ln1_g = Matrix::Ones(1, d);
        l.ln1_b = Matrix::Zero(1, d);
        l.wq = init_uniform(rng, d, d, d);
        l.bq = Matrix::Zero(1, d);
        l.wk = init_uniform(rng, d, d, d);
        l.bk = Matrix::Zero(1, d);
        l.wv = init_uniform(rng, d, d, d);
        l.bv = Matrix::Zero(1, d);
        l.wo = init_uniform(rng, d, d, d);
        l.bo = Matrix::Zero(1, d);
        l.ln2_g = Matrix::Ones(1, d);
        l.ln2_b = Matrix::Zero(1, d);
        l.w1 = init_uniform(rng, d, ff, d);
        l.b1 = Matrix::Zero(1, ff);
        l.w2 = init_uniform(rng, ff, d, ff);
        l.b2 = Matrix::Zero(1, d);
    }
    w.lnf_g = Matrix::Ones(1, d);
    w.lnf_b = Matrix::Zero(1, d);
    w.lm_head = init_uniform(rng, d, v, d);
    // Adapters draw after every base tensor, so base weights do not depend on
    // the finetune mode.
    for (auto& l : w.layers) {
        if (cfg.finetune.kind == FinetuneKind::Lora) {
            const long r = static_cast<long>(cfg.finetune.size);
            l.lora_q_a = init_uniform(rng, d, r, d);
            l.lora_q_b = Matrix::Zero(r, d);
            l.lora_v_a = init_uniform(rng, d, r, d);
            l.lora_v_b = Matrix::Zero(r, d);
        } else if (cfg.finetune.kind == FinetuneKind::Prefix) {
            const long p = static_cast<long>(cfg.finetune.size);
            l.prefix_k = init_uniform(rng, p, d, d);
            l.prefix_v = init_uniform(rng, p, d, d);
        }
    }
    return w;
}

std::size_t sequence_length(const PromptSet& prompts, std::size_t groups) {
    return 1 + prompts.system_text.size() + groups + prompts.realism_final().size() + 1;
}

ad::Var assemble_sequence(Binder& bind, const PromptSet& prompts, ad::Var shape_tokens, const BridgeWeights& w,
                          const BridgeConfig& cfg) {
    auto& g = bind.graph();
    const auto& shape = g.value(shape_tokens);
    if (static_cast<std::size_t>(shape.cols()) != cfg.d_model) {
        throw ValidationError("assemble_sequence: shape tokens have width " + std::to_string(shape.cols()) +
                              ", bridge expects " + std::to_string(cfg.d_model));
    }
    const auto length = sequence_length(prompts, static_cast<std::size_t>(shape.rows()));
    if (length > cfg.max_seq) {
        throw SequenceTooLongError("sequence of " + std::to_string(length) + " tokens exceeds max_seq " +
                                   std::to_string(cfg.max_seq));
    }
    std::vector<int> head{kBosToken};
    const auto sys = tokenize_text(prompts.system_text);
    head.insert(head.end(), sys.begin(), sys.end());
    auto tail = tokenize_text(prompts.realism_final());
    tail.push_back(kScoreToken);

    const auto table = bind("bridge.token_embedding", w.token_embedding);
    const ad::Var parts[] = {g.gather_rows(table, head), shape_tokens, g.gather_rows(table, tail)};
    return g.concat_rows(parts);
}

EmbeddedSequence assemble_sequence(const PromptSet& prompts, const ShapeTokens& shape, const BridgeWeights& w,
                                   const BridgeConfig& cfg) {
    ad::Graph g;
    Binder bind(g);
    const auto seq = assemble_sequence(bind, prompts, g.constant_ref(shape.embeddings), w, cfg);
    EmbeddedSequence out;
    out.embeddings = g.value(seq);
    out.segments.assign(1 + prompts.system_text.size(), Segment::System);
    out.segments.insert(out.segments.end(), shape.groups(), Segment::Shape);
    out.segments.insert(out.segments.end(), prompts.realism_final().size() + 1, Segment::Realism);
    return out;
}

namespace {

ad::Var dense(Binder& bind, ad::Var x, const std::string& prefix, const Matrix& w, const Matrix& b) {
    auto& g = bind.graph();
    return g.add_row(g.matmul(x, bind(prefix + ".weight", w)), bind(prefix + ".bias", b));
}

ad::Var with_lora(Binder& bind, ad::Var base, ad::Var x, const std::string& prefix, const Matrix& a, const Matrix& b,
                  double scale) {
    auto& g = bind.graph();
    auto delta = g.matmul(g.matmul(x, bind(prefix + ".A", a)), bind(prefix + ".B", b));
    if (scale != 1.0) delta = g.scale(delta, scale);
    return g.add(base, delta);
}

}  // namespace

ad::Var transformer_forward(Binder& bind, ad::Var sequence, const BridgeWeights& w, const BridgeConfig& cfg) {
    cfg.validate();
    auto& g = bind.graph();
    const auto length = static_cast<int>(g.value(sequence).rows());
    if (static_cast<std::size_t>(length) > cfg.max_seq) {
        throw SequenceTooLongError("sequence of " + std::to_string(length) + " tokens exceeds max_seq " +
                                   std::to_string(cfg.max_seq));
    }
    if (w.layers.size() != cfg.n_layers) throw ValidationError("bridge weights do not match n_layers");

    const int d = static_cast<int>(cfg.d_model);
    const int heads = static_cast<int>(cfg.n_heads);
    const int dh = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    const bool lora = cfg.finetune.kind == FinetuneKind::Lora;
    const bool prefix = cfg.finetune.kind == FinetuneKind::Prefix;
    // alpha = r, so the LoRA delta enters unscaled.
    const double lora_scale = 1.0;

    auto x = g.add(sequence, g.slice_rows(bind("bridge.position_embedding", w.position_embedding), 0, length));
    for (std::size_t li = 0; li < w.layers.size(); ++li) {
        const auto& l = w.layers[li];
        const std::string p = "bridge.layers." + std::to_string(li) + ".";

        const auto h = g.layer_norm(x, bind(p + "ln1.gamma", l.ln1_g), bind(p + "ln1.beta", l.ln1_b));
        auto q = dense(bind, h, p + "attn.wq", l.wq, l.bq);
        auto k = dense(bind, h, p + "attn.wk", l.wk, l.bk);
        auto v = dense(bind, h, p + "attn.wv", l.wv, l.bv);
        if (lora) {
            if (l.lora_q_a.size() == 0) throw ValidationError("LoRA mode without adapter weights");
            q = with_lora(bind, q, h, p + "lora.q", l.lora_q_a, l.lora_q_b, lora_scale);
            v = with_lora(bind, v, h, p + "lora.v", l.lora_v_a, l.lora_v_b, lora_scale);
        }
        int prefix_len = 0;
        if (prefix) {
            if (l.prefix_k.size() == 0) throw ValidationError("prefix mode without prefix banks");
            prefix_len = static_cast<int>(l.prefix_k.rows());
            const ad::Var ks[] = {bind(p + "prefix.keys", l.prefix_k), k};
            const ad::Var vs[] = {bind(p + "prefix.values", l.prefix_v), v};
            k = g.concat_rows(ks);
            v = g.concat_rows(vs);
        }

        std::vector<ad::Var> head_out;
        head_out.reserve(static_cast<std::size_t>(heads));
        for (int hi = 0; hi < heads; ++hi) {
            const auto qh = g.slice_cols(q, hi * dh, dh);
            const auto kh = g.slice_cols(k, hi * dh, dh);
            const auto vh = g.slice_cols(v, hi * dh, dh);
            const auto att = g.causal_softmax(g.scale(g.matmul_nt(qh, kh), inv_sqrt), prefix_len);
            head_out.push_back(g.matmul(att, vh));
        }
        const auto attn = dense(bind, g.concat_cols(head_out), p + "attn.wo", l.wo, l.bo);
        x = g.add(x, attn);

        const auto h2 = g.layer_norm(x, bind(p + "ln2.gamma", l.ln2_g), bind(p + "ln2.beta", l.ln2_b));
        const auto mlp = dense(bind, g.gelu(dense(bind, h2, p + "mlp.w1", l.w1, l.b1)), p + "mlp.w2", l.w2, l.b2);
        x = g.add(x, mlp);

        if (!g.value(x).allFinite()) {
            throw NumericError("non-finite activations after bridge layer " + std::to_string(li));
        }
    }
    return g.layer_norm(x, bind("bridge.lnf.gamma", w.lnf_g), bind("bridge.lnf.beta", w.lnf_b));
}

Matrix transformer_forward(const EmbeddedSequence& seq, const BridgeWeights& w, const BridgeConfig& cfg) {
    ad::Graph g;
    Binder bind(g);
    return g.value(transformer_forward(bind, g.constant_ref(seq.embeddings), w, cfg));
}

ParameterSelection trainable_parameters(const BridgeWeights& w, const BridgeConfig& cfg) {
    ParameterSelection out;
    BridgeWeights::visit(w, [&](const std::string& name, const Matrix&) {
        switch (cfg.finetune.kind) {
            case FinetuneKind::Full: out.insert(name); break;
            case FinetuneKind::Lora:
                if (name.find(".lora.") != std::string::npos) out.insert(name);
                break;
            case FinetuneKind::Prefix:
                if (name.find(".prefix.") != std::string::npos) out.insert(name);
                break;
        }
    });
    return out;
}

}  // namespace realism
