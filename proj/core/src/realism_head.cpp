// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include "realism/realism_head.hpp"

#include <cmath>

#include "realism/errors.hpp"
#include "realism/random.hpp"

namespace realism {

DecoderWeights init_decoder(std::size_t d_model, std::size_t hidden, Rng& rng) {
    const long d = static_cast<long>(d_model);
    const long h = static_cast<long>(hidden);
    DecoderWeights w;
    w.w1 = init_uniform(rng, d, h, d);
    w.b1 = Matrix::Zero(1, h);
    w.w2 = init_uniform(rng, h, 1, h);
    w.b2 = Matrix::Zero(1, 1);
    return w;
}

ad::Var decode_realism(Binder& bind, ad::Var hidden, const DecoderWeights& w) {
    auto& g = bind.graph();
    const auto& h = g.value(hidden);
    if (h.rows() == 0) throw ValidationError("decode_realism: empty hidden states");
    if (!h.row(h.rows() - 1).allFinite()) throw NumericError("decode_realism: non-finite hidden state");
    const auto last = g.slice_rows(hidden, static_cast<int>(h.rows()) - 1, 1);
    auto x = g.add_row(g.matmul(last, bind("decoder.w1.weight", w.w1)), bind("decoder.w1.bias", w.b1));
    x = g.gelu(x);
    x = g.add_row(g.matmul(x, bind("decoder.w2.weight", w.w2)), bind("decoder.w2.bias", w.b2));
    return g.sigmoid(x);
}

RealismScore decode_realism(const Matrix& hidden, const DecoderWeights& w) {
    ad::Graph g;
    Binder bind(g);
    return {g.value(decode_realism(bind, g.constant_ref(hidden), w))(0, 0)};
}

int quantize_label(double label) {
    if (!(label >= 0.0 && label <= 1.0)) throw ValidationError("label must lie in [0, 1]");
    return static_cast<int>(std::lround(label * (kScoreLevels - 1)));
}

double dequantize_digit(int digit) {
    if (digit < 0 || digit >= kScoreLevels) throw ValidationError("digit out of range");
    return static_cast<double>(digit) / (kScoreLevels - 1);
}

ad::Var generation_logits(Binder& bind, ad::Var hidden, const BridgeWeights& w) {
    auto& g = bind.graph();
    const auto& h = g.value(hidden);
    if (h.rows() == 0) throw ValidationError("decode_generation: empty hidden states");
    const auto last = g.slice_rows(hidden, static_cast<int>(h.rows()) - 1, 1);
    return g.matmul(last, bind("bridge.lm_head", w.lm_head));
}

RealismScore score_from_logits(const Matrix& logits) {
    int best = 0;
    for (int d = 1; d < kScoreLevels; ++d) {
        if (logits(0, kFirstDigitToken + d) > logits(0, kFirstDigitToken + best)) best = d;
    }
    return {dequantize_digit(best)};
}

RealismScore decode_generation(const Matrix& hidden, const BridgeWeights& w) {
    ad::Graph g;
    Binder bind(g);
    return score_from_logits(g.value(generation_logits(bind, g.constant_ref(hidden), w)));
}

}  // namespace realism
