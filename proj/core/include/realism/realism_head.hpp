// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "realism/autograd.hpp"
#include "realism/bridge.hpp"
#include "realism/params.hpp"

namespace realism {

/// d_model -> hidden -> 1 MLP with a GELU between layers and a sigmoid squash.
struct DecoderWeights {
    Matrix w1, b1;  // D×H, 1×H
    Matrix w2, b2;  // H×1, 1×1

    template <typename Self, typename F>
    static void visit(Self& self, F&& f) {
        f("decoder.w1.weight", self.w1);
        f("decoder.w1.bias", self.b1);
        f("decoder.w2.weight", self.w2);
        f("decoder.w2.bias", self.b2);
    }
};

struct RealismScore {
    double value = 0.0;
    friend bool operator==(const RealismScore&, const RealismScore&) = default;
};

class Rng;

DecoderWeights init_decoder(std::size_t d_model, std::size_t hidden, Rng& rng);

/// Scores the last row of `hidden` (L×D). Result lies in (0, 1).
RealismScore decode_realism(const Matrix& hidden, const DecoderWeights& w);
/// 1×1 graph node holding the squashed score of the last row of `hidden`.
ad::Var decode_realism(Binder& bind, ad::Var hidden, const DecoderWeights& w);

// Generation head: the score is written as one digit token '0'..'6'.
inline constexpr int kScoreLevels = 7;
inline constexpr int kFirstDigitToken = '0';

/// round(label * 6) as a digit in [0, 6].
int quantize_label(double label);
double dequantize_digit(int digit);

/// 1×V next-token logits at the last position.
ad::Var generation_logits(Binder& bind, ad::Var hidden, const BridgeWeights& w);
/// argmax over the digit tokens only, ties to the lower digit; returns digit/6.
RealismScore decode_generation(const Matrix& hidden, const BridgeWeights& w);
RealismScore score_from_logits(const Matrix& logits);

}  // namespace realism
