// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <set>
#include <string>

#include "realism/autograd.hpp"

namespace realism {

class Rng;

/// Gradient tensors keyed by parameter path, e.g. "bridge.layers.0.attn.wq".
using Gradients = std::map<std::string, Matrix>;

/// Parameter paths that receive gradients and optimizer updates.
using ParameterSelection = std::set<std::string>;

/// Turns named weight tensors into graph leaves: trainable ones get a gradient
/// sink in `grads`, everything else becomes a constant.
class Binder {
public:
    Binder(ad::Graph& graph, Gradients* grads = nullptr, const ParameterSelection* trainable = nullptr)
        : graph_(graph), grads_(grads), trainable_(trainable) {}

    ad::Var operator()(const std::string& name, const Matrix& value) {
        if (grads_ && trainable_ && trainable_->contains(name)) {
            return graph_.parameter(value, &(*grads_)[name]);
        }
        return graph_.constant_ref(value);
    }

    [[nodiscard]] ad::Graph& graph() noexcept { return graph_; }

private:
    ad::Graph& graph_;
    Gradients* grads_;
    const ParameterSelection* trainable_;
};

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], rounded to float precision so
/// freshly initialized weights survive a checkpoint round trip unchanged.
Matrix init_uniform(Rng& rng, long rows, long cols, long fan_in);

/// Rounds every entry to the nearest float.
void round_to_float(Matrix& m);

bool all_finite(const Matrix& m);

}  // namespace realism
