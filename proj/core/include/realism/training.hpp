// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "realism/model.hpp"

namespace realism {

enum class LossForm { Squared, Absolute };

std::string to_string(LossForm form);
LossForm parse_loss_form(std::string_view text);

struct TrainConfig {
    double learning_rate = 2e-4;
    std::size_t epochs = 3;
    std::size_t batch_size = 12;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    FinetuneMode finetune;
    LossMode loss_mode = LossMode::Regression;
    bool encoder_frozen = true;
    LossForm loss_form = LossForm::Squared;
    std::size_t max_steps = 0;  // 0: no cap
    std::size_t jobs = 1;

    void validate() const;
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct LabeledMesh {
    Mesh mesh;
    double label = 0.0;
    std::string object_id;
};

struct TrainingSample {
    PreparedShape shape;
    double label = 0.0;
    std::string object_id;
    /// Shape tokens computed once when the encoder is frozen.
    std::optional<Matrix> tokens;
};

std::vector<TrainingSample> prepare_samples(std::span<const LabeledMesh> data, const ModelConfig& cfg);

/// Per-sample loss; (pred - label)^2 or |pred - label|.
double regression_loss(double pred, double label, LossForm form = LossForm::Squared);
/// Mean per-sample loss over (pred, label) pairs.
double regression_loss(std::span<const std::pair<double, double>> batch, LossForm form = LossForm::Squared);

struct BatchGradients {
    double loss = 0.0;  // mean over the batch
    Gradients grads;
};

/// Gradients of the mean batch loss with respect to `trainable`. Per-sample
/// gradients are summed in batch order regardless of `cfg.jobs`.
BatchGradients compute_gradients(std::span<const TrainingSample* const> batch, const ModelBundle& model,
                                 const TrainConfig& cfg, const ParameterSelection& trainable);

struct OptimizerState {
    std::map<std::string, Matrix> m;
    std::map<std::string, Matrix> v;
    std::uint64_t step = 0;
};

/// Whether decoupled weight decay applies to a parameter path.
bool decays(const std::string& name);

/// AdamW with bias correction. Parameters absent from `grads` see a zero
/// gradient.
void adamw_step(const std::map<std::string, Matrix*>& params, const Gradients& grads, OptimizerState& state,
                const TrainConfig& cfg);

/// Mutable views of the named tensors in `model` that appear in `selection`.
std::map<std::string, Matrix*> parameter_views(ModelBundle& model, const ParameterSelection& selection);

struct TrainResult {
    ModelBundle model;
    std::vector<double> losses;  // one per optimizer step
    std::uint64_t steps = 0;
};

using StepCallback = std::function<void(std::uint64_t step, double loss)>;

TrainResult train(std::span<TrainingSample> data, const TrainConfig& cfg, const ModelBundle& init,
                  const StepCallback& on_step = {});
TrainResult train(std::span<const LabeledMesh> data, const TrainConfig& cfg, const ModelBundle& init,
                  const StepCallback& on_step = {});

}  // namespace realism
