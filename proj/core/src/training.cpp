// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include "realism/training.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>

#include "realism/errors.hpp"
#include "realism/random.hpp"

namespace realism {

std::string to_string(LossForm form) { return form == LossForm::Squared ? "squared" : "absolute"; }

LossForm parse_loss_form(std::string_view text) {
    if (text == "squared" || text == "mse") return LossForm::Squared;
    if (text == "absolute" || text == "l1") return LossForm::Absolute;
    throw ValidationError("unknown loss form '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ValidationError("learning_rate must be > 0");
    if (batch_size < 1) throw ValidationError("batch_size must be at least 1");
    if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ValidationError("epsilon must be > 0");
    if (jobs < 1) throw ValidationError("jobs must be at least 1");
}

std::vector<TrainingSample> prepare_samples(std::span<const LabeledMesh> data, const ModelConfig& cfg) {
    std::vector<TrainingSample> out;
    out.reserve(data.size());
    for (const auto& d : data) {
        if (!(d.label >= 0.0 && d.label <= 1.0)) {
            throw ValidationError("label " + std::to_string(d.label) + " of '" + d.mesh.name + "' outside [0, 1]");
        }
        out.push_back(TrainingSample{prepare_shape(d.mesh, cfg), d.label, d.object_id, std::nullopt});
    }
    return out;
}

double regression_loss(double pred, double label, LossForm form) {
    if (!(label >= 0.0 && label <= 1.0)) throw ValidationError("label must lie in [0, 1]");
    const double r = pred - label;
    return form == LossForm::Squared ? r * r : std::abs(r);
}

double regression_loss(std::span<const std::pair<double, double>> batch, LossForm form) {
    if (batch.empty()) throw ValidationError("regression_loss: empty batch");
    double sum = 0.0;
    for (const auto& [p, y] : batch) sum += regression_loss(p, y, form);
    return sum / static_cast<double>(batch.size());
}

namespace {

struct SampleGradients {
    double loss = 0.0;
    Gradients grads;
};

SampleGradients sample_gradients(const TrainingSample& s, const ModelBundle& model, const TrainConfig& cfg,
                                 const ParameterSelection& trainable, double weight) {
    SampleGradients out;
    ad::Graph g;
    Binder bind(g, &out.grads, &trainable);
    const Matrix* tokens = s.tokens ? &*s.tokens : nullptr;
    const auto pred = build_forward(bind, model, s.shape, s.object_id, tokens);
    ad::Var loss;
    if (cfg.loss_mode == LossMode::Generation) {
        loss = g.cross_entropy(pred, kFirstDigitToken + quantize_label(s.label));
    } else if (cfg.loss_form == LossForm::Squared) {
        loss = g.squared_error(pred, s.label);
    } else {
        loss = g.absolute_error(pred, s.label);
    }
    out.loss = g.value(loss)(0, 0);
    g.backward(g.scale(loss, weight));
    return out;
}

}  // namespace

BatchGradients compute_gradients(std::span<const TrainingSample* const> batch, const ModelBundle& model,
                                 const TrainConfig& cfg, const ParameterSelection& trainable) {
    if (batch.empty()) throw ValidationError("compute_gradients: empty batch");
    for (const auto* s : batch) {
        if (!(s->label >= 0.0 && s->label <= 1.0)) throw ValidationError("compute_gradients: label outside [0, 1]");
    }
    const double weight = 1.0 / static_cast<double>(batch.size());
    std::vector<SampleGradients> per(batch.size());
    if (cfg.jobs <= 1 || batch.size() == 1) {
        for (std::size_t i = 0; i < batch.size(); ++i) per[i] = sample_gradients(*batch[i], model, cfg, trainable, weight);
    } else {
        const std::size_t workers = std::min(cfg.jobs, batch.size());
        std::vector<std::future<void>> tasks;
        for (std::size_t w = 0; w < workers; ++w) {
            tasks.push_back(std::async(std::launch::async, [&, w] {
                for (std::size_t i = w; i < batch.size(); i += workers) {
                    per[i] = sample_gradients(*batch[i], model, cfg, trainable, weight);
                }
            }));
        }
        for (auto& t : tasks) t.get();
    }

    BatchGradients out;
    for (auto& p : per) {
        out.loss += p.loss;
        for (auto& [name, grad] : p.grads) {
            auto it = out.grads.find(name);
            if (it == out.grads.end()) {
                out.grads.emplace(name, std::move(grad));
            } else {
                it->second += grad;
            }
        }
    }
    out.loss *= weight;
    for (const auto& [name, grad] : out.grads) {
        if (!grad.allFinite()) throw NumericError("non-finite gradient in " + name);
    }
    return out;
}

bool decays(const std::string& name) {
    for (std::string_view suffix : {".bias", ".gamma", ".beta"}) {
        if (name.ends_with(suffix)) return false;
    }
    return true;
}

void adamw_step(const std::map<std::string, Matrix*>& params, const Gradients& grads, OptimizerState& state,
                const TrainConfig& cfg) {
    for (const auto& [name, g] : grads) {
        auto it = params.find(name);
        if (it == params.end()) continue;
        if (g.rows() != it->second->rows() || g.cols() != it->second->cols()) {
            throw ValidationError("adamw_step: gradient shape mismatch for " + name);
        }
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (const auto& [name, w] : params) {
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.size() == 0) {
            m = Matrix::Zero(w->rows(), w->cols());
            v = Matrix::Zero(w->rows(), w->cols());
        } else if (m.rows() != w->rows() || m.cols() != w->cols()) {
            throw ValidationError("adamw_step: optimizer state shape mismatch for " + name);
        }
        const auto git = grads.find(name);
        if (git != grads.end()) {
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * git->second;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * git->second.cwiseProduct(git->second);
        } else {
            m *= cfg.beta1;
            v *= cfg.beta2;
        }
        const Matrix update =
            ((m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon)).matrix();
        if (decays(name) && cfg.weight_decay != 0.0) *w -= cfg.learning_rate * cfg.weight_decay * *w;
        *w -= cfg.learning_rate * update;
    }
}

std::map<std::string, Matrix*> parameter_views(ModelBundle& model, const ParameterSelection& selection) {
    std::map<std::string, Matrix*> out;
    ModelBundle::visit(model, [&](const std::string& name, Matrix& m) {
        if (selection.contains(name)) out.emplace(name, &m);
    });
    return out;
}

TrainResult train(std::span<TrainingSample> data, const TrainConfig& cfg, const ModelBundle& init,
                  const StepCallback& on_step) {
    cfg.validate();
    if (data.empty()) throw ValidationError("train: empty dataset");
    const auto& mc = init.config;
    if (cfg.loss_mode != mc.loss_mode) {
        throw ValidationError("train: loss mode " + to_string(cfg.loss_mode) + " does not match the model (" +
                              to_string(mc.loss_mode) + ")");
    }
    if (mc.scorer == ScorerKind::Bridge && !(cfg.finetune == mc.bridge.finetune)) {
        throw ValidationError("train: finetune mode " + cfg.finetune.to_string() + " does not match the model (" +
                              mc.bridge.finetune.to_string() + ")");
    }
    for (const auto& s : data) {
        if (!(s.label >= 0.0 && s.label <= 1.0)) throw ValidationError("train: label outside [0, 1]");
    }

    TrainResult result{init, {}, 0};
    if (cfg.epochs == 0) return result;
    auto& model = result.model;
    const auto trainable = trainable_parameters(model, cfg.encoder_frozen);
    const auto views = parameter_views(model, trainable);

    if (mc.scorer == ScorerKind::Bridge && cfg.encoder_frozen) {
        for (auto& s : data) s.tokens = embed_patches(s.shape.patches, model.encoder).embeddings;
    } else {
        for (auto& s : data) s.tokens.reset();
    }

    OptimizerState opt;
    Rng rng(derive_seed(cfg.seed, 100));
    std::vector<std::size_t> order(data.size());
    std::vector<const TrainingSample*> batch;
    bool done = false;
    for (std::size_t epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            if (cfg.max_steps != 0 && result.steps >= cfg.max_steps) {
                done = true;
                break;
            }
            batch.clear();
            for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
                batch.push_back(&data[order[i]]);
            }
            BatchGradients bg;
            try {
                bg = compute_gradients(batch, model, cfg, trainable);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " at step " + std::to_string(result.steps));
            }
            if (!std::isfinite(bg.loss)) {
                throw NumericError("non-finite loss at step " + std::to_string(result.steps));
            }
            adamw_step(views, bg.grads, opt, cfg);
            result.losses.push_back(bg.loss);
            if (on_step) on_step(result.steps, bg.loss);
            result.steps += 1;
        }
    }
    for (auto& [name, w] : views) {
        if (!w->allFinite()) throw NumericError("non-finite weight in " + name + " after training");
        round_to_float(*w);
    }
    return result;
}

TrainResult train(std::span<const LabeledMesh> data, const TrainConfig& cfg, const ModelBundle& init,
                  const StepCallback& on_step) {
    auto samples = prepare_samples(data, init.config);
    return train(std::span<TrainingSample>(samples), cfg, init, on_step);
}

}  // namespace realism
