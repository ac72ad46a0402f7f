// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "oracles.hpp"
#include "realism/random.hpp"

using namespace realism;

namespace {

std::vector<TrainingSample> tiny_samples(const ModelConfig& cfg) {
    std::vector<LabeledMesh> data;
    data.push_back({oracle::sphere_mesh(6, 10, 1.0, "ball"), 0.8, "ball"});
    data.push_back({oracle::noisy(oracle::sphere_mesh(6, 10, 1.0, "ball"), 0.1, 3), 0.3, "ball"});
    return prepare_samples(data, cfg);
}

// LoRA B starts at zero and would hide the A gradients; move everything off
// its initial value.
void perturb_adapters(ModelBundle& m, std::uint64_t seed) {
    Rng rng(seed);
    for (auto& l : m.bridge.layers) {
        for (Matrix* t : {&l.lora_q_b, &l.lora_v_b, &l.prefix_k, &l.prefix_v}) {
            for (Eigen::Index i = 0; i < t->size(); ++i) t->data()[i] = 0.3 * rng.normal();
        }
    }
}

}  // namespace

TEST_CASE("analytic gradients match central differences in every mode") {
    for (auto mode : {FinetuneMode::full(), FinetuneMode::lora(4), FinetuneMode::prefix(3)}) {
        for (auto loss : {LossMode::Regression, LossMode::Generation}) {
            CAPTURE(mode.to_string());
            CAPTURE(to_string(loss));
            const auto cfg = oracle::tiny_config(mode, loss);
            auto model = init_model(cfg, 11);
            perturb_adapters(model, 5);
            TrainConfig tc;
            tc.finetune = mode;
            tc.loss_mode = loss;
            auto sel = trainable_parameters(model, false);
            EncoderWeights::visit(model.encoder, [&](const std::string& n, const Matrix&) { sel.insert(n); });
            const auto r = oracle::check_gradients(model, tiny_samples(cfg), tc, sel, 3);
            CAPTURE(r.worst);
            CHECK(r.checked > 20);
            CHECK(r.max_rel_error < 1e-4);
        }
    }
}
