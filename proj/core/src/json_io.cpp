// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include "json_io.hpp"

#include "realism/errors.hpp"

namespace realism::json_io {

namespace {

template <typename T>
T get(const json& j, const char* key) {
    if (!j.contains(key)) throw ValidationError(std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad field '") + key + "': " + e.what());
    }
}

}  // namespace

json to_json(const EncoderConfig& c) {
    return {{"groups", c.groups}, {"group_size", c.group_size}, {"hidden", c.hidden}, {"d_model", c.d_model}};
}

json to_json(const BridgeConfig& c) {
    return {{"vocab_size", c.vocab_size}, {"d_model", c.d_model},   {"n_layers", c.n_layers},
            {"n_heads", c.n_heads},       {"max_seq", c.max_seq},   {"mlp_ratio", c.mlp_ratio},
            {"finetune", c.finetune.to_string()}};
}

json to_json(const PromptSet& p) {
    return {{"system", p.system_text}, {"realism", p.realism_text}, {"include_object_name", p.include_object_name}};
}

json to_json(const ModelConfig& c) {
    return {{"encoder", to_json(c.encoder)},       {"bridge", to_json(c.bridge)},
            {"prompts", to_json(c.prompts)},       {"max_points", c.max_points},
            {"decoder_hidden", c.decoder_hidden},  {"scorer", to_string(c.scorer)},
            {"loss_mode", to_string(c.loss_mode)}};
}

json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"weight_decay", c.weight_decay},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"epsilon", c.epsilon},
            {"seed", c.seed},
            {"finetune", c.finetune.to_string()},
            {"loss_mode", to_string(c.loss_mode)},
            {"encoder_frozen", c.encoder_frozen},
            {"loss_form", to_string(c.loss_form)},
            {"max_steps", c.max_steps},
            {"jobs", c.jobs}};
}

EncoderConfig encoder_config(const json& j) {
    EncoderConfig c;
    c.groups = get<std::size_t>(j, "groups");
    c.group_size = get<std::size_t>(j, "group_size");
    c.hidden = get<std::size_t>(j, "hidden");
    c.d_model = get<std::size_t>(j, "d_model");
    return c;
}

BridgeConfig bridge_config(const json& j) {
    BridgeConfig c;
    c.vocab_size = get<std::size_t>(j, "vocab_size");
    c.d_model = get<std::size_t>(j, "d_model");
    c.n_layers = get<std::size_t>(j, "n_layers");
    c.n_heads = get<std::size_t>(j, "n_heads");
    c.max_seq = get<std::size_t>(j, "max_seq");
    c.mlp_ratio = get<std::size_t>(j, "mlp_ratio");
    c.finetune = FinetuneMode::parse(get<std::string>(j, "finetune"));
    return c;
}

PromptSet prompt_set(const json& j) {
    PromptSet p;
    p.system_text = get<std::string>(j, "system");
    p.realism_text = get<std::string>(j, "realism");
    p.include_object_name = get<bool>(j, "include_object_name");
    return p;
}

ModelConfig model_config(const json& j) {
    ModelConfig c;
    c.encoder = encoder_config(get<json>(j, "encoder"));
    c.bridge = bridge_config(get<json>(j, "bridge"));
    c.prompts = prompt_set(get<json>(j, "prompts"));
    c.max_points = get<std::size_t>(j, "max_points");
    c.decoder_hidden = get<std::size_t>(j, "decoder_hidden");
    c.scorer = parse_scorer(get<std::string>(j, "scorer"));
    c.loss_mode = parse_loss_mode(get<std::string>(j, "loss_mode"));
    return c;
}

TrainConfig train_config(const json& j) {
    TrainConfig c;
    c.learning_rate = get<double>(j, "learning_rate");
    c.epochs = get<std::size_t>(j, "epochs");
    c.batch_size = get<std::size_t>(j, "batch_size");
    c.weight_decay = get<double>(j, "weight_decay");
    c.beta1 = get<double>(j, "beta1");
    c.beta2 = get<double>(j, "beta2");
    c.epsilon = get<double>(j, "epsilon");
    c.seed = get<std::uint64_t>(j, "seed");
    c.finetune = FinetuneMode::parse(get<std::string>(j, "finetune"));
    c.loss_mode = parse_loss_mode(get<std::string>(j, "loss_mode"));
    c.encoder_frozen = get<bool>(j, "encoder_frozen");
    c.loss_form = parse_loss_form(get<std::string>(j, "loss_form"));
    c.max_steps = get<std::size_t>(j, "max_steps");
    c.jobs = get<std::size_t>(j, "jobs");
    return c;
}

}  // namespace realism::json_io
