// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

// Internal: JSON conversions for config types. Not installed.
#pragma once

#include <json.hpp>

#include "realism/model.hpp"
#include "realism/training.hpp"

namespace realism::json_io {

using json = nlohmann::json;

json to_json(const EncoderConfig& c);
json to_json(const BridgeConfig& c);
json to_json(const PromptSet& p);
json to_json(const ModelConfig& c);
json to_json(const TrainConfig& c);

EncoderConfig encoder_config(const json& j);
BridgeConfig bridge_config(const json& j);
PromptSet prompt_set(const json& j);
ModelConfig model_config(const json& j);
TrainConfig train_config(const json& j);

}  // namespace realism::json_io
