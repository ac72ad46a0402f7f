// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "realism/model.hpp"
#include "realism/training.hpp"

namespace realism {

/// Settings for a CLI run, read from a `key = value` file. Lines starting
/// with '#' are comments; unknown keys are errors.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    std::uint64_t init_seed = 0;
    std::map<std::string, std::string> paths;  // dataset, out, checkpoint, data_dir, ...
    int port = 8080;

    /// Sets one key from its textual value.
    void set(std::string_view key, std::string_view value);
    [[nodiscard]] std::string get(std::string_view key) const;
};

struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string help;
};

/// Every accepted key with its default, in documentation order.
const std::vector<ConfigKey>& run_config_keys();

RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::string& path);
/// Renders every key; parse_run_config(render_run_config(c)) == c.
std::string render_run_config(const RunConfig& c);

/// Overrides path and port keys from REALISM_* environment variables.
void apply_environment(RunConfig& c);

}  // namespace realism
