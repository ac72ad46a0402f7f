// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "realism/model.hpp"
#include "realism/training.hpp"

namespace realism {

// Layout: 8-byte magic, u64 LE header length, JSON header, f32 LE tensor
// blobs at the manifest offsets, u64 LE FNV-1a of header and blobs.
inline constexpr std::string_view kCheckpointMagic{"RLMCKPT\0", 8};
inline constexpr int kCheckpointVersion = 1;

struct CheckpointInfo {
    std::optional<TrainConfig> train;
    std::uint64_t seed = 0;
    std::uint64_t steps = 0;
};

struct Checkpoint {
    ModelBundle model;
    CheckpointInfo info;
};

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t hash = 0xcbf29ce484222325ULL) noexcept;

std::string serialize_checkpoint(const ModelBundle& model, const CheckpointInfo& info = {});
Checkpoint deserialize_checkpoint(std::string_view bytes);

/// Writes through a temporary file and renames it into place.
void save_checkpoint(const ModelBundle& model, const std::string& path, const CheckpointInfo& info = {});
Checkpoint load_checkpoint(const std::string& path);

}  // namespace realism
