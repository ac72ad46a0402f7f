// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "realism/annotation.hpp"
#include "realism/training.hpp"

namespace realism {

inline constexpr int kDatasetVersion = 1;

struct DatasetRecord {
    std::string subject_id;
    std::string session_id;
    int wins = 0;
    int played = 0;
    double score = 0.0;
    friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

struct DatasetMesh {
    std::string id;
    std::string file;  // relative to the dataset file, may be empty
    double label = 0.0;
    std::size_t n = 0;  // subjects; 0 for synthetic labels
    std::optional<double> sigma;
    std::optional<double> ci95;
    std::vector<DatasetRecord> records;
    friend bool operator==(const DatasetMesh&, const DatasetMesh&) = default;
};

struct DatasetObject {
    std::string id;
    std::vector<DatasetMesh> meshes;
    friend bool operator==(const DatasetObject&, const DatasetObject&) = default;
};

struct Dataset {
    int version = kDatasetVersion;
    std::vector<DatasetObject> objects;  // sorted by id
    std::vector<std::string> warnings;

    [[nodiscard]] std::size_t mesh_count() const noexcept;
    [[nodiscard]] std::size_t record_count() const noexcept;
    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Groups completed sessions by object, aggregates each mesh over subjects
/// and attaches files from `mesh_files` (mesh id -> path). Incomplete
/// sessions and meshes without a file become warnings.
Dataset export_dataset(std::span<const AnnotationSession> sessions,
                       const std::map<std::string, std::string>& mesh_files = {});

std::string dataset_to_json(const Dataset& d);
Dataset dataset_from_json(std::string_view text);
void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Loads every mesh that has a file; paths resolve against `base_dir`.
std::vector<LabeledMesh> load_samples(const Dataset& d, const std::filesystem::path& base_dir);
std::vector<LabeledMesh> load_samples(const std::filesystem::path& dataset_path);

// Synthetic distortion ladder ------------------------------------------------

inline constexpr double kLadderNoiseStep = 0.03;
inline constexpr int kLadderResolution = 32;

/// Primitive surfaces used by the ladder, in order.
std::vector<std::string> ladder_primitives();
Mesh primitive_mesh(std::string_view kind, int resolution = 24);

/// `objects` primitives, each at `levels` noise levels. Level l adds
/// Gaussian vertex noise with sigma = noise_step * l (unit-radius shapes) and
/// gets label 1 - l / (levels - 1).
std::vector<LabeledMesh> make_distortion_ladder(std::size_t objects = 6, std::size_t levels = 8,
                                                std::uint64_t seed = 0, double noise_step = kLadderNoiseStep,
                                                int resolution = kLadderResolution);

/// Writes one OBJ per mesh and a dataset.json next to them; returns the
/// dataset path.
std::filesystem::path write_ladder(const std::filesystem::path& dir, std::span<const LabeledMesh> ladder);

}  // namespace realism
