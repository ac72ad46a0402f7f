// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "realism/correlation.hpp"
#include "realism/training.hpp"

namespace realism {

struct FoldPlan {
    std::size_t k = 0;
    std::vector<std::vector<std::string>> folds;  // object ids held out per fold
};

/// Shuffles the distinct object ids with `seed`, then deals them round-robin
/// into k folds.
FoldPlan split_leave_object_out(std::vector<std::string> object_ids, std::size_t k, std::uint64_t seed = 0);
/// Sorted distinct object ids of a dataset.
std::vector<std::string> object_ids(std::span<const LabeledMesh> data);

struct EvalOptions {
    ModelConfig model;
    TrainConfig train;
    std::uint64_t init_seed = 0;  // every fold starts from this initialization
    Aggregation aggregation = Aggregation::SizeWeighted;
};

struct FoldLog {
    std::size_t fold = 0;
    std::vector<std::string> train_objects;
    std::vector<std::string> test_objects;
    std::vector<std::string> scored_meshes;
    std::size_t train_samples = 0;
    std::uint64_t steps = 0;
    double final_loss = 0.0;
};

struct Prediction {
    std::size_t fold = 0;
    std::string object_id;
    std::string mesh_id;
    double label = 0.0;
    double score = 0.0;
};

struct KFoldResult {
    CorrelationReport report;
    std::vector<FoldLog> folds;
    std::vector<Prediction> predictions;
};

/// Samples prepared once and reused by every fold and variant.
struct PreparedDataset {
    std::vector<TrainingSample> samples;
    std::vector<std::string> mesh_ids;
};

PreparedDataset prepare_dataset(std::span<const LabeledMesh> data, const ModelConfig& cfg);

/// Trains on the out-of-fold objects and scores the held-out ones, fold by
/// fold; the report groups by object.
KFoldResult run_kfold(PreparedDataset& data, const FoldPlan& plan, const EvalOptions& opts);
KFoldResult run_kfold(std::span<const LabeledMesh> data, const FoldPlan& plan, const EvalOptions& opts);

struct Variant {
    std::string name;
    FinetuneMode finetune;
    LossMode loss = LossMode::Regression;
    bool object_name = false;
};

std::vector<Variant> finetune_variants();  // full, lora 2/4/8/16, prefix
std::vector<Variant> loss_variants();      // regression, generation
std::vector<Variant> prompt_variants();    // without, with object name
/// "finetune", "loss" or "prompt".
std::vector<Variant> ablation_variants(std::string_view dimension);

struct AblationRow {
    Variant variant;
    std::optional<KFoldResult> result;
    std::string error;
};

/// One run_kfold per variant on top of `base`; failures are kept per row.
std::vector<AblationRow> run_ablation(PreparedDataset& data, const FoldPlan& plan, const EvalOptions& base,
                                      std::span<const Variant> variants);

/// variant,PLCC,SROCC,KROCC with overall values; NA where undefined.
std::string ablation_csv(std::span<const AblationRow> rows);
std::string ablation_json(std::span<const AblationRow> rows);
std::string predictions_csv(std::span<const Prediction> predictions);

/// Hex SHA-1 of "blob <size>\0" + content, as git computes it.
std::string git_blob_sha1(std::string_view content);

struct RunManifest {
    std::string dataset_hash;
    std::string scorer;
    FoldPlan plan;
    EvalOptions options;
    std::vector<std::string> variants;
};

std::string manifest_json(const RunManifest& m);

}  // namespace realism
