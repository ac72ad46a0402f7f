// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include "realism/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "json_io.hpp"
#include "realism/errors.hpp"
#include "realism/random.hpp"

namespace realism {

using json_io::json;

std::vector<std::string> object_ids(std::span<const LabeledMesh> data) {
    std::set<std::string> ids;
    for (const auto& d : data) ids.insert(d.object_id);
    return {ids.begin(), ids.end()};
}

FoldPlan split_leave_object_out(std::vector<std::string> ids, std::size_t k, std::uint64_t seed) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (k < 2) throw ValidationError("k-fold needs k >= 2");
    if (k > ids.size()) {
        throw ValidationError("k = " + std::to_string(k) + " exceeds the " + std::to_string(ids.size()) + " objects");
    }
    Rng rng(derive_seed(seed, 200));
    rng.shuffle(ids);
    FoldPlan plan;
    plan.k = k;
    plan.folds.resize(k);
    for (std::size_t i = 0; i < ids.size(); ++i) plan.folds[i % k].push_back(ids[i]);
    for (auto& f : plan.folds) std::sort(f.begin(), f.end());
    return plan;
}

PreparedDataset prepare_dataset(std::span<const LabeledMesh> data, const ModelConfig& cfg) {
    PreparedDataset p;
    p.samples = prepare_samples(data, cfg);
    for (const auto& d : data) p.mesh_ids.push_back(d.mesh.name);
    return p;
}

KFoldResult run_kfold(PreparedDataset& data, const FoldPlan& plan, const EvalOptions& opts) {
    std::set<std::string> all;
    for (const auto& s : data.samples) all.insert(s.object_id);
    if (all.size() < 2) throw ValidationError("k-fold needs at least 2 objects; training folds would be empty");
    std::set<std::string> planned;
    for (const auto& f : plan.folds) {
        if (f.empty()) throw ValidationError("fold plan has an empty fold");
        for (const auto& o : f) {
            if (!planned.insert(o).second) throw ValidationError("object '" + o + "' appears in two folds");
        }
    }
    if (planned != all) throw ValidationError("fold plan does not cover the dataset's objects exactly");

    const ModelBundle init = init_model(opts.model, opts.init_seed);
    KFoldResult result;
    std::map<std::string, ScorePairs> groups;
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        const std::set<std::string> test(plan.folds[f].begin(), plan.folds[f].end());
        std::vector<TrainingSample> train_set;
        FoldLog log;
        log.fold = f;
        log.test_objects = plan.folds[f];
        std::set<std::string> train_objects;
        for (const auto& s : data.samples) {
            if (!test.contains(s.object_id)) {
                train_set.push_back(s);
                train_objects.insert(s.object_id);
            }
        }
        log.train_objects.assign(train_objects.begin(), train_objects.end());
        log.train_samples = train_set.size();
        auto trained = train(std::span<TrainingSample>(train_set), opts.train, init);
        log.steps = trained.steps;
        log.final_loss = trained.losses.empty() ? 0.0 : trained.losses.back();
        for (std::size_t i = 0; i < data.samples.size(); ++i) {
            const auto& s = data.samples[i];
            if (!test.contains(s.object_id)) continue;
            const double score = score_prepared(trained.model, s.shape, s.object_id).value;
            result.predictions.push_back({f, s.object_id, data.mesh_ids[i], s.label, score});
            log.scored_meshes.push_back(data.mesh_ids[i]);
            auto& g = groups[s.object_id];
            g.predictions.push_back(score);
            g.labels.push_back(s.label);
        }
        result.folds.push_back(std::move(log));
    }
    result.report = build_report(groups, opts.aggregation);
    return result;
}

KFoldResult run_kfold(std::span<const LabeledMesh> data, const FoldPlan& plan, const EvalOptions& opts) {
    auto prepared = prepare_dataset(data, opts.model);
    return run_kfold(prepared, plan, opts);
}

std::vector<Variant> finetune_variants() {
    std::vector<Variant> v{{"full", FinetuneMode::full()}};
    for (std::size_t r : {2, 4, 8, 16}) v.push_back({"lora:" + std::to_string(r), FinetuneMode::lora(r)});
    v.push_back({"prefix:8", FinetuneMode::prefix(8)});
    return v;
}

std::vector<Variant> loss_variants() {
    return {{"regression", FinetuneMode::full(), LossMode::Regression},
            {"generation", FinetuneMode::full(), LossMode::Generation}};
}

std::vector<Variant> prompt_variants() {
    return {{"without_object_name", FinetuneMode::full(), LossMode::Regression, false},
            {"with_object_name", FinetuneMode::full(), LossMode::Regression, true}};
}

std::vector<Variant> ablation_variants(std::string_view dimension) {
    if (dimension == "finetune") return finetune_variants();
    if (dimension == "loss") return loss_variants();
    if (dimension == "prompt") return prompt_variants();
    throw ValidationError("unknown ablation '" + std::string(dimension) + "' (expected finetune, loss or prompt)");
}

std::vector<AblationRow> run_ablation(PreparedDataset& data, const FoldPlan& plan, const EvalOptions& base,
                                      std::span<const Variant> variants) {
    if (variants.empty()) throw ValidationError("run_ablation: no variants");
    std::vector<AblationRow> rows;
    for (const auto& v : variants) {
        AblationRow row;
        row.variant = v;
        try {
            EvalOptions opts = base;
            opts.model.bridge.finetune = v.finetune;
            opts.model.loss_mode = v.loss;
            opts.model.prompts.include_object_name = v.object_name;
            opts.train.finetune = v.finetune;
            opts.train.loss_mode = v.loss;
            row.result = run_kfold(data, plan, opts);
        } catch (const Error& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

std::string fmt(const std::optional<double>& v) {
    if (!v) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return buf;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string ablation_csv(std::span<const AblationRow> rows) {
    std::ostringstream os;
    os << "variant,PLCC,SROCC,KROCC\n";
    for (const auto& r : rows) {
        const Coefficients c = r.result ? r.result->report.overall : Coefficients{};
        os << r.variant.name << ',' << fmt(c.plcc) << ',' << fmt(c.srocc) << ',' << fmt(c.krocc) << '\n';
    }
    return os.str();
}

std::string ablation_json(std::span<const AblationRow> rows) {
    json j = json::array();
    for (const auto& r : rows) {
        const Coefficients c = r.result ? r.result->report.overall : Coefficients{};
        json e = {{"variant", r.variant.name},
                  {"finetune", r.variant.finetune.to_string()},
                  {"loss", to_string(r.variant.loss)},
                  {"object_name", r.variant.object_name},
                  {"plcc", opt(c.plcc)},
                  {"srocc", opt(c.srocc)},
                  {"krocc", opt(c.krocc)}};
        if (!r.error.empty()) e["error"] = r.error;
        j.push_back(std::move(e));
    }
    return j.dump(2);
}

std::string predictions_csv(std::span<const Prediction> predictions) {
    std::ostringstream os;
    os << "fold,object,mesh,label,score\n";
    char buf[64];
    for (const auto& p : predictions) {
        std::snprintf(buf, sizeof buf, "%.6f,%.9f", p.label, p.score);
        os << p.fold << ',' << p.object_id << ',' << p.mesh_id << ',' << buf << '\n';
    }
    return os.str();
}

std::string git_blob_sha1(std::string_view content) {
    const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw Error("SHA-1: out of memory");
    const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                    EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                    EVP_DigestFinal_ex(ctx, digest, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw Error("SHA-1 computation failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned char b : std::span<const unsigned char>(digest, len)) {
        out.push_back(hex[b >> 4]);
        out.push_back(hex[b & 15]);
    }
    return out;
}

std::string manifest_json(const RunManifest& m) {
    json j;
    j["dataset_sha1"] = m.dataset_hash;
    j["scorer"] = m.scorer;
    j["k"] = m.plan.k;
    j["folds"] = m.plan.folds;
    j["init_seed"] = m.options.init_seed;
    j["model"] = json_io::to_json(m.options.model);
    j["train"] = json_io::to_json(m.options.train);
    j["aggregation"] = m.options.aggregation == Aggregation::SizeWeighted ? "size_weighted" : "unweighted";
    j["variants"] = m.variants;
    return j.dump(2);
}

}  // namespace realism
