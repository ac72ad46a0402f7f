// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

// Dataset export, the synthetic ladder, k-fold evaluation and run configs.

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <json.hpp>
#include <set>

#include "oracles.hpp"
#include "realism/config.hpp"
#include "realism/dataset.hpp"
#include "realism/errors.hpp"
#include "realism/eval.hpp"
#include "realism/random.hpp"

using namespace realism;
namespace fs = std::filesystem;

namespace {

AnnotationSession played(const std::string& object, const std::vector<std::string>& meshes, std::uint64_t seed,
                         const std::string& subject) {
    auto s = create_session(object, meshes, seed, object + "-" + subject, subject);
    Rng rng(seed);
    while (!s.complete()) {
        for (const auto& p : next_pairings(s).pairs) record_choice(s, p.a, p.b, rng.uniform() < 0.5 ? p.a : p.b);
    }
    return s;
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("realism_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("export_dataset aggregates subjects per mesh") {
    const std::vector<std::string> chair{"c0", "c1", "c2", "c3"};
    std::vector<AnnotationSession> sessions{played("chair", chair, 1, "s1"), played("chair", chair, 2, "s2"),
                                            played("table", {"t0", "t1", "t2"}, 3, "s1")};
    sessions.push_back(create_session("chair", chair, 9, "open", "s3"));
    const auto d = export_dataset(sessions, {{"c0", "meshes/c0.obj"}});
    REQUIRE(d.objects.size() == 2);
    CHECK(d.objects[0].id == "chair");
    CHECK(d.mesh_count() == 7);
    CHECK(d.record_count() == 11);
    // One warning for the open session, one per chair/table mesh without a file.
    CHECK(d.warnings.size() == 1 + 3 + 3);
    for (const auto& m : d.objects[0].meshes) {
        CHECK(m.n == 2);
        REQUIRE(m.records.size() == 2);
        CHECK(m.label == doctest::Approx((m.records[0].score + m.records[1].score) / 2));
        CHECK(m.sigma.has_value());
        CHECK(*m.ci95 == doctest::Approx(ci95(*m.sigma, 2)).epsilon(1e-12));
    }
    CHECK(d.objects[0].meshes[0].file == "meshes/c0.obj");
    CHECK_FALSE(d.objects[1].meshes[0].sigma);

    // Labels equal the offline session scores.
    const auto offline = session_scores(sessions[2]);
    for (const auto& r : offline) {
        for (const auto& m : d.objects[1].meshes) {
            if (m.id == r.mesh_id) CHECK(m.label == r.normalized);
        }
    }
    CHECK_THROWS_AS(export_dataset(std::span(sessions).subspan(3)), ValidationError);
}

TEST_CASE("dataset JSON round trip and validation") {
    std::vector<AnnotationSession> sessions{played("chair", {"a", "b", "c"}, 1, "s1")};
    const auto d = export_dataset(sessions, {{"a", "a.obj"}});
    CHECK(dataset_from_json(dataset_to_json(d)) == d);
    auto j = nlohmann::json::parse(dataset_to_json(d));
    j["version"] = 99;
    CHECK_THROWS_AS(dataset_from_json(j.dump()), ValidationError);
    j["version"] = 1;
    j["objects"][0]["meshes"][0]["label"] = 1.5;
    CHECK_THROWS_AS(dataset_from_json(j.dump()), ValidationError);
    CHECK_THROWS_AS(dataset_from_json("[1,2"), ParseError);

    const auto dir = scratch("dataset");
    save_dataset(d, dir / "d.json");
    CHECK(load_dataset(dir / "d.json") == d);
    CHECK_THROWS_AS(load_dataset(dir / "missing.json"), Error);
    fs::remove_all(dir);
}

TEST_CASE("ladder shape, labels and noise") {
    const auto ladder = make_distortion_ladder();
    REQUIRE(ladder.size() == 48);
    CHECK(object_ids(ladder).size() == 6);
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        const std::size_t level = i % 8;
        CHECK(ladder[i].label == doctest::Approx(1.0 - static_cast<double>(level) / 7.0).epsilon(1e-15));
        CHECK(ladder[i].mesh.name == ladder[i].object_id + "_l" + std::to_string(level));
        CHECK_NOTHROW(ladder[i].mesh.validate());
    }
    // Level 0 is the clean primitive; higher levels move further from it.
    CHECK(ladder[0].mesh == [&] {
        auto m = primitive_mesh("sphere", kLadderResolution);
        m.name = "sphere_l0";
        return m;
    }());
    auto offset = [&](std::size_t i) {
        double s = 0;
        for (std::size_t v = 0; v < ladder[i].mesh.vertices.size(); ++v) {
            s += distance(ladder[i].mesh.vertices[v], ladder[0].mesh.vertices[v]);
        }
        return s;
    };
    for (std::size_t l = 1; l < 8; ++l) CHECK(offset(l) > offset(l - 1));
    CHECK(make_distortion_ladder(6, 8, 3).at(9).mesh == make_distortion_ladder(6, 8, 3).at(9).mesh);
    CHECK_THROWS_AS(make_distortion_ladder(9), ValidationError);
    CHECK_THROWS_AS(make_distortion_ladder(6, 1), ValidationError);
    CHECK_THROWS_AS(primitive_mesh("blob"), ValidationError);
    for (const auto& kind : ladder_primitives()) CHECK_NOTHROW(primitive_mesh(kind, 8).validate());
}

TEST_CASE("write_ladder and load_samples") {
    const auto dir = scratch("ladder");
    const auto ladder = make_distortion_ladder(2, 3, 0, 0.05, 8);
    const auto path = write_ladder(dir, ladder);
    const auto back = load_samples(path);
    REQUIRE(back.size() == ladder.size());
    std::map<std::string, const LabeledMesh*> by_name;
    for (const auto& l : ladder) by_name[l.mesh.name] = &l;
    for (const auto& b : back) {
        REQUIRE(by_name.contains(b.mesh.name));
        const auto& orig = *by_name[b.mesh.name];
        CHECK(b.label == orig.label);
        CHECK(b.object_id == orig.object_id);
        CHECK(b.mesh.faces == orig.mesh.faces);
        REQUIRE(b.mesh.vertices.size() == orig.mesh.vertices.size());
        for (std::size_t v = 0; v < b.mesh.vertices.size(); ++v) {
            CHECK(distance(b.mesh.vertices[v], orig.mesh.vertices[v]) < 1e-6);
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("leave-object-out split") {
    const std::vector<std::string> ids{"e", "a", "d", "b", "c", "a"};
    const auto plan = split_leave_object_out(ids, 2, 1);
    REQUIRE(plan.folds.size() == 2);
    std::multiset<std::string> all;
    for (const auto& f : plan.folds) all.insert(f.begin(), f.end());
    CHECK(all == std::multiset<std::string>{"a", "b", "c", "d", "e"});
    CHECK(plan.folds[0].size() == 3);
    CHECK(split_leave_object_out(ids, 2, 1).folds == plan.folds);
    const auto loo = split_leave_object_out(ids, 5, 0);
    for (const auto& f : loo.folds) CHECK(f.size() == 1);
    CHECK_THROWS_AS(split_leave_object_out(ids, 1), ValidationError);
    CHECK_THROWS_AS(split_leave_object_out(ids, 6), ValidationError);
}

TEST_CASE("run_kfold: held-out scoring, plan checks and determinism") {
    auto cfg = oracle::tiny_config();
    const auto ladder = make_distortion_ladder(3, 3, 0, 0.05, 8);
    EvalOptions opts{cfg, {}, 4};
    opts.train.epochs = 1;
    opts.train.batch_size = 4;
    const auto plan = split_leave_object_out(object_ids(ladder), 3);
    const auto r = run_kfold(ladder, plan, opts);
    CHECK(r.folds.size() == 3);
    CHECK(r.predictions.size() == 9);
    for (const auto& f : r.folds) {
        CHECK(f.train_samples == 6);
        for (const auto& t : f.test_objects) {
            CHECK(std::find(f.train_objects.begin(), f.train_objects.end(), t) == f.train_objects.end());
        }
    }
    for (const auto& p : r.predictions) {
        CHECK(plan.folds[p.fold][0] == p.object_id);
        CHECK(p.score >= 0.0);
        CHECK(p.score <= 1.0);
    }
    CHECK(r.report.groups.size() == 3);
    const auto again = run_kfold(ladder, plan, opts);
    for (std::size_t i = 0; i < r.predictions.size(); ++i) CHECK(again.predictions[i].score == r.predictions[i].score);

    FoldPlan bad{2, {{"sphere"}, {"cube"}}};
    CHECK_THROWS_AS(run_kfold(ladder, bad, opts), ValidationError);
    FoldPlan twice{3, {{"sphere"}, {"cube", "sphere"}, {"cylinder"}}};
    CHECK_THROWS_AS(run_kfold(ladder, twice, opts), ValidationError);
    const auto one = make_distortion_ladder(1, 3, 0, 0.05, 8);
    CHECK_THROWS_AS(run_kfold(one, FoldPlan{1, {{"sphere"}}}, opts), ValidationError);
}

TEST_CASE("ablation table structure") {
    const auto fv = finetune_variants();
    REQUIRE(fv.size() == 6);
    std::vector<std::string> names;
    for (const auto& v : fv) names.push_back(v.name);
    CHECK(names == std::vector<std::string>{"full", "lora:2", "lora:4", "lora:8", "lora:16", "prefix:8"});
    CHECK(ablation_variants("loss").size() == 2);
    CHECK(ablation_variants("prompt").size() == 2);
    CHECK_THROWS_AS(ablation_variants("depth"), ValidationError);

    auto cfg = oracle::tiny_config();
    const auto ladder = make_distortion_ladder(2, 3, 0, 0.05, 8);
    auto data = prepare_dataset(ladder, cfg);
    EvalOptions opts{cfg, {}, 1};
    opts.train.epochs = 1;
    const auto plan = split_leave_object_out(object_ids(ladder), 2);
    const auto rows = run_ablation(data, plan, opts, ablation_variants("loss"));
    REQUIRE(rows.size() == 2);
    const auto csv = ablation_csv(rows);
    CHECK(csv.rfind("variant,PLCC,SROCC,KROCC\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    const auto j = nlohmann::json::parse(ablation_json(rows));
    CHECK(j.is_object() + j.is_array() == 1);
    const auto pred = predictions_csv(rows[0].result->predictions);
    CHECK(std::count(pred.begin(), pred.end(), '\n') == 7);
}

TEST_CASE("git blob hash") {
    CHECK(git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    CHECK(git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("run config: render/parse round trip, errors and environment") {
    RunConfig c;
    c.set("d_model", "48");
    c.set("learning_rate", "0.0015");
    c.set("finetune", "lora:4");
    c.set("init_seed", "12");
    c.set("dataset", "data/ladder.json");
    c.set("port", "9000");
    CHECK(c.model.encoder.d_model == 48);
    CHECK(c.model.bridge.finetune == FinetuneMode::lora(4));
    const auto back = parse_run_config(render_run_config(c));
    CHECK(back.model == c.model);
    CHECK(back.train == c.train);
    CHECK(back.init_seed == 12);
    CHECK(back.port == 9000);
    CHECK(back.get("dataset") == "data/ladder.json");
    CHECK(render_run_config(back) == render_run_config(c));

    const auto d = parse_run_config("# comment\n\nlearning_rate = 0.01\n");
    CHECK(d.train.learning_rate == 0.01);
    CHECK_THROWS_AS(parse_run_config("bogus = 1\n"), ParseError);
    try {
        parse_run_config("learning_rate = 0.1\nepochs = many\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(parse_run_config("no equals sign\n"), ParseError);
    std::set<std::string> keys;
    for (const auto& k : run_config_keys()) {
        CHECK_FALSE(k.help.empty());
        CHECK(keys.insert(k.name).second);
    }

    ::setenv("REALISM_DATASET", "/tmp/x.json", 1);
    ::setenv("REALISM_PORT", "7001", 1);
    RunConfig e;
    apply_environment(e);
    CHECK(e.get("dataset") == "/tmp/x.json");
    CHECK(e.port == 7001);
    ::unsetenv("REALISM_DATASET");
    ::unsetenv("REALISM_PORT");
}
