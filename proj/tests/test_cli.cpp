// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "cli/cli.hpp"
#include "oracles.hpp"
#include "realism/checkpoint.hpp"
#include "realism/config.hpp"
#include "realism/dataset.hpp"

using namespace realism;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "realism");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Run r;
    r.code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::vector<json> json_lines(const std::string& text) {
    std::vector<json> v;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) v.push_back(json::parse(line));
    }
    return v;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("realism_cli_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& rel) const { return (path / rel).string(); }
};

// A config file for the tiny test model.
std::string tiny_config_file(const TempDir& d) {
    RunConfig c;
    c.model = oracle::tiny_config();
    c.train.epochs = 1;
    c.train.batch_size = 4;
    const auto path = d / "tiny.conf";
    std::ofstream(path) << render_run_config(c);
    return path;
}

}  // namespace

TEST_CASE("cli: usage errors exit 2") {
    CHECK(run({}).code == cli::kExitUsage);
    CHECK(run({"frobnicate"}).code == cli::kExitUsage);
    CHECK(run({"score"}).code == cli::kExitUsage);
    CHECK(run({"score", "x.obj"}).code == cli::kExitUsage);  // no checkpoint
    CHECK(run({"score", "x.obj", "--checkpoint", "/nonexistent.ckpt"}).code == cli::kExitUsage);
    CHECK(run({"train", "--lr", "abc"}).code == cli::kExitUsage);
    CHECK(run({"kfold", "--ablate", "depth", "--dataset", "d.json"}).code != cli::kExitOk);
}

TEST_CASE("cli: help and version") {
    const auto h = run({"--help"});
    CHECK(h.code == cli::kExitOk);
    for (const char* sub : {"score", "train", "kfold", "annotate", "ladder", "config"}) {
        CHECK(h.out.find(sub) != std::string::npos);
    }
    const auto th = run({"train", "--help"});
    CHECK(th.code == cli::kExitOk);
    CHECK(th.out.find("0.0002") != std::string::npos);
    CHECK(run({"--version"}).code == cli::kExitOk);
    const auto cfg = run({"config"});
    CHECK(cfg.code == cli::kExitOk);
    for (const auto& k : run_config_keys()) CHECK(cfg.out.find(k.name) != std::string::npos);
}

TEST_CASE("cli: ladder, train, score and kfold") {
    TempDir d("pipeline");
    auto r = run({"ladder", "--out", d / "ladder", "--objects", "2", "--levels", "3", "--resolution", "8"});
    REQUIRE(r.code == cli::kExitOk);
    const auto dataset = d / "ladder/dataset.json";
    REQUIRE(fs::exists(dataset));
    CHECK(load_samples(dataset).size() == 6);

    const auto conf = tiny_config_file(d);
    r = run({"train", "--config", conf, "--dataset", dataset, "--out", d / "m.ckpt", "--json"});
    REQUIRE_MESSAGE(r.code == cli::kExitOk, r.err);
    const auto summary = json_lines(r.out);
    REQUIRE(summary.size() == 1);
    CHECK(summary[0]["steps"] == 2);
    std::ifstream curve(d / "m.ckpt.loss.csv");
    std::string header;
    std::getline(curve, header);
    CHECK(header == "step,loss");
    const auto ckpt = load_checkpoint(d / "m.ckpt");
    CHECK(ckpt.info.steps == 2);
    CHECK(ckpt.model.config == oracle::tiny_config());

    std::ofstream(d / "bad.obj") << "v 1 2\n";
    r = run({"score", d / "ladder/meshes", "--checkpoint", d / "m.ckpt"});
    CHECK(r.code == cli::kExitOk);
    const auto scores = json_lines(r.out);
    REQUIRE(scores.size() == 6);
    for (const auto& s : scores) {
        const double v = s["realism"];
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    r = run({"score", d / "bad.obj", d / "ladder/meshes/cube_l0.obj", "--checkpoint", d / "m.ckpt"});
    CHECK(r.code == cli::kExitFailure);
    const auto mixed = json_lines(r.out);
    REQUIRE(mixed.size() == 2);
    CHECK(mixed[0].contains("error"));
    CHECK(mixed[1].contains("realism"));

    r = run({"kfold", "--config", conf, "--dataset", dataset, "--out-dir", d / "kf", "--scorer", "sram"});
    REQUIRE_MESSAGE(r.code == cli::kExitOk, r.err);
    for (const char* f : {"report.csv", "report.json", "predictions.csv", "manifest.json"}) {
        CHECK(fs::exists(d / ("kf/" + std::string(f))));
    }
    r = run({"kfold", "--config", conf, "--dataset", dataset, "--out-dir", d / "ab", "--ablate", "loss", "--json"});
    REQUIRE_MESSAGE(r.code == cli::kExitOk, r.err);
    CHECK(fs::exists(d / "ab/ablation.csv"));
}

TEST_CASE("cli: annotate aggregate") {
    TempDir d("aggregate");
    fs::create_directories(d.path / "data/sessions");
    auto r = run({"annotate", "aggregate", d / "data", "-o", d / "out.json"});
    CHECK(r.code == cli::kExitFailure);
    CHECK_FALSE(fs::exists(d / "out.json"));

    auto s = create_session("chair", {"a", "b", "c", "d"}, 5, "s1", "bob");
    std::ofstream log(d / "data/sessions/s1.jsonl");
    log << create_event(s).to_json_line() << "\n";
    while (!s.complete()) {
        const auto p = next_pairings(s);
        log << round_event(s, p).to_json_line() << "\n";
        for (const auto& pair : p.pairs) log << choice_event(s, record_choice(s, pair.a, pair.b, pair.a)).to_json_line() << "\n";
    }
    log.close();
    r = run({"annotate", "aggregate", d / "data", "-o", d / "out.json"});
    REQUIRE_MESSAGE(r.code == cli::kExitOk, r.err);
    const auto ds = load_dataset(d / "out.json");
    REQUIRE(ds.objects.size() == 1);
    std::map<std::string, double> labels;
    for (const auto& m : ds.objects[0].meshes) labels[m.id] = m.label;
    for (const auto& rec : session_scores(s)) CHECK(labels.at(rec.mesh_id) == rec.normalized);
}
