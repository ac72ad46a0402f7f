// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "realism/checkpoint.hpp"
#include "realism/config.hpp"
#include "realism/dataset.hpp"
#include "realism/errors.hpp"
#include "realism/eval.hpp"
#include "realism/geometry.hpp"
#include "realism/model.hpp"
#include "service/service.hpp"

namespace realism::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Raised for bad invocations that CLI11 cannot see (missing files, bad combos).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("cannot write " + p.string());
    f << text;
    if (!f) throw Error("write failed: " + p.string());
}

std::string read_text(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw Error("cannot read " + p.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

bool is_mesh_file(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".obj" || ext == ".ply";
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

// Options shared by train and kfold: a config file and flag overrides.
struct RunFlags {
    std::string config;
    std::string dataset;
    std::optional<std::string> mode, loss, scorer;
    std::optional<std::uint64_t> seed, init_seed;
    std::optional<std::size_t> jobs, epochs, batch_size;
    std::optional<double> lr;

    void add(CLI::App& app) {
        // Unset flags fall back to the config file, then to these defaults.
        const RunConfig d;
        const auto dflt = [](const std::string& v) { return " [config, default " + v + "]"; };
        app.add_option("--config", config, "key = value run configuration file (see `realism config`)");
        app.add_option("--dataset", dataset, "dataset JSON" + dflt("none"));
        app.add_option("--mode", mode, "finetune mode: full, lora:<r>, prefix[:<p>]" + dflt(d.train.finetune.to_string()));
        app.add_option("--loss", loss, "regression or generation" + dflt(to_string(d.train.loss_mode)));
        app.add_option("--seed", seed, "shuffling seed" + dflt(std::to_string(d.train.seed)));
        app.add_option("--init-seed", init_seed, "weight initialization seed" + dflt(std::to_string(d.init_seed)));
        app.add_option("--jobs", jobs, "worker threads" + dflt(std::to_string(d.train.jobs)));
        app.add_option("--epochs", epochs, "training epochs" + dflt(std::to_string(d.train.epochs)));
        app.add_option("--batch-size", batch_size, "samples per step" + dflt(std::to_string(d.train.batch_size)));
        app.add_option("--lr", lr, "learning rate" + dflt((std::ostringstream{} << d.train.learning_rate).str()));
    }

    RunConfig resolve() const {
        try {
            return resolve_unchecked();
        } catch (const realism::ParseError& e) {
            throw UsageError(e.what());
        } catch (const ValidationError& e) {
            throw UsageError(e.what());
        }
    }

    RunConfig resolve_unchecked() const {
        RunConfig c;
        if (!config.empty()) {
            if (!fs::exists(config)) throw UsageError("config file not found: " + config);
            c = load_run_config(config);
        }
        if (!dataset.empty()) c.paths["dataset"] = dataset;
        if (mode) c.set("finetune", *mode);
        if (loss) c.set("loss", *loss);
        if (scorer) c.set("scorer", *scorer);
        if (seed) c.train.seed = *seed;
        if (init_seed) c.init_seed = *init_seed;
        if (jobs) c.train.jobs = *jobs;
        if (epochs) c.train.epochs = *epochs;
        if (batch_size) c.train.batch_size = *batch_size;
        if (lr) c.train.learning_rate = *lr;
        apply_environment(c);
        return c;
    }
};

fs::path require_dataset(const RunConfig& c) {
    const std::string p = c.get("dataset");
    if (p.empty()) throw UsageError("--dataset is required");
    if (!fs::exists(p)) throw UsageError("dataset not found: " + p);
    return p;
}

// score ---------------------------------------------------------------------

int cmd_score(const std::vector<std::string>& inputs, std::string checkpoint, std::ostream& out) {
    if (const char* env = std::getenv("REALISM_CHECKPOINT"); env != nullptr && *env != '\0') checkpoint = env;
    if (checkpoint.empty()) throw UsageError("--checkpoint is required");
    if (!fs::exists(checkpoint)) throw UsageError("checkpoint not found: " + checkpoint);
    std::vector<fs::path> files;
    for (const auto& in : inputs) {
        const fs::path p(in);
        if (fs::is_directory(p)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::directory_iterator(p)) {
                if (e.is_regular_file() && is_mesh_file(e.path())) found.push_back(e.path());
            }
            std::sort(found.begin(), found.end());
            files.insert(files.end(), found.begin(), found.end());
        } else if (fs::exists(p)) {
            files.push_back(p);
        } else {
            throw UsageError("no such mesh: " + in);
        }
    }
    const auto model = load_checkpoint(checkpoint).model;
    int status = kExitOk;
    for (const auto& f : files) {
        try {
            const Mesh mesh = load_mesh(f.string());
            const double s = score_mesh(mesh, model).value;
            out << json{{"mesh", f.string()}, {"realism", s}}.dump() << '\n';
        } catch (const Error& e) {
            out << json{{"mesh", f.string()}, {"error", e.what()}}.dump() << '\n';
            status = kExitFailure;
        }
    }
    return status;
}

// train ---------------------------------------------------------------------

int cmd_train(const RunFlags& flags, const std::string& out_flag, const std::string& loss_csv_flag, bool as_json,
              std::ostream& out, std::ostream& err) {
    RunConfig c = flags.resolve();
    if (!out_flag.empty()) c.paths["out"] = out_flag;
    if (!loss_csv_flag.empty()) c.paths["loss_csv"] = loss_csv_flag;
    apply_environment(c);
    const fs::path dataset = require_dataset(c);
    std::string out_path = c.get("out");
    if (out_path.empty()) out_path = "model.ckpt";

    c.train.finetune = c.model.bridge.finetune;
    c.train.loss_mode = c.model.loss_mode;
    c.model.validate();
    c.train.validate();
    const auto samples = load_samples(dataset);
    if (samples.empty()) throw Error("dataset has no loadable meshes: " + dataset.string());
    const auto init = init_model(c.model, c.init_seed);
    const auto result = train(samples, c.train, init, [&](std::uint64_t step, double loss) {
        if (!as_json && step % 50 == 0) err << "step " << step << " loss " << fmt(loss) << '\n';
    });
    save_checkpoint(result.model, out_path, CheckpointInfo{c.train, c.init_seed, result.steps});

    std::string curve = "step,loss\n";
    for (std::size_t i = 0; i < result.losses.size(); ++i) curve += std::to_string(i + 1) + "," + fmt(result.losses[i]) + "\n";
    std::string loss_csv = c.get("loss_csv");
    if (loss_csv.empty()) loss_csv = out_path + ".loss.csv";
    write_text(loss_csv, curve);

    const double final_loss = result.losses.empty() ? 0.0 : result.losses.back();
    if (as_json) {
        out << json{{"checkpoint", out_path},
                    {"loss_csv", loss_csv},
                    {"samples", samples.size()},
                    {"steps", result.steps},
                    {"final_loss", final_loss}}
                   .dump()
            << '\n';
    } else {
        out << "checkpoint " << out_path << "\nloss curve " << loss_csv << "\nsteps " << result.steps
            << "\nfinal loss " << fmt(final_loss) << '\n';
    }
    return kExitOk;
}

// kfold ---------------------------------------------------------------------

struct KFoldFlags {
    std::size_t k = 0;
    std::string ablate;
    std::string out_dir = "kfold-out";
    std::string aggregation = "weighted";
    std::uint64_t fold_seed = 0;
};

int cmd_kfold(const RunFlags& flags, const KFoldFlags& kf, bool as_json, std::ostream& out, std::ostream& err) {
    RunConfig c = flags.resolve();
    const fs::path dataset = require_dataset(c);
    c.train.finetune = c.model.bridge.finetune;
    c.train.loss_mode = c.model.loss_mode;
    c.model.validate();
    c.train.validate();

    const auto samples = load_samples(dataset);
    const auto objects = object_ids(samples);
    const std::size_t k = kf.k == 0 ? objects.size() : kf.k;
    FoldPlan plan;
    try {
        plan = split_leave_object_out(objects, k, kf.fold_seed);
    } catch (const ValidationError& e) {
        throw UsageError(e.what());
    }
    EvalOptions opts{c.model, c.train, c.init_seed,
                     kf.aggregation == "unweighted" ? Aggregation::Unweighted : Aggregation::SizeWeighted};
    if (kf.aggregation != "weighted" && kf.aggregation != "unweighted") {
        throw UsageError("--aggregation must be weighted or unweighted");
    }
    auto prepared = prepare_dataset(samples, c.model);
    const fs::path dir = kf.out_dir;
    fs::create_directories(dir);

    RunManifest manifest{git_blob_sha1(read_text(dataset)), to_string(c.model.scorer), plan, opts, {}};
    if (kf.ablate.empty()) {
        err << "running " << plan.k << " folds over " << objects.size() << " objects\n";
        const auto result = run_kfold(prepared, plan, opts);
        write_text(dir / "report.csv", report_csv(result.report));
        write_text(dir / "report.json", report_json(result.report));
        write_text(dir / "predictions.csv", predictions_csv(result.predictions));
        write_text(dir / "manifest.json", manifest_json(manifest));
        out << (as_json ? report_json(result.report) + "\n" : report_csv(result.report));
        return kExitOk;
    }
    std::vector<Variant> variants;
    try {
        variants = ablation_variants(kf.ablate);
    } catch (const ValidationError& e) {
        throw UsageError(e.what());
    }
    for (const auto& v : variants) manifest.variants.push_back(v.name);
    err << "ablating " << kf.ablate << ": " << variants.size() << " variants x " << plan.k << " folds\n";
    const auto rows = run_ablation(prepared, plan, opts, variants);
    write_text(dir / "ablation.csv", ablation_csv(rows));
    write_text(dir / "ablation.json", ablation_json(rows));
    write_text(dir / "manifest.json", manifest_json(manifest));
    for (const auto& row : rows) {
        if (!row.result) {
            err << "variant " << row.variant.name << " failed: " << row.error << '\n';
            continue;
        }
        write_text(dir / (row.variant.name + ".report.csv"), report_csv(row.result->report));
        write_text(dir / (row.variant.name + ".predictions.csv"), predictions_csv(row.result->predictions));
    }
    out << (as_json ? ablation_json(rows) + "\n" : ablation_csv(rows));
    const bool any_failed = std::any_of(rows.begin(), rows.end(), [](const AblationRow& r) { return !r.result; });
    return any_failed ? kExitFailure : kExitOk;
}

// annotate ------------------------------------------------------------------

service::Service* g_running = nullptr;

extern "C" void on_signal(int) {
    if (g_running != nullptr) g_running->stop();
}

struct ServeFlags {
    std::string config;
    std::optional<int> port;
    std::string data;
    std::string host;
    std::string mesh_root;
    std::vector<std::string> checkpoints;
    std::vector<std::string> cors;
};

int cmd_serve(const ServeFlags& f, std::ostream& out) {
    service::ServiceConfig cfg;
    if (!f.config.empty()) {
        if (!fs::exists(f.config)) throw UsageError("config file not found: " + f.config);
        cfg = service::ServiceConfig::load(f.config);
    }
    if (f.port) cfg.set("port", std::to_string(*f.port));
    if (!f.data.empty()) cfg.data_dir = f.data;
    if (!f.host.empty()) cfg.host = f.host;
    if (!f.mesh_root.empty()) cfg.mesh_root = f.mesh_root;
    for (const auto& c : f.checkpoints) cfg.set("checkpoint", c);
    if (!f.cors.empty()) {
        std::string joined;
        for (const auto& o : f.cors) joined += (joined.empty() ? "" : ",") + o;
        cfg.set("cors_origins", joined);
    }
    service::apply_environment(cfg);
    for (const auto& [name, path] : cfg.checkpoints) {
        if (!fs::exists(path)) throw UsageError("checkpoint not found: " + path.string());
    }
    service::Service svc(cfg);
    const int port = svc.bind();
    out << json{{"listening", cfg.host + ":" + std::to_string(port)}, {"data_dir", cfg.data_dir.string()}}.dump()
        << std::endl;
    g_running = &svc;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    svc.listen();
    g_running = nullptr;
    return kExitOk;
}

int cmd_aggregate(const std::string& dir, const std::string& output, const std::string& mesh_root, bool as_json,
                  std::ostream& out, std::ostream& err) {
    if (!fs::is_directory(dir)) throw UsageError("not a directory: " + dir);
    auto stored = service::load_sessions(dir, mesh_root);
    for (const auto& w : stored.warnings) err << "warning: " << w << '\n';
    const fs::path out_path = output.empty() ? fs::path("dataset.json") : fs::path(output);
    const fs::path base = fs::absolute(out_path).parent_path();
    std::map<std::string, std::string> files;
    for (const auto& [id, path] : stored.mesh_files) {
        std::error_code ec;
        auto rel = fs::relative(fs::absolute(path), base, ec);
        files[id] = (ec || rel.empty() ? fs::absolute(path) : rel).generic_string();
    }
    const Dataset d = export_dataset(stored.sessions, files);
    for (const auto& w : d.warnings) err << "warning: " << w << '\n';
    save_dataset(d, out_path);
    if (as_json) {
        out << json{{"dataset", out_path.string()},
                    {"sessions", stored.sessions.size()},
                    {"objects", d.objects.size()},
                    {"meshes", d.mesh_count()},
                    {"records", d.record_count()},
                    {"warnings", d.warnings}}
                   .dump()
            << '\n';
    } else {
        out << "wrote " << out_path.string() << ": " << d.objects.size() << " objects, " << d.mesh_count()
            << " meshes, " << d.record_count() << " records\n";
    }
    return kExitOk;
}

// ladder --------------------------------------------------------------------

struct LadderFlags {
    std::string out = "ladder";
    std::size_t objects = 6;
    std::size_t levels = 8;
    std::uint64_t seed = 0;
    double noise_step = kLadderNoiseStep;
    int resolution = kLadderResolution;
};

int cmd_ladder(const LadderFlags& f, bool as_json, std::ostream& out) {
    const auto ladder = make_distortion_ladder(f.objects, f.levels, f.seed, f.noise_step, f.resolution);
    const auto path = write_ladder(f.out, ladder);
    if (as_json) {
        out << json{{"dataset", path.string()}, {"meshes", ladder.size()}}.dump() << '\n';
    } else {
        out << "wrote " << ladder.size() << " meshes and " << path.string() << '\n';
    }
    return kExitOk;
}

std::string config_reference() {
    std::ostringstream os;
    os << "# realism run configuration: key = value, '#' starts a comment.\n";
    for (const auto& k : run_config_keys()) {
        os << "# " << k.help << '\n' << k.name << " = " << k.default_value << '\n';
    }
    return os.str();
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"3D mesh realism scoring, training, evaluation and annotation", "realism"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", "realism 0.1.0");
    bool as_json = false;
    app.add_flag("--json", as_json, "machine-readable output, one JSON document per result");

    auto* score = app.add_subcommand("score", "score meshes with a trained checkpoint");
    std::vector<std::string> score_inputs;
    std::string score_ckpt;
    score->add_option("meshes", score_inputs, "mesh files or directories (OBJ/PLY)")->required();
    score->add_option("--checkpoint", score_ckpt, "checkpoint file");

    auto* train_cmd = app.add_subcommand("train", "train a scorer on a dataset");
    RunFlags train_flags;
    train_flags.add(*train_cmd);
    std::string train_out, loss_csv;
    train_cmd->add_option("--out", train_out, "checkpoint output path (default model.ckpt)");
    train_cmd->add_option("--loss-csv", loss_csv, "loss curve CSV path (default <out>.loss.csv)");

    auto* kfold = app.add_subcommand("kfold", "leave-object-out cross-validation and ablations");
    RunFlags kfold_flags;
    kfold_flags.add(*kfold);
    KFoldFlags kf;
    kfold->add_option("--k", kf.k, "folds; 0 means one per object");
    kfold->add_option("--scorer", kfold_flags.scorer, "bridge (alias sram) or baseline [config, default bridge]");
    kfold->add_option("--ablate", kf.ablate, "finetune, loss or prompt");
    kfold->add_option("--out-dir", kf.out_dir, "directory for reports");
    kfold->add_option("--fold-seed", kf.fold_seed, "seed for assigning objects to folds");
    kfold->add_option("--aggregation", kf.aggregation, "weighted or unweighted mean over objects");

    auto* annotate = app.add_subcommand("annotate", "pairwise annotation service and aggregation");
    annotate->require_subcommand(1);
    annotate->fallthrough();
    auto* serve = annotate->add_subcommand("serve", "run the annotation and scoring HTTP service");
    ServeFlags sf;
    serve->add_option("--config", sf.config, "service configuration file");
    serve->add_option("--port", sf.port, "TCP port; 0 picks a free one");
    serve->add_option("--data", sf.data, "data directory for event logs and meshes");
    serve->add_option("--host", sf.host, "bind address");
    serve->add_option("--mesh-root", sf.mesh_root, "read-only directory of <id>.obj/<id>.ply meshes");
    serve->add_option("--checkpoint", sf.checkpoints, "name=path of a checkpoint for /score (repeatable)");
    serve->add_option("--cors-origin", sf.cors, "allowed browser origin (repeatable, * for any)");
    auto* aggregate_cmd = annotate->add_subcommand("aggregate", "build a dataset from recorded sessions");
    std::string agg_dir, agg_out, agg_mesh_root;
    aggregate_cmd->add_option("dir", agg_dir, "service data directory")->required();
    aggregate_cmd->add_option("-o,--output", agg_out, "dataset JSON path (default dataset.json)");
    aggregate_cmd->add_option("--mesh-root", agg_mesh_root, "extra directory searched for mesh files");

    auto* ladder = app.add_subcommand("ladder", "write the synthetic distortion-ladder dataset");
    LadderFlags lf;
    ladder->add_option("--out", lf.out, "output directory");
    ladder->add_option("--objects", lf.objects, "primitive objects");
    ladder->add_option("--levels", lf.levels, "distortion levels per object");
    ladder->add_option("--seed", lf.seed, "noise seed");
    ladder->add_option("--noise-step", lf.noise_step, "vertex noise sigma added per level");
    ladder->add_option("--resolution", lf.resolution, "primitive tessellation");

    auto* config = app.add_subcommand("config", "print every run configuration key with its default");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    }

    try {
        if (score->parsed()) return cmd_score(score_inputs, score_ckpt, out);
        if (train_cmd->parsed()) return cmd_train(train_flags, train_out, loss_csv, as_json, out, err);
        if (kfold->parsed()) return cmd_kfold(kfold_flags, kf, as_json, out, err);
        if (serve->parsed()) return cmd_serve(sf, out);
        if (aggregate_cmd->parsed()) return cmd_aggregate(agg_dir, agg_out, agg_mesh_root, as_json, out, err);
        if (ladder->parsed()) return cmd_ladder(lf, as_json, out);
        if (config->parsed()) {
            out << config_reference();
            return kExitOk;
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace realism::cli
