// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include "realism/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "realism/errors.hpp"

namespace realism {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
    T out{};
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ValidationError("config: '" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ValidationError("config: '" + std::string(key) + "' expects true or false, got '" + std::string(v) + "'");
}

std::string fmt_double(double d) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, d);
    return std::string(buf, ptr);
}

const char* kPathKeys[] = {"dataset", "out", "checkpoint", "data_dir", "loss_csv", "mesh_root"};

}  // namespace

const std::vector<ConfigKey>& run_config_keys() {
    static const std::vector<ConfigKey> keys = [] {
        const RunConfig d;
        const auto& m = d.model;
        const auto& t = d.train;
        return std::vector<ConfigKey>{
            {"learning_rate", fmt_double(t.learning_rate), "AdamW learning rate"},
            {"epochs", std::to_string(t.epochs), "passes over the training set"},
            {"batch_size", std::to_string(t.batch_size), "samples per optimizer step"},
            {"weight_decay", fmt_double(t.weight_decay), "decoupled decay; biases and norms excluded"},
            {"beta1", fmt_double(t.beta1), "AdamW first-moment decay"},
            {"beta2", fmt_double(t.beta2), "AdamW second-moment decay"},
            {"epsilon", fmt_double(t.epsilon), "AdamW denominator epsilon"},
            {"seed", std::to_string(t.seed), "shuffling seed"},
            {"init_seed", std::to_string(d.init_seed), "weight initialization seed"},
            {"finetune", t.finetune.to_string(), "full, lora:<r> or prefix[:<p>]"},
            {"loss", to_string(t.loss_mode), "regression or generation"},
            {"loss_form", to_string(t.loss_form), "squared or absolute (regression only)"},
            {"encoder_frozen", t.encoder_frozen ? "true" : "false", "keep shape encoder weights fixed"},
            {"max_steps", std::to_string(t.max_steps), "stop after this many steps; 0 disables"},
            {"jobs", std::to_string(t.jobs), "worker threads for per-sample gradients"},
            {"scorer", to_string(m.scorer), "bridge or baseline"},
            {"groups", std::to_string(m.encoder.groups), "patches per shape (G)"},
            {"group_size", std::to_string(m.encoder.group_size), "points per patch (S)"},
            {"encoder_hidden", std::to_string(m.encoder.hidden), "patch MLP width"},
            {"d_model", std::to_string(m.bridge.d_model), "token width shared by encoder, bridge and decoder"},
            {"n_layers", std::to_string(m.bridge.n_layers), "transformer layers"},
            {"n_heads", std::to_string(m.bridge.n_heads), "attention heads"},
            {"max_seq", std::to_string(m.bridge.max_seq), "longest token sequence"},
            {"mlp_ratio", std::to_string(m.bridge.mlp_ratio), "feed-forward width / d_model"},
            {"decoder_hidden", std::to_string(m.decoder_hidden), "realism decoder width; 0 means d_model"},
            {"max_points", std::to_string(m.max_points), "points per shape after resampling"},
            {"system_prompt", m.prompts.system_text, "text before the shape tokens"},
            {"realism_prompt", m.prompts.realism_text, "text after the shape tokens"},
            {"object_name", m.prompts.include_object_name ? "true" : "false",
             "replace the word 'object' in the realism prompt with the object id"},
            {"dataset", "", "dataset JSON path"},
            {"out", "", "output path"},
            {"checkpoint", "", "checkpoint path"},
            {"data_dir", "", "service data directory"},
            {"loss_csv", "", "loss curve CSV path"},
            {"mesh_root", "", "directory of mesh files served to annotators"},
            {"port", std::to_string(d.port), "HTTP port"},
        };
    }();
    return keys;
}

void RunConfig::set(std::string_view key, std::string_view value) {
    const std::string k(key);
    auto& m = model;
    auto& t = train;
    if (k == "learning_rate") t.learning_rate = parse_number<double>(k, value);
    else if (k == "epochs") t.epochs = parse_number<std::size_t>(k, value);
    else if (k == "batch_size") t.batch_size = parse_number<std::size_t>(k, value);
    else if (k == "weight_decay") t.weight_decay = parse_number<double>(k, value);
    else if (k == "beta1") t.beta1 = parse_number<double>(k, value);
    else if (k == "beta2") t.beta2 = parse_number<double>(k, value);
    else if (k == "epsilon") t.epsilon = parse_number<double>(k, value);
    else if (k == "seed") t.seed = parse_number<std::uint64_t>(k, value);
    else if (k == "init_seed") init_seed = parse_number<std::uint64_t>(k, value);
    else if (k == "finetune") {
        t.finetune = FinetuneMode::parse(value);
        m.bridge.finetune = t.finetune;
    } else if (k == "loss") {
        t.loss_mode = parse_loss_mode(value);
        m.loss_mode = t.loss_mode;
    } else if (k == "loss_form") t.loss_form = parse_loss_form(value);
    else if (k == "encoder_frozen") t.encoder_frozen = parse_bool(k, value);
    else if (k == "max_steps") t.max_steps = parse_number<std::size_t>(k, value);
    else if (k == "jobs") t.jobs = parse_number<std::size_t>(k, value);
    else if (k == "scorer") m.scorer = parse_scorer(value);
    else if (k == "groups") m.encoder.groups = parse_number<std::size_t>(k, value);
    else if (k == "group_size") m.encoder.group_size = parse_number<std::size_t>(k, value);
    else if (k == "encoder_hidden") m.encoder.hidden = parse_number<std::size_t>(k, value);
    else if (k == "d_model") {
        m.bridge.d_model = parse_number<std::size_t>(k, value);
        m.encoder.d_model = m.bridge.d_model;
    } else if (k == "n_layers") m.bridge.n_layers = parse_number<std::size_t>(k, value);
    else if (k == "n_heads") m.bridge.n_heads = parse_number<std::size_t>(k, value);
    else if (k == "max_seq") m.bridge.max_seq = parse_number<std::size_t>(k, value);
    else if (k == "mlp_ratio") m.bridge.mlp_ratio = parse_number<std::size_t>(k, value);
    else if (k == "decoder_hidden") m.decoder_hidden = parse_number<std::size_t>(k, value);
    else if (k == "max_points") m.max_points = parse_number<std::size_t>(k, value);
    else if (k == "system_prompt") m.prompts.system_text = std::string(value);
    else if (k == "realism_prompt") m.prompts.realism_text = std::string(value);
    else if (k == "object_name") m.prompts.include_object_name = parse_bool(k, value);
    else if (k == "port") {
        const int p = parse_number<int>(k, value);
        if (p < 0 || p > 65535) throw ValidationError("config: port out of range");
        port = p;
    } else {
        for (const char* pk : kPathKeys) {
            if (k == pk) {
                paths[k] = std::string(value);
                return;
            }
        }
        throw ValidationError("config: unknown key '" + k + "'");
    }
}

std::string RunConfig::get(std::string_view key) const {
    const auto it = paths.find(std::string(key));
    return it == paths.end() ? std::string{} : it->second;
}

RunConfig parse_run_config(std::string_view text) {
    RunConfig c;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        auto line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError("config: expected 'key = value'", line_no);
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        try {
            c.set(key, value);
        } catch (const ValidationError& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot read config " + path);
    const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

std::string render_run_config(const RunConfig& c) {
    const auto& m = c.model;
    const auto& t = c.train;
    std::ostringstream os;
    os << "learning_rate = " << fmt_double(t.learning_rate) << '\n'
       << "epochs = " << t.epochs << '\n'
       << "batch_size = " << t.batch_size << '\n'
       << "weight_decay = " << fmt_double(t.weight_decay) << '\n'
       << "beta1 = " << fmt_double(t.beta1) << '\n'
       << "beta2 = " << fmt_double(t.beta2) << '\n'
       << "epsilon = " << fmt_double(t.epsilon) << '\n'
       << "seed = " << t.seed << '\n'
       << "init_seed = " << c.init_seed << '\n'
       << "finetune = " << t.finetune.to_string() << '\n'
       << "loss = " << to_string(t.loss_mode) << '\n'
       << "loss_form = " << to_string(t.loss_form) << '\n'
       << "encoder_frozen = " << (t.encoder_frozen ? "true" : "false") << '\n'
       << "max_steps = " << t.max_steps << '\n'
       << "jobs = " << t.jobs << '\n'
       << "scorer = " << to_string(m.scorer) << '\n'
       << "groups = " << m.encoder.groups << '\n'
       << "group_size = " << m.encoder.group_size << '\n'
       << "encoder_hidden = " << m.encoder.hidden << '\n'
       << "d_model = " << m.bridge.d_model << '\n'
       << "n_layers = " << m.bridge.n_layers << '\n'
       << "n_heads = " << m.bridge.n_heads << '\n'
       << "max_seq = " << m.bridge.max_seq << '\n'
       << "mlp_ratio = " << m.bridge.mlp_ratio << '\n'
       << "decoder_hidden = " << m.decoder_hidden << '\n'
       << "max_points = " << m.max_points << '\n'
       << "system_prompt = " << m.prompts.system_text << '\n'
       << "realism_prompt = " << m.prompts.realism_text << '\n'
       << "object_name = " << (m.prompts.include_object_name ? "true" : "false") << '\n'
       << "port = " << c.port << '\n';
    for (const auto& [k, v] : c.paths) os << k << " = " << v << '\n';
    return os.str();
}

void apply_environment(RunConfig& c) {
    const std::pair<const char*, const char*> vars[] = {
        {"REALISM_DATASET", "dataset"},   {"REALISM_OUT", "out"},           {"REALISM_CHECKPOINT", "checkpoint"},
        {"REALISM_DATA_DIR", "data_dir"}, {"REALISM_LOSS_CSV", "loss_csv"}, {"REALISM_MESH_ROOT", "mesh_root"},
        {"REALISM_PORT", "port"}};
    for (const auto& [env, key] : vars) {
        if (const char* v = std::getenv(env); v && *v) c.set(key, v);
    }
}

}  // namespace realism
