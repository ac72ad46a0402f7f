// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include "service.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iostream>
#include <iterator>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

// Bodies posted as form data are bounded by max_upload_bytes instead.
#define CPPHTTPLIB_FORM_URL_ENCODED_PAYLOAD_MAX_LENGTH (std::size_t{1} << 30)
#include <httplib.h>
#include <openssl/evp.h>

#include <json.hpp>

#include "realism/checkpoint.hpp"
#include "realism/errors.hpp"
#include "realism/geometry.hpp"
#include "realism/model.hpp"

namespace realism::service {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename T>
T to_number(std::string_view key, std::string_view v) {
    T out{};
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ValidationError("service config: '" + std::string(key) + "' expects an integer, got '" +
                              std::string(v) + "'");
    }
    return out;
}

std::string now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void fsync_dir(const fs::path& dir) {
    const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (fd >= 0) {
        ::fsync(fd);
        ::close(fd);
    }
}

void write_all(int fd, std::string_view data, const fs::path& p) {
    while (!data.empty()) {
        const ssize_t n = ::write(fd, data.data(), data.size());
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error("write " + p.string() + ": " + std::strerror(errno));
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
}

// Appends one line and fsyncs before returning.
void append_durable(const fs::path& p, const std::string& line, bool create) {
    const int flags = O_WRONLY | O_APPEND | O_CLOEXEC | (create ? O_CREAT | O_EXCL : 0);
    const int fd = ::open(p.c_str(), flags, 0644);
    if (fd < 0) throw Error("open " + p.string() + ": " + std::strerror(errno));
    try {
        write_all(fd, line + "\n", p);
        if (::fsync(fd) != 0) throw Error("fsync " + p.string() + ": " + std::strerror(errno));
    } catch (...) {
        ::close(fd);
        throw;
    }
    ::close(fd);
    if (create) fsync_dir(p.parent_path());
}

void write_atomic(const fs::path& p, std::string_view data) {
    const fs::path tmp = p.string() + ".tmp";
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) throw Error("open " + tmp.string() + ": " + std::strerror(errno));
    try {
        write_all(fd, data, tmp);
        ::fsync(fd);
    } catch (...) {
        ::close(fd);
        throw;
    }
    ::close(fd);
    fs::rename(tmp, p);
}

std::optional<std::string> decode_base64(std::string_view in) {
    std::string clean;
    for (char c : in) {
        if (c != '\n' && c != '\r' && c != ' ') clean.push_back(c);
    }
    if (clean.size() % 4 != 0) return std::nullopt;
    std::string out(clean.size() / 4 * 3, '\0');
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(clean.data()), static_cast<int>(clean.size()));
    if (n < 0) return std::nullopt;
    std::size_t len = static_cast<std::size_t>(n);
    if (!clean.empty() && clean.back() == '=') --len;
    if (clean.size() >= 2 && clean[clean.size() - 2] == '=') --len;
    out.resize(len);
    return out;
}

std::optional<fs::path> find_mesh_file(const fs::path& data_dir, const fs::path& mesh_root, std::string_view id) {
    for (const fs::path& dir : {data_dir / "meshes", mesh_root}) {
        if (dir.empty()) continue;
        for (const char* ext : {".obj", ".ply"}) {
            fs::path p = dir / (std::string(id) + ext);
            std::error_code ec;
            if (fs::is_regular_file(p, ec)) return p;
        }
    }
    return std::nullopt;
}

std::size_t unresolved(const AnnotationSession& s) {
    if (!s.pending) return 0;
    return static_cast<std::size_t>(
        std::count(s.pending->winners.begin(), s.pending->winners.end(), std::nullopt));
}

json choice_body(const AnnotationSession& s, const ChoiceOutcome& o) {
    return {{"accepted", true},
            {"round", o.round},
            {"remaining_pairs", unresolved(s)},
            {"round_complete", o.round_complete},
            {"session_complete", o.session_complete},
            {"left_mesh", o.pair.a},
            {"right_mesh", o.pair.b},
            {"winner", o.winner}};
}

json outcome_json(const ChoiceOutcome& o) {
    return {{"round", o.round}, {"left_mesh", o.pair.a}, {"right_mesh", o.pair.b}, {"winner", o.winner}};
}

// Wire form; carries progress only, never scores.
json session_json(const AnnotationSession& s) {
    const std::size_t per_round = s.mesh_ids.size() / 2;
    return {{"session_id", s.session_id},
            {"object_id", s.object_id},
            {"subject_id", s.subject_id},
            {"meshes", s.mesh_ids},
            {"rounds_total", kSwissRounds},
            {"rounds_completed", s.round},
            {"round", s.pending ? s.pending->pairing.round : s.round},
            {"complete", s.complete()},
            {"pending_pairs", unresolved(s)},
            {"choices_recorded", s.outcomes.size()},
            {"choices_total", per_round * kSwissRounds}};
}

struct ReplayedLog {
    std::optional<AnnotationSession> session;
    std::size_t events = 0;
    std::map<std::string, std::string> create_keys;                          // key -> session id
    std::map<std::string, std::pair<MeshPair, std::string>> choice_replies;  // key -> (pair, body)
};

ReplayedLog replay_log(const fs::path& p, bool repair) {
    std::string text = read_file(p);
    if (!text.empty() && text.back() != '\n') {
        const auto cut = text.rfind('\n');
        text.resize(cut == std::string::npos ? 0 : cut + 1);
        if (repair) fs::resize_file(p, text.size());
    }
    ReplayedLog r;
    for (const auto& e : parse_event_log(text)) {
        apply_event(r.session, e);
        ++r.events;
        if (e.key.empty()) continue;
        if (e.type == SessionEvent::Type::Create) {
            r.create_keys[e.key] = e.session;
        } else if (e.type == SessionEvent::Type::Choice) {
            r.choice_replies[e.key] = {e.pair, choice_body(*r.session, r.session->outcomes.back()).dump()};
        }
    }
    return r;
}

std::vector<fs::path> log_files(const fs::path& data_dir) {
    fs::path dir = data_dir / "sessions";
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) dir = data_dir;
    std::vector<fs::path> out;
    if (!fs::is_directory(dir, ec)) return out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl") out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

// Config --------------------------------------------------------------------

void ServiceConfig::set(std::string_view key, std::string_view value) {
    if (key == "host") {
        host = value;
    } else if (key == "port") {
        port = to_number<int>(key, value);
        if (port < 0 || port > 65535) throw ValidationError("service config: port out of range");
    } else if (key == "data_dir") {
        data_dir = std::string(value);
    } else if (key == "mesh_root") {
        mesh_root = std::string(value);
    } else if (key == "checkpoint") {
        const auto eq = value.find('=');
        if (eq == std::string_view::npos) {
            checkpoints["default"] = std::string(value);
        } else {
            const auto name = trim(value.substr(0, eq));
            if (!valid_id(name)) throw ValidationError("service config: bad checkpoint name '" + std::string(name) + "'");
            checkpoints[std::string(name)] = std::string(trim(value.substr(eq + 1)));
        }
    } else if (key == "max_upload_bytes") {
        max_upload_bytes = to_number<std::size_t>(key, value);
    } else if (key == "cors_origins") {
        cors_origins.clear();
        std::string_view rest = value;
        while (!rest.empty()) {
            const auto comma = rest.find(',');
            const auto item = trim(rest.substr(0, comma));
            if (!item.empty()) cors_origins.emplace_back(item);
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
    } else if (key == "snapshot_every") {
        snapshot_every = to_number<std::size_t>(key, value);
        if (snapshot_every == 0) throw ValidationError("service config: snapshot_every must be positive");
    } else if (key == "threads") {
        threads = to_number<std::size_t>(key, value);
        if (threads == 0) throw ValidationError("service config: threads must be positive");
    } else {
        throw ValidationError("service config: unknown key '" + std::string(key) + "'");
    }
}

ServiceConfig ServiceConfig::parse(std::string_view text) {
    ServiceConfig cfg;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        const auto line = trim(text.substr(0, nl));
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError("service config: expected key = value", line_no);
        try {
            cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ValidationError& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    return cfg;
}

ServiceConfig ServiceConfig::load(const fs::path& path) { return parse(read_file(path)); }

void apply_environment(ServiceConfig& cfg, const std::function<const char*(const char*)>& getenv) {
    static constexpr std::pair<const char*, const char*> vars[] = {
        {"REALISM_HOST", "host"},
        {"REALISM_PORT", "port"},
        {"REALISM_DATA_DIR", "data_dir"},
        {"REALISM_MESH_ROOT", "mesh_root"},
        {"REALISM_CHECKPOINT", "checkpoint"},
        {"REALISM_MAX_UPLOAD_BYTES", "max_upload_bytes"},
        {"REALISM_CORS_ORIGINS", "cors_origins"},
    };
    for (const auto& [var, key] : vars) {
        if (const char* v = getenv(var); v != nullptr && *v != '\0') cfg.set(key, v);
    }
}

bool valid_id(std::string_view id) {
    if (id.empty() || id.size() > 200 || id.front() == '.') return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-' ||
               c == '.';
    });
}

StoredSessions load_sessions(const fs::path& data_dir, const fs::path& mesh_root) {
    StoredSessions out;
    for (const auto& p : log_files(data_dir)) {
        try {
            auto r = replay_log(p, false);
            if (r.session) out.sessions.push_back(std::move(*r.session));
        } catch (const Error& e) {
            out.warnings.push_back(p.filename().string() + ": " + e.what());
        }
    }
    std::sort(out.sessions.begin(), out.sessions.end(),
              [](const AnnotationSession& a, const AnnotationSession& b) { return a.session_id < b.session_id; });
    for (const auto& s : out.sessions) {
        for (const auto& id : s.mesh_ids) {
            if (out.mesh_files.count(id)) continue;
            if (auto f = find_mesh_file(data_dir, mesh_root, id)) out.mesh_files[id] = f->string();
        }
    }
    return out;
}

// Service -------------------------------------------------------------------

namespace {

struct Entry {
    std::mutex mu;
    AnnotationSession session;
    fs::path log;
    std::size_t events = 0;
    std::map<std::string, std::pair<MeshPair, std::string>> choice_replies;
};

struct HttpError {
    int status;
    std::string message;
    json extra = json::object();
};

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
    try {
        auto j = json::parse(req.body);
        if (!j.is_object()) throw HttpError{400, "request body must be a JSON object"};
        return j;
    } catch (const json::exception& e) {
        throw HttpError{400, std::string("invalid JSON: ") + e.what()};
    }
}

std::string required_string(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) throw HttpError{400, std::string("'") + key + "' must be a string"};
    return it->get<std::string>();
}

std::string idempotency_key(const httplib::Request& req, const json& body) {
    if (req.has_header("Idempotency-Key")) return req.get_header_value("Idempotency-Key");
    if (auto it = body.find("idempotency_key"); it != body.end() && it->is_string()) return it->get<std::string>();
    return {};
}

}  // namespace

struct Service::Impl {
    ServiceConfig cfg;
    httplib::Server server;
    std::thread thread;
    int bound_port = -1;
    std::function<void(const std::string&)> sink = [](const std::string& line) { std::cerr << line << '\n'; };
    std::map<std::string, ModelBundle> models;

    mutable std::mutex registry_mu;
    std::map<std::string, std::shared_ptr<Entry>> sessions;
    std::map<std::string, std::string> create_keys;
    std::mutex mesh_mu;

    fs::path sessions_dir() const { return cfg.data_dir / "sessions"; }
    fs::path meshes_dir() const { return cfg.data_dir / "meshes"; }

    explicit Impl(ServiceConfig c) : cfg(std::move(c)) {
        fs::create_directories(sessions_dir());
        fs::create_directories(meshes_dir());
        for (const auto& [name, path] : cfg.checkpoints) models.emplace(name, load_checkpoint(path.string()).model);
        recover();
        routes();
    }

    void log_warning(const std::string& msg) {
        sink(json{{"ts", now_iso8601()}, {"level", "warning"}, {"message", msg}}.dump());
    }

    void recover() {
        for (const auto& p : log_files(cfg.data_dir)) {
            try {
                auto r = replay_log(p, true);
                if (!r.session) continue;
                auto e = std::make_shared<Entry>();
                e->session = std::move(*r.session);
                e->log = p;
                e->events = r.events;
                e->choice_replies = std::move(r.choice_replies);
                for (auto& [k, id] : r.create_keys) create_keys[k] = id;
                write_snapshot(*e);
                sessions[e->session.session_id] = std::move(e);
            } catch (const std::exception& ex) {
                log_warning("skipping " + p.string() + ": " + ex.what());
            }
        }
    }

    void write_snapshot(const Entry& e) const {
        json j = session_json(e.session);
        j["events"] = e.events;
        j["written"] = now_iso8601();
        write_atomic(sessions_dir() / (e.session.session_id + ".snapshot.json"), j.dump(2));
    }

    void committed(Entry& e) const {
        ++e.events;
        if (e.events % cfg.snapshot_every == 0 || e.session.complete()) write_snapshot(e);
    }

    std::shared_ptr<Entry> find(const std::string& id) const {
        std::lock_guard lock(registry_mu);
        auto it = sessions.find(id);
        if (it == sessions.end()) throw HttpError{404, "unknown session '" + id + "'"};
        return it->second;
    }

    std::vector<AnnotationSession> snapshot_sessions(const std::function<bool(const AnnotationSession&)>& keep) const {
        std::vector<std::shared_ptr<Entry>> entries;
        {
            std::lock_guard lock(registry_mu);
            for (const auto& [id, e] : sessions) entries.push_back(e);
        }
        std::vector<AnnotationSession> out;
        for (const auto& e : entries) {
            std::lock_guard lock(e->mu);
            if (keep(e->session)) out.push_back(e->session);
        }
        return out;
    }

    bool mesh_registered(const std::string& id) const {
        std::vector<std::shared_ptr<Entry>> entries;
        {
            std::lock_guard lock(registry_mu);
            for (const auto& [sid, e] : sessions) entries.push_back(e);
        }
        for (const auto& e : entries) {
            std::lock_guard lock(e->mu);
            if (e->session.index_of(id) < e->session.mesh_ids.size()) return true;
        }
        return false;
    }

    std::map<std::string, std::string> mesh_files(std::span<const AnnotationSession> list) const {
        std::map<std::string, std::string> out;
        for (const auto& s : list) {
            for (const auto& id : s.mesh_ids) {
                if (auto f = find_mesh_file(cfg.data_dir, cfg.mesh_root, id)) {
                    std::error_code ec;
                    auto rel = fs::relative(*f, cfg.data_dir, ec);
                    out[id] = (ec || rel.empty() ? *f : rel).generic_string();
                }
            }
        }
        return out;
    }

    // Handlers ---------------------------------------------------------------

    void create(const httplib::Request& req, httplib::Response& res) {
        const json body = parse_body(req);
        const std::string object_id = required_string(body, "object_id");
        auto ids_it = body.find("mesh_ids");
        if (ids_it == body.end() || !ids_it->is_array()) throw HttpError{400, "'mesh_ids' must be an array"};
        std::vector<std::string> mesh_ids;
        for (const auto& v : *ids_it) {
            if (!v.is_string()) throw HttpError{400, "'mesh_ids' must contain strings"};
            mesh_ids.push_back(v.get<std::string>());
        }
        std::optional<std::uint64_t> seed;
        if (auto it = body.find("seed"); it != body.end() && !it->is_null()) {
            if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<long long>() >= 0)) {
                throw HttpError{400, "'seed' must be a non-negative integer"};
            }
            seed = it->get<std::uint64_t>();
        }
        std::string subject_id;
        if (auto it = body.find("subject_id"); it != body.end() && !it->is_null()) {
            if (!it->is_string()) throw HttpError{400, "'subject_id' must be a string"};
            subject_id = it->get<std::string>();
        }
        if (!valid_id(object_id)) throw HttpError{400, "invalid object_id '" + object_id + "'"};
        for (const auto& id : mesh_ids) {
            if (!valid_id(id)) throw HttpError{400, "invalid mesh id '" + id + "'"};
        }
        const std::string key = idempotency_key(req, body);

        std::lock_guard lock(registry_mu);
        if (!key.empty()) {
            if (auto it = create_keys.find(key); it != create_keys.end()) {
                const auto& e = sessions.at(it->second);
                std::lock_guard elock(e->mu);
                const auto& s = e->session;
                if (s.object_id != object_id || s.mesh_ids != mesh_ids || s.subject_id != subject_id ||
                    (seed && *seed != s.seed)) {
                    throw HttpError{409, "idempotency key reused with a different request"};
                }
                res.set_header("Location", "/sessions/" + s.session_id);
                send_json(res, 201, session_json(s));
                return;
            }
        }

        std::string session_id;
        if (auto it = body.find("session_id"); it != body.end() && !it->is_null()) {
            if (!it->is_string() || !valid_id(it->get<std::string>())) throw HttpError{400, "invalid session_id"};
            session_id = it->get<std::string>();
            if (sessions.count(session_id)) throw HttpError{409, "session '" + session_id + "' already exists"};
        } else {
            std::random_device rd;
            do {
                char buf[17];
                std::snprintf(buf, sizeof buf, "%08x%08x", rd(), rd());
                session_id = buf;
            } while (sessions.count(session_id));
        }
        if (!seed) {
            std::random_device rd;
            seed = (static_cast<std::uint64_t>(rd()) << 32) | rd();
        }

        AnnotationSession s;
        try {
            s = create_session(object_id, mesh_ids, *seed, session_id, subject_id);
        } catch (const Error& e) {
            throw HttpError{400, e.what()};
        }

        if (auto it = body.find("meshes"); it != body.end() && !it->is_null()) store_meshes(*it, s);

        auto entry = std::make_shared<Entry>();
        entry->log = sessions_dir() / (session_id + ".jsonl");
        append_durable(entry->log, [&] {
            auto ev = create_event(s, now_iso8601());
            ev.key = key;
            return ev.to_json_line();
        }(), true);
        entry->session = std::move(s);
        committed(*entry);
        if (!key.empty()) create_keys[key] = session_id;
        const json out = session_json(entry->session);
        sessions[session_id] = std::move(entry);
        res.set_header("Location", "/sessions/" + session_id);
        send_json(res, 201, out);
    }

    // Uploaded mesh bytes: {"<id>": {"format": "obj"|"ply", "data": text} or
    // {"format": ..., "data_base64": ...}}.
    void store_meshes(const json& meshes, const AnnotationSession& s) {
        if (!meshes.is_object()) throw HttpError{400, "'meshes' must be an object keyed by mesh id"};
        std::vector<std::pair<fs::path, std::string>> files;
        for (const auto& [id, spec] : meshes.items()) {
            if (s.index_of(id) >= s.mesh_ids.size()) throw HttpError{400, "uploaded mesh '" + id + "' is not in mesh_ids"};
            if (!spec.is_object()) throw HttpError{400, "mesh '" + id + "' must be an object"};
            std::string bytes;
            if (auto d = spec.find("data"); d != spec.end() && d->is_string()) {
                bytes = d->get<std::string>();
            } else if (auto b = spec.find("data_base64"); b != spec.end() && b->is_string()) {
                auto decoded = decode_base64(b->get<std::string>());
                if (!decoded) throw HttpError{400, "mesh '" + id + "': invalid base64"};
                bytes = std::move(*decoded);
            } else {
                throw HttpError{400, "mesh '" + id + "' needs 'data' or 'data_base64'"};
            }
            std::string format = spec.value("format", "");
            if (format.empty()) format = bytes.rfind("ply", 0) == 0 ? "ply" : "obj";
            if (format != "obj" && format != "ply") throw HttpError{400, "mesh '" + id + "': format must be obj or ply"};
            try {
                parse_mesh(bytes, id).validate();
            } catch (const Error& e) {
                throw HttpError{400, "mesh '" + id + "': " + e.what()};
            }
            files.emplace_back(meshes_dir() / (id + "." + format), std::move(bytes));
        }
        std::lock_guard lock(mesh_mu);
        for (const auto& [path, bytes] : files) {
            std::error_code ec;
            if (fs::exists(path, ec)) {
                if (read_file(path) != bytes) {
                    throw HttpError{409, "mesh '" + path.stem().string() + "' is already stored with different content"};
                }
                continue;
            }
            write_atomic(path, bytes);
        }
    }

    void get_session(const httplib::Request& req, httplib::Response& res) {
        auto e = find(req.matches[1]);
        std::lock_guard lock(e->mu);
        send_json(res, 200, session_json(e->session));
    }

    void next(const httplib::Request& req, httplib::Response& res) {
        auto e = find(req.matches[1]);
        std::lock_guard lock(e->mu);
        if (e->session.complete()) throw HttpError{409, "session is complete"};
        if (!e->session.pending) {
            AnnotationSession copy = e->session;
            const RoundPairing p = next_pairings(copy);
            append_durable(e->log, round_event(copy, p, now_iso8601()).to_json_line(), false);
            e->session = std::move(copy);
            committed(*e);
        }
        const auto& pend = *e->session.pending;
        json pairs = json::array();
        for (std::size_t i = 0; i < pend.pairing.pairs.size(); ++i) {
            if (pend.winners[i]) continue;
            pairs.push_back({{"left_mesh", pend.pairing.pairs[i].a}, {"right_mesh", pend.pairing.pairs[i].b}});
        }
        json out = {{"session_id", e->session.session_id},
                    {"round", pend.pairing.round},
                    {"rounds_total", kSwissRounds},
                    {"pairs", pairs},
                    {"total_pairs", pend.pairing.pairs.size()},
                    {"remaining_pairs", pairs.size()}};
        if (pend.pairing.bye) out["bye"] = *pend.pairing.bye;
        send_json(res, 200, out);
    }

    void choice(const httplib::Request& req, httplib::Response& res) {
        auto e = find(req.matches[1]);
        const json body = parse_body(req);
        const std::string left = required_string(body, "left_mesh");
        const std::string right = required_string(body, "right_mesh");
        const std::string winner = required_string(body, "winner");
        const std::string key = idempotency_key(req, body);

        std::lock_guard lock(e->mu);
        if (!key.empty()) {
            if (auto it = e->choice_replies.find(key); it != e->choice_replies.end()) {
                const auto& [pair, reply] = it->second;
                if (!((pair.a == left && pair.b == right) || (pair.a == right && pair.b == left))) {
                    throw HttpError{409, "idempotency key reused with a different pair"};
                }
                res.status = 200;
                res.set_content(reply, "application/json");
                return;
            }
        }
        AnnotationSession copy = e->session;
        ChoiceOutcome outcome;
        try {
            outcome = record_choice(copy, left, right, winner);
        } catch (const SessionError& err) {
            using K = SessionError::Kind;
            switch (err.kind()) {
                case K::Duplicate: {
                    json extra = json::object();
                    if (auto o = find_outcome(e->session, left, right)) extra["outcome"] = outcome_json(*o);
                    throw HttpError{409, err.what(), extra};
                }
                case K::InvalidWinner:
                    throw HttpError{422, err.what()};
                case K::UnknownPair:
                case K::Sequencing:
                case K::Incomplete:
                    throw HttpError{409, err.what()};
                case K::Invalid:
                    break;
            }
            throw HttpError{400, err.what()};
        }
        append_durable(e->log, choice_event(copy, outcome, now_iso8601(), key).to_json_line(), false);
        e->session = std::move(copy);
        committed(*e);
        const std::string reply = choice_body(e->session, outcome).dump();
        if (!key.empty()) e->choice_replies[key] = {outcome.pair, reply};
        res.status = 200;
        res.set_content(reply, "application/json");
    }

    void export_session(const httplib::Request& req, httplib::Response& res) {
        auto e = find(req.matches[1]);
        AnnotationSession s;
        {
            std::lock_guard lock(e->mu);
            s = e->session;
        }
        if (!s.complete()) throw HttpError{409, "session is incomplete"};
        const Dataset d = export_dataset(std::span<const AnnotationSession>(&s, 1), mesh_files({&s, 1}));
        send_json(res, 200, json::parse(dataset_to_json(d)));
    }

    void dataset(const httplib::Request& req, httplib::Response& res) {
        std::string name = req.matches[1];
        if (name.size() > 5 && name.ends_with(".json")) name.resize(name.size() - 5);
        if (!valid_id(name)) throw HttpError{404, "unknown dataset '" + name + "'"};
        const fs::path file = cfg.data_dir / "datasets" / (name + ".json");
        std::error_code ec;
        if (fs::is_regular_file(file, ec)) {
            res.status = 200;
            res.set_content(read_file(file), "application/json");
            return;
        }
        const auto list = snapshot_sessions([&](const AnnotationSession& s) { return s.object_id == name; });
        if (list.empty()) throw HttpError{404, "unknown dataset '" + name + "'"};
        if (std::none_of(list.begin(), list.end(), [](const AnnotationSession& s) { return s.complete(); })) {
            throw HttpError{409, "no completed session for object '" + name + "'"};
        }
        const Dataset d = export_dataset(list, mesh_files(list));
        send_json(res, 200, json::parse(dataset_to_json(d)));
    }

    void score(const httplib::Request& req, httplib::Response& res) {
        std::string checkpoint = req.get_param_value("checkpoint");
        std::string bytes = req.body;
        std::string name = req.get_param_value("name");
        if (req.is_multipart_form_data()) {
            if (!req.has_file("mesh")) throw HttpError{422, "multipart upload needs a 'mesh' part"};
            const auto file = req.get_file_value("mesh");
            bytes = file.content;
            if (name.empty()) name = fs::path(file.filename).stem().string();
            if (checkpoint.empty() && req.has_file("checkpoint")) checkpoint = req.get_file_value("checkpoint").content;
        }
        if (bytes.size() > cfg.max_upload_bytes) {
            throw HttpError{413, "mesh exceeds " + std::to_string(cfg.max_upload_bytes) + " bytes"};
        }
        if (checkpoint.empty()) {
            if (models.size() == 1) {
                checkpoint = models.begin()->first;
            } else {
                checkpoint = "default";
            }
        }
        auto it = models.find(checkpoint);
        if (it == models.end()) throw HttpError{404, "unknown checkpoint '" + checkpoint + "'"};
        Mesh mesh;
        try {
            mesh = parse_mesh(bytes, name);
            mesh.validate();
        } catch (const Error& e) {
            throw HttpError{422, std::string("unparseable mesh: ") + e.what()};
        }
        double value = 0.0;
        try {
            value = score_mesh(mesh, it->second).value;
        } catch (const ValidationError& e) {
            throw HttpError{422, e.what()};
        } catch (const DegenerateGeometryError& e) {
            throw HttpError{422, e.what()};
        }
        send_json(res, 200, {{"realism", value}, {"checkpoint", checkpoint}, {"mesh", mesh.name}});
    }

    void mesh(const httplib::Request& req, httplib::Response& res) {
        std::string id = req.matches[1];
        for (const char* ext : {".obj", ".ply"}) {
            if (id.size() > 4 && id.ends_with(ext)) id.resize(id.size() - 4);
        }
        if (!valid_id(id) || !mesh_registered(id)) throw HttpError{404, "unknown mesh '" + id + "'"};
        const auto file = find_mesh_file(cfg.data_dir, cfg.mesh_root, id);
        if (!file) throw HttpError{404, "no stored file for mesh '" + id + "'"};
        res.status = 200;
        res.set_content(read_file(*file), file->extension() == ".ply" ? "application/x-ply" : "model/obj");
    }

    // Wiring -----------------------------------------------------------------

    template <typename F>
    httplib::Server::Handler wrap(F f) {
        return [this, f](const httplib::Request& req, httplib::Response& res) {
            try {
                (this->*f)(req, res);
            } catch (const HttpError& e) {
                json body = e.extra;
                body["error"] = e.message;
                body["status"] = e.status;
                send_json(res, e.status, body);
            } catch (const std::exception& e) {
                send_json(res, 500, {{"error", e.what()}, {"status", 500}});
            }
        };
    }

    void routes() {
        server.new_task_queue = [n = cfg.threads] { return new httplib::ThreadPool(n); };
        server.set_payload_max_length(cfg.max_upload_bytes);

        server.Post("/sessions", wrap(&Impl::create));
        server.Get(R"(/sessions/([^/]+))", wrap(&Impl::get_session));
        server.Get(R"(/sessions/([^/]+)/next)", wrap(&Impl::next));
        server.Post(R"(/sessions/([^/]+)/choice)", wrap(&Impl::choice));
        server.Get(R"(/sessions/([^/]+)/export)", wrap(&Impl::export_session));
        server.Get(R"(/datasets/([^/]+))", wrap(&Impl::dataset));
        server.Post("/score", wrap(&Impl::score));
        server.Get(R"(/meshes/([^/]+))", wrap(&Impl::mesh));
        server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
            std::size_t n = 0;
            {
                std::lock_guard lock(registry_mu);
                n = sessions.size();
            }
            send_json(res, 200, {{"status", "ok"}, {"sessions", n}, {"checkpoints", models.size()}});
        });
        server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (!res.body.empty()) return;
            const char* msg = res.status == 413 ? "request body too large" : "not found";
            send_json(res, res.status, {{"error", msg}, {"status", res.status}});
        });
        server.set_post_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
            if (cfg.cors_origins.empty() || !req.has_header("Origin")) return;
            const std::string origin = req.get_header_value("Origin");
            const bool any = std::find(cfg.cors_origins.begin(), cfg.cors_origins.end(), "*") != cfg.cors_origins.end();
            if (!any && std::find(cfg.cors_origins.begin(), cfg.cors_origins.end(), origin) == cfg.cors_origins.end()) {
                return;
            }
            res.set_header("Access-Control-Allow-Origin", any ? "*" : origin);
            res.set_header("Vary", "Origin");
            res.set_header("Access-Control-Allow-Methods", "GET, HEAD, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type, Idempotency-Key");
            res.set_header("Access-Control-Max-Age", "600");
        });
        server.set_logger([this](const httplib::Request& req, const httplib::Response& res) {
            sink(json{{"ts", now_iso8601()},
                      {"method", req.method},
                      {"path", req.path},
                      {"status", res.status},
                      {"bytes_in", req.body.size()},
                      {"bytes_out", res.body.size()},
                      {"remote", req.remote_addr}}
                     .dump());
        });
    }
};

Service::Service(ServiceConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}

Service::~Service() { stop(); }

int Service::bind() {
    auto& s = impl_->server;
    if (impl_->cfg.port == 0) {
        impl_->bound_port = s.bind_to_any_port(impl_->cfg.host);
    } else if (s.bind_to_port(impl_->cfg.host, impl_->cfg.port)) {
        impl_->bound_port = impl_->cfg.port;
    } else {
        impl_->bound_port = -1;
    }
    if (impl_->bound_port < 0) {
        throw Error("cannot bind " + impl_->cfg.host + ":" + std::to_string(impl_->cfg.port));
    }
    return impl_->bound_port;
}

void Service::listen() {
    if (impl_->bound_port < 0) throw Error("listen: bind() has not succeeded");
    impl_->server.listen_after_bind();
}

int Service::start() {
    const int port = bind();
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port;
}

void Service::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

void Service::set_log_sink(std::function<void(const std::string&)> sink) { impl_->sink = std::move(sink); }

const ServiceConfig& Service::config() const noexcept { return impl_->cfg; }

std::optional<AnnotationSession> Service::session(const std::string& id) const {
    std::shared_ptr<Entry> e;
    {
        std::lock_guard lock(impl_->registry_mu);
        auto it = impl_->sessions.find(id);
        if (it == impl_->sessions.end()) return std::nullopt;
        e = it->second;
    }
    std::lock_guard lock(e->mu);
    return e->session;
}

std::vector<std::string> Service::session_ids() const {
    std::lock_guard lock(impl_->registry_mu);
    std::vector<std::string> out;
    for (const auto& [id, e] : impl_->sessions) out.push_back(id);
    return out;
}

std::vector<std::string> Service::checkpoint_names() const {
    std::vector<std::string> out;
    for (const auto& [name, m] : impl_->models) out.push_back(name);
    return out;
}

}  // namespace realism::service
