// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "realism/annotation.hpp"
#include "realism/dataset.hpp"

namespace realism::service {

/// Server settings, read from a `key = value` file and REALISM_* variables.
struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path data_dir = "realism-data";
    std::filesystem::path mesh_root;  // read-only meshes looked up as <id>.obj / <id>.ply
    std::map<std::string, std::filesystem::path> checkpoints;  // name -> file
    std::size_t max_upload_bytes = 16u << 20;
    std::vector<std::string> cors_origins;  // "*" allows any origin
    std::size_t snapshot_every = 16;        // events between snapshots
    std::size_t threads = 8;

    /// Keys: host, port, data_dir, mesh_root, checkpoint (name=path or a bare
    /// path named "default"), max_upload_bytes, cors_origins (comma list),
    /// snapshot_every, threads.
    void set(std::string_view key, std::string_view value);

    static ServiceConfig parse(std::string_view text);
    static ServiceConfig load(const std::filesystem::path& path);
};

/// REALISM_HOST, REALISM_PORT, REALISM_DATA_DIR, REALISM_MESH_ROOT,
/// REALISM_CHECKPOINT, REALISM_MAX_UPLOAD_BYTES, REALISM_CORS_ORIGINS.
void apply_environment(ServiceConfig& cfg,
                       const std::function<const char*(const char*)>& getenv = [](const char* k) {
                           return std::getenv(k);
                       });

/// Sessions reconstructed from a data directory's event logs.
struct StoredSessions {
    std::vector<AnnotationSession> sessions;  // sorted by session id
    std::map<std::string, std::string> mesh_files;
    std::vector<std::string> warnings;
};

/// Replays every `sessions/*.jsonl` under `data_dir` (or `data_dir/*.jsonl`
/// when there is no sessions directory). Mesh files resolve against
/// `data_dir/meshes` and then `mesh_root`.
StoredSessions load_sessions(const std::filesystem::path& data_dir, const std::filesystem::path& mesh_root = {});

/// Safe as a path component: [A-Za-z0-9_.-], not starting with '.'.
bool valid_id(std::string_view id);

class Service {
public:
    explicit Service(ServiceConfig cfg);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds to cfg.host; port 0 picks a free port. Returns the bound port.
    int bind();
    /// Serves until stop(); bind() must have succeeded.
    void listen();
    /// bind() then listen() on a background thread; returns the port.
    int start();
    void stop();

    /// Receives one JSON line per handled request. Defaults to stderr.
    void set_log_sink(std::function<void(const std::string&)> sink);

    [[nodiscard]] const ServiceConfig& config() const noexcept;
    [[nodiscard]] std::optional<AnnotationSession> session(const std::string& id) const;
    [[nodiscard]] std::vector<std::string> session_ids() const;
    [[nodiscard]] std::vector<std::string> checkpoint_names() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace realism::service
