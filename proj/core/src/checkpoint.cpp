// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include "realism/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "json_io.hpp"
#include "realism/errors.hpp"

namespace realism {

using json_io::json;

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t hash) noexcept {
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

namespace {

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::string_view in) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[i])) << (8 * i);
    return v;
}

void put_f32(std::string& out, float f) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float get_f32(const char* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return std::bit_cast<float>(bits);
}

}  // namespace

std::string serialize_checkpoint(const ModelBundle& model, const CheckpointInfo& info) {
    json manifest = json::array();
    std::string payload;
    ModelBundle::visit(model, [&](const std::string& name, const Matrix& m) {
        manifest.push_back({{"name", name},
                            {"dtype", "f32"},
                            {"shape", {m.rows(), m.cols()}},
                            {"offset", payload.size()}});
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            const auto f = static_cast<float>(m.data()[i]);
            if (!std::isfinite(f)) throw CheckpointError("tensor " + name + " is not representable as f32");
            put_f32(payload, f);
        }
    });
    json header = {{"format", "realism-checkpoint"},
                   {"version", kCheckpointVersion},
                   {"model", json_io::to_json(model.config)},
                   {"train", info.train ? json_io::to_json(*info.train) : json(nullptr)},
                   {"seed", info.seed},
                   {"steps", info.steps},
                   {"payload_bytes", payload.size()},
                   {"tensors", manifest}};
    const std::string h = header.dump();
    std::string out(kCheckpointMagic);
    put_u64(out, h.size());
    out += h;
    out += payload;
    put_u64(out, fnv1a64(payload, fnv1a64(h)));
    return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
    if (bytes.size() < kCheckpointMagic.size() + 8 || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
        throw CheckpointError(bytes.size() < kCheckpointMagic.size() ? "checkpoint truncated before magic"
                                                                    : "not a checkpoint (bad magic)");
    }
    const std::uint64_t hlen = get_u64(bytes.substr(8));
    if (hlen > bytes.size() - 16) throw CheckpointError("checkpoint truncated inside the header");
    const std::string_view h = bytes.substr(16, hlen);

    json header = json::parse(h, nullptr, false);
    if (!header.is_discarded() && header.is_object() && header.contains("version")) {
        const auto& v = header["version"];
        if (!v.is_number_integer() || v.get<int>() != kCheckpointVersion) {
            throw CheckpointError("unsupported checkpoint version " + v.dump() + " (this build reads version " +
                                  std::to_string(kCheckpointVersion) + ")");
        }
    }
    std::uint64_t payload_bytes = 0;
    if (!header.is_discarded() && header.is_object() && header.contains("payload_bytes") &&
        header["payload_bytes"].is_number_unsigned()) {
        payload_bytes = header["payload_bytes"].get<std::uint64_t>();
    } else {
        payload_bytes = bytes.size() >= 24 + hlen ? bytes.size() - 24 - hlen : 0;
    }
    const std::uint64_t need = 16 + hlen + payload_bytes + 8;
    if (bytes.size() < need) {
        throw CheckpointError("checkpoint truncated: " + std::to_string(bytes.size()) + " of " +
                              std::to_string(need) + " bytes");
    }
    if (bytes.size() > need) throw CheckpointError("checkpoint has trailing bytes");
    const std::string_view payload = bytes.substr(16 + hlen, payload_bytes);
    if (fnv1a64(payload, fnv1a64(h)) != get_u64(bytes.substr(need - 8))) {
        throw CheckpointError("checkpoint digest mismatch");
    }
    if (header.is_discarded() || !header.is_object()) throw CheckpointError("checkpoint header is not JSON");

    Checkpoint ck;
    try {
        ck.model = init_model(json_io::model_config(header.at("model")), 0);
        if (!header.at("train").is_null()) ck.info.train = json_io::train_config(header.at("train"));
        ck.info.seed = header.at("seed").get<std::uint64_t>();
        ck.info.steps = header.at("steps").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("checkpoint header: ") + e.what());
    } catch (const ValidationError& e) {
        throw CheckpointError(std::string("checkpoint header: ") + e.what());
    }

    std::map<std::string, const json*> entries;
    for (const auto& t : header.at("tensors")) entries[t.at("name").get<std::string>()] = &t;
    std::set<std::string> seen;
    ModelBundle::visit(ck.model, [&](const std::string& name, Matrix& m) {
        auto it = entries.find(name);
        if (it == entries.end()) throw CheckpointError("checkpoint lacks tensor " + name);
        const json& t = *it->second;
        if (t.at("dtype") != "f32") throw CheckpointError("tensor " + name + " has unsupported dtype");
        const auto shape = t.at("shape").get<std::vector<long>>();
        if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols()) {
            throw CheckpointError("tensor " + name + " has shape " + t.at("shape").dump() + ", expected [" +
                                  std::to_string(m.rows()) + "," + std::to_string(m.cols()) + "]");
        }
        const auto offset = t.at("offset").get<std::uint64_t>();
        const auto count = static_cast<std::uint64_t>(m.size());
        if (offset > payload.size() || count * 4 > payload.size() - offset) {
            throw CheckpointError("tensor " + name + " lies outside the payload");
        }
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            m.data()[i] = static_cast<double>(get_f32(payload.data() + offset + 4 * static_cast<std::uint64_t>(i)));
        }
        seen.insert(name);
    });
    if (seen.size() != entries.size()) throw CheckpointError("checkpoint holds tensors this model does not use");
    return ck;
}

void save_checkpoint(const ModelBundle& model, const std::string& path, const CheckpointInfo& info) {
    const auto bytes = serialize_checkpoint(model, info);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw CheckpointError("cannot open " + tmp + " for writing");
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw CheckpointError("write failed for " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw CheckpointError("cannot move checkpoint into " + path + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open checkpoint " + path);
    const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace realism
