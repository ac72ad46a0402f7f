// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace realism {

inline constexpr int kSwissRounds = 6;
inline constexpr std::size_t kMinSessionMeshes = 2;
inline constexpr std::size_t kMaxSessionMeshes = 64;

struct MeshPair {
    std::string a, b;
    friend bool operator==(const MeshPair&, const MeshPair&) = default;
};

struct RoundPairing {
    int round = 0;  // 1-based
    std::vector<MeshPair> pairs;
    std::optional<std::string> bye;
    friend bool operator==(const RoundPairing&, const RoundPairing&) = default;
};

struct ChoiceOutcome {
    int round = 0;
    MeshPair pair;
    std::string winner;
    bool round_complete = false;
    bool session_complete = false;
    friend bool operator==(const ChoiceOutcome&, const ChoiceOutcome&) = default;
};

/// Single-evaluator Swiss-system state machine. Mesh state is indexed like
/// `mesh_ids`.
struct AnnotationSession {
    std::string session_id;
    std::string object_id;
    std::string subject_id;
    std::vector<std::string> mesh_ids;
    std::uint64_t seed = 0;

    int round = 0;  // completed rounds
    std::vector<int> wins, played, byes;
    std::set<std::pair<std::size_t, std::size_t>> history;  // index pairs, first < second
    std::vector<std::size_t> tiebreak;  // position of each mesh in the seeded order

    struct Pending {
        RoundPairing pairing;
        std::vector<std::pair<std::size_t, std::size_t>> index_pairs;
        std::vector<std::optional<std::size_t>> winners;
    };
    std::optional<Pending> pending;
    std::vector<ChoiceOutcome> outcomes;  // every recorded choice, in order
    int forced_rematches = 0;

    [[nodiscard]] bool complete() const noexcept { return round >= kSwissRounds; }
    [[nodiscard]] std::size_t index_of(std::string_view mesh_id) const;

    friend bool operator==(const AnnotationSession&, const AnnotationSession&);
};

AnnotationSession create_session(std::string object_id, std::vector<std::string> mesh_ids, std::uint64_t seed,
                                 std::string session_id = {}, std::string subject_id = {});

/// Issues the next round. Round 1 follows the seeded order; later rounds pair
/// neighbours by win rate, avoid rematches and give odd counts a bye.
RoundPairing next_pairings(AnnotationSession& s);
/// The issued, not yet fully recorded round.
std::optional<RoundPairing> current_round(const AnnotationSession& s);

/// Accepts the pair in either order.
ChoiceOutcome record_choice(AnnotationSession& s, std::string_view a, std::string_view b, std::string_view winner);
/// The stored outcome for a pair recorded earlier in this session.
std::optional<ChoiceOutcome> find_outcome(const AnnotationSession& s, std::string_view a, std::string_view b);

struct RealismRecord {
    std::string mesh_id;
    std::string subject_id;
    int wins = 0;
    int played = 0;
    double normalized = 0.0;
    friend bool operator==(const RealismRecord&, const RealismRecord&) = default;
};

/// wins / rounds played for every mesh of a completed session.
std::vector<RealismRecord> session_scores(const AnnotationSession& s);

struct AggregateScore {
    std::string mesh_id;
    double mean = 0.0;
    std::size_t n = 0;
    std::optional<double> sigma;  // sample standard deviation, N >= 2
    std::optional<double> ci95;   // 1.96 sigma / sqrt(N), N >= 2
    friend bool operator==(const AggregateScore&, const AggregateScore&) = default;
};

inline constexpr double kZ95 = 1.96;

double ci95(double sigma, std::size_t n);
/// One entry per mesh id, sorted by id.
std::vector<AggregateScore> aggregate(std::span<const RealismRecord> records);

// Append-only event log. Replaying the events of a session rebuilds it.
struct SessionEvent {
    enum class Type { Create, Round, Choice };
    Type type = Type::Create;
    std::string session;
    std::string timestamp;
    std::string key;  // idempotency key, may be empty
    // create
    std::string object_id;
    std::string subject_id;
    std::vector<std::string> meshes;
    std::uint64_t seed = 0;
    // round
    RoundPairing pairing;
    // choice
    int round = 0;
    MeshPair pair;
    std::string winner;

    [[nodiscard]] std::string to_json_line() const;
    static SessionEvent parse(std::string_view line);
    friend bool operator==(const SessionEvent&, const SessionEvent&) = default;
};

SessionEvent create_event(const AnnotationSession& s, std::string timestamp = {});
SessionEvent round_event(const AnnotationSession& s, const RoundPairing& p, std::string timestamp = {});
SessionEvent choice_event(const AnnotationSession& s, const ChoiceOutcome& o, std::string timestamp = {},
                          std::string key = {});

/// Applies one event; round events are checked against the re-derived
/// pairing.
void apply_event(std::optional<AnnotationSession>& s, const SessionEvent& e);
AnnotationSession replay(std::span<const SessionEvent> events);
/// Parses JSON lines; a truncated final line is ignored.
std::vector<SessionEvent> parse_event_log(std::string_view text);

}  // namespace realism
