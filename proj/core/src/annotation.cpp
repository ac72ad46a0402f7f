// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include "realism/annotation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>

#include <json.hpp>

#include "realism/errors.hpp"
#include "realism/random.hpp"

namespace realism {

std::size_t AnnotationSession::index_of(std::string_view mesh_id) const {
    for (std::size_t i = 0; i < mesh_ids.size(); ++i) {
        if (mesh_ids[i] == mesh_id) return i;
    }
    return mesh_ids.size();
}

bool operator==(const AnnotationSession& x, const AnnotationSession& y) {
    auto pending_eq = [](const std::optional<AnnotationSession::Pending>& p,
                         const std::optional<AnnotationSession::Pending>& q) {
        if (p.has_value() != q.has_value()) return false;
        if (!p) return true;
        return p->pairing == q->pairing && p->index_pairs == q->index_pairs && p->winners == q->winners;
    };
    return x.session_id == y.session_id && x.object_id == y.object_id && x.subject_id == y.subject_id &&
           x.mesh_ids == y.mesh_ids && x.seed == y.seed && x.round == y.round && x.wins == y.wins &&
           x.played == y.played && x.byes == y.byes && x.history == y.history && x.tiebreak == y.tiebreak &&
           pending_eq(x.pending, y.pending) && x.outcomes == y.outcomes && x.forced_rematches == y.forced_rematches;
}

AnnotationSession create_session(std::string object_id, std::vector<std::string> mesh_ids, std::uint64_t seed,
                                 std::string session_id, std::string subject_id) {
    if (mesh_ids.size() < kMinSessionMeshes) throw ValidationError("a session needs at least 2 meshes");
    if (mesh_ids.size() > kMaxSessionMeshes) throw ValidationError("a session takes at most 64 meshes");
    std::set<std::string> seen;
    for (const auto& id : mesh_ids) {
        if (id.empty()) throw ValidationError("mesh ids must not be empty");
        if (!seen.insert(id).second) throw ValidationError("duplicate mesh id '" + id + "'");
    }
    AnnotationSession s;
    s.session_id = std::move(session_id);
    s.object_id = std::move(object_id);
    s.subject_id = std::move(subject_id);
    s.mesh_ids = std::move(mesh_ids);
    s.seed = seed;
    const std::size_t m = s.mesh_ids.size();
    s.wins.assign(m, 0);
    s.played.assign(m, 0);
    s.byes.assign(m, 0);
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, 7));
    rng.shuffle(order);
    s.tiebreak.assign(m, 0);
    for (std::size_t pos = 0; pos < m; ++pos) s.tiebreak[order[pos]] = pos;
    return s;
}

namespace {

using Adj = std::vector<std::uint64_t>;
using IndexPairs = std::vector<std::pair<std::size_t, std::size_t>>;

constexpr long kNodeBudget = 200000;

// Existence search for `rounds` more rematch-free rounds. Returns false when
// none exists or the budget runs out.
class Lookahead {
public:
    Lookahead(std::size_t m, long& budget) : m_(m), budget_(budget) {}

    bool feasible(Adj& adj, std::vector<int>& byes, int rounds) {
        if (rounds == 0) return true;
        std::uint64_t free = m_ == 64 ? ~0ULL : ((1ULL << m_) - 1);
        if (m_ % 2 == 1) {
            const int least = *std::min_element(byes.begin(), byes.end());
            for (std::size_t b = 0; b < m_; ++b) {
                if (byes[b] != least) continue;
                byes[b] += 1;
                const bool ok = match(adj, byes, free & ~(1ULL << b), rounds);
                byes[b] -= 1;
                if (ok) return true;
                if (budget_ <= 0) return false;
            }
            return false;
        }
        return match(adj, byes, free, rounds);
    }

private:
    bool match(Adj& adj, std::vector<int>& byes, std::uint64_t free, int rounds) {
        if (--budget_ <= 0) return false;
        if (free == 0) return feasible(adj, byes, rounds - 1);
        const auto a = static_cast<std::size_t>(std::countr_zero(free));
        std::uint64_t options = free & ~(1ULL << a) & ~adj[a];
        while (options) {
            const auto b = static_cast<std::size_t>(std::countr_zero(options));
            options &= options - 1;
            adj[a] |= 1ULL << b;
            adj[b] |= 1ULL << a;
            const bool ok = match(adj, byes, free & ~(1ULL << a) & ~(1ULL << b), rounds);
            adj[a] &= ~(1ULL << b);
            adj[b] &= ~(1ULL << a);
            if (ok) return true;
            if (budget_ <= 0) return false;
        }
        return false;
    }

    std::size_t m_;
    long& budget_;
};

struct Planner {
    const AnnotationSession& s;
    Adj adj;
    std::vector<int> byes;
    int rounds_after;
    long budget = kNodeBudget;
    IndexPairs chosen;

    // Pairs entries of `ranked` in order, each with the best-ranked legal
    // partner first.
    bool dfs(std::vector<std::size_t>& ranked, std::vector<bool>& used) {
        if (--budget <= 0) return false;
        auto first = std::find_if(ranked.begin(), ranked.end(), [&](std::size_t i) { return !used[i]; });
        if (first == ranked.end()) {
            Lookahead la(s.mesh_ids.size(), budget);
            return la.feasible(adj, byes, rounds_after);
        }
        const std::size_t a = *first;
        used[a] = true;
        for (auto it = first + 1; it != ranked.end(); ++it) {
            const std::size_t b = *it;
            if (used[b] || (adj[a] >> b & 1ULL)) continue;
            used[b] = true;
            adj[a] |= 1ULL << b;
            adj[b] |= 1ULL << a;
            chosen.emplace_back(a, b);
            if (dfs(ranked, used)) return true;
            chosen.pop_back();
            adj[a] &= ~(1ULL << b);
            adj[b] &= ~(1ULL << a);
            used[b] = false;
            if (budget <= 0) break;
        }
        used[a] = false;
        return false;
    }
};

bool ranks_before(const AnnotationSession& s, std::size_t x, std::size_t y) {
    // Compare win rates exactly; no games yet counts as rate 0.
    const long wx = s.wins[x], px = std::max(s.played[x], 1);
    const long wy = s.wins[y], py = std::max(s.played[y], 1);
    if (wx * py != wy * px) return wx * py > wy * px;
    return s.tiebreak[x] < s.tiebreak[y];
}

}  // namespace

std::optional<RoundPairing> current_round(const AnnotationSession& s) {
    if (!s.pending) return std::nullopt;
    return s.pending->pairing;
}

RoundPairing next_pairings(AnnotationSession& s) {
    if (s.complete()) throw SessionError(SessionError::Kind::Sequencing, "session is complete");
    if (s.pending) {
        throw SessionError(SessionError::Kind::Sequencing,
                           "round " + std::to_string(s.pending->pairing.round) + " still has unresolved pairs");
    }
    const std::size_t m = s.mesh_ids.size();
    std::vector<std::size_t> ranked(m);
    std::iota(ranked.begin(), ranked.end(), std::size_t{0});
    std::sort(ranked.begin(), ranked.end(), [&](std::size_t x, std::size_t y) { return ranks_before(s, x, y); });

    Adj adj(m, 0);
    for (const auto& [a, b] : s.history) {
        adj[a] |= 1ULL << b;
        adj[b] |= 1ULL << a;
    }

    std::vector<std::optional<std::size_t>> bye_options;
    if (m % 2 == 1) {
        const int least = *std::min_element(s.byes.begin(), s.byes.end());
        for (auto it = ranked.rbegin(); it != ranked.rend(); ++it) {
            if (s.byes[*it] == least) bye_options.emplace_back(*it);
        }
    } else {
        bye_options.emplace_back(std::nullopt);
    }

    Planner planner{s, adj, s.byes, kSwissRounds - s.round - 1, kNodeBudget, {}};
    std::optional<std::size_t> bye;
    bool found = false;
    for (const auto& option : bye_options) {
        std::vector<std::size_t> pool;
        for (auto i : ranked) {
            if (!option || i != *option) pool.push_back(i);
        }
        std::vector<bool> used(m, false);
        planner.adj = adj;
        planner.byes = s.byes;
        if (option) planner.byes[*option] += 1;
        planner.chosen.clear();
        if (planner.dfs(pool, used)) {
            bye = option;
            found = true;
            break;
        }
        if (planner.budget <= 0) break;
    }

    IndexPairs pairs;
    if (found) {
        pairs = planner.chosen;
    } else {
        // No rematch-free continuation exists (or the search gave up): pair
        // greedily, preferring fresh opponents, and count the rematches.
        bye = bye_options.front();
        std::vector<bool> used(m, false);
        if (bye) used[*bye] = true;
        for (std::size_t k = 0; k < ranked.size(); ++k) {
            const std::size_t a = ranked[k];
            if (used[a]) continue;
            used[a] = true;
            std::optional<std::size_t> partner;
            for (std::size_t t = k + 1; t < ranked.size(); ++t) {
                const std::size_t b = ranked[t];
                if (used[b]) continue;
                if (!(adj[a] >> b & 1ULL)) {
                    partner = b;
                    break;
                }
                if (!partner) partner = b;
            }
            used[*partner] = true;
            if (adj[a] >> *partner & 1ULL) s.forced_rematches += 1;
            pairs.emplace_back(a, *partner);
        }
    }

    AnnotationSession::Pending p;
    p.pairing.round = s.round + 1;
    for (const auto& [a, b] : pairs) p.pairing.pairs.push_back({s.mesh_ids[a], s.mesh_ids[b]});
    if (bye) p.pairing.bye = s.mesh_ids[*bye];
    p.index_pairs = pairs;
    p.winners.assign(pairs.size(), std::nullopt);
    s.pending = std::move(p);
    return s.pending->pairing;
}

std::optional<ChoiceOutcome> find_outcome(const AnnotationSession& s, std::string_view a, std::string_view b) {
    for (const auto& o : s.outcomes) {
        if ((o.pair.a == a && o.pair.b == b) || (o.pair.a == b && o.pair.b == a)) return o;
    }
    return std::nullopt;
}

ChoiceOutcome record_choice(AnnotationSession& s, std::string_view a, std::string_view b, std::string_view winner) {
    const std::string pair_text = "(" + std::string(a) + ", " + std::string(b) + ")";
    if (!s.pending) {
        if (find_outcome(s, a, b)) throw SessionError(SessionError::Kind::Duplicate, "pair " + pair_text + " already recorded");
        throw SessionError(SessionError::Kind::UnknownPair, "no round is open; pair " + pair_text + " was not issued");
    }
    auto& p = *s.pending;
    std::size_t slot = p.pairing.pairs.size();
    for (std::size_t k = 0; k < p.pairing.pairs.size(); ++k) {
        const auto& q = p.pairing.pairs[k];
        if ((q.a == a && q.b == b) || (q.a == b && q.b == a)) slot = k;
    }
    if (slot == p.pairing.pairs.size()) {
        if (find_outcome(s, a, b)) throw SessionError(SessionError::Kind::Duplicate, "pair " + pair_text + " already recorded");
        throw SessionError(SessionError::Kind::UnknownPair, "pair " + pair_text + " is not part of the current round");
    }
    if (p.winners[slot]) throw SessionError(SessionError::Kind::Duplicate, "pair " + pair_text + " already recorded");
    if (winner != a && winner != b) {
        throw SessionError(SessionError::Kind::InvalidWinner,
                           "winner '" + std::string(winner) + "' is not in pair " + pair_text);
    }
    const auto [ia, ib] = p.index_pairs[slot];
    const std::size_t iw = s.mesh_ids[ia] == winner ? ia : ib;
    p.winners[slot] = iw;
    s.wins[iw] += 1;
    s.played[ia] += 1;
    s.played[ib] += 1;
    s.history.insert({std::min(ia, ib), std::max(ia, ib)});

    ChoiceOutcome out;
    out.round = p.pairing.round;
    out.pair = p.pairing.pairs[slot];
    out.winner = s.mesh_ids[iw];
    out.round_complete = std::all_of(p.winners.begin(), p.winners.end(), [](const auto& w) { return w.has_value(); });
    if (out.round_complete) {
        if (p.pairing.bye) s.byes[s.index_of(*p.pairing.bye)] += 1;
        s.round += 1;
        s.pending.reset();
    }
    out.session_complete = s.complete();
    s.outcomes.push_back(out);
    return out;
}

std::vector<RealismRecord> session_scores(const AnnotationSession& s) {
    if (!s.complete()) {
        throw SessionError(SessionError::Kind::Incomplete, "session has completed " + std::to_string(s.round) + " of " +
                                                               std::to_string(kSwissRounds) + " rounds");
    }
    std::vector<RealismRecord> out;
    for (std::size_t i = 0; i < s.mesh_ids.size(); ++i) {
        RealismRecord r;
        r.mesh_id = s.mesh_ids[i];
        r.subject_id = s.subject_id;
        r.wins = s.wins[i];
        r.played = s.played[i];
        r.normalized = r.played > 0 ? static_cast<double>(r.wins) / r.played : 0.0;
        out.push_back(std::move(r));
    }
    return out;
}

double ci95(double sigma, std::size_t n) {
    if (n == 0) throw ValidationError("ci95: N must be positive");
    return kZ95 * sigma / std::sqrt(static_cast<double>(n));
}

std::vector<AggregateScore> aggregate(std::span<const RealismRecord> records) {
    std::map<std::string, std::vector<double>> by_mesh;
    for (const auto& r : records) by_mesh[r.mesh_id].push_back(r.normalized);
    std::vector<AggregateScore> out;
    for (const auto& [id, scores] : by_mesh) {
        AggregateScore a;
        a.mesh_id = id;
        a.n = scores.size();
        a.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(a.n);
        if (a.n >= 2) {
            double ss = 0;
            for (double x : scores) ss += (x - a.mean) * (x - a.mean);
            a.sigma = std::sqrt(ss / static_cast<double>(a.n - 1));
            a.ci95 = ci95(*a.sigma, a.n);
        }
        out.push_back(std::move(a));
    }
    return out;
}

// Event log -------------------------------------------------------------

using nlohmann::json;

std::string SessionEvent::to_json_line() const {
    json j;
    j["session"] = session;
    if (!timestamp.empty()) j["timestamp"] = timestamp;
    if (!key.empty()) j["key"] = key;
    switch (type) {
        case Type::Create:
            j["type"] = "create";
            j["object"] = object_id;
            j["subject"] = subject_id;
            j["meshes"] = meshes;
            j["seed"] = seed;
            break;
        case Type::Round: {
            j["type"] = "round";
            j["round"] = pairing.round;
            json pairs = json::array();
            for (const auto& p : pairing.pairs) pairs.push_back({p.a, p.b});
            j["pairs"] = pairs;
            j["bye"] = pairing.bye ? json(*pairing.bye) : json(nullptr);
            break;
        }
        case Type::Choice:
            j["type"] = "choice";
            j["round"] = round;
            j["pair"] = {pair.a, pair.b};
            j["winner"] = winner;
            break;
    }
    return j.dump();
}

SessionEvent SessionEvent::parse(std::string_view line) {
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ParseError("event log: line is not a JSON object", 0);
    SessionEvent e;
    try {
        e.session = j.at("session").get<std::string>();
        e.timestamp = j.value("timestamp", "");
        e.key = j.value("key", "");
        const auto type = j.at("type").get<std::string>();
        if (type == "create") {
            e.type = Type::Create;
            e.object_id = j.at("object").get<std::string>();
            e.subject_id = j.at("subject").get<std::string>();
            e.meshes = j.at("meshes").get<std::vector<std::string>>();
            e.seed = j.at("seed").get<std::uint64_t>();
        } else if (type == "round") {
            e.type = Type::Round;
            e.pairing.round = j.at("round").get<int>();
            for (const auto& p : j.at("pairs")) e.pairing.pairs.push_back({p.at(0).get<std::string>(), p.at(1).get<std::string>()});
            if (!j.at("bye").is_null()) e.pairing.bye = j.at("bye").get<std::string>();
        } else if (type == "choice") {
            e.type = Type::Choice;
            e.round = j.at("round").get<int>();
            e.pair = {j.at("pair").at(0).get<std::string>(), j.at("pair").at(1).get<std::string>()};
            e.winner = j.at("winner").get<std::string>();
        } else {
            throw ParseError("event log: unknown event type '" + type + "'", 0);
        }
    } catch (const json::exception& ex) {
        throw ParseError(std::string("event log: ") + ex.what(), 0);
    }
    return e;
}

SessionEvent create_event(const AnnotationSession& s, std::string timestamp) {
    SessionEvent e;
    e.type = SessionEvent::Type::Create;
    e.session = s.session_id;
    e.timestamp = std::move(timestamp);
    e.object_id = s.object_id;
    e.subject_id = s.subject_id;
    e.meshes = s.mesh_ids;
    e.seed = s.seed;
    return e;
}

SessionEvent round_event(const AnnotationSession& s, const RoundPairing& p, std::string timestamp) {
    SessionEvent e;
    e.type = SessionEvent::Type::Round;
    e.session = s.session_id;
    e.timestamp = std::move(timestamp);
    e.pairing = p;
    return e;
}

SessionEvent choice_event(const AnnotationSession& s, const ChoiceOutcome& o, std::string timestamp, std::string key) {
    SessionEvent e;
    e.type = SessionEvent::Type::Choice;
    e.session = s.session_id;
    e.timestamp = std::move(timestamp);
    e.key = std::move(key);
    e.round = o.round;
    e.pair = o.pair;
    e.winner = o.winner;
    return e;
}

void apply_event(std::optional<AnnotationSession>& s, const SessionEvent& e) {
    using K = SessionError::Kind;
    if (e.type == SessionEvent::Type::Create) {
        if (s) throw SessionError(K::Invalid, "replay: second create event");
        s = create_session(e.object_id, e.meshes, e.seed, e.session, e.subject_id);
        return;
    }
    if (!s) throw SessionError(K::Invalid, "replay: event before create");
    if (e.session != s->session_id) throw SessionError(K::Invalid, "replay: event for session '" + e.session + "'");
    if (e.type == SessionEvent::Type::Round) {
        const auto p = next_pairings(*s);
        if (!(p == e.pairing)) {
            throw SessionError(K::Invalid, "replay: logged pairing for round " + std::to_string(e.pairing.round) +
                                               " differs from the re-derived one");
        }
        return;
    }
    if (!s->pending) throw SessionError(K::Invalid, "replay: choice without an open round");
    if (e.round != s->pending->pairing.round) throw SessionError(K::Invalid, "replay: choice for a different round");
    record_choice(*s, e.pair.a, e.pair.b, e.winner);
}

AnnotationSession replay(std::span<const SessionEvent> events) {
    std::optional<AnnotationSession> s;
    for (const auto& e : events) apply_event(s, e);
    if (!s) throw SessionError(SessionError::Kind::Invalid, "replay: empty event log");
    return std::move(*s);
}

std::vector<SessionEvent> parse_event_log(std::string_view text) {
    std::vector<SessionEvent> out;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        const bool last = nl == std::string_view::npos;
        const auto line = text.substr(0, last ? text.size() : nl);
        text = last ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(SessionEvent::parse(line));
        } catch (const ParseError& e) {
            // A crash can leave a partial final record without its newline.
            if (last) break;
            throw ParseError(e.what(), line_no);
        }
    }
    return out;
}

}  // namespace realism
