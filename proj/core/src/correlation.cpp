// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include "realism/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "realism/errors.hpp"

namespace realism {

void ScorePairs::validate() const {
    if (predictions.size() != labels.size()) {
        throw ValidationError("score pairs: " + std::to_string(predictions.size()) + " predictions vs " +
                              std::to_string(labels.size()) + " labels");
    }
    if (predictions.size() < 2) throw ValidationError("score pairs: need at least 2 samples");
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (!std::isfinite(predictions[i]) || !std::isfinite(labels[i])) {
            throw ValidationError("score pairs: non-finite value at index " + std::to_string(i));
        }
    }
}

namespace {

double pearson(std::span<const double> x, std::span<const double> y, const char* metric) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw UndefinedCorrelationError(std::string(metric) + " undefined: a sequence has zero variance");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

bool constant(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

}  // namespace

double plcc(const ScorePairs& p) {
    p.validate();
    return pearson(p.predictions, p.labels, "PLCC");
}

std::vector<double> midranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = rank;
        i = j + 1;
    }
    return r;
}

double srocc(const ScorePairs& p) {
    p.validate();
    if (constant(p.predictions) || constant(p.labels)) {
        throw UndefinedCorrelationError("SROCC undefined: a sequence is constant");
    }
    const auto rx = midranks(p.predictions);
    const auto ry = midranks(p.labels);
    return pearson(rx, ry, "SROCC");
}

double krocc(const ScorePairs& p) {
    p.validate();
    // tau-a stays defined when only some pairs tie, but a constant sequence
    // ties every pair.
    if (constant(p.predictions) || constant(p.labels)) {
        throw UndefinedCorrelationError("KROCC undefined: a sequence is constant");
    }
    const auto& x = p.predictions;
    const auto& y = p.labels;
    long s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = i + 1; j < x.size(); ++j) {
            const int a = (x[j] > x[i]) - (x[j] < x[i]);
            const int b = (y[j] > y[i]) - (y[j] < y[i]);
            s += a * b;
        }
    }
    const double n = static_cast<double>(x.size());
    return static_cast<double>(s) / (n * (n - 1.0) / 2.0);
}

Coefficients coefficients(const ScorePairs& p) {
    p.validate();
    Coefficients c;
    auto attempt = [&](std::optional<double>& slot, double (*f)(const ScorePairs&)) {
        try {
            slot = f(p);
        } catch (const UndefinedCorrelationError&) {
            slot.reset();
        }
    };
    attempt(c.plcc, plcc);
    attempt(c.srocc, srocc);
    attempt(c.krocc, krocc);
    return c;
}

CorrelationReport build_report(const std::map<std::string, ScorePairs>& groups, Aggregation agg) {
    CorrelationReport r;
    r.aggregation = agg;
    struct Acc {
        double sum = 0, weight = 0;
        void add(const std::optional<double>& v, double w) {
            if (v) {
                sum += *v * w;
                weight += w;
            }
        }
        [[nodiscard]] std::optional<double> mean() const {
            return weight > 0 ? std::optional<double>(sum / weight) : std::nullopt;
        }
    } ap, as, ak;
    for (const auto& [key, pairs] : groups) {
        GroupReport g;
        g.group = key;
        g.size = pairs.size();
        try {
            g.values = coefficients(pairs);
        } catch (const ValidationError& e) {
            g.error = e.what();
        }
        const double w = agg == Aggregation::SizeWeighted ? static_cast<double>(g.size) : 1.0;
        ap.add(g.values.plcc, w);
        as.add(g.values.srocc, w);
        ak.add(g.values.krocc, w);
        r.groups.push_back(std::move(g));
    }
    r.overall = {ap.mean(), as.mean(), ak.mean()};
    return r;
}

namespace {

std::string fmt(const std::optional<double>& v) {
    if (!v) return "NA";
    std::ostringstream os;
    os.precision(6);
    os << std::fixed << *v;
    return os.str();
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

std::string report_csv(const CorrelationReport& r) {
    std::ostringstream os;
    os << "metric";
    for (const auto& g : r.groups) os << ',' << csv_field(g.group);
    os << ",overall\n";
    const std::pair<const char*, std::optional<double> Coefficients::*> rows[] = {
        {"PLCC", &Coefficients::plcc}, {"SROCC", &Coefficients::srocc}, {"KROCC", &Coefficients::krocc}};
    for (const auto& [label, member] : rows) {
        os << label;
        for (const auto& g : r.groups) os << ',' << fmt(g.values.*member);
        os << ',' << fmt(r.overall.*member) << '\n';
    }
    return os.str();
}

std::string report_json(const CorrelationReport& r) {
    nlohmann::json j;
    j["aggregation"] = r.aggregation == Aggregation::SizeWeighted ? "size_weighted" : "unweighted";
    j["groups"] = nlohmann::json::array();
    for (const auto& g : r.groups) {
        nlohmann::json e = {{"group", g.group},
                            {"n", g.size},
                            {"plcc", opt_json(g.values.plcc)},
                            {"srocc", opt_json(g.values.srocc)},
                            {"krocc", opt_json(g.values.krocc)}};
        if (!g.error.empty()) e["error"] = g.error;
        j["groups"].push_back(e);
    }
    j["overall"] = {{"plcc", opt_json(r.overall.plcc)},
                    {"srocc", opt_json(r.overall.srocc)},
                    {"krocc", opt_json(r.overall.krocc)}};
    return j.dump(2);
}

}  // namespace realism
