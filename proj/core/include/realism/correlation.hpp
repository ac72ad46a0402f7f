// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace realism {

/// Predictions and labels of equal length n >= 2, all finite.
struct ScorePairs {
    std::vector<double> predictions;
    std::vector<double> labels;

    void validate() const;
    [[nodiscard]] std::size_t size() const noexcept { return predictions.size(); }
};

/// Pearson linear correlation.
double plcc(const ScorePairs& p);
/// Pearson correlation of midranks.
double srocc(const ScorePairs& p);
/// Kendall tau-a by pair enumeration; tied pairs count zero.
double krocc(const ScorePairs& p);

/// 1-based average ranks; tied values share the mean of their positions.
std::vector<double> midranks(std::span<const double> v);

/// Absent values mark undefined correlations.
struct Coefficients {
    std::optional<double> plcc, srocc, krocc;
};

Coefficients coefficients(const ScorePairs& p);

enum class Aggregation { SizeWeighted, Unweighted };

struct GroupReport {
    std::string group;
    std::size_t size = 0;
    Coefficients values;
    std::string error;  // set when the group could not be evaluated at all
};

struct CorrelationReport {
    std::vector<GroupReport> groups;  // ordered by group key
    Coefficients overall;
    Aggregation aggregation = Aggregation::SizeWeighted;
};

/// Per-group coefficients plus their mean over groups where each value is
/// defined, weighted by group size unless `agg` says otherwise.
CorrelationReport build_report(const std::map<std::string, ScorePairs>& groups,
                               Aggregation agg = Aggregation::SizeWeighted);

/// Rows PLCC/SROCC/KROCC, one column per group, then "overall". "NA" marks
/// undefined values.
std::string report_csv(const CorrelationReport& r);
std::string report_json(const CorrelationReport& r);

}  // namespace realism
