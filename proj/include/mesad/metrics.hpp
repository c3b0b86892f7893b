#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mesad::metrics {

class MetricError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Probability that a random positive outranks a random negative, ties count 1/2.
double auroc(std::span<const double> scores, const std::vector<bool>& labels);

/// Step-wise area under the precision-recall curve: sum over distinct
/// thresholds of (recall increment) x precision.
double aupr(std::span<const double> scores, const std::vector<bool>& labels);

struct MdsInput {
    /// Rank of the true root-cause channel for each detected anomaly.
    std::vector<std::size_t> root_ranks;
    std::size_t beta = 5;
};

/// Mean discovery score: share of detected anomalies whose root-cause
/// channel is ranked within the top beta. Undefined (throws) for zero detections.
double mds(const MdsInput& in);

struct TTestResult {
    double statistic = 0.0;
    double p_value = 0.5;
    double dof = 0.0;
};

/// Welch one-sided test of H0: mean(benchmark) >= mean(ours). A positive
/// statistic favours `ours`.
TTestResult ttest_one_sided(std::span<const double> benchmark, std::span<const double> ours);

struct TrialReport {
    std::string model;
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    /// "series" or "timestep".
    std::string unit = "series";
    double auroc = 0.0;
    double aupr = 0.0;
    /// Keyed by (explainer, beta); absent when there were no detections to explain.
    std::map<std::pair<std::string, std::size_t>, std::optional<double>> mds;
    double seconds = 0.0;
};

struct Summary {
    std::size_t n = 0;
    double mean = 0.0;
    double std = 0.0;  // population denominator
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
    double whisker_low = 0.0;
    double whisker_high = 0.0;
};

Summary summarize(std::span<const double> values);

struct ModelSummary {
    std::string model;
    std::string unit;
    Summary auroc;
    Summary aupr;
};

/// Summaries per (model, unit) in first-appearance order.
std::vector<ModelSummary> aggregate_trials(std::span<const TrialReport> reports);

}  // namespace mesad::metrics
