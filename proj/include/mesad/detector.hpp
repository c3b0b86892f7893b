#pragma once

#include "mesad/core.hpp"
#include "mesad/forecaster.hpp"

#include <filesystem>
#include <optional>

namespace mesad::detect {

class DetectorError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DetectorConfig {
    double is_ratio = 1.33;
    double std_multiplier = 10.0;
    std::size_t window = 50;
    double alpha = 0.05;
    /// Quantile of warm-up interval scores that stands in for IS(y*) before
    /// the first anomaly.
    double bootstrap_quantile = 0.99;

    void validate() const;
};

/// Interval score: width plus (2/alpha) times the distance outside [lower, upper].
double interval_score(double y, double lower, double upper, double alpha);

/// Out-of-interval step that failed the ratio or deviation test.
struct Violation {
    std::size_t step;
    std::size_t channel;
};

struct DetectionResult {
    /// Any channel flagged at step t.
    std::vector<bool> flags;
    /// Max over channels of IS / width; exactly 1 for in-interval steps.
    std::vector<double> scores;
    /// Per step and channel (N x K).
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> channel_flags;
    Matrix channel_scores;
    /// Channels that flagged at each flagged step.
    std::vector<std::vector<std::size_t>> flagging_channels;
    /// Most recent flagged step over all channels.
    std::optional<std::size_t> last_anomaly;
    std::vector<Violation> violations;
    /// First step at which flags can be raised.
    std::size_t first_detectable = 0;

    std::size_t flagged_count() const;
};

/// Score for a single observation: 1 inside the interval, IS/width outside.
double normalized_score(double y, double lower, double upper, double alpha);

/// Runs the dynamic-threshold rule channel by channel. A step is flagged
/// when it lies outside [L, U], its interval score is at least is_ratio
/// times the score of the channel's last anomaly, and it deviates from the
/// trailing-window mean by more than std_multiplier trailing standard
/// deviations.
DetectionResult detect(const Matrix& y, const forecast::IntervalForecast& f, const DetectorConfig& cfg);
DetectionResult detect(const MultiSeries& y, const forecast::IntervalForecast& f,
                       const DetectorConfig& cfg);

/// Detection report with header `t,channel,flag,score,L,U,y`.
void write_detection_csv(const std::filesystem::path& path, const MultiSeries& y,
                         const forecast::IntervalForecast& f, const DetectionResult& r);

}  // namespace mesad::detect
