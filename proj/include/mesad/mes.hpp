#pragma once

#include "mesad/core.hpp"

#include <nlohmann/json_fwd.hpp>

#include <span>

namespace mesad::mes {

struct SmoothingParams {
    double alpha = 0.5;  // level
    double beta = 0.1;   // trend
    double gamma = 0.1;  // season
};

/// Additive Holt-Winters components for one channel. A season length of 1
/// means no seasonal term: the seasonal ring is a single zero and gamma is ignored.
struct ChannelState {
    SmoothingParams params;
    double level = 0.0;
    double trend = 0.0;
    std::vector<double> seasonal;  // size m, sums to zero
};

/// Per-channel smoothing state. Channels share nothing but the season length.
struct SmoothingState {
    std::size_t season_length = 1;
    std::vector<ChannelState> channels;

    /// Same parameters, initial components re-estimated from `x`'s leading seasons.
    SmoothingState reinitialized(const MultiSeries& x) const;
};

/// One-step smoothing forecasts and the residuals against them.
struct Decomposition {
    MultiSeries residuals;
    /// l_{t-1} + b_{t-1} + s_{t-m} per step and channel.
    Matrix baseline;
};

/// Thrown for shape mismatches, too-short input and bad parameters.
class SmoothingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dominant period from the channel-summed periodogram, restricted to [2, N/2].
/// Returns 1 when the series is too short or has no periodic component.
std::size_t dominant_period(const MultiSeries& x);

/// Initial components from the leading seasons of a single channel.
ChannelState initial_components(std::span<const double> y, std::size_t m);

/// Holt update for a single observation. Mutates `st` and returns the
/// one-step forecast that was made before seeing `y`.
double update(ChannelState& st, std::size_t season_length, std::size_t t, double y);

/// Sum of squared one-step errors for the given parameters.
double one_step_sse(std::span<const double> y, std::size_t m, const SmoothingParams& p);

/// Coordinate grid search (0.05) then local refinement (0.01) per channel,
/// starting from the default (0.5, 0.1, 0.1). `m == 0` picks the dominant period.
SmoothingState fit(const MultiSeries& train, std::size_t m = 0);
/// Pooled fit: parameters minimize the summed SSE over all series, each
/// series initialized from its own leading seasons. Initial components in
/// the result come from the first series.
SmoothingState fit(std::span<const MultiSeries> train, std::size_t m = 0);

Decomposition preprocess(const MultiSeries& x, const SmoothingState& st);
/// Exact inverse of preprocess: r_hat + baseline.
MultiSeries postprocess(const MultiSeries& r_hat, const Decomposition& dec);

nlohmann::json to_json(const SmoothingState& st);
SmoothingState state_from_json(const nlohmann::json& j);

}  // namespace mesad::mes
