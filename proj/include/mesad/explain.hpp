#pragma once

#include "mesad/core.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>

namespace mesad::explain {

class ExplainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Black-box anomaly score of a window (rows = time, cols = channels).
/// Must be safe to call concurrently.
using ScoreFn = std::function<double(const Matrix& window)>;

struct Attribution {
    std::size_t series_id = 0;
    std::size_t step = 0;
    std::vector<double> importance;
    /// rank[k] in 1..K; 1 is the most important channel.
    std::vector<std::size_t> rank;

    std::size_t channels() const { return importance.size(); }
};

/// Ranks by descending importance, ties to the lower channel index.
std::vector<std::size_t> rank_channels(std::span<const double> importance);

enum class ShapleyMode { Auto, Exact, Sampling };

struct ExplainerConfig {
    std::size_t n_samples = 1000;
    /// Defaults to 0.75 * sqrt(K) when unset.
    std::optional<double> kernel_width;
    /// Probability that a channel is replaced by its baseline in a surrogate sample.
    double mask_probability = 0.5;
    /// Std of the multiplicative amplitude jitter on kept channels.
    double amplitude_noise = 0.25;
    double ridge = 1e-6;

    ShapleyMode shapley_mode = ShapleyMode::Auto;
    std::size_t exact_max_channels = 12;
    std::size_t n_permutations = 2000;

    /// Per-channel reference value substituted for absent channels.
    std::optional<Vector> baseline;

    void validate() const;
};

/// Channel k becomes baseline(k) + amplitude(k) * (x_k - baseline(k)); an
/// amplitude of 0 substitutes the baseline, 1 keeps the channel as is.
Matrix modulate(const Matrix& window, const Vector& baseline, std::span<const double> amplitude);

/// Perturbation surrogate: weighted ridge regression of the score on the
/// per-channel amplitude factors, locality kernel exp(-d^2 / width^2) with d
/// the distance of the amplitude vector from all-ones.
Attribution surrogate_explain(const ScoreFn& score, const Matrix& window, const ExplainerConfig& cfg,
                              std::uint64_t seed);

/// v(S) for every coalition mask S (bit k set = channel k present). OpenMP over masks.
std::vector<double> coalition_values(const ScoreFn& score, const Matrix& window, const Vector& baseline);
std::vector<double> coalition_values_serial(const ScoreFn& score, const Matrix& window,
                                            const Vector& baseline);

/// Exact Shapley values from a full coalition table of size 2^K.
std::vector<double> shapley_from_coalitions(std::span<const double> values, std::size_t channels);

/// Signed Shapley values; exact enumeration or permutation sampling.
std::vector<double> shapley_values(const ScoreFn& score, const Matrix& window, const ExplainerConfig& cfg,
                                   std::uint64_t seed);

/// importance = |phi|.
Attribution shapley_explain(const ScoreFn& score, const Matrix& window, const ExplainerConfig& cfg,
                            std::uint64_t seed);

/// Header `series_id,step,channel,importance,rank`.
void write_attribution_csv(const std::filesystem::path& path, std::span<const Attribution> items,
                           std::span<const std::string> channel_names);

}  // namespace mesad::explain
