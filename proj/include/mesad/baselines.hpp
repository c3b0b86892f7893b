#pragma once

#include "mesad/core.hpp"

#include <array>
#include <filesystem>
#include <span>

namespace mesad::baselines {

class BaselineError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Dynamic time warping (full window, squared point costs, equal lengths)

struct WarpMatrix {
    Matrix cost;         // psi(i, r)
    Matrix accumulated;  // DTW(i, r)
    double distance() const { return accumulated(accumulated.rows() - 1, accumulated.cols() - 1); }
};

WarpMatrix warp_matrix(std::span<const double> a, std::span<const double> b);
double dtw(std::span<const double> a, std::span<const double> b);
/// Sum over channels of the univariate DTW distance.
double idtw(const MultiSeries& a, const MultiSeries& b);
/// One warping path shared by all channels; step cost is the squared
/// Euclidean distance between the two K-vectors.
double ddtw(const MultiSeries& a, const MultiSeries& b);
double euclidean(const MultiSeries& a, const MultiSeries& b);

enum class Metric { Euclid, IDTW, DDTW };
std::string_view to_string(Metric m);
Metric parse_metric(std::string_view s);
double distance(const MultiSeries& a, const MultiSeries& b, Metric m);

/// rows = queries, cols = references. OpenMP over pairs.
Matrix pairwise_distances(std::span<const MultiSeries> queries, std::span<const MultiSeries> refs,
                          Metric m);
/// Single-threaded reference for pairwise_distances.
Matrix pairwise_distances_serial(std::span<const MultiSeries> queries,
                                 std::span<const MultiSeries> refs, Metric m);

void write_distance_csv(const std::filesystem::path& path, const Matrix& d,
                        std::span<const std::size_t> query_ids, std::span<const std::size_t> ref_ids);

/// Label of the nearest series in ds.train; ties go to the lowest series index.
EventType nn_classify(const LabeledDataset& ds, const MultiSeries& query, Metric m);
/// Column index of the row minimum, ties to the lowest column.
std::vector<std::size_t> nearest_columns(const Matrix& distances);

// ---------------------------------------------------------------------------
// MiniRocket

struct MiniRocketConfig {
    static constexpr std::size_t kKernelLength = 9;
    static constexpr std::size_t kNumKernels = 84;
    std::size_t num_features = 10000;
    std::size_t max_dilations_per_kernel = 32;
    /// Ridge penalties scanned by generalized cross-validation.
    std::vector<double> lambdas = {1e-3, 4.6415888336127775e-3, 2.1544346900318822e-2, 0.1,
                                   0.46415888336127786, 2.1544346900318838, 10.0,
                                   46.415888336127729, 215.44346900318823, 1000.0};
};

/// The 84 length-9 kernels: weight 2 at three positions, -1 elsewhere.
const std::vector<std::array<int, 3>>& kernel_positions();

class MiniRocket {
public:
    /// Fits dilations and biases on `train`. The seed chooses which channels
    /// each (kernel, dilation) combination sums over; bias examples cycle
    /// through the training set in order.
    static MiniRocket fit(std::span<const MultiSeries> train, const MiniRocketConfig& cfg,
                          std::uint64_t seed);

    /// Proportion of positive values for every (kernel, dilation, bias) triple.
    Vector transform(const MultiSeries& x) const;
    /// Rows are series. OpenMP over series.
    Matrix transform_batch(std::span<const MultiSeries> xs) const;
    Matrix transform_batch_serial(std::span<const MultiSeries> xs) const;

    /// Full convolution output of one (kernel, dilation) combination, zero padded.
    std::vector<double> convolve(const MultiSeries& x, std::size_t combination) const;

    std::size_t num_features() const { return num_features_; }
    std::size_t num_combinations() const { return dilations_.size() * MiniRocketConfig::kNumKernels; }
    const std::vector<std::size_t>& dilations() const { return dilations_; }
    const std::vector<std::size_t>& combination_channels(std::size_t combination) const {
        return channels_[combination];
    }
    /// Feature-ordered biases; writable for probing.
    std::vector<double> biases;

private:
    std::size_t num_features_ = 0;
    std::size_t input_channels_ = 0;
    std::vector<std::size_t> dilations_;
    std::vector<std::size_t> features_per_dilation_;
    std::vector<std::vector<std::size_t>> channels_;
};

/// Fits on `x` alone and transforms it.
Vector minirocket_features(const MultiSeries& x, const MiniRocketConfig& cfg, std::uint64_t seed);

/// Multi-output ridge regression on one-hot targets with an unpenalized
/// intercept; lambda picked by generalized cross-validation.
class RidgeClassifier {
public:
    void fit(const Matrix& features, std::span<const std::size_t> labels, std::size_t classes,
             std::span<const double> lambdas);
    /// Rows: samples, cols: classes.
    Matrix decision(const Matrix& features) const;
    double lambda() const { return lambda_; }

private:
    Vector feature_mean_;
    Vector target_mean_;
    Matrix weights_;  // p x C
    double lambda_ = 0.0;
};

struct Prediction {
    EventType label = EventType::Normal;
    std::vector<std::pair<EventType, double>> scores;

    double score(EventType t) const;
};

class MiniRocketClassifier {
public:
    void fit(std::span<const MultiSeries> train, std::span<const EventType> labels,
             const MiniRocketConfig& cfg, std::uint64_t seed);
    Prediction predict(const MultiSeries& x) const;
    std::vector<Prediction> predict(std::span<const MultiSeries> xs) const;
    const std::vector<EventType>& classes() const { return classes_; }

private:
    Prediction from_scores(const Vector& s) const;

    MiniRocket transform_;
    RidgeClassifier ridge_;
    std::vector<EventType> classes_;
};

/// Fits on the train split of `ds` and classifies `test`.
Prediction minirocket_classify(const LabeledDataset& ds, const MultiSeries& test,
                               const MiniRocketConfig& cfg, std::uint64_t seed);

/// Header `series_id,predicted,actual,score_<class>...` over `classes`.
void write_predictions_csv(const std::filesystem::path& path, std::span<const std::size_t> ids,
                           std::span<const Prediction> preds, std::span<const EventType> actual,
                           std::span<const EventType> classes);

}  // namespace mesad::baselines
