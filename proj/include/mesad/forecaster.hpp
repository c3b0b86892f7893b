#pragma once

#include "mesad/core.hpp"
#include "mesad/mes.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <functional>
#include <span>

namespace mesad::forecast {

class ForecastError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Weights of a single-layer LSTM with a linear head. Gate blocks in the
/// stacked matrices are ordered input, forget, output, candidate.
struct LstmWeights {
    Matrix wx;  // 4H x K
    Matrix wh;  // 4H x H
    Vector b;   // 4H
    Matrix wy;  // K x H
    Vector by;  // K

    std::size_t parameter_count() const;
    /// Flat views used by the optimizer and the gradient checker.
    void for_each(const std::function<void(double&)>& fn);
    LstmWeights zeros_like() const;
};

struct TrainConfig {
    std::size_t hidden = 32;
    std::size_t lookback = 48;
    std::size_t epochs = 200;
    std::size_t batch = 32;
    double learning_rate = 1e-3;
    double clip_norm = 5.0;
    double validation_fraction = 0.1;
    /// Use every `window_stride`-th window of each training series.
    std::size_t window_stride = 1;
};

/// One-step residual forecaster. Inputs are standardized per channel with
/// statistics of the training data.
class RecurrentModel {
public:
    RecurrentModel() = default;
    RecurrentModel(std::size_t input_size, std::size_t hidden, std::size_t lookback,
                   std::uint64_t seed);

    std::size_t input_size() const { return input_size_; }
    std::size_t hidden() const { return hidden_; }
    std::size_t lookback() const { return lookback_; }

    LstmWeights& weights() { return w_; }
    const LstmWeights& weights() const { return w_; }
    const Vector& input_mean() const { return mean_; }
    const Vector& input_scale() const { return scale_; }
    void set_standardization(Vector mean, Vector scale);

    const std::vector<double>& train_loss() const { return train_loss_; }
    const std::vector<double>& validation_loss() const { return val_loss_; }

    /// Predicts the next residual from `window` (lookback x K, oldest row first).
    Vector predict_next(const Matrix& window) const;

    /// Row t holds the one-step forecast of row t; rows before the lookback are zero.
    Matrix predict_series(const Matrix& residuals) const;

    /// Mean squared error over a batch of standardized windows and the
    /// gradient of that loss with respect to every weight.
    /// `inputs[s]` is K x B for step s, `targets` is K x B.
    double loss_and_gradient(const std::vector<Matrix>& inputs, const Matrix& targets,
                             LstmWeights* grad) const;

    nlohmann::json to_json() const;
    static RecurrentModel from_json(const nlohmann::json& j);

private:
    friend RecurrentModel train(std::span<const MultiSeries>, const TrainConfig&, std::uint64_t);

    Matrix forward_batch(const std::vector<Matrix>& inputs) const;

    std::size_t input_size_ = 0;
    std::size_t hidden_ = 0;
    std::size_t lookback_ = 0;
    LstmWeights w_;
    Vector mean_;
    Vector scale_;
    std::vector<double> train_loss_;
    std::vector<double> val_loss_;
};

/// Adam with global gradient-norm clipping; deterministic given `seed`.
RecurrentModel train(std::span<const MultiSeries> residuals, const TrainConfig& cfg,
                     std::uint64_t seed);
RecurrentModel train(const MultiSeries& residuals, const TrainConfig& cfg, std::uint64_t seed);

/// Smoothing front/back end plus the recurrent residual model.
struct HybridModel {
    mes::SmoothingState smoothing;
    RecurrentModel net;

    struct Output {
        mes::Decomposition decomposition;
        /// Point forecast per step, postprocessed back to the observation scale.
        Matrix point;
    };
    /// Smoothing state is re-initialized from the leading seasons of `x`.
    Output forecast(const MultiSeries& x) const;
};

/// Per-channel pools of held-out forecast errors (signed, y - y_hat).
struct CalibrationSet {
    std::vector<std::vector<double>> errors;

    std::size_t channels() const { return errors.size(); }
    bool empty() const;
};

struct IntervalForecast {
    Matrix point;
    Matrix lower;
    Matrix upper;
    double alpha = 0.05;
    /// First step whose point forecast comes from the recurrent model.
    std::size_t first_valid = 0;

    std::size_t steps() const { return static_cast<std::size_t>(point.rows()); }
    std::size_t channels() const { return static_cast<std::size_t>(point.cols()); }
};

struct IntervalConfig {
    std::size_t rolling_window = 200;
};

/// Conformal rank ceil((n+1)(1-alpha)) of the absolute values, clamped to n.
double absolute_quantile(std::span<const double> values, double alpha);

/// Symmetric intervals around `point` whose half-width is the conformal
/// (1-alpha) quantile of absolute errors over a rolling pool. The pool starts
/// with the most recent calibration errors and absorbs |y_t - point_t| for
/// every t >= first_valid after step t has been scored.
IntervalForecast conformal_intervals(const Matrix& point, const Matrix& observed, double alpha,
                                     const CalibrationSet& calib, std::size_t first_valid,
                                     const IntervalConfig& cfg = {});

IntervalForecast predict_intervals(const HybridModel& model, const MultiSeries& x, double alpha,
                                   const CalibrationSet& calib, const IntervalConfig& cfg = {});

/// Errors of the hybrid forecast on held-out series, steps >= lookback.
CalibrationSet calibrate(const HybridModel& model, std::span<const MultiSeries> held_out);

}  // namespace mesad::forecast
