#pragma once

#include "mesad/baselines.hpp"
#include "mesad/core.hpp"
#include "mesad/detector.hpp"
#include "mesad/explain.hpp"
#include "mesad/forecaster.hpp"
#include "mesad/metrics.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mesad::harness {

/// Invalid run configuration; raised before any work starts.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr const char* kOurs = "MES-LSTM";
/// Every model name accepted in `models`.
const std::vector<std::string>& known_models();

struct RunConfig {
    /// Series CSV file or directory; the synthetic generator is used when unset.
    std::optional<std::filesystem::path> csv_path;
    std::optional<std::filesystem::path> label_path;
    std::optional<std::size_t> train_count;
    SynthConfig synth = SynthConfig::desk_profile();

    std::vector<std::string> models = known_models();
    std::size_t trials = 35;
    std::uint64_t seed = 0;
    double alpha = 0.05;
    detect::DetectorConfig detector;
    explain::ExplainerConfig explainer;
    std::vector<std::size_t> betas = {5, 10, 15};
    std::filesystem::path out = "mesad_out";

    forecast::TrainConfig forecaster{16, 24, 20, 32, 3e-3, 5.0, 0.1, 6};
    forecast::IntervalConfig intervals;
    /// Share of the training series held out for conformal calibration.
    double calibration_fraction = 0.25;
    /// Detections explained per trial (earliest first).
    std::size_t max_explanations = 12;
    baselines::MiniRocketConfig minirocket;
    /// Trial pool size; 0 reads MESAD_WORKERS, then falls back to the OpenMP default.
    std::size_t workers = 0;

    void validate() const;
};

/// Synthetic generator settings; "profile" (desk, full, default) picks the
/// starting point that the remaining keys override.
SynthConfig parse_synth_config(const nlohmann::json& j);

/// Parses a JSON config. Relative paths resolve against `base_dir`.
/// Unknown keys and model names are rejected.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

LabeledDataset load_dataset(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// One trial of the hybrid detector

struct TrainedDetector {
    forecast::HybridModel model;
    forecast::CalibrationSet calibration;
    /// Mean training residual per channel; the explainers' reference input.
    Vector residual_mean;
};

TrainedDetector train_detector(const LabeledDataset& ds, const RunConfig& cfg, std::uint64_t seed);

/// Intervals and detections of one series, in the residual frame
/// (observation minus the smoothing baseline).
struct SeriesDetection {
    MultiSeries residuals;
    forecast::IntervalForecast intervals;
    detect::DetectionResult result;
    /// Smoothing forecast that was subtracted from observations and intervals.
    Matrix baseline;
};

SeriesDetection run_detector(const TrainedDetector& td, const MultiSeries& x, const RunConfig& cfg);

/// Max over channels of the normalized interval score of the window's last
/// row against the recurrent forecast from the preceding rows, with fixed
/// per-channel half-widths.
explain::ScoreFn make_score_fn(const forecast::RecurrentModel& net, Vector half_width, double alpha);

/// Residual rows [step - lookback, step] and the half-widths in force at `step`.
std::pair<Matrix, Vector> explanation_window(const SeriesDetection& sd, std::size_t step,
                                             std::size_t lookback);

struct ExplainedDetection {
    std::size_t series_id = 0;
    std::size_t step = 0;
    std::size_t root = 0;
    explain::Attribution surrogate;
    explain::Attribution shapley;
};

struct ScoreRow {
    std::string model;
    std::string unit;
    std::size_t trial = 0;
    std::size_t series_id = 0;
    std::optional<std::size_t> step;
    double score = 0.0;
    bool label = false;
};

struct TrialOutcome {
    std::vector<metrics::TrialReport> reports;
    /// (model, message) for every model that failed in this trial.
    std::vector<std::pair<std::string, std::string>> failures;
    std::vector<ScoreRow> scores;
    /// Per (explainer, beta): number of explained detections.
    std::size_t explained = 0;
};

/// Runs every configured model once with `seed`. When `artifacts` is set the
/// trial also writes its per-model detail files there.
TrialOutcome run_trial(const LabeledDataset& ds, const RunConfig& cfg, std::size_t trial,
                       std::uint64_t seed, const std::optional<std::filesystem::path>& artifacts);

// ---------------------------------------------------------------------------
// Subcommands

/// Writes the dataset and returns its digest.
std::uint64_t cmd_synth(const SynthConfig& cfg, std::uint64_t seed, const std::filesystem::path& out);

/// Exit code: 0 when every trial completed, 3 when some failed, 2 when more than half failed.
int cmd_run(const RunConfig& cfg, std::ostream& log);

struct ExplainRequest {
    std::filesystem::path artifacts;
    std::filesystem::path series;
    std::size_t step = 0;
    std::optional<std::filesystem::path> out;
    std::uint64_t seed = 0;
};

/// Ranked channel lists of both explainers, side by side. Refuses unflagged steps.
struct ExplainReport {
    std::vector<std::string> channel_names;
    explain::Attribution surrogate;
    explain::Attribution shapley;
    bool degenerate = false;
};

ExplainReport cmd_explain(const ExplainRequest& req, std::ostream& log);

/// auROC/auPR per (model, unit, trial) group of a score file with header
/// `model,unit,trial,series_id,step,score,label`; writes evaluation.csv.
int cmd_evaluate(const std::filesystem::path& scores, const std::filesystem::path& out, std::ostream& log);

/// Saves everything cmd_explain needs.
void save_artifacts(const std::filesystem::path& dir, const TrainedDetector& td, const RunConfig& cfg);

}  // namespace mesad::harness
