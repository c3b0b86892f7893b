#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mesad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised for malformed input files, label tables and generator configs.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Measurement matrix: rows are time steps, columns are channels.
class MultiSeries {
public:
    static constexpr double kDefaultDt = 1.0 / 240.0;

    MultiSeries() = default;
    MultiSeries(Matrix values, std::vector<std::string> channel_names,
                double dt = kDefaultDt,
                std::optional<std::string> start_time = std::nullopt);

    /// Channels named ch0..ch{K-1}.
    static MultiSeries with_default_names(Matrix values, double dt = kDefaultDt);

    std::size_t steps() const { return static_cast<std::size_t>(values_.rows()); }
    std::size_t channels() const { return static_cast<std::size_t>(values_.cols()); }
    const Matrix& values() const { return values_; }
    double operator()(std::size_t t, std::size_t k) const {
        return values_(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k));
    }
    Vector channel(std::size_t k) const { return values_.col(static_cast<Eigen::Index>(k)); }
    const std::vector<std::string>& channel_names() const { return names_; }
    double dt() const { return dt_; }
    const std::optional<std::string>& start_time() const { return start_time_; }

    /// Index of the named channel; throws DataError if absent.
    std::size_t channel_index(std::string_view name) const;
    bool has_channel(std::string_view name) const;

    /// Same metadata, different values (shape must match channel count).
    MultiSeries with_values(Matrix values) const;
    /// Rows [begin, end).
    MultiSeries slice(std::size_t begin, std::size_t end) const;

private:
    Matrix values_;
    std::vector<std::string> names_;
    double dt_ = kDefaultDt;
    std::optional<std::string> start_time_;
};

enum class EventType {
    BranchFault,
    BranchTripping,
    BusFault,
    BusTripping,
    GeneratorTripping,
    ForcedOscillation,
    Normal,
};

inline constexpr EventType kAllEventTypes[] = {
    EventType::BranchFault,     EventType::BranchTripping,    EventType::BusFault,
    EventType::BusTripping,     EventType::GeneratorTripping, EventType::ForcedOscillation,
    EventType::Normal,
};

std::string_view to_string(EventType type);
/// Accepts the canonical names plus the short forms "branch trip", "bus trip"
/// and "gen trip"; case-insensitive, '_' and '-' read as spaces.
EventType parse_event_type(std::string_view text);

struct AnomalyEvent {
    std::size_t start_idx = 0;
    std::size_t end_idx = 0;  // inclusive
    EventType type = EventType::Normal;
    std::string root_channel;
    double severity = 1.0;

    bool contains(std::size_t t) const { return t >= start_idx && t <= end_idx; }
};

struct LabeledSeries {
    MultiSeries data;
    std::vector<AnomalyEvent> events;

    /// First event's type, or Normal.
    EventType label() const;
    bool anomalous() const { return !events.empty(); }
    /// Per-step ground truth: true inside any event span.
    std::vector<bool> step_labels() const;
};

struct LabeledDataset {
    std::vector<LabeledSeries> series;
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;

    /// Checks the series/event invariants and that the split is a disjoint partition.
    void validate() const;
};

/// Train size matching the 439/110 proportion of the reference protocol.
std::size_t default_train_count(std::size_t total);

/// Seeded random split into train_count / remainder, both sorted ascending.
void assign_split(LabeledDataset& ds, std::size_t train_count, std::uint64_t seed);

/// Like assign_split but keeps the anomalous/normal ratio equal in both halves.
void assign_stratified_split(LabeledDataset& ds, std::size_t train_count, std::uint64_t seed);

// ---------------------------------------------------------------------------
// CSV ingestion

struct IngestConfig {
    /// Sidecar label file; when empty, `<dir>/labels.csv` is used if it exists.
    std::optional<std::filesystem::path> label_path;
    std::optional<std::size_t> train_count;
    std::uint64_t split_seed = 0;
};

/// Reads one series CSV (`t,<ch1>,...`). The sampling interval is taken from
/// the first two time stamps.
MultiSeries read_series_csv(const std::filesystem::path& path);

/// Writes a series CSV with shortest round-trip number formatting.
void write_series_csv(const std::filesystem::path& path, const MultiSeries& series);

std::vector<std::pair<std::size_t, AnomalyEvent>> read_labels_csv(const std::filesystem::path& path);
void write_labels_csv(const std::filesystem::path& path, const LabeledDataset& ds);

/// `path` is either a single series CSV (series id 0) or a directory of
/// `series_<id>.csv` files.
LabeledDataset ingest_csv(const std::filesystem::path& path, const IngestConfig& cfg = {});

/// Writes `series_<id>.csv` for every series plus `labels.csv` into `dir`.
void write_dataset(const std::filesystem::path& dir, const LabeledDataset& ds);

/// FNV-1a over every value bit pattern, label and split index.
std::uint64_t dataset_digest(const LabeledDataset& ds);

// ---------------------------------------------------------------------------
// Synthetic generator

struct SynthConfig {
    std::size_t channels = 8;
    std::size_t steps = 240;
    std::size_t series = 20;
    /// Fraction of series that receive events.
    double event_rate = 0.5;
    std::size_t events_per_series = 1;
    std::vector<EventType> event_types = {
        EventType::BranchFault,      EventType::BranchTripping,    EventType::BusFault,
        EventType::BusTripping,      EventType::GeneratorTripping, EventType::ForcedOscillation,
    };
    /// Attenuation applied to the copy written into coupled channels, in [0, 1).
    double coupling = 0.3;
    std::size_t coupled_channels = 2;
    double noise_sigma = 0.1;
    double ar_coefficient = 0.5;
    /// Correlation of the AR(1) innovations across channels, in [0, 1).
    double noise_correlation = 0.3;
    std::size_t season_period = 24;
    double season_amplitude = 1.0;
    double trend_scale = 0.002;
    /// Event amplitude in units of noise_sigma.
    double severity = 12.0;
    std::size_t min_event_start = 96;
    std::size_t max_event_length = 24;
    /// Forces every event into this channel instead of a random one.
    std::optional<std::size_t> root_channel;
    /// Share of series used for training; the split is stratified by label.
    double train_fraction = 439.0 / 549.0;

    /// Reference-scale profile: 960 steps, 91 channels, 549 series.
    static SynthConfig full_profile();
    /// Scaled-down profile used by tests and the desk-scale run.
    static SynthConfig desk_profile();
};

/// Pure function of (cfg, seed).
LabeledDataset synth_generate(const SynthConfig& cfg, std::uint64_t seed);

}  // namespace mesad
