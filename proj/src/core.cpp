#include "mesad/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace mesad {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// MultiSeries

MultiSeries::MultiSeries(Matrix values, std::vector<std::string> channel_names, double dt,
                         std::optional<std::string> start_time)
    : values_(std::move(values)),
      names_(std::move(channel_names)),
      dt_(dt),
      start_time_(std::move(start_time)) {
    if (values_.rows() < 1 || values_.cols() < 1)
        throw DataError("series needs at least one step and one channel");
    if (names_.size() != static_cast<std::size_t>(values_.cols()))
        throw DataError("channel name count " + std::to_string(names_.size()) +
                        " does not match column count " + std::to_string(values_.cols()));
    std::set<std::string> seen;
    for (const auto& n : names_) {
        if (!seen.insert(n).second) throw DataError("duplicate channel name '" + n + "'");
    }
    if (!values_.allFinite()) {
        for (Eigen::Index t = 0; t < values_.rows(); ++t)
            for (Eigen::Index k = 0; k < values_.cols(); ++k)
                if (!std::isfinite(values_(t, k)))
                    throw DataError("non-finite value at step " + std::to_string(t) +
                                    ", channel '" + names_[static_cast<std::size_t>(k)] + "'");
    }
    if (!(dt_ > 0.0) || !std::isfinite(dt_)) throw DataError("sampling interval must be positive");
}

MultiSeries MultiSeries::with_default_names(Matrix values, double dt) {
    std::vector<std::string> names;
    for (Eigen::Index k = 0; k < values.cols(); ++k) names.push_back("ch" + std::to_string(k));
    return MultiSeries(std::move(values), std::move(names), dt);
}

std::size_t MultiSeries::channel_index(std::string_view name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw DataError("unknown channel '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - names_.begin());
}

bool MultiSeries::has_channel(std::string_view name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

MultiSeries MultiSeries::with_values(Matrix values) const {
    return MultiSeries(std::move(values), names_, dt_, start_time_);
}

MultiSeries MultiSeries::slice(std::size_t begin, std::size_t end) const {
    if (begin >= end || end > steps()) throw DataError("invalid slice");
    Matrix part = values_.middleRows(static_cast<Eigen::Index>(begin),
                                     static_cast<Eigen::Index>(end - begin));
    return MultiSeries(std::move(part), names_, dt_, start_time_);
}

// ---------------------------------------------------------------------------
// EventType

std::string_view to_string(EventType type) {
    switch (type) {
        case EventType::BranchFault: return "branch fault";
        case EventType::BranchTripping: return "branch tripping";
        case EventType::BusFault: return "bus fault";
        case EventType::BusTripping: return "bus tripping";
        case EventType::GeneratorTripping: return "generator tripping";
        case EventType::ForcedOscillation: return "forced oscillation";
        case EventType::Normal: return "normal";
    }
    return "normal";
}

EventType parse_event_type(std::string_view text) {
    std::string norm;
    for (char c : text) {
        if (c == '_' || c == '-') c = ' ';
        norm.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    auto b = norm.find_first_not_of(' ');
    auto e = norm.find_last_not_of(' ');
    norm = b == std::string::npos ? std::string() : norm.substr(b, e - b + 1);

    for (EventType t : kAllEventTypes)
        if (norm == to_string(t)) return t;
    static const std::map<std::string, EventType> aliases = {
        {"branch trip", EventType::BranchTripping},
        {"bus trip", EventType::BusTripping},
        {"gen trip", EventType::GeneratorTripping},
        {"generator trip", EventType::GeneratorTripping},
        {"oscillation", EventType::ForcedOscillation},
    };
    if (auto it = aliases.find(norm); it != aliases.end()) return it->second;
    throw DataError("unknown event type '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// LabeledSeries / LabeledDataset

EventType LabeledSeries::label() const {
    return events.empty() ? EventType::Normal : events.front().type;
}

std::vector<bool> LabeledSeries::step_labels() const {
    std::vector<bool> out(data.steps(), false);
    for (const auto& ev : events)
        for (std::size_t t = ev.start_idx; t <= ev.end_idx && t < out.size(); ++t) out[t] = true;
    return out;
}

void LabeledDataset::validate() const {
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        for (const auto& ev : s.events) {
            if (ev.start_idx > ev.end_idx || ev.end_idx >= s.data.steps())
                throw DataError("series " + std::to_string(i) + ": event span [" +
                                std::to_string(ev.start_idx) + ", " + std::to_string(ev.end_idx) +
                                "] outside 0.." + std::to_string(s.data.steps() - 1));
            if (!s.data.has_channel(ev.root_channel))
                throw DataError("series " + std::to_string(i) + ": root channel '" +
                                ev.root_channel + "' is not a column");
        }
    }
    std::vector<int> seen(series.size(), 0);
    for (auto idx : train) {
        if (idx >= series.size()) throw DataError("train index out of range");
        ++seen[idx];
    }
    for (auto idx : test) {
        if (idx >= series.size()) throw DataError("test index out of range");
        ++seen[idx];
    }
    for (int c : seen)
        if (c > 1) throw DataError("train and test splits overlap");
}

std::size_t default_train_count(std::size_t total) {
    if (total <= 1) return total;
    auto n = static_cast<std::size_t>(std::llround(static_cast<double>(total) * 439.0 / 549.0));
    return std::clamp<std::size_t>(n, 1, total - 1);
}

void assign_split(LabeledDataset& ds, std::size_t train_count, std::uint64_t seed) {
    const std::size_t n = ds.series.size();
    if (train_count > n) throw DataError("train count exceeds series count");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    ds.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(train_count));
    ds.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(train_count), idx.end());
    std::sort(ds.train.begin(), ds.train.end());
    std::sort(ds.test.begin(), ds.test.end());
}

void assign_stratified_split(LabeledDataset& ds, std::size_t train_count, std::uint64_t seed) {
    const std::size_t n = ds.series.size();
    if (train_count > n) throw DataError("train count exceeds series count");
    std::vector<std::size_t> anomalous, normal;
    for (std::size_t i = 0; i < n; ++i)
        (ds.series[i].anomalous() ? anomalous : normal).push_back(i);
    std::mt19937_64 rng(seed);
    std::shuffle(anomalous.begin(), anomalous.end(), rng);
    std::shuffle(normal.begin(), normal.end(), rng);

    std::size_t anom_train = n == 0 ? 0
                                    : static_cast<std::size_t>(std::llround(
                                          static_cast<double>(train_count) *
                                          static_cast<double>(anomalous.size()) /
                                          static_cast<double>(n)));
    anom_train = std::min(anom_train, anomalous.size());
    std::size_t normal_train = std::min(train_count - anom_train, normal.size());
    anom_train = std::min(train_count - normal_train, anomalous.size());

    ds.train.clear();
    ds.test.clear();
    for (std::size_t i = 0; i < anomalous.size(); ++i)
        (i < anom_train ? ds.train : ds.test).push_back(anomalous[i]);
    for (std::size_t i = 0; i < normal.size(); ++i)
        (i < normal_train ? ds.train : ds.test).push_back(normal[i]);
    std::sort(ds.train.begin(), ds.train.end());
    std::sort(ds.test.begin(), ds.test.end());
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_row(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        auto next = line.find(',', pos);
        out.push_back(trim(line.substr(pos, next == std::string_view::npos ? next : next - pos)));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return out;
}

std::optional<double> parse_double(std::string_view s) {
    double v = 0.0;
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

std::optional<std::size_t> parse_index(std::string_view s) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

void append_number(std::string& out, double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
}

std::ifstream open_input(const fs::path& path) {
    if (!fs::exists(path)) throw DataError("file not found: " + path.string());
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return in;
}

}  // namespace

MultiSeries read_series_csv(const fs::path& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
    auto header = split_row(line);
    if (header.size() < 2)
        throw DataError(path.string() + ": need a time column and at least one channel");
    std::vector<std::string> names;
    for (std::size_t c = 1; c < header.size(); ++c) names.emplace_back(header[c]);
    const std::size_t k = names.size();

    std::vector<double> times;
    std::vector<double> flat;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        auto cells = split_row(line);
        if (cells.size() != header.size())
            throw DataError(path.string() + ": row " + std::to_string(row) + " has " +
                            std::to_string(cells.size()) + " fields, expected " +
                            std::to_string(header.size()));
        for (std::size_t c = 0; c < cells.size(); ++c) {
            auto v = parse_double(cells[c]);
            const std::string col = c == 0 ? std::string(header[0]) : names[c - 1];
            if (!v)
                throw DataError(path.string() + ": row " + std::to_string(row) + " column '" +
                                col + "': cannot parse '" + std::string(cells[c]) + "'");
            if (!std::isfinite(*v))
                throw DataError(path.string() + ": row " + std::to_string(row) + " column '" +
                                col + "': non-finite value '" + std::string(cells[c]) + "'");
            if (c == 0)
                times.push_back(*v);
            else
                flat.push_back(*v);
        }
    }
    if (times.empty()) throw DataError(path.string() + ": no data rows");

    Matrix values(static_cast<Eigen::Index>(times.size()), static_cast<Eigen::Index>(k));
    for (std::size_t t = 0; t < times.size(); ++t)
        for (std::size_t c = 0; c < k; ++c)
            values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = flat[t * k + c];
    double dt = MultiSeries::kDefaultDt;
    if (times.size() >= 2 && times[1] > times[0]) dt = times[1] - times[0];
    return MultiSeries(std::move(values), std::move(names), dt);
}

void write_series_csv(const fs::path& path, const MultiSeries& series) {
    std::string out = "t";
    for (const auto& n : series.channel_names()) {
        out += ',';
        out += n;
    }
    out += '\n';
    for (std::size_t t = 0; t < series.steps(); ++t) {
        append_number(out, static_cast<double>(t) * series.dt());
        for (std::size_t k = 0; k < series.channels(); ++k) {
            out += ',';
            append_number(out, series(t, k));
        }
        out += '\n';
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path.string());
    f << out;
}

std::vector<std::pair<std::size_t, AnomalyEvent>> read_labels_csv(const fs::path& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty label file");
    auto header = split_row(line);
    if (header.size() != 5)
        throw DataError(path.string() +
                        ": expected header series_id,start_idx,end_idx,type,root_channel");
    std::vector<std::pair<std::size_t, AnomalyEvent>> out;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        auto cells = split_row(line);
        if (cells.size() != 5)
            throw DataError(path.string() + ": label row " + std::to_string(row) + " is ragged");
        auto sid = parse_index(cells[0]);
        auto start = parse_index(cells[1]);
        auto end = parse_index(cells[2]);
        if (!sid || !start || !end)
            throw DataError(path.string() + ": label row " + std::to_string(row) +
                            " has a non-integer index");
        AnomalyEvent ev;
        ev.start_idx = *start;
        ev.end_idx = *end;
        ev.type = parse_event_type(cells[3]);
        ev.root_channel = std::string(cells[4]);
        out.emplace_back(*sid, std::move(ev));
    }
    return out;
}

void write_labels_csv(const fs::path& path, const LabeledDataset& ds) {
    std::ostringstream os;
    os << "series_id,start_idx,end_idx,type,root_channel\n";
    for (std::size_t i = 0; i < ds.series.size(); ++i)
        for (const auto& ev : ds.series[i].events)
            os << i << ',' << ev.start_idx << ',' << ev.end_idx << ',' << to_string(ev.type) << ','
               << ev.root_channel << '\n';
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path.string());
    f << os.str();
}

LabeledDataset ingest_csv(const fs::path& path, const IngestConfig& cfg) {
    if (!fs::exists(path)) throw DataError("file not found: " + path.string());
    LabeledDataset ds;
    std::optional<fs::path> labels = cfg.label_path;

    if (fs::is_directory(path)) {
        std::map<std::size_t, fs::path> files;
        for (const auto& entry : fs::directory_iterator(path)) {
            const auto name = entry.path().filename().string();
            if (name.rfind("series_", 0) != 0 || entry.path().extension() != ".csv") continue;
            auto id = parse_index(std::string_view(name).substr(7, name.size() - 7 - 4));
            if (!id) continue;
            files.emplace(*id, entry.path());
        }
        if (files.empty()) throw DataError(path.string() + ": no series_<id>.csv files");
        std::size_t expected = 0;
        for (const auto& [id, file] : files) {
            if (id != expected++)
                throw DataError(path.string() + ": series ids are not contiguous from 0");
            ds.series.push_back({read_series_csv(file), {}});
        }
        if (!labels && fs::exists(path / "labels.csv")) labels = path / "labels.csv";
    } else {
        ds.series.push_back({read_series_csv(path), {}});
    }

    if (labels) {
        for (auto& [sid, ev] : read_labels_csv(*labels)) {
            if (sid >= ds.series.size())
                throw DataError("label references unknown series " + std::to_string(sid));
            if (!ds.series[sid].data.has_channel(ev.root_channel))
                throw DataError("label root channel '" + ev.root_channel +
                                "' is not a column of series " + std::to_string(sid));
            ds.series[sid].events.push_back(std::move(ev));
        }
    }
    assign_split(ds, cfg.train_count.value_or(default_train_count(ds.series.size())),
                 cfg.split_seed);
    ds.validate();
    return ds;
}

void write_dataset(const fs::path& dir, const LabeledDataset& ds) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
    const int width = ds.series.size() > 1000 ? 5 : 3;
    for (std::size_t i = 0; i < ds.series.size(); ++i) {
        std::string id = std::to_string(i);
        if (id.size() < static_cast<std::size_t>(width))
            id.insert(0, static_cast<std::size_t>(width) - id.size(), '0');
        write_series_csv(dir / ("series_" + id + ".csv"), ds.series[i].data);
    }
    write_labels_csv(dir / "labels.csv", ds);
}

std::uint64_t dataset_digest(const LabeledDataset& ds) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& s : ds.series) {
        const auto& v = s.data.values();
        for (Eigen::Index t = 0; t < v.rows(); ++t)
            for (Eigen::Index k = 0; k < v.cols(); ++k) {
                double x = v(t, k);
                mix(&x, sizeof x);
            }
        for (const auto& n : s.data.channel_names()) mix(n.data(), n.size());
        for (const auto& ev : s.events) {
            std::uint64_t a[3] = {ev.start_idx, ev.end_idx, static_cast<std::uint64_t>(ev.type)};
            mix(a, sizeof a);
            mix(ev.root_channel.data(), ev.root_channel.size());
        }
    }
    for (auto i : ds.train) mix(&i, sizeof i);
    for (auto i : ds.test) mix(&i, sizeof i);
    return h;
}

// ---------------------------------------------------------------------------
// Synthetic generator

SynthConfig SynthConfig::full_profile() {
    SynthConfig c;
    c.channels = 91;
    c.steps = 960;
    c.series = 549;
    c.season_period = 48;
    c.min_event_start = 240;
    c.max_event_length = 96;
    return c;
}

SynthConfig SynthConfig::desk_profile() {
    SynthConfig c;
    c.channels = 12;
    c.series = 48;
    return c;
}

namespace {

enum class Shape { Spike, LevelShift, Burst };

Shape shape_of(EventType t) {
    switch (t) {
        case EventType::BranchFault:
        case EventType::BusFault: return Shape::Spike;
        case EventType::ForcedOscillation: return Shape::Burst;
        default: return Shape::LevelShift;
    }
}

void check_config(const SynthConfig& cfg) {
    if (cfg.channels < 1 || cfg.steps < 1) throw DataError("generator needs N >= 1 and K >= 1");
    if (cfg.event_rate < 0.0 || cfg.event_rate > 1.0)
        throw DataError("event_rate must lie in [0, 1]");
    if (cfg.coupling < 0.0 || cfg.coupling >= 1.0) throw DataError("coupling must lie in [0, 1)");
    if (cfg.noise_correlation < 0.0 || cfg.noise_correlation >= 1.0)
        throw DataError("noise_correlation must lie in [0, 1)");
    if (std::abs(cfg.ar_coefficient) >= 1.0) throw DataError("AR coefficient must be in (-1, 1)");
    if (!(cfg.noise_sigma >= 0.0)) throw DataError("noise_sigma must be non-negative");
    if (cfg.train_fraction < 0.0 || cfg.train_fraction > 1.0)
        throw DataError("train_fraction must lie in [0, 1]");
    const bool injects = cfg.event_rate > 0.0 && cfg.events_per_series > 0;
    if (!injects) return;
    if (cfg.event_types.empty()) throw DataError("no event types to inject");
    if (cfg.coupling > 0.0 && cfg.coupled_channels > 0 && cfg.channels < 2)
        throw DataError("cross-channel coupling requires K >= 2");
    if (cfg.root_channel && *cfg.root_channel >= cfg.channels)
        throw DataError("root_channel out of range");
    if (cfg.max_event_length < 1) throw DataError("max_event_length must be >= 1");
    const std::size_t need = cfg.min_event_start + cfg.events_per_series * cfg.max_event_length;
    if (need > cfg.steps)
        throw DataError("event span exceeds series length: need " + std::to_string(need) +
                        " steps, have " + std::to_string(cfg.steps));
}

}  // namespace

LabeledDataset synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
    check_config(cfg);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto uniform_index = [&rng](std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    };

    const auto n_steps = static_cast<Eigen::Index>(cfg.steps);
    const auto n_ch = static_cast<Eigen::Index>(cfg.channels);
    std::vector<std::string> names;
    for (std::size_t k = 0; k < cfg.channels; ++k) names.push_back("ch" + std::to_string(k));

    std::vector<std::size_t> order(cfg.series);
    for (std::size_t i = 0; i < cfg.series; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_event_series = static_cast<std::size_t>(
        std::llround(cfg.event_rate * static_cast<double>(cfg.series)));
    std::vector<bool> gets_events(cfg.series, false);
    for (std::size_t i = 0; i < n_event_series && cfg.events_per_series > 0; ++i)
        gets_events[order[i]] = true;

    const double innov_sd = cfg.noise_sigma * std::sqrt(1.0 - cfg.ar_coefficient * cfg.ar_coefficient);
    const double own = std::sqrt(1.0 - cfg.noise_correlation);
    const double common = std::sqrt(cfg.noise_correlation);

    LabeledDataset ds;
    ds.series.reserve(cfg.series);
    for (std::size_t s = 0; s < cfg.series; ++s) {
        Matrix v(n_steps, n_ch);
        for (Eigen::Index k = 0; k < n_ch; ++k) {
            const double offset = 5.0 * (unif(rng) - 0.5);
            const double amp = cfg.season_amplitude * (0.5 + unif(rng));
            const double phase = 2.0 * std::numbers::pi * unif(rng);
            const double slope = cfg.trend_scale * (2.0 * unif(rng) - 1.0);
            const double period = static_cast<double>(std::max<std::size_t>(cfg.season_period, 1));
            for (Eigen::Index t = 0; t < n_steps; ++t) {
                const double tt = static_cast<double>(t);
                v(t, k) = offset + slope * tt +
                          (cfg.season_period > 1
                               ? amp * std::sin(2.0 * std::numbers::pi * tt / period + phase)
                               : 0.0);
            }
        }
        // Cross-correlated AR(1) noise with stationary std noise_sigma.
        Vector e(n_ch);
        for (Eigen::Index k = 0; k < n_ch; ++k) e(k) = cfg.noise_sigma * gauss(rng);
        for (Eigen::Index t = 0; t < n_steps; ++t) {
            if (t > 0) {
                const double zc = gauss(rng);
                for (Eigen::Index k = 0; k < n_ch; ++k)
                    e(k) = cfg.ar_coefficient * e(k) + innov_sd * (own * gauss(rng) + common * zc);
            }
            v.row(t) += e.transpose();
        }

        std::vector<AnomalyEvent> events;
        if (gets_events[s]) {
            std::vector<std::pair<std::size_t, std::size_t>> taken;
            for (std::size_t e_i = 0; e_i < cfg.events_per_series; ++e_i) {
                const EventType type = cfg.event_types[uniform_index(cfg.event_types.size())];
                const Shape shape = shape_of(type);
                std::size_t len = 1;
                if (shape != Shape::Spike) {
                    const std::size_t lo = std::min<std::size_t>(8, cfg.max_event_length);
                    len = lo + uniform_index(cfg.max_event_length - lo + 1);
                }
                std::size_t start = 0;
                bool placed = false;
                for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
                    start = cfg.min_event_start + uniform_index(cfg.steps - len - cfg.min_event_start + 1);
                    placed = std::none_of(taken.begin(), taken.end(), [&](const auto& r) {
                        return start <= r.second + 1 && r.first <= start + len;
                    });
                }
                if (!placed) throw DataError("could not place non-overlapping events");
                taken.emplace_back(start, start + len - 1);

                const std::size_t root = cfg.root_channel ? *cfg.root_channel : uniform_index(cfg.channels);
                const double sign = unif(rng) < 0.5 ? -1.0 : 1.0;
                const double amplitude = sign * cfg.severity * cfg.noise_sigma;

                std::vector<std::pair<std::size_t, double>> targets = {{root, 1.0}};
                if (cfg.coupling > 0.0 && cfg.channels > 1) {
                    std::vector<std::size_t> others;
                    for (std::size_t k = 0; k < cfg.channels; ++k)
                        if (k != root) others.push_back(k);
                    std::shuffle(others.begin(), others.end(), rng);
                    const std::size_t n_coupled = std::min(cfg.coupled_channels, others.size());
                    for (std::size_t c = 0; c < n_coupled; ++c)
                        targets.emplace_back(others[c], cfg.coupling * (0.5 + 0.5 * unif(rng)));
                }
                const double osc_period = 6.0;
                for (std::size_t j = 0; j < len; ++j) {
                    double d = amplitude;
                    if (shape == Shape::Burst)
                        d = amplitude * std::cos(2.0 * std::numbers::pi * static_cast<double>(j) / osc_period);
                    for (const auto& [ch, gain] : targets)
                        v(static_cast<Eigen::Index>(start + j), static_cast<Eigen::Index>(ch)) += gain * d;
                }
                events.push_back({start, start + len - 1, type, names[root], cfg.severity});
            }
            std::sort(events.begin(), events.end(),
                      [](const auto& a, const auto& b) { return a.start_idx < b.start_idx; });
        }
        ds.series.push_back({MultiSeries(std::move(v), names), std::move(events)});
    }

    const auto train_count = static_cast<std::size_t>(
        std::llround(cfg.train_fraction * static_cast<double>(cfg.series)));
    assign_stratified_split(ds, std::min(train_count, cfg.series), seed ^ 0x9e3779b97f4a7c15ULL);
    ds.validate();
    return ds;
}

}  // namespace mesad
