#include "mesad/harness.hpp"

#include "mesad/mes.hpp"

#include <nlohmann/json.hpp>
#include <omp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

namespace mesad::harness {

using nlohmann::json;
namespace fs = std::filesystem;

const std::vector<std::string>& known_models() {
    static const std::vector<std::string> names = {kOurs, "1NN", "iDTW", "dDTW", "MiniRocket"};
    return names;
}

namespace {

constexpr const char* kExplainers[] = {"surrogate", "shapley"};

// Reads members of a JSON object and remembers which ones were used, so that
// typos surface as errors instead of silently falling back to defaults.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
    }

    template <class T>
    void get(const char* key, T& out) {
        if (!j_.contains(key)) return;
        used_.insert(key);
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where_ + "." + key + ": " + e.what());
        }
    }

    template <class T>
    void get(const char* key, std::optional<T>& out) {
        if (!j_.contains(key)) return;
        if (j_.at(key).is_null()) {
            used_.insert(key);
            out.reset();
            return;
        }
        T v{};
        get(key, v);
        out = v;
    }

    const json* child(const char* key) {
        if (!j_.contains(key)) return nullptr;
        used_.insert(key);
        return &j_.at(key);
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!used_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> used_;
};

std::string full(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

std::string fixed4(double v) {
    if (v == 0.0) v = 0.0;  // no "-0.0000"
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("failed while writing " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::vector<MultiSeries> gather(const LabeledDataset& ds, std::span<const std::size_t> ids) {
    std::vector<MultiSeries> out;
    out.reserve(ids.size());
    for (auto i : ids) out.push_back(ds.series[i].data);
    return out;
}

std::optional<std::size_t> root_index(const LabeledSeries& s, std::size_t t) {
    for (const auto& ev : s.events)
        if (ev.contains(t) && !ev.root_channel.empty() && s.data.has_channel(ev.root_channel))
            return s.data.channel_index(ev.root_channel);
    return std::nullopt;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

SynthConfig parse_synth_config(const json& j) {
    SynthConfig c;
    ObjectReader r(j, "synth");
    std::string profile = "desk";
    r.get("profile", profile);
    if (profile == "desk") c = SynthConfig::desk_profile();
    else if (profile == "full") c = SynthConfig::full_profile();
    else if (profile == "default") c = SynthConfig{};
    else throw ConfigError("synth.profile must be desk, full or default");
    r.get("channels", c.channels);
    r.get("steps", c.steps);
    r.get("series", c.series);
    r.get("event_rate", c.event_rate);
    r.get("events_per_series", c.events_per_series);
    if (const json* types = r.child("event_types")) {
        if (!types->is_array()) throw ConfigError("synth.event_types must be an array");
        c.event_types.clear();
        try {
            for (const auto& t : *types) c.event_types.push_back(parse_event_type(t.get<std::string>()));
        } catch (const std::exception& e) {
            throw ConfigError(std::string("synth.event_types: ") + e.what());
        }
    }
    r.get("coupling", c.coupling);
    r.get("coupled_channels", c.coupled_channels);
    r.get("noise_sigma", c.noise_sigma);
    r.get("ar_coefficient", c.ar_coefficient);
    r.get("noise_correlation", c.noise_correlation);
    r.get("season_period", c.season_period);
    r.get("season_amplitude", c.season_amplitude);
    r.get("trend_scale", c.trend_scale);
    r.get("severity", c.severity);
    r.get("min_event_start", c.min_event_start);
    r.get("max_event_length", c.max_event_length);
    r.get("root_channel", c.root_channel);
    r.get("train_fraction", c.train_fraction);
    r.finish();
    return c;
}

RunConfig parse_config(const json& j, const fs::path& base_dir) {
    RunConfig c;
    ObjectReader r(j, "config");
    auto resolve = [&](const std::string& p) {
        fs::path path(p);
        return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    };

    if (const json* d = r.child("dataset")) {
        ObjectReader dr(*d, "dataset");
        std::optional<std::string> csv, labels;
        dr.get("csv", csv);
        dr.get("labels", labels);
        dr.get("train_count", c.train_count);
        if (const json* s = dr.child("synth")) {
            if (csv) throw ConfigError("dataset: give either csv or synth, not both");
            c.synth = parse_synth_config(*s);
        }
        dr.finish();
        if (csv) c.csv_path = resolve(*csv);
        if (labels) c.label_path = resolve(*labels);
    }

    r.get("models", c.models);
    r.get("trials", c.trials);
    r.get("seed", c.seed);
    r.get("alpha", c.alpha);
    c.detector.alpha = c.alpha;

    if (const json* d = r.child("detector")) {
        ObjectReader dr(*d, "detector");
        dr.get("is_ratio", c.detector.is_ratio);
        dr.get("std_multiplier", c.detector.std_multiplier);
        dr.get("window", c.detector.window);
        dr.get("bootstrap_quantile", c.detector.bootstrap_quantile);
        dr.finish();
    }
    if (const json* e = r.child("explainer")) {
        ObjectReader er(*e, "explainer");
        er.get("n_samples", c.explainer.n_samples);
        er.get("kernel_width", c.explainer.kernel_width);
        er.get("mask_probability", c.explainer.mask_probability);
        er.get("amplitude_noise", c.explainer.amplitude_noise);
        er.get("ridge", c.explainer.ridge);
        std::string mode = "auto";
        er.get("shapley_mode", mode);
        if (mode == "auto") c.explainer.shapley_mode = explain::ShapleyMode::Auto;
        else if (mode == "exact") c.explainer.shapley_mode = explain::ShapleyMode::Exact;
        else if (mode == "sampling") c.explainer.shapley_mode = explain::ShapleyMode::Sampling;
        else throw ConfigError("explainer.shapley_mode must be auto, exact or sampling");
        er.get("exact_max_channels", c.explainer.exact_max_channels);
        er.get("n_permutations", c.explainer.n_permutations);
        er.finish();
    }
    r.get("betas", c.betas);
    std::optional<std::string> out;
    r.get("out", out);
    if (out) c.out = resolve(*out);

    if (const json* f = r.child("forecaster")) {
        ObjectReader fr(*f, "forecaster");
        fr.get("hidden", c.forecaster.hidden);
        fr.get("lookback", c.forecaster.lookback);
        fr.get("epochs", c.forecaster.epochs);
        fr.get("batch", c.forecaster.batch);
        fr.get("learning_rate", c.forecaster.learning_rate);
        fr.get("clip_norm", c.forecaster.clip_norm);
        fr.get("validation_fraction", c.forecaster.validation_fraction);
        fr.get("window_stride", c.forecaster.window_stride);
        fr.finish();
    }
    if (const json* i = r.child("intervals")) {
        ObjectReader ir(*i, "intervals");
        ir.get("rolling_window", c.intervals.rolling_window);
        ir.finish();
    }
    r.get("calibration_fraction", c.calibration_fraction);
    r.get("max_explanations", c.max_explanations);
    if (const json* m = r.child("minirocket")) {
        ObjectReader mr(*m, "minirocket");
        mr.get("num_features", c.minirocket.num_features);
        mr.get("max_dilations_per_kernel", c.minirocket.max_dilations_per_kernel);
        mr.finish();
    }
    r.get("workers", c.workers);
    r.finish();
    c.validate();
    return c;
}

RunConfig load_config(const fs::path& path) {
    return parse_config(read_json(path), path.parent_path());
}

void RunConfig::validate() const {
    if (trials < 1) throw ConfigError("trials must be at least 1");
    if (betas.empty()) throw ConfigError("betas must not be empty");
    for (auto b : betas)
        if (b < 1) throw ConfigError("beta values must be at least 1");
    if (models.empty()) throw ConfigError("no models selected");
    std::set<std::string> seen;
    for (const auto& m : models) {
        if (std::find(known_models().begin(), known_models().end(), m) == known_models().end()) {
            std::string list;
            for (const auto& k : known_models()) list += (list.empty() ? "" : ", ") + k;
            throw ConfigError("unknown model '" + m + "' (known: " + list + ")");
        }
        if (!seen.insert(m).second) throw ConfigError("model '" + m + "' listed twice");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (detector.alpha != alpha) throw ConfigError("detector alpha differs from the run alpha");
    try {
        detector.validate();
        explainer.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    if (csv_path && !fs::exists(*csv_path)) throw ConfigError("dataset path does not exist: " + csv_path->string());
    if (label_path && !fs::exists(*label_path))
        throw ConfigError("label file does not exist: " + label_path->string());
    if (!(calibration_fraction > 0.0 && calibration_fraction < 1.0))
        throw ConfigError("calibration_fraction must lie in (0, 1)");
    if (forecaster.hidden < 1 || forecaster.lookback < 1 || forecaster.epochs < 1 || forecaster.batch < 1 ||
        forecaster.window_stride < 1)
        throw ConfigError("forecaster sizes must be positive");
    if (!(forecaster.learning_rate > 0.0)) throw ConfigError("forecaster.learning_rate must be positive");
    if (intervals.rolling_window < 1) throw ConfigError("intervals.rolling_window must be positive");
    if (minirocket.num_features < baselines::MiniRocketConfig::kNumKernels)
        throw ConfigError("minirocket.num_features must be at least 84");
}

LabeledDataset load_dataset(const RunConfig& cfg) {
    LabeledDataset ds;
    if (cfg.csv_path) {
        IngestConfig ic;
        ic.label_path = cfg.label_path;
        ic.train_count = cfg.train_count;
        ic.split_seed = cfg.seed;
        ds = ingest_csv(*cfg.csv_path, ic);
    } else {
        ds = synth_generate(cfg.synth, cfg.seed);
    }
    ds.validate();
    if (ds.train.size() < 2) throw DataError("need at least two training series");
    if (ds.test.empty()) throw DataError("the test split is empty");
    return ds;
}

// ---------------------------------------------------------------------------
// Hybrid detector

TrainedDetector train_detector(const LabeledDataset& ds, const RunConfig& cfg, std::uint64_t seed) {
    std::vector<std::size_t> ids = ds.train;
    std::mt19937_64 rng(mix_seed(seed, 1));
    std::shuffle(ids.begin(), ids.end(), rng);
    auto n_cal = static_cast<std::size_t>(std::lround(cfg.calibration_fraction * static_cast<double>(ids.size())));
    n_cal = std::clamp<std::size_t>(n_cal, 1, ids.size() - 1);
    std::vector<std::size_t> cal_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_cal));
    std::vector<std::size_t> fit_ids(ids.begin() + static_cast<std::ptrdiff_t>(n_cal), ids.end());
    std::sort(cal_ids.begin(), cal_ids.end());
    std::sort(fit_ids.begin(), fit_ids.end());

    const auto fit_series = gather(ds, fit_ids);
    TrainedDetector td;
    td.model.smoothing = mes::fit(fit_series);

    std::vector<MultiSeries> residuals;
    residuals.reserve(fit_series.size());
    Vector sum = Vector::Zero(static_cast<Eigen::Index>(fit_series.front().channels()));
    double rows = 0.0;
    for (const auto& x : fit_series) {
        auto dec = mes::preprocess(x, td.model.smoothing.reinitialized(x));
        sum += dec.residuals.values().colwise().sum().transpose();
        rows += static_cast<double>(dec.residuals.steps());
        residuals.push_back(std::move(dec.residuals));
    }
    td.residual_mean = sum / rows;
    td.model.net = forecast::train(residuals, cfg.forecaster, mix_seed(seed, 2));
    td.calibration = forecast::calibrate(td.model, gather(ds, cal_ids));
    return td;
}

SeriesDetection run_detector(const TrainedDetector& td, const MultiSeries& x, const RunConfig& cfg) {
    auto out = td.model.forecast(x);
    auto f = forecast::conformal_intervals(out.point, x.values(), cfg.alpha, td.calibration,
                                           td.model.net.lookback(), cfg.intervals);
    const Matrix& base = out.decomposition.baseline;
    f.point -= base;
    f.lower -= base;
    f.upper -= base;
    SeriesDetection sd{std::move(out.decomposition.residuals), std::move(f), {}, base};
    sd.result = detect::detect(sd.residuals, sd.intervals, cfg.detector);
    return sd;
}

explain::ScoreFn make_score_fn(const forecast::RecurrentModel& net, Vector half_width, double alpha) {
    auto model = std::make_shared<const forecast::RecurrentModel>(net);
    return [model, hw = std::move(half_width), alpha](const Matrix& window) {
        const auto w = static_cast<Eigen::Index>(model->lookback());
        if (window.rows() != w + 1) throw explain::ExplainError("score window must have lookback + 1 rows");
        const Vector pred = model->predict_next(window.topRows(w));
        double best = 0.0;
        for (Eigen::Index k = 0; k < window.cols(); ++k)
            best = std::max(best, detect::normalized_score(window(w, k), pred(k) - hw(k), pred(k) + hw(k), alpha));
        return best;
    };
}

std::pair<Matrix, Vector> explanation_window(const SeriesDetection& sd, std::size_t step, std::size_t lookback) {
    if (step < lookback || step >= sd.residuals.steps())
        throw explain::ExplainError("step " + std::to_string(step) + " has no complete lookback window");
    const auto t = static_cast<Eigen::Index>(step);
    const auto w = static_cast<Eigen::Index>(lookback);
    Matrix window = sd.residuals.values().middleRows(t - w, w + 1);
    Vector hw = ((sd.intervals.upper.row(t) - sd.intervals.lower.row(t)) / 2.0).transpose();
    return {std::move(window), std::move(hw)};
}

// ---------------------------------------------------------------------------
// Trials

namespace {

void add_reports(TrialOutcome& out, const std::string& model, std::size_t trial, std::uint64_t seed,
                 const std::string& unit, const std::vector<double>& scores, const std::vector<bool>& labels,
                 double seconds) {
    metrics::TrialReport r;
    r.model = model;
    r.trial = trial;
    r.seed = seed;
    r.unit = unit;
    r.auroc = metrics::auroc(scores, labels);
    r.aupr = metrics::aupr(scores, labels);
    r.seconds = seconds;
    out.reports.push_back(std::move(r));
}

void run_ours(const LabeledDataset& ds, const RunConfig& cfg, std::size_t trial, std::uint64_t seed,
              const std::optional<fs::path>& artifacts, TrialOutcome& out) {
    const auto t0 = std::chrono::steady_clock::now();
    const TrainedDetector td = train_detector(ds, cfg, seed);
    const std::size_t w = td.model.net.lookback();

    std::vector<double> series_scores, step_scores;
    std::vector<bool> series_labels, step_labels;
    std::vector<ScoreRow> rows;
    struct Pending {
        std::size_t series;
        std::size_t step;
        std::size_t root;
        std::size_t test_pos;
    };
    std::vector<Pending> pending;
    std::vector<SeriesDetection> detections;
    for (std::size_t pos = 0; pos < ds.test.size(); ++pos) {
        const std::size_t id = ds.test[pos];
        const auto& s = ds.series[id];
        auto sd = run_detector(td, s.data, cfg);
        const auto truth = s.step_labels();
        double peak = 0.0;
        for (std::size_t t = sd.result.first_detectable; t < s.data.steps(); ++t) {
            peak = std::max(peak, sd.result.scores[t]);
            step_scores.push_back(sd.result.scores[t]);
            step_labels.push_back(truth[t]);
            rows.push_back({kOurs, "timestep", trial, id, t, sd.result.scores[t], truth[t]});
            if (sd.result.flags[t] && pending.size() < cfg.max_explanations)
                if (auto root = root_index(s, t)) pending.push_back({id, t, *root, pos});
        }
        series_scores.push_back(peak);
        series_labels.push_back(s.anomalous());
        rows.push_back({kOurs, "series", trial, id, std::nullopt, peak, s.anomalous()});
        detections.push_back(std::move(sd));
    }

    std::vector<ExplainedDetection> explained;
    explain::ExplainerConfig ecfg = cfg.explainer;
    ecfg.baseline = td.residual_mean;
    for (std::size_t i = 0; i < pending.size(); ++i) {
        const auto& p = pending[i];
        auto [window, hw] = explanation_window(detections[p.test_pos], p.step, w);
        const auto score = make_score_fn(td.model.net, hw, cfg.alpha);
        ExplainedDetection e{p.series, p.step, p.root, {}, {}};
        e.surrogate = explain::surrogate_explain(score, window, ecfg, mix_seed(seed, 100 + 2 * i));
        e.shapley = explain::shapley_explain(score, window, ecfg, mix_seed(seed, 101 + 2 * i));
        e.surrogate.series_id = e.shapley.series_id = p.series;
        e.surrogate.step = e.shapley.step = p.step;
        explained.push_back(std::move(e));
    }
    const double seconds = seconds_since(t0);

    add_reports(out, kOurs, trial, seed, "series", series_scores, series_labels, seconds);
    auto& rep = out.reports.back();
    for (const char* name : kExplainers) {
        for (auto beta : cfg.betas) {
            metrics::MdsInput in;
            in.beta = beta;
            for (const auto& e : explained)
                in.root_ranks.push_back((std::string(name) == "surrogate" ? e.surrogate : e.shapley).rank[e.root]);
            rep.mds[{name, beta}] = in.root_ranks.empty() ? std::nullopt : std::optional(metrics::mds(in));
        }
    }
    out.explained = explained.size();
    add_reports(out, kOurs, trial, seed, "timestep", step_scores, step_labels, seconds);
    out.scores.insert(out.scores.end(), rows.begin(), rows.end());

    if (artifacts) {
        const fs::path dir = *artifacts / "MES-LSTM";
        fs::create_directories(dir);
        save_artifacts(dir / "model", td, cfg);
        for (std::size_t pos = 0; pos < ds.test.size(); ++pos) {
            const auto& x = ds.series[ds.test[pos]].data;
            const auto& sd = detections[pos];
            forecast::IntervalForecast obs = sd.intervals;
            obs.point += sd.baseline;
            obs.lower += sd.baseline;
            obs.upper += sd.baseline;
            detect::write_detection_csv(dir / ("detection_series_" + std::to_string(ds.test[pos]) + ".csv"), x, obs,
                                        sd.result);
        }
        std::vector<explain::Attribution> sur, shp;
        for (const auto& e : explained) {
            sur.push_back(e.surrogate);
            shp.push_back(e.shapley);
        }
        const auto& names = ds.series.front().data.channel_names();
        explain::write_attribution_csv(dir / "attributions_surrogate.csv", sur, names);
        explain::write_attribution_csv(dir / "attributions_shapley.csv", shp, names);
    }
}

void run_nearest(const LabeledDataset& ds, const std::string& model, std::size_t trial, std::uint64_t seed,
                 const std::optional<fs::path>& artifacts, TrialOutcome& out) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto metric = model == "1NN"    ? baselines::Metric::Euclid
                        : model == "iDTW" ? baselines::Metric::IDTW
                                          : baselines::Metric::DDTW;
    const auto refs = gather(ds, ds.train);
    const auto queries = gather(ds, ds.test);
    const Matrix d = baselines::pairwise_distances(queries, refs, metric);
    const auto nearest = baselines::nearest_columns(d);
    std::vector<double> scores;
    std::vector<bool> labels;
    for (std::size_t i = 0; i < ds.test.size(); ++i) {
        const bool predicted = ds.series[ds.train[nearest[i]]].label() != EventType::Normal;
        scores.push_back(predicted ? 1.0 : 0.0);
        labels.push_back(ds.series[ds.test[i]].anomalous());
        out.scores.push_back({model, "series", trial, ds.test[i], std::nullopt, scores.back(), labels.back()});
    }
    add_reports(out, model, trial, seed, "series", scores, labels, seconds_since(t0));
    if (artifacts) {
        fs::create_directories(*artifacts / model);
        baselines::write_distance_csv(*artifacts / model / "distances.csv", d, ds.test, ds.train);
    }
}

void run_minirocket(const LabeledDataset& ds, const RunConfig& cfg, std::size_t trial, std::uint64_t seed,
                    const std::optional<fs::path>& artifacts, TrialOutcome& out) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto train = gather(ds, ds.train);
    const auto test = gather(ds, ds.test);
    std::vector<EventType> labels;
    for (auto i : ds.train) labels.push_back(ds.series[i].label());
    baselines::MiniRocketClassifier clf;
    clf.fit(train, labels, cfg.minirocket, mix_seed(seed, 3));
    const auto preds = clf.predict(test);
    const bool has_normal =
        std::find(clf.classes().begin(), clf.classes().end(), EventType::Normal) != clf.classes().end();
    std::vector<double> scores;
    std::vector<bool> truth;
    std::vector<EventType> actual;
    for (std::size_t i = 0; i < test.size(); ++i) {
        // Decision values on one-hot targets: 1 - f_normal approximates P(event).
        scores.push_back(has_normal ? 1.0 - preds[i].score(EventType::Normal) : 1.0);
        truth.push_back(ds.series[ds.test[i]].anomalous());
        actual.push_back(ds.series[ds.test[i]].label());
        out.scores.push_back({"MiniRocket", "series", trial, ds.test[i], std::nullopt, scores.back(), truth.back()});
    }
    add_reports(out, "MiniRocket", trial, seed, "series", scores, truth, seconds_since(t0));
    if (artifacts) {
        fs::create_directories(*artifacts / "MiniRocket");
        baselines::write_predictions_csv(*artifacts / "MiniRocket" / "predictions.csv", ds.test, preds, actual,
                                         clf.classes());
    }
}

}  // namespace

TrialOutcome run_trial(const LabeledDataset& ds, const RunConfig& cfg, std::size_t trial, std::uint64_t seed,
                       const std::optional<fs::path>& artifacts) {
    TrialOutcome out;
    for (const auto& model : cfg.models) {
        // A failing model aborts only its own part of the trial.
        const std::size_t before = out.reports.size(), rows_before = out.scores.size();
        try {
            if (model == kOurs) run_ours(ds, cfg, trial, seed, artifacts, out);
            else if (model == "MiniRocket") run_minirocket(ds, cfg, trial, seed, artifacts, out);
            else run_nearest(ds, model, trial, seed, artifacts, out);
        } catch (const std::exception& e) {
            out.reports.resize(before);
            out.scores.resize(rows_before);
            out.failures.emplace_back(model, e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Artifacts

void save_artifacts(const fs::path& dir, const TrainedDetector& td, const RunConfig& cfg) {
    fs::create_directories(dir);
    write_text(dir / "mes.json", mes::to_json(td.model.smoothing).dump(1) + "\n");
    write_text(dir / "model.json", td.model.net.to_json().dump() + "\n");
    json c;
    c["alpha"] = cfg.alpha;
    c["errors"] = td.calibration.errors;
    c["residual_mean"] = std::vector<double>(td.residual_mean.data(), td.residual_mean.data() + td.residual_mean.size());
    c["rolling_window"] = cfg.intervals.rolling_window;
    c["detector"] = {{"is_ratio", cfg.detector.is_ratio},
                     {"std_multiplier", cfg.detector.std_multiplier},
                     {"window", cfg.detector.window},
                     {"bootstrap_quantile", cfg.detector.bootstrap_quantile}};
    c["explainer"] = {{"n_samples", cfg.explainer.n_samples},
                      {"n_permutations", cfg.explainer.n_permutations},
                      {"exact_max_channels", cfg.explainer.exact_max_channels}};
    write_text(dir / "calibration.json", c.dump(1) + "\n");
}

namespace {

std::pair<TrainedDetector, RunConfig> load_artifacts(const fs::path& dir) {
    TrainedDetector td;
    RunConfig cfg;
    td.model.smoothing = mes::state_from_json(read_json(dir / "mes.json"));
    td.model.net = forecast::RecurrentModel::from_json(read_json(dir / "model.json"));
    const json c = read_json(dir / "calibration.json");
    try {
        cfg.alpha = cfg.detector.alpha = c.at("alpha").get<double>();
        td.calibration.errors = c.at("errors").get<std::vector<std::vector<double>>>();
        const auto mean = c.at("residual_mean").get<std::vector<double>>();
        td.residual_mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        cfg.intervals.rolling_window = c.at("rolling_window").get<std::size_t>();
        const auto& d = c.at("detector");
        cfg.detector.is_ratio = d.at("is_ratio").get<double>();
        cfg.detector.std_multiplier = d.at("std_multiplier").get<double>();
        cfg.detector.window = d.at("window").get<std::size_t>();
        cfg.detector.bootstrap_quantile = d.at("bootstrap_quantile").get<double>();
        const auto& e = c.at("explainer");
        cfg.explainer.n_samples = e.at("n_samples").get<std::size_t>();
        cfg.explainer.n_permutations = e.at("n_permutations").get<std::size_t>();
        cfg.explainer.exact_max_channels = e.at("exact_max_channels").get<std::size_t>();
    } catch (const json::exception& e) {
        throw ConfigError((dir / "calibration.json").string() + ": " + e.what());
    }
    if (td.calibration.channels() != td.model.net.input_size() ||
        static_cast<std::size_t>(td.residual_mean.size()) != td.model.net.input_size())
        throw ConfigError("artifacts disagree on the channel count");
    return {std::move(td), std::move(cfg)};
}

}  // namespace

// ---------------------------------------------------------------------------
// Subcommands

std::uint64_t cmd_synth(const SynthConfig& cfg, std::uint64_t seed, const fs::path& out) {
    const auto ds = synth_generate(cfg, seed);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw DataError("cannot create " + out.string() + ": " + ec.message());
    write_dataset(out, ds);
    return dataset_digest(ds);
}

namespace {

std::size_t resolve_workers(std::size_t configured) {
    if (configured > 0) return configured;
    if (const char* env = std::getenv("MESAD_WORKERS")) {
        std::size_t v = 0;
        const std::string_view s(env);
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size() || v == 0)
            throw ConfigError("MESAD_WORKERS must be a positive integer");
        return v;
    }
    return static_cast<std::size_t>(std::max(1, omp_get_max_threads()));
}

std::string summary_csv(const std::vector<metrics::ModelSummary>& rows, bool auroc) {
    std::ostringstream os;
    os << "model,unit,trials,mean,std,min,q1,median,q3,max\n";
    for (const auto& r : rows) {
        const auto& s = auroc ? r.auroc : r.aupr;
        os << r.model << ',' << r.unit << ',' << s.n << ',' << fixed4(s.mean) << ',' << fixed4(s.std) << ','
           << fixed4(s.min) << ',' << fixed4(s.q1) << ',' << fixed4(s.median) << ',' << fixed4(s.q3) << ','
           << fixed4(s.max) << '\n';
    }
    return os.str();
}

std::string boxplot_csv(const std::vector<metrics::ModelSummary>& rows,
                        const std::map<std::pair<std::string, std::string>, std::vector<double>>& values, bool auroc) {
    std::ostringstream os;
    os << "model,unit,whisker_low,q1,median,q3,whisker_high,outliers\n";
    for (const auto& r : rows) {
        const auto& s = auroc ? r.auroc : r.aupr;
        os << r.model << ',' << r.unit << ',' << full(s.whisker_low) << ',' << full(s.q1) << ',' << full(s.median)
           << ',' << full(s.q3) << ',' << full(s.whisker_high) << ',';
        std::string sep;
        for (double v : values.at({r.model, r.unit}))
            if (v < s.whisker_low || v > s.whisker_high) {
                os << sep << full(v);
                sep = ";";
            }
        os << '\n';
    }
    return os.str();
}

json summary_json(const metrics::Summary& s) {
    return {{"n", s.n},         {"mean", s.mean},   {"std", s.std}, {"min", s.min},
            {"q1", s.q1},       {"median", s.median}, {"q3", s.q3}, {"max", s.max},
            {"whisker_low", s.whisker_low}, {"whisker_high", s.whisker_high}};
}

}  // namespace

int cmd_run(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    const std::size_t workers = resolve_workers(cfg.workers);
    const auto t0 = std::chrono::steady_clock::now();
    const LabeledDataset ds = load_dataset(cfg);
    std::error_code ec;
    fs::create_directories(cfg.out, ec);
    if (ec) throw DataError("cannot create " + cfg.out.string() + ": " + ec.message());
    const auto digest = dataset_digest(ds);
    log << "dataset: " << ds.series.size() << " series (" << ds.train.size() << " train, " << ds.test.size()
        << " test), digest " << std::hex << digest << std::dec << "\n";
    log << "running " << cfg.trials << " trial(s) on " << workers << " worker(s)\n";

    std::vector<TrialOutcome> outcomes(cfg.trials);
    const auto n = static_cast<std::ptrdiff_t>(cfg.trials);
#pragma omp parallel for schedule(dynamic, 1) num_threads(static_cast<int>(workers))
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto trial = static_cast<std::size_t>(i);
        std::optional<fs::path> artifacts;
        if (trial == 0) artifacts = cfg.out / "trial_0";
        try {
            outcomes[trial] = run_trial(ds, cfg, trial, cfg.seed + trial, artifacts);
        } catch (const std::exception& e) {
            outcomes[trial].failures.emplace_back("*", e.what());
        }
    }

    // Single writer from here on.
    std::vector<metrics::TrialReport> reports;
    std::size_t failed_trials = 0;
    std::ostringstream trials_csv, mds_trials, scores_csv;
    trials_csv << "model,unit,trial,seed,status,auroc,aupr,error\n";
    mds_trials << "trial,seed,explainer,beta,detections,mds\n";
    scores_csv << "model,unit,trial,series_id,step,score,label\n";
    json failures = json::array();
    for (std::size_t t = 0; t < outcomes.size(); ++t) {
        const auto& o = outcomes[t];
        const std::uint64_t seed = cfg.seed + t;
        if (!o.failures.empty()) ++failed_trials;
        for (const auto& r : o.reports) {
            reports.push_back(r);
            trials_csv << r.model << ',' << r.unit << ',' << t << ',' << seed << ",ok," << full(r.auroc) << ','
                       << full(r.aupr) << ",\n";
            log << "trial " << t << " " << r.model << " [" << r.unit << "] auROC " << fixed4(r.auroc) << " auPR "
                << fixed4(r.aupr) << " (" << fixed4(r.seconds) << " s)\n";
            for (const auto& [key, v] : r.mds)
                mds_trials << t << ',' << seed << ',' << key.first << ',' << key.second << ',' << o.explained << ','
                           << (v ? full(*v) : "NA") << '\n';
        }
        for (const auto& [model, msg] : o.failures) {
            std::string clean = msg;
            std::replace(clean.begin(), clean.end(), ',', ';');
            std::replace(clean.begin(), clean.end(), '\n', ' ');
            trials_csv << model << ",," << t << ',' << seed << ",failed,NA,NA," << clean << '\n';
            log << "trial " << t << " " << model << " FAILED: " << msg << "\n";
            failures.push_back({{"trial", t}, {"model", model}, {"error", msg}});
        }
        for (const auto& s : o.scores)
            scores_csv << s.model << ',' << s.unit << ',' << s.trial << ',' << s.series_id << ','
                       << (s.step ? std::to_string(*s.step) : "") << ',' << full(s.score) << ',' << (s.label ? 1 : 0)
                       << '\n';
    }
    write_text(cfg.out / "trials.csv", trials_csv.str());
    write_text(cfg.out / "mds_trials.csv", mds_trials.str());
    write_text(cfg.out / "scores.csv", scores_csv.str());

    const auto summaries = metrics::aggregate_trials(reports);
    std::map<std::pair<std::string, std::string>, std::vector<double>> auroc_values, aupr_values;
    for (const auto& r : reports) {
        auroc_values[{r.model, r.unit}].push_back(r.auroc);
        aupr_values[{r.model, r.unit}].push_back(r.aupr);
    }
    write_text(cfg.out / "summary_auroc.csv", summary_csv(summaries, true));
    write_text(cfg.out / "summary_aupr.csv", summary_csv(summaries, false));
    write_text(cfg.out / "boxplot_auroc.csv", boxplot_csv(summaries, auroc_values, true));
    write_text(cfg.out / "boxplot_aupr.csv", boxplot_csv(summaries, aupr_values, false));

    // One-sided tests of H0: benchmark >= ours, on the per-series unit shared by all models.
    json tests = json::object();
    for (const bool use_auroc : {true, false}) {
        const auto& values = use_auroc ? auroc_values : aupr_values;
        const char* metric = use_auroc ? "auroc" : "aupr";
        std::ostringstream os;
        os << "benchmark,statistic,p_value,dof,reject_h0_at_0.01,note\n";
        const auto ours = values.find({kOurs, "series"});
        for (const auto& model : cfg.models) {
            if (model == kOurs) continue;
            const auto bench = values.find({model, "series"});
            if (ours == values.end() || bench == values.end()) {
                os << model << ",NA,NA,NA,NA,missing results\n";
                continue;
            }
            try {
                const auto r = metrics::ttest_one_sided(bench->second, ours->second);
                const bool separated = !std::isfinite(r.statistic);
                const char* note = separated ? "both samples constant" : "";
                os << model << ',' << fixed4(r.statistic) << ',' << fixed4(r.p_value) << ',' << fixed4(r.dof) << ','
                   << (r.p_value < 0.01 ? "yes" : "no") << ',' << note << '\n';
                tests[metric][model] = {{"statistic", separated ? json(r.statistic > 0 ? "inf" : "-inf") : json(r.statistic)},
                                        {"p_value", r.p_value},
                                        {"dof", separated ? json("inf") : json(r.dof)}};
            } catch (const metrics::MetricError& e) {
                os << model << ",NA,NA,NA,NA," << e.what() << '\n';
                tests[metric][model] = {{"error", e.what()}};
            }
        }
        write_text(cfg.out / (std::string("ttest_") + metric + ".csv"), os.str());
    }

    json mds_json = json::object();
    for (const char* name : kExplainers) {
        std::ostringstream os;
        os << "beta,trials_defined,mean,std\n";
        for (auto beta : cfg.betas) {
            std::vector<double> v;
            for (const auto& r : reports)
                if (r.model == kOurs && r.unit == "series") {
                    auto it = r.mds.find({name, beta});
                    if (it != r.mds.end() && it->second) v.push_back(*it->second);
                }
            if (v.empty()) {
                os << beta << ",0,NA,NA\n";
                mds_json[name][std::to_string(beta)] = nullptr;
                continue;
            }
            const auto s = metrics::summarize(v);
            os << beta << ',' << v.size() << ',' << fixed4(s.mean) << ',' << fixed4(s.std) << '\n';
            mds_json[name][std::to_string(beta)] = {{"trials", v.size()}, {"mean", s.mean}, {"std", s.std}};
        }
        write_text(cfg.out / (std::string("mds_") + name + ".csv"), os.str());
    }

    json summary;
    summary["dataset_digest"] = digest;
    summary["trials"] = cfg.trials;
    summary["seed"] = cfg.seed;
    summary["alpha"] = cfg.alpha;
    summary["models"] = cfg.models;
    summary["betas"] = cfg.betas;
    summary["failed_trials"] = failed_trials;
    summary["failures"] = failures;
    summary["ttest"] = tests;
    summary["mds"] = mds_json;
    json rows = json::array();
    for (const auto& s : summaries)
        rows.push_back({{"model", s.model}, {"unit", s.unit}, {"auroc", summary_json(s.auroc)}, {"aupr", summary_json(s.aupr)}});
    summary["summary"] = rows;
    write_text(cfg.out / "summary.json", summary.dump(2) + "\n");

    log << "wrote reports to " << cfg.out.string() << " in " << fixed4(seconds_since(t0)) << " s\n";
    if (failed_trials == 0) return 0;
    log << failed_trials << " of " << cfg.trials << " trial(s) had failures\n";
    return 2 * failed_trials > cfg.trials ? 2 : 3;
}

ExplainReport cmd_explain(const ExplainRequest& req, std::ostream& log) {
    auto [td, cfg] = load_artifacts(req.artifacts);
    const MultiSeries x = read_series_csv(req.series);
    if (x.channels() != td.model.net.input_size())
        throw ConfigError("series has " + std::to_string(x.channels()) + " channels, the model expects " +
                          std::to_string(td.model.net.input_size()));
    if (req.step >= x.steps())
        throw explain::ExplainError("step " + std::to_string(req.step) + " is beyond the series end");
    const auto sd = run_detector(td, x, cfg);
    if (!sd.result.flags[req.step])
        throw explain::ExplainError("step " + std::to_string(req.step) +
                                    " was not flagged by the detector; explanations are only produced for detections");

    auto [window, hw] = explanation_window(sd, req.step, td.model.net.lookback());
    const auto score = make_score_fn(td.model.net, hw, cfg.alpha);
    explain::ExplainerConfig ecfg = cfg.explainer;
    ecfg.baseline = td.residual_mean;

    ExplainReport rep;
    rep.channel_names = x.channel_names();
    rep.surrogate = explain::surrogate_explain(score, window, ecfg, mix_seed(req.seed, 0));
    rep.shapley = explain::shapley_explain(score, window, ecfg, mix_seed(req.seed, 1));
    auto flat = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [&](double a) { return a == v.front(); });
    };
    rep.degenerate = flat(rep.surrogate.importance) || flat(rep.shapley.importance);
    if (rep.degenerate)
        log << "warning: the score does not respond to channel perturbations; ranks fall back to channel order\n";

    auto order = [](const explain::Attribution& a) {
        std::vector<std::size_t> by_rank(a.channels());
        for (std::size_t k = 0; k < a.channels(); ++k) by_rank[a.rank[k] - 1] = k;
        return by_rank;
    };
    const auto so = order(rep.surrogate), po = order(rep.shapley);
    std::ostringstream os;
    os << "rank,surrogate_channel,surrogate_importance,shapley_channel,shapley_importance\n";
    for (std::size_t r = 0; r < so.size(); ++r)
        os << r + 1 << ',' << rep.channel_names[so[r]] << ',' << full(rep.surrogate.importance[so[r]]) << ','
           << rep.channel_names[po[r]] << ',' << full(rep.shapley.importance[po[r]]) << '\n';
    log << os.str();
    if (req.out) write_text(*req.out, os.str());
    return rep;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

int cmd_evaluate(const fs::path& scores, const fs::path& out, std::ostream& log) {
    std::ifstream in(scores);
    if (!in) throw DataError("cannot open " + scores.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError(scores.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv(line);
    auto column = [&](const std::string& name) -> std::optional<std::size_t> {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    };
    const auto score_col = column("score"), label_col = column("label");
    if (!score_col || !label_col) throw DataError(scores.string() + ": needs 'score' and 'label' columns");
    const auto model_col = column("model"), unit_col = column("unit"), trial_col = column("trial");

    using Key = std::tuple<std::string, std::string, std::string>;
    std::vector<Key> order;
    std::map<Key, std::pair<std::vector<double>, std::vector<bool>>> groups;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size())
            throw DataError(scores.string() + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(header.size()));
        double s = 0.0;
        const auto& sc = cells[*score_col];
        auto [p, ec] = std::from_chars(sc.data(), sc.data() + sc.size(), s);
        if (ec != std::errc{} || p != sc.data() + sc.size() || std::isnan(s))
            throw DataError(scores.string() + ": row " + std::to_string(row) + ": bad score '" + sc + "'");
        const auto& lc = cells[*label_col];
        bool label;
        if (lc == "1" || lc == "true") label = true;
        else if (lc == "0" || lc == "false") label = false;
        else throw DataError(scores.string() + ": row " + std::to_string(row) + ": bad label '" + lc + "'");
        Key key{model_col ? cells[*model_col] : "", unit_col ? cells[*unit_col] : "",
                trial_col ? cells[*trial_col] : ""};
        if (!groups.count(key)) order.push_back(key);
        groups[key].first.push_back(s);
        groups[key].second.push_back(label);
    }

    std::ostringstream os;
    os << "model,unit,trial,n,positives,auroc,aupr,note\n";
    int status = 0;
    for (const auto& key : order) {
        const auto& [s, l] = groups[key];
        const auto pos = std::count(l.begin(), l.end(), true);
        os << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ',' << s.size() << ',' << pos
           << ',';
        std::string auroc = "NA", aupr = "NA", note;
        try {
            auroc = full(metrics::auroc(s, l));
        } catch (const metrics::MetricError& e) {
            note = e.what();
            status = 3;
        }
        try {
            aupr = full(metrics::aupr(s, l));
        } catch (const metrics::MetricError& e) {
            note = e.what();
            status = 3;
        }
        os << auroc << ',' << aupr << ',' << note << '\n';
    }
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw DataError("cannot create " + out.string() + ": " + ec.message());
    write_text(out / "evaluation.csv", os.str());
    log << os.str();
    return status;
}

}  // namespace mesad::harness
