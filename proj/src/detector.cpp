#include "mesad/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mesad::detect {

void DetectorConfig::validate() const {
    if (!(is_ratio > 1.0)) throw DetectorError("is_ratio must exceed 1");
    if (!(std_multiplier > 0.0)) throw DetectorError("std_multiplier must be positive");
    if (window < 3) throw DetectorError("rolling window must be at least 3");
    if (!(alpha > 0.0 && alpha < 1.0)) throw DetectorError("alpha must lie in (0, 1)");
    if (!(bootstrap_quantile > 0.0 && bootstrap_quantile <= 1.0))
        throw DetectorError("bootstrap_quantile must lie in (0, 1]");
}

double interval_score(double y, double lower, double upper, double alpha) {
    if (lower > upper) throw DetectorError("interval lower bound exceeds upper bound");
    if (!(alpha > 0.0 && alpha < 1.0)) throw DetectorError("alpha must lie in (0, 1)");
    double s = upper - lower;
    if (y < lower) s += (2.0 / alpha) * (lower - y);
    if (y > upper) s += (2.0 / alpha) * (y - upper);
    return s;
}

double normalized_score(double y, double lower, double upper, double alpha) {
    if (y >= lower && y <= upper) return 1.0;
    constexpr double kMinWidth = 1e-12;
    return interval_score(y, lower, upper, alpha) / std::max(upper - lower, kMinWidth);
}

std::size_t DetectionResult::flagged_count() const {
    return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), true));
}

namespace {

double quantile_linear(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

DetectionResult detect(const Matrix& y, const forecast::IntervalForecast& f, const DetectorConfig& cfg) {
    cfg.validate();
    if (y.rows() != f.point.rows() || y.cols() != f.point.cols() || f.lower.rows() != y.rows() ||
        f.upper.rows() != y.rows())
        throw DetectorError("observations and interval forecast are not aligned");
    const auto n = static_cast<std::size_t>(y.rows());
    const auto k_count = static_cast<std::size_t>(y.cols());
    const std::size_t start = std::max(cfg.window, f.first_valid);
    if (start >= n)
        throw DetectorError("rolling window of " + std::to_string(cfg.window) +
                            " leaves no detectable steps in a series of " + std::to_string(n));

    DetectionResult r;
    r.first_detectable = start;
    r.flags.assign(n, false);
    r.scores.assign(n, 1.0);
    r.flagging_channels.assign(n, {});
    r.channel_flags = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(y.rows(), y.cols(), false);
    r.channel_scores = Matrix::Ones(y.rows(), y.cols());

    for (std::size_t k = 0; k < k_count; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        auto at = [&](std::size_t t) { return static_cast<Eigen::Index>(t); };

        // Stand-in for IS(y*) until the channel raises its first anomaly.
        std::vector<double> warmup;
        for (std::size_t t = start - cfg.window; t < start; ++t)
            warmup.push_back(interval_score(y(at(t), kk), f.lower(at(t), kk), f.upper(at(t), kk), f.alpha));
        double last_is = quantile_linear(warmup, cfg.bootstrap_quantile);

        const double w = static_cast<double>(cfg.window);

        for (std::size_t t = 0; t < n; ++t) {
            const double yt = y(at(t), kk);
            const double lo = f.lower(at(t), kk);
            const double hi = f.upper(at(t), kk);
            r.channel_scores(at(t), kk) = normalized_score(yt, lo, hi, f.alpha);
            if (t < start) continue;

            if (yt < lo || yt > hi) {
                const double is = interval_score(yt, lo, hi, f.alpha);
                double mean = 0.0, var = 0.0;
                for (std::size_t s = t - cfg.window; s < t; ++s) mean += y(at(s), kk);
                mean /= w;
                for (std::size_t s = t - cfg.window; s < t; ++s)
                    var += (y(at(s), kk) - mean) * (y(at(s), kk) - mean);
                var /= w;
                const double sd = std::sqrt(var);
                const bool ratio_ok = is >= cfg.is_ratio * last_is;
                const bool deviation_ok = std::abs(yt - mean) > cfg.std_multiplier * sd;
                if (ratio_ok && deviation_ok) {
                    r.channel_flags(at(t), kk) = true;
                    last_is = is;
                } else {
                    r.violations.push_back({t, k});
                }
            }
        }
    }

    for (std::size_t t = 0; t < n; ++t) {
        const auto tt = static_cast<Eigen::Index>(t);
        r.scores[t] = r.channel_scores.row(tt).maxCoeff();
        for (std::size_t k = 0; k < k_count; ++k) {
            if (r.channel_flags(tt, static_cast<Eigen::Index>(k))) {
                r.flags[t] = true;
                r.flagging_channels[t].push_back(k);
            }
        }
        if (r.flags[t]) r.last_anomaly = t;
    }
    std::sort(r.violations.begin(), r.violations.end(),
              [](const Violation& a, const Violation& b) {
                  return a.step != b.step ? a.step < b.step : a.channel < b.channel;
              });
    return r;
}

DetectionResult detect(const MultiSeries& y, const forecast::IntervalForecast& f,
                       const DetectorConfig& cfg) {
    return detect(y.values(), f, cfg);
}

void write_detection_csv(const std::filesystem::path& path, const MultiSeries& y,
                         const forecast::IntervalForecast& f, const DetectionResult& r) {
    std::ostringstream os;
    os.precision(17);
    os << "t,channel,flag,score,L,U,y\n";
    for (std::size_t t = 0; t < y.steps(); ++t) {
        const auto tt = static_cast<Eigen::Index>(t);
        for (std::size_t k = 0; k < y.channels(); ++k) {
            const auto kk = static_cast<Eigen::Index>(k);
            os << t << ',' << y.channel_names()[k] << ',' << (r.channel_flags(tt, kk) ? 1 : 0) << ','
               << r.channel_scores(tt, kk) << ',' << f.lower(tt, kk) << ',' << f.upper(tt, kk) << ','
               << y(t, k) << '\n';
        }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DetectorError("cannot write " + path.string());
    out << os.str();
}

}  // namespace mesad::detect
