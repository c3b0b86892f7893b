#include "mesad/mes.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>
#include <numeric>

namespace mesad::mes {

namespace {

// Initialization looks at enough leading seasons to cover at least this many steps.
constexpr std::size_t kInitSpanSteps = 24;

constexpr double kCoarseStep = 0.05;
constexpr double kFineStep = 0.01;
constexpr int kMaxSweeps = 25;

void renormalize(ChannelState& st) {
    if (st.seasonal.size() <= 1) return;
    const double mean = std::accumulate(st.seasonal.begin(), st.seasonal.end(), 0.0) /
                        static_cast<double>(st.seasonal.size());
    for (double& s : st.seasonal) s -= mean;
    st.level += mean;
}

void check_params(const SmoothingParams& p) {
    auto ok = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!ok(p.alpha) || !ok(p.beta) || !ok(p.gamma))
        throw SmoothingError("smoothing parameters must lie in [0, 1]");
}

std::vector<double> column(const MultiSeries& x, std::size_t k) {
    std::vector<double> out(x.steps());
    for (std::size_t t = 0; t < x.steps(); ++t) out[t] = x(t, k);
    return out;
}

}  // namespace

ChannelState initial_components(std::span<const double> y, std::size_t m) {
    if (m == 0) throw SmoothingError("season length must be >= 1");
    if (y.size() < 2 * m)
        throw SmoothingError("need at least two seasons (" + std::to_string(2 * m) +
                             " steps), got " + std::to_string(y.size()));
    for (double v : y)
        if (!std::isfinite(v)) throw SmoothingError("non-finite input");

    const std::size_t available = y.size() / m;
    const std::size_t wanted = std::max<std::size_t>(2, (kInitSpanSteps + m - 1) / m);
    const std::size_t seasons = std::min(available, wanted);

    std::vector<double> means(seasons);
    for (std::size_t s = 0; s < seasons; ++s)
        means[s] = std::accumulate(y.begin() + static_cast<std::ptrdiff_t>(s * m),
                                   y.begin() + static_cast<std::ptrdiff_t>((s + 1) * m), 0.0) /
                   static_cast<double>(m);

    ChannelState st;
    st.level = means[0];
    st.trend = (means[seasons - 1] - means[0]) / static_cast<double>((seasons - 1) * m);
    st.seasonal.assign(m, 0.0);
    if (m > 1) {
        for (std::size_t i = 0; i < m; ++i) st.seasonal[i] = y[i] - means[0];
        renormalize(st);
    }
    return st;
}

namespace {

double advance(ChannelState& st, std::size_t season_length, std::size_t t, double y, bool renorm) {
    const auto& p = st.params;
    const bool seasonal = season_length > 1;
    const std::size_t slot = seasonal ? t % season_length : 0;
    const double s_prev = seasonal ? st.seasonal[slot] : 0.0;
    const double forecast = st.level + st.trend + s_prev;

    const double level = p.alpha * (y - s_prev) + (1.0 - p.alpha) * (st.level + st.trend);
    st.trend = p.beta * (level - st.level) + (1.0 - p.beta) * st.trend;
    st.level = level;
    if (seasonal) {
        st.seasonal[slot] = p.gamma * (y - level) + (1.0 - p.gamma) * s_prev;
        if (renorm) renormalize(st);
    }
    return forecast;
}

}  // namespace

double update(ChannelState& st, std::size_t season_length, std::size_t t, double y) {
    return advance(st, season_length, t, y, true);
}

double one_step_sse(std::span<const double> y, std::size_t m, const SmoothingParams& p) {
    ChannelState st = initial_components(y, m);
    st.params = p;
    // Renormalizing moves a constant between level and seasonals and leaves
    // every forecast unchanged, so the objective can skip it.
    double sse = 0.0;
    for (std::size_t t = 0; t < y.size(); ++t) {
        const double e = y[t] - advance(st, m, t, y[t], false);
        sse += e * e;
    }
    return sse;
}

std::size_t dominant_period(const MultiSeries& x) {
    const std::size_t n = x.steps();
    if (n < 4) return 1;
    const std::size_t kmax = n / 2;
    std::vector<double> power(kmax + 1, 0.0);
    const double nd = static_cast<double>(n);
    double raw_energy = 0.0, detrended_energy = 0.0;
    for (std::size_t k = 0; k < x.channels(); ++k) {
        // Remove the least-squares line so the trend does not leak into low frequencies.
        std::vector<double> y = column(x, k);
        const double tbar = (nd - 1.0) / 2.0;
        const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / nd;
        double sxy = 0.0, sxx = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            sxy += (static_cast<double>(t) - tbar) * (y[t] - ybar);
            sxx += (static_cast<double>(t) - tbar) * (static_cast<double>(t) - tbar);
        }
        const double slope = sxx > 0 ? sxy / sxx : 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            raw_energy += (y[t] - ybar) * (y[t] - ybar);
            y[t] -= ybar + slope * (static_cast<double>(t) - tbar);
            detrended_energy += y[t] * y[t];
        }

        for (std::size_t f = 1; f <= kmax; ++f) {
            double re = 0.0, im = 0.0;
            const double w = 2.0 * std::numbers::pi * static_cast<double>(f) / nd;
            for (std::size_t t = 0; t < n; ++t) {
                re += y[t] * std::cos(w * static_cast<double>(t));
                im -= y[t] * std::sin(w * static_cast<double>(t));
            }
            power[f] += re * re + im * im;
        }
    }
    std::size_t best = 0;
    double best_power = 0.0;
    for (std::size_t f = 2; f <= kmax; ++f) {  // period <= n/2
        if (power[f] > best_power) {
            best_power = power[f];
            best = f;
        }
    }
    // Nothing left after detrending, or a peak that does not stand out from
    // the average spectral level (white noise rarely exceeds 10x).
    if (best == 0 || detrended_energy <= 1e-20 * raw_energy || detrended_energy == 0.0) return 1;
    const double mean_power = std::accumulate(power.begin() + 1, power.end(), 0.0) / static_cast<double>(kmax);
    if (best_power < 10.0 * mean_power) return 1;
    const auto period = static_cast<std::size_t>(std::llround(nd / static_cast<double>(best)));
    return std::clamp<std::size_t>(period, 2, n / 2);
}

namespace {

using Objective = std::function<double(const SmoothingParams&)>;

SmoothingParams coordinate_search(const Objective& sse, bool seasonal) {
    SmoothingParams best;
    if (!seasonal) best.gamma = 0.0;
    double best_sse = sse(best);
    const int dims = seasonal ? 3 : 2;
    auto coord = [](SmoothingParams& p, int d) -> double& {
        return d == 0 ? p.alpha : d == 1 ? p.beta : p.gamma;
    };

    auto sweep = [&](auto&& candidates) {
        for (int s = 0; s < kMaxSweeps; ++s) {
            bool improved = false;
            for (int d = 0; d < dims; ++d) {
                const double center = coord(best, d);
                for (double v : candidates(center)) {
                    SmoothingParams p = best;
                    coord(p, d) = v;
                    const double e = sse(p);
                    if (e < best_sse) {
                        best_sse = e;
                        best = p;
                        improved = true;
                    }
                }
            }
            if (!improved) break;
        }
    };

    sweep([](double) {
        std::vector<double> grid;
        for (int i = 0; i <= 20; ++i) grid.push_back(i * kCoarseStep);
        return grid;
    });
    sweep([](double center) {
        std::vector<double> grid;
        for (int i = -5; i <= 5; ++i) {
            if (i == 0) continue;
            const double v = std::round((center + i * kFineStep) * 100.0) / 100.0;
            if (v >= 0.0 && v <= 1.0) grid.push_back(v);
        }
        return grid;
    });
    return best;
}

}  // namespace

SmoothingState fit(std::span<const MultiSeries> train, std::size_t m) {
    if (train.empty()) throw SmoothingError("no training series");
    const std::size_t k_count = train.front().channels();
    for (const auto& s : train)
        if (s.channels() != k_count) throw SmoothingError("training series disagree on channel count");
    if (m == 0) m = dominant_period(train.front());
    for (const auto& s : train)
        if (s.steps() < 2 * m)
            throw SmoothingError("need N >= 2m (N=" + std::to_string(s.steps()) +
                                 ", m=" + std::to_string(m) + ")");

    SmoothingState out;
    out.season_length = m;
    out.channels.resize(k_count);

    const auto k_total = static_cast<std::ptrdiff_t>(k_count);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t ki = 0; ki < k_total; ++ki) {
        const auto k = static_cast<std::size_t>(ki);
        std::vector<std::vector<double>> cols;
        for (const auto& s : train) cols.push_back(column(s, k));
        auto objective = [&](const SmoothingParams& p) {
            double total = 0.0;
            for (const auto& c : cols) total += one_step_sse(c, m, p);
            return total;
        };
        ChannelState st = initial_components(cols.front(), m);
        st.params = coordinate_search(objective, m > 1);
        out.channels[k] = std::move(st);
    }
    return out;
}

SmoothingState fit(const MultiSeries& train, std::size_t m) {
    return fit(std::span<const MultiSeries>(&train, 1), m);
}

SmoothingState SmoothingState::reinitialized(const MultiSeries& x) const {
    if (x.channels() != channels.size()) throw SmoothingError("channel count mismatch");
    SmoothingState out = *this;
    for (std::size_t k = 0; k < channels.size(); ++k) {
        ChannelState st = initial_components(column(x, k), season_length);
        st.params = channels[k].params;
        out.channels[k] = std::move(st);
    }
    return out;
}

Decomposition preprocess(const MultiSeries& x, const SmoothingState& st) {
    if (x.channels() != st.channels.size())
        throw SmoothingError("channel mismatch: series has " + std::to_string(x.channels()) +
                             ", state has " + std::to_string(st.channels.size()));
    const auto n = static_cast<Eigen::Index>(x.steps());
    Matrix baseline(n, static_cast<Eigen::Index>(x.channels()));
    Matrix resid(baseline.rows(), baseline.cols());
    for (std::size_t k = 0; k < x.channels(); ++k) {
        ChannelState cs = st.channels[k];
        check_params(cs.params);
        const auto kk = static_cast<Eigen::Index>(k);
        for (Eigen::Index t = 0; t < n; ++t) {
            const double y = x.values()(t, kk);
            const double f = update(cs, st.season_length, static_cast<std::size_t>(t), y);
            baseline(t, kk) = f;
            resid(t, kk) = y - f;
        }
    }
    return {x.with_values(std::move(resid)), std::move(baseline)};
}

MultiSeries postprocess(const MultiSeries& r_hat, const Decomposition& dec) {
    if (r_hat.steps() != static_cast<std::size_t>(dec.baseline.rows()) ||
        r_hat.channels() != static_cast<std::size_t>(dec.baseline.cols()))
        throw SmoothingError("forecast is not aligned with the smoothing trajectory");
    return r_hat.with_values(r_hat.values() + dec.baseline);
}

nlohmann::json to_json(const SmoothingState& st) {
    nlohmann::json j;
    j["version"] = 1;
    j["season_length"] = st.season_length;
    auto& chans = j["channels"] = nlohmann::json::array();
    for (const auto& c : st.channels) {
        chans.push_back({{"alpha", c.params.alpha},
                         {"beta", c.params.beta},
                         {"gamma", c.params.gamma},
                         {"level", c.level},
                         {"trend", c.trend},
                         {"seasonal", c.seasonal}});
    }
    return j;
}

SmoothingState state_from_json(const nlohmann::json& j) {
    if (j.value("version", 0) != 1) throw SmoothingError("unsupported smoothing state version");
    SmoothingState st;
    st.season_length = j.at("season_length").get<std::size_t>();
    if (st.season_length == 0) throw SmoothingError("season length must be >= 1");
    for (const auto& c : j.at("channels")) {
        ChannelState cs;
        cs.params = {c.at("alpha").get<double>(), c.at("beta").get<double>(),
                     c.at("gamma").get<double>()};
        check_params(cs.params);
        cs.level = c.at("level").get<double>();
        cs.trend = c.at("trend").get<double>();
        cs.seasonal = c.at("seasonal").get<std::vector<double>>();
        if (cs.seasonal.size() != st.season_length)
            throw SmoothingError("seasonal ring length does not match season length");
        st.channels.push_back(std::move(cs));
    }
    return st;
}

}  // namespace mesad::mes
