#include "mesad/forecaster.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>
#include <sstream>

namespace mesad::forecast {

// ---------------------------------------------------------------------------
// Weights

std::size_t LstmWeights::parameter_count() const {
    return static_cast<std::size_t>(wx.size() + wh.size() + b.size() + wy.size() + by.size());
}

void LstmWeights::for_each(const std::function<void(double&)>& fn) {
    for (auto* m : {&wx, &wh, &wy})
        for (Eigen::Index i = 0; i < m->size(); ++i) fn(m->data()[i]);
    for (auto* v : {&b, &by})
        for (Eigen::Index i = 0; i < v->size(); ++i) fn(v->data()[i]);
}

LstmWeights LstmWeights::zeros_like() const {
    return {Matrix::Zero(wx.rows(), wx.cols()), Matrix::Zero(wh.rows(), wh.cols()),
            Vector::Zero(b.size()), Matrix::Zero(wy.rows(), wy.cols()), Vector::Zero(by.size())};
}

namespace {

template <typename Fn>
void zip_members(LstmWeights& a, const LstmWeights& b, Fn&& fn) {
    fn(a.wx.array(), b.wx.array());
    fn(a.wh.array(), b.wh.array());
    fn(a.b.array(), b.b.array());
    fn(a.wy.array(), b.wy.array());
    fn(a.by.array(), b.by.array());
}

double squared_norm(const LstmWeights& g) {
    return g.wx.squaredNorm() + g.wh.squaredNorm() + g.b.squaredNorm() + g.wy.squaredNorm() +
           g.by.squaredNorm();
}

Matrix sigmoid(const Matrix& a) { return (1.0 / (1.0 + (-a.array()).exp())).matrix(); }

struct StepCache {
    Matrix i, f, o, g, c, tanh_c, h;
};

}  // namespace

// ---------------------------------------------------------------------------
// RecurrentModel

RecurrentModel::RecurrentModel(std::size_t input_size, std::size_t hidden, std::size_t lookback,
                               std::uint64_t seed)
    : input_size_(input_size), hidden_(hidden), lookback_(lookback) {
    if (input_size == 0 || hidden == 0 || lookback == 0)
        throw ForecastError("input size, hidden size and lookback must be positive");
    const auto k = static_cast<Eigen::Index>(input_size);
    const auto h = static_cast<Eigen::Index>(hidden);
    w_ = {Matrix(4 * h, k), Matrix(4 * h, h), Vector(4 * h), Matrix(k, h), Vector(k)};
    std::mt19937_64 rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    std::uniform_real_distribution<double> init(-bound, bound);
    w_.for_each([&](double& x) { x = init(rng); });
    // Zero biases with the forget gate opened; zero input then maps to a zero forecast.
    w_.b.setZero();
    w_.b.segment(h, h).setOnes();
    w_.by.setZero();
    mean_ = Vector::Zero(k);
    scale_ = Vector::Ones(k);
}

void RecurrentModel::set_standardization(Vector mean, Vector scale) {
    if (mean.size() != static_cast<Eigen::Index>(input_size_) || scale.size() != mean.size())
        throw ForecastError("standardization size mismatch");
    if ((scale.array() <= 0.0).any()) throw ForecastError("standardization scale must be positive");
    mean_ = std::move(mean);
    scale_ = std::move(scale);
}

Matrix RecurrentModel::forward_batch(const std::vector<Matrix>& inputs) const {
    const auto hs = static_cast<Eigen::Index>(hidden_);
    const Eigen::Index batch = inputs.front().cols();
    Matrix h = Matrix::Zero(hs, batch);
    Matrix c = Matrix::Zero(hs, batch);
    for (const auto& x : inputs) {
        Matrix a = w_.wx * x + w_.wh * h;
        a.colwise() += w_.b;
        const Matrix ig = sigmoid(a.topRows(hs));
        const Matrix fg = sigmoid(a.middleRows(hs, hs));
        const Matrix og = sigmoid(a.middleRows(2 * hs, hs));
        const Matrix cand = a.bottomRows(hs).array().tanh().matrix();
        c = (fg.array() * c.array() + ig.array() * cand.array()).matrix();
        h = (og.array() * c.array().tanh()).matrix();
    }
    Matrix y = w_.wy * h;
    y.colwise() += w_.by;
    return y;
}

double RecurrentModel::loss_and_gradient(const std::vector<Matrix>& inputs, const Matrix& targets,
                                         LstmWeights* grad) const {
    if (inputs.empty()) throw ForecastError("empty input window");
    const auto hs = static_cast<Eigen::Index>(hidden_);
    const Eigen::Index batch = targets.cols();
    const std::size_t steps = inputs.size();

    std::vector<StepCache> cache(steps);
    Matrix h = Matrix::Zero(hs, batch);
    Matrix c = Matrix::Zero(hs, batch);
    for (std::size_t s = 0; s < steps; ++s) {
        Matrix a = w_.wx * inputs[s] + w_.wh * h;
        a.colwise() += w_.b;
        auto& st = cache[s];
        st.i = sigmoid(a.topRows(hs));
        st.f = sigmoid(a.middleRows(hs, hs));
        st.o = sigmoid(a.middleRows(2 * hs, hs));
        st.g = a.bottomRows(hs).array().tanh().matrix();
        st.c = (st.f.array() * c.array() + st.i.array() * st.g.array()).matrix();
        st.tanh_c = st.c.array().tanh().matrix();
        st.h = (st.o.array() * st.tanh_c.array()).matrix();
        h = st.h;
        c = st.c;
    }
    Matrix y = w_.wy * h;
    y.colwise() += w_.by;
    const Matrix diff = y - targets;
    const double denom = static_cast<double>(diff.size());
    const double loss = diff.squaredNorm() / denom;
    if (!grad) return loss;

    *grad = w_.zeros_like();
    const Matrix dy = (2.0 / denom) * diff;
    grad->wy = dy * h.transpose();
    grad->by = dy.rowwise().sum();
    Matrix dh = w_.wy.transpose() * dy;
    Matrix dc = Matrix::Zero(hs, batch);
    Matrix da(4 * hs, batch);
    for (std::size_t s = steps; s-- > 0;) {
        const auto& st = cache[s];
        const Matrix c_prev = s > 0 ? cache[s - 1].c : Matrix::Zero(hs, batch);
        const Matrix h_prev = s > 0 ? cache[s - 1].h : Matrix::Zero(hs, batch);

        const auto d_o = (dh.array() * st.tanh_c.array()).eval();
        const auto d_c = (dc.array() +
                          dh.array() * st.o.array() * (1.0 - st.tanh_c.array().square()))
                             .eval();
        const auto d_i = (d_c * st.g.array()).eval();
        const auto d_g = (d_c * st.i.array()).eval();
        const auto d_f = (d_c * c_prev.array()).eval();
        dc = (d_c * st.f.array()).matrix();

        da.topRows(hs) = (d_i * st.i.array() * (1.0 - st.i.array())).matrix();
        da.middleRows(hs, hs) = (d_f * st.f.array() * (1.0 - st.f.array())).matrix();
        da.middleRows(2 * hs, hs) = (d_o * st.o.array() * (1.0 - st.o.array())).matrix();
        da.bottomRows(hs) = (d_g * (1.0 - st.g.array().square())).matrix();

        grad->wx.noalias() += da * inputs[s].transpose();
        grad->wh.noalias() += da * h_prev.transpose();
        grad->b += da.rowwise().sum();
        dh = w_.wh.transpose() * da;
    }
    return loss;
}

Vector RecurrentModel::predict_next(const Matrix& window) const {
    if (window.rows() != static_cast<Eigen::Index>(lookback_) ||
        window.cols() != static_cast<Eigen::Index>(input_size_))
        throw ForecastError("window must be lookback x K");
    std::vector<Matrix> inputs(lookback_);
    for (std::size_t s = 0; s < lookback_; ++s)
        inputs[s] = ((window.row(static_cast<Eigen::Index>(s)).transpose() - mean_).array() /
                     scale_.array())
                        .matrix();
    const Matrix z = forward_batch(inputs);
    return mean_ + (scale_.array() * z.col(0).array()).matrix();
}

Matrix RecurrentModel::predict_series(const Matrix& residuals) const {
    if (residuals.cols() != static_cast<Eigen::Index>(input_size_))
        throw ForecastError("channel count does not match the model");
    const Eigen::Index n = residuals.rows();
    const auto w = static_cast<Eigen::Index>(lookback_);
    Matrix out = Matrix::Zero(n, residuals.cols());
    if (n <= w) return out;

    Matrix z = residuals;
    z.rowwise() -= mean_.transpose();
    z.array().rowwise() /= scale_.transpose().array();
    const Eigen::Index batch = n - w;
    std::vector<Matrix> inputs(lookback_);
    for (Eigen::Index s = 0; s < w; ++s) inputs[static_cast<std::size_t>(s)] = z.middleRows(s, batch).transpose();
    const Matrix pred = forward_batch(inputs);  // K x batch
    for (Eigen::Index j = 0; j < batch; ++j)
        out.row(w + j) = (mean_.array() + scale_.array() * pred.col(j).array()).transpose();
    return out;
}

nlohmann::json RecurrentModel::to_json() const {
    auto flat = [](const auto& m) {
        std::vector<double> v;
        v.reserve(static_cast<std::size_t>(m.size()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
        return v;
    };
    nlohmann::json j;
    j["format"] = "mesad-lstm";
    j["version"] = 1;
    j["input_size"] = input_size_;
    j["hidden"] = hidden_;
    j["lookback"] = lookback_;
    j["wx"] = flat(w_.wx);
    j["wh"] = flat(w_.wh);
    j["b"] = flat(w_.b);
    j["wy"] = flat(w_.wy);
    j["by"] = flat(w_.by);
    j["input_mean"] = flat(mean_);
    j["input_scale"] = flat(scale_);
    j["train_loss"] = train_loss_;
    j["validation_loss"] = val_loss_;
    return j;
}

RecurrentModel RecurrentModel::from_json(const nlohmann::json& j) {
    if (j.value("format", std::string()) != "mesad-lstm" || j.value("version", 0) != 1)
        throw ForecastError("not a version 1 mesad-lstm checkpoint");
    RecurrentModel m(j.at("input_size").get<std::size_t>(), j.at("hidden").get<std::size_t>(),
                     j.at("lookback").get<std::size_t>(), 0);
    auto fill = [&j](const char* key, auto& target) {
        const auto v = j.at(key).get<std::vector<double>>();
        if (v.size() != static_cast<std::size_t>(target.size()))
            throw ForecastError(std::string("checkpoint field '") + key + "' has wrong size");
        std::size_t i = 0;
        for (Eigen::Index r = 0; r < target.rows(); ++r)
            for (Eigen::Index c = 0; c < target.cols(); ++c) target(r, c) = v[i++];
    };
    fill("wx", m.w_.wx);
    fill("wh", m.w_.wh);
    fill("b", m.w_.b);
    fill("wy", m.w_.wy);
    fill("by", m.w_.by);
    fill("input_mean", m.mean_);
    fill("input_scale", m.scale_);
    m.train_loss_ = j.value("train_loss", std::vector<double>{});
    m.val_loss_ = j.value("validation_loss", std::vector<double>{});
    return m;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Sample {
    std::size_t series;
    Eigen::Index target;
};

struct Batcher {
    const std::vector<Matrix>& z;  // standardized residuals per series
    std::size_t lookback;

    void fill(std::span<const Sample> samples, std::vector<Matrix>& inputs, Matrix& targets) const {
        const auto k = z.front().cols();
        const auto b = static_cast<Eigen::Index>(samples.size());
        inputs.assign(lookback, Matrix(k, b));
        targets.resize(k, b);
        for (Eigen::Index j = 0; j < b; ++j) {
            const auto& s = samples[static_cast<std::size_t>(j)];
            const Matrix& src = z[s.series];
            const Eigen::Index first = s.target - static_cast<Eigen::Index>(lookback);
            for (std::size_t step = 0; step < lookback; ++step)
                inputs[step].col(j) = src.row(first + static_cast<Eigen::Index>(step)).transpose();
            targets.col(j) = src.row(s.target).transpose();
        }
    }
};

}  // namespace

RecurrentModel train(std::span<const MultiSeries> residuals, const TrainConfig& cfg,
                     std::uint64_t seed) {
    if (residuals.empty()) throw ForecastError("no training data");
    if (cfg.batch == 0 || cfg.epochs == 0 || cfg.window_stride == 0)
        throw ForecastError("batch, epochs and window_stride must be positive");
    if (!(cfg.learning_rate > 0.0 && std::isfinite(cfg.learning_rate)) || !(cfg.clip_norm > 0.0))
        throw ForecastError("learning rate and clip norm must be positive and finite");
    const std::size_t k = residuals.front().channels();
    for (const auto& r : residuals) {
        if (r.channels() != k) throw ForecastError("training series disagree on channel count");
        if (r.steps() <= cfg.lookback + 1)
            throw ForecastError("series of " + std::to_string(r.steps()) +
                                " steps is too short for lookback " + std::to_string(cfg.lookback));
    }

    RecurrentModel model(k, cfg.hidden, cfg.lookback, seed);

    // Standardization statistics over every training step.
    const auto kk = static_cast<Eigen::Index>(k);
    Vector sum = Vector::Zero(kk), sq = Vector::Zero(kk);
    double count = 0.0;
    for (const auto& r : residuals) {
        sum += r.values().colwise().sum().transpose();
        count += static_cast<double>(r.steps());
    }
    const Vector mean = sum / count;
    for (const auto& r : residuals)
        sq += (r.values().rowwise() - mean.transpose()).array().square().colwise().sum().matrix().transpose();
    Vector scale = (sq / count).array().sqrt().matrix();
    for (Eigen::Index c = 0; c < kk; ++c)
        if (!(scale(c) > 1e-12)) scale(c) = 1.0;
    model.set_standardization(mean, scale);

    std::vector<Matrix> z;
    for (const auto& r : residuals) {
        Matrix m = r.values();
        m.rowwise() -= mean.transpose();
        m.array().rowwise() /= scale.transpose().array();
        z.push_back(std::move(m));
    }

    std::vector<Sample> samples;
    for (std::size_t s = 0; s < residuals.size(); ++s)
        for (std::size_t t = cfg.lookback; t < residuals[s].steps(); t += cfg.window_stride)
            samples.push_back({s, static_cast<Eigen::Index>(t)});

    std::mt19937_64 rng(seed ^ 0xa0761d6478bd642fULL);
    std::shuffle(samples.begin(), samples.end(), rng);
    std::size_t n_val = static_cast<std::size_t>(cfg.validation_fraction * static_cast<double>(samples.size()));
    if (cfg.validation_fraction > 0.0 && samples.size() >= 2) n_val = std::max<std::size_t>(n_val, 1);
    n_val = std::min(n_val, samples.size() - 1);
    std::vector<Sample> val(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<Sample> fit(samples.begin() + static_cast<std::ptrdiff_t>(n_val), samples.end());

    const Batcher batcher{z, cfg.lookback};
    LstmWeights m1 = model.w_.zeros_like();
    LstmWeights m2 = model.w_.zeros_like();
    LstmWeights grad;
    std::vector<Matrix> inputs;
    Matrix targets;
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::uint64_t step = 0;

    auto evaluate = [&](const std::vector<Sample>& set) {
        double total = 0.0;
        for (std::size_t i = 0; i < set.size(); i += 256) {
            const std::size_t n = std::min<std::size_t>(256, set.size() - i);
            batcher.fill(std::span(set).subspan(i, n), inputs, targets);
            total += model.loss_and_gradient(inputs, targets, nullptr) * static_cast<double>(n);
        }
        return set.empty() ? 0.0 : total / static_cast<double>(set.size());
    };

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(fit.begin(), fit.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t i = 0; i < fit.size(); i += cfg.batch) {
            const std::size_t n = std::min(cfg.batch, fit.size() - i);
            batcher.fill(std::span(fit).subspan(i, n), inputs, targets);
            const double loss = model.loss_and_gradient(inputs, targets, &grad);
            if (!std::isfinite(loss)) {
                std::ostringstream os;
                os << "training diverged: non-finite loss at epoch " << epoch << ", batch "
                   << i / cfg.batch << " (learning rate " << cfg.learning_rate << ")";
                throw ForecastError(os.str());
            }
            epoch_loss += loss * static_cast<double>(n);

            const double norm = std::sqrt(squared_norm(grad));
            if (norm > cfg.clip_norm) {
                const double f = cfg.clip_norm / norm;
                grad.for_each([f](double& g) { g *= f; });
            }
            ++step;
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            zip_members(m1, grad, [&](auto a, auto g) { a = beta1 * a + (1.0 - beta1) * g; });
            zip_members(m2, grad, [&](auto a, auto g) { a = beta2 * a + (1.0 - beta2) * g.square(); });
            LstmWeights delta = m1;
            zip_members(delta, m2, [&](auto d, auto v) {
                d = cfg.learning_rate * (d / c1) / ((v / c2).sqrt() + eps);
            });
            zip_members(model.w_, delta, [](auto w, auto d) { w -= d; });
        }
        model.train_loss_.push_back(epoch_loss / static_cast<double>(fit.size()));
        model.val_loss_.push_back(val.empty() ? model.train_loss_.back() : evaluate(val));
    }
    return model;
}

RecurrentModel train(const MultiSeries& residuals, const TrainConfig& cfg, std::uint64_t seed) {
    return train(std::span<const MultiSeries>(&residuals, 1), cfg, seed);
}

// ---------------------------------------------------------------------------
// Hybrid forecast and intervals

HybridModel::Output HybridModel::forecast(const MultiSeries& x) const {
    if (x.channels() != net.input_size()) throw ForecastError("channel count does not match the model");
    Output out{mes::preprocess(x, smoothing.reinitialized(x)), {}};
    const Matrix r_hat = net.predict_series(out.decomposition.residuals.values());
    out.point = r_hat + out.decomposition.baseline;
    return out;
}

bool CalibrationSet::empty() const {
    return errors.empty() ||
           std::any_of(errors.begin(), errors.end(), [](const auto& e) { return e.empty(); });
}

double absolute_quantile(std::span<const double> values, double alpha) {
    if (values.empty()) throw ForecastError("empty calibration pool");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ForecastError("alpha must lie in (0, 1)");
    std::vector<double> abs(values.size());
    std::transform(values.begin(), values.end(), abs.begin(), [](double v) { return std::abs(v); });
    const double n = static_cast<double>(abs.size());
    auto rank = static_cast<std::size_t>(std::ceil((n + 1.0) * (1.0 - alpha) - 1e-12));
    rank = std::clamp<std::size_t>(rank, 1, abs.size());
    std::nth_element(abs.begin(), abs.begin() + static_cast<std::ptrdiff_t>(rank - 1), abs.end());
    return abs[rank - 1];
}

IntervalForecast conformal_intervals(const Matrix& point, const Matrix& observed, double alpha,
                                     const CalibrationSet& calib, std::size_t first_valid,
                                     const IntervalConfig& cfg) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ForecastError("alpha must lie in (0, 1)");
    if (calib.empty()) throw ForecastError("empty calibration set");
    if (calib.channels() != static_cast<std::size_t>(point.cols()))
        throw ForecastError("calibration channel count does not match the forecast");
    if (point.rows() != observed.rows() || point.cols() != observed.cols())
        throw ForecastError("forecast and observations are not aligned");
    if (cfg.rolling_window == 0) throw ForecastError("rolling window must be positive");

    IntervalForecast out;
    out.point = point;
    out.lower.resize(point.rows(), point.cols());
    out.upper.resize(point.rows(), point.cols());
    out.alpha = alpha;
    out.first_valid = first_valid;

    for (Eigen::Index k = 0; k < point.cols(); ++k) {
        const auto& errs = calib.errors[static_cast<std::size_t>(k)];
        const std::size_t take = std::min(cfg.rolling_window, errs.size());
        std::deque<double> pool(errs.end() - static_cast<std::ptrdiff_t>(take), errs.end());
        std::vector<double> scratch;
        for (Eigen::Index t = 0; t < point.rows(); ++t) {
            scratch.assign(pool.begin(), pool.end());
            const double half = absolute_quantile(scratch, alpha);
            out.lower(t, k) = point(t, k) - half;
            out.upper(t, k) = point(t, k) + half;
            if (static_cast<std::size_t>(t) >= first_valid) {
                pool.push_back(observed(t, k) - point(t, k));
                if (pool.size() > cfg.rolling_window) pool.pop_front();
            }
        }
    }
    return out;
}

IntervalForecast predict_intervals(const HybridModel& model, const MultiSeries& x, double alpha,
                                   const CalibrationSet& calib, const IntervalConfig& cfg) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ForecastError("alpha must lie in (0, 1)");
    if (calib.empty()) throw ForecastError("empty calibration set");
    const auto out = model.forecast(x);
    return conformal_intervals(out.point, x.values(), alpha, calib, model.net.lookback(), cfg);
}

CalibrationSet calibrate(const HybridModel& model, std::span<const MultiSeries> held_out) {
    CalibrationSet calib;
    calib.errors.resize(model.net.input_size());
    const auto w = static_cast<Eigen::Index>(model.net.lookback());
    for (const auto& x : held_out) {
        const auto out = model.forecast(x);
        for (Eigen::Index t = w; t < out.point.rows(); ++t)
            for (Eigen::Index k = 0; k < out.point.cols(); ++k)
                calib.errors[static_cast<std::size_t>(k)].push_back(x.values()(t, k) - out.point(t, k));
    }
    if (calib.empty()) throw ForecastError("held-out data produced no calibration errors");
    return calib;
}

}  // namespace mesad::forecast
