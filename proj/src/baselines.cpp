#include "mesad/baselines.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace mesad::baselines {

// ---------------------------------------------------------------------------
// DTW

namespace {

template <typename Cost>
double dtw_accumulate(std::size_t m, Cost&& cost) {
    // Two rolling rows of the accumulated matrix.
    std::vector<double> prev(m), cur(m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t r = 0; r < m; ++r) {
            const double c = cost(i, r);
            double best;
            if (i == 0 && r == 0)
                best = 0.0;
            else if (i == 0)
                best = cur[r - 1];
            else if (r == 0)
                best = prev[r];
            else
                best = std::min({prev[r], cur[r - 1], prev[r - 1]});
            cur[r] = c + best;
        }
        std::swap(prev, cur);
    }
    return prev[m - 1];
}

void check_pair(const MultiSeries& a, const MultiSeries& b) {
    if (a.steps() != b.steps() || a.channels() != b.channels())
        throw BaselineError("series shapes differ: " + std::to_string(a.steps()) + "x" +
                            std::to_string(a.channels()) + " vs " + std::to_string(b.steps()) + "x" +
                            std::to_string(b.channels()));
}

}  // namespace

WarpMatrix warp_matrix(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw BaselineError("DTW needs non-empty sequences");
    if (a.size() != b.size()) throw BaselineError("DTW is defined here for equal lengths only");
    const auto m = static_cast<Eigen::Index>(a.size());
    WarpMatrix w{Matrix(m, m), Matrix(m, m)};
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index r = 0; r < m; ++r) {
            const double d = a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(r)];
            w.cost(i, r) = d * d;
        }
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index r = 0; r < m; ++r) {
            double best = 0.0;
            if (i > 0 && r > 0)
                best = std::min({w.accumulated(i - 1, r), w.accumulated(i, r - 1), w.accumulated(i - 1, r - 1)});
            else if (i > 0)
                best = w.accumulated(i - 1, r);
            else if (r > 0)
                best = w.accumulated(i, r - 1);
            w.accumulated(i, r) = w.cost(i, r) + best;
        }
    return w;
}

double dtw(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw BaselineError("DTW needs non-empty sequences");
    if (a.size() != b.size()) throw BaselineError("DTW is defined here for equal lengths only");
    return dtw_accumulate(a.size(), [&](std::size_t i, std::size_t r) {
        const double d = a[i] - b[r];
        return d * d;
    });
}

double idtw(const MultiSeries& a, const MultiSeries& b) {
    check_pair(a, b);
    double total = 0.0;
    for (std::size_t k = 0; k < a.channels(); ++k) {
        const Vector ca = a.channel(k), cb = b.channel(k);
        total += dtw(std::span(ca.data(), a.steps()), std::span(cb.data(), b.steps()));
    }
    return total;
}

double ddtw(const MultiSeries& a, const MultiSeries& b) {
    check_pair(a, b);
    const Matrix& va = a.values();
    const Matrix& vb = b.values();
    return dtw_accumulate(a.steps(), [&](std::size_t i, std::size_t r) {
        double s = 0.0;
        for (Eigen::Index k = 0; k < va.cols(); ++k) {
            const double d = va(static_cast<Eigen::Index>(i), k) - vb(static_cast<Eigen::Index>(r), k);
            s += d * d;
        }
        return s;
    });
}

double euclidean(const MultiSeries& a, const MultiSeries& b) {
    check_pair(a, b);
    return (a.values() - b.values()).norm();
}

std::string_view to_string(Metric m) {
    switch (m) {
        case Metric::Euclid: return "euclid";
        case Metric::IDTW: return "idtw";
        case Metric::DDTW: return "ddtw";
    }
    return "euclid";
}

Metric parse_metric(std::string_view s) {
    if (s == "euclid") return Metric::Euclid;
    if (s == "idtw") return Metric::IDTW;
    if (s == "ddtw") return Metric::DDTW;
    throw BaselineError("unknown metric '" + std::string(s) + "'");
}

double distance(const MultiSeries& a, const MultiSeries& b, Metric m) {
    switch (m) {
        case Metric::Euclid: return euclidean(a, b);
        case Metric::IDTW: return idtw(a, b);
        case Metric::DDTW: return ddtw(a, b);
    }
    return 0.0;
}

Matrix pairwise_distances(std::span<const MultiSeries> queries, std::span<const MultiSeries> refs,
                          Metric m) {
    const auto nq = static_cast<std::ptrdiff_t>(queries.size());
    const auto nr = static_cast<std::ptrdiff_t>(refs.size());
    Matrix d(nq, nr);
    // Exceptions may not leave an OpenMP region; carry the first one out.
    std::string error;
#pragma omp parallel for schedule(dynamic) collapse(2)
    for (std::ptrdiff_t i = 0; i < nq; ++i)
        for (std::ptrdiff_t j = 0; j < nr; ++j) {
            try {
                d(i, j) = distance(queries[static_cast<std::size_t>(i)], refs[static_cast<std::size_t>(j)], m);
            } catch (const std::exception& e) {
#pragma omp critical(mesad_pairwise_error)
                if (error.empty()) error = e.what();
            }
        }
    if (!error.empty()) throw BaselineError(error);
    return d;
}

Matrix pairwise_distances_serial(std::span<const MultiSeries> queries,
                                 std::span<const MultiSeries> refs, Metric m) {
    Matrix d(static_cast<Eigen::Index>(queries.size()), static_cast<Eigen::Index>(refs.size()));
    for (std::size_t i = 0; i < queries.size(); ++i)
        for (std::size_t j = 0; j < refs.size(); ++j)
            d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = distance(queries[i], refs[j], m);
    return d;
}

void write_distance_csv(const std::filesystem::path& path, const Matrix& d,
                        std::span<const std::size_t> query_ids, std::span<const std::size_t> ref_ids) {
    std::ostringstream os;
    os.precision(17);
    os << "query_id";
    for (auto id : ref_ids) os << ',' << id;
    os << '\n';
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        os << query_ids[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < d.cols(); ++j) os << ',' << d(i, j);
        os << '\n';
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw BaselineError("cannot write " + path.string());
    out << os.str();
}

std::vector<std::size_t> nearest_columns(const Matrix& distances) {
    if (distances.cols() == 0) throw BaselineError("empty reference set");
    std::vector<std::size_t> out(static_cast<std::size_t>(distances.rows()));
    for (Eigen::Index i = 0; i < distances.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < distances.cols(); ++j)
            if (distances(i, j) < distances(i, best)) best = j;
        out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
    }
    return out;
}

EventType nn_classify(const LabeledDataset& ds, const MultiSeries& query, Metric m) {
    if (ds.train.empty()) throw BaselineError("empty train set");
    std::vector<std::size_t> order(ds.train.begin(), ds.train.end());
    std::sort(order.begin(), order.end());
    std::size_t best = order.front();
    double best_d = std::numeric_limits<double>::infinity();
    for (auto idx : order) {
        const double d = distance(ds.series[idx].data, query, m);
        if (d < best_d) {
            best_d = d;
            best = idx;
        }
    }
    return ds.series[best].label();
}

// ---------------------------------------------------------------------------
// MiniRocket

const std::vector<std::array<int, 3>>& kernel_positions() {
    static const std::vector<std::array<int, 3>> positions = [] {
        std::vector<std::array<int, 3>> p;
        for (int a = 0; a < 9; ++a)
            for (int b = a + 1; b < 9; ++b)
                for (int c = b + 1; c < 9; ++c) p.push_back({a, b, c});
        return p;
    }();
    return positions;
}

namespace {

constexpr std::size_t kHalf = 4;  // (kernel length - 1) / 2

/// Zero-padded shifted copies x[t + (j - 4) d] of one channel for the nine taps.
std::array<std::vector<double>, 9> shifted_taps(const Matrix& v, Eigen::Index channel, std::size_t d) {
    const auto n = static_cast<std::ptrdiff_t>(v.rows());
    std::array<std::vector<double>, 9> taps;
    for (std::size_t j = 0; j < 9; ++j) {
        taps[j].assign(static_cast<std::size_t>(n), 0.0);
        const auto off = (static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(kHalf)) *
                         static_cast<std::ptrdiff_t>(d);
        for (std::ptrdiff_t t = 0; t < n; ++t) {
            const std::ptrdiff_t s = t + off;
            if (s >= 0 && s < n) taps[j][static_cast<std::size_t>(t)] = v(s, channel);
        }
    }
    return taps;
}

double quantile_linear(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Convolution outputs for every kernel of one dilation, channel sums per combination.
std::vector<std::vector<double>> dilation_outputs(const MultiSeries& x, std::size_t dilation_index,
                                                  std::size_t d,
                                                  const std::vector<std::vector<std::size_t>>& channels) {
    const std::size_t n = x.steps();
    std::vector<std::array<std::vector<double>, 9>> taps(x.channels());
    std::vector<std::vector<double>> base(x.channels());
    std::vector<bool> ready(x.channels(), false);
    const auto& positions = kernel_positions();
    std::vector<std::vector<double>> out(positions.size(), std::vector<double>(n, 0.0));
    for (std::size_t kernel = 0; kernel < positions.size(); ++kernel) {
        const auto& chans = channels[dilation_index * positions.size() + kernel];
        auto& c = out[kernel];
        for (auto ch : chans) {
            if (!ready[ch]) {
                taps[ch] = shifted_taps(x.values(), static_cast<Eigen::Index>(ch), d);
                base[ch].assign(n, 0.0);
                for (const auto& tap : taps[ch])
                    for (std::size_t t = 0; t < n; ++t) base[ch][t] -= tap[t];
                ready[ch] = true;
            }
            const auto& p = positions[kernel];
            const auto& t0 = taps[ch][static_cast<std::size_t>(p[0])];
            const auto& t1 = taps[ch][static_cast<std::size_t>(p[1])];
            const auto& t2 = taps[ch][static_cast<std::size_t>(p[2])];
            for (std::size_t t = 0; t < n; ++t) c[t] += base[ch][t] + 3.0 * (t0[t] + t1[t] + t2[t]);
        }
    }
    return out;
}

bool padded(std::size_t dilation_index, std::size_t kernel) { return (dilation_index + kernel) % 2 == 0; }

}  // namespace

MiniRocket MiniRocket::fit(std::span<const MultiSeries> train, const MiniRocketConfig& cfg,
                           std::uint64_t seed) {
    if (train.empty()) throw BaselineError("MiniRocket needs at least one training series");
    const std::size_t n = train.front().steps();
    const std::size_t k = train.front().channels();
    for (const auto& s : train)
        if (s.steps() != n || s.channels() != k)
            throw BaselineError("MiniRocket training series must share one shape");
    if (n < MiniRocketConfig::kKernelLength)
        throw BaselineError("series of " + std::to_string(n) + " steps is shorter than the kernel length 9");
    if (cfg.num_features == 0) throw BaselineError("num_features must be positive");

    constexpr std::size_t kernels = MiniRocketConfig::kNumKernels;
    MiniRocket mr;
    mr.num_features_ = cfg.num_features;
    mr.input_channels_ = k;

    // Dilation schedule: exponentially spaced, features spread over unique dilations.
    const std::size_t per_kernel = (cfg.num_features + kernels - 1) / kernels;
    const std::size_t true_max = std::max<std::size_t>(1, std::min(per_kernel, cfg.max_dilations_per_kernel));
    const double multiplier = static_cast<double>(per_kernel) / static_cast<double>(true_max);
    const double max_exponent = std::log2(static_cast<double>(n - 1) / 8.0);
    std::vector<std::size_t> raw;
    for (std::size_t i = 0; i < true_max; ++i) {
        const double e = true_max == 1 ? 0.0 : max_exponent * static_cast<double>(i) / static_cast<double>(true_max - 1);
        raw.push_back(static_cast<std::size_t>(std::pow(2.0, e)));
    }
    for (std::size_t i = 0; i < raw.size();) {
        std::size_t j = i;
        while (j < raw.size() && raw[j] == raw[i]) ++j;
        mr.dilations_.push_back(raw[i]);
        mr.features_per_dilation_.push_back(static_cast<std::size_t>(static_cast<double>(j - i) * multiplier));
        i = j;
    }
    std::size_t assigned = 0;
    for (auto f : mr.features_per_dilation_) assigned += f;
    for (std::size_t i = 0; assigned < per_kernel; i = (i + 1) % mr.features_per_dilation_.size()) {
        ++mr.features_per_dilation_[i];
        ++assigned;
    }

    // Channel combinations.
    std::mt19937_64 rng(seed);
    const double max_log = std::log2(static_cast<double>(std::min<std::size_t>(k, 9) + 1));
    std::uniform_real_distribution<double> u(0.0, max_log);
    const std::size_t combos = mr.dilations_.size() * kernels;
    mr.channels_.resize(combos);
    for (std::size_t c = 0; c < combos; ++c) {
        auto count = static_cast<std::size_t>(std::floor(std::pow(2.0, u(rng))));
        count = std::clamp<std::size_t>(count, 1, k);
        std::vector<std::size_t> all(k);
        for (std::size_t i = 0; i < k; ++i) all[i] = i;
        std::shuffle(all.begin(), all.end(), rng);
        all.resize(count);
        std::sort(all.begin(), all.end());
        mr.channels_[c] = std::move(all);
    }

    // Biases: low-discrepancy quantiles of the convolution output of one training example.
    const double phi = (std::sqrt(5.0) + 1.0) / 2.0;
    const std::size_t total = per_kernel * kernels;
    std::vector<double> quantiles(total);
    for (std::size_t i = 0; i < total; ++i) quantiles[i] = std::fmod(static_cast<double>(i + 1) * phi, 1.0);

    mr.biases.assign(total, 0.0);
    std::size_t feature = 0;
    for (std::size_t di = 0; di < mr.dilations_.size(); ++di) {
        // Example choice depends only on the combination index.
        std::vector<std::size_t> example_of(kernels);
        for (std::size_t kernel = 0; kernel < kernels; ++kernel)
            example_of[kernel] = (di * kernels + kernel) % train.size();
        std::vector<std::vector<std::vector<double>>> cache(train.size());
        for (std::size_t kernel = 0; kernel < kernels; ++kernel) {
            const std::size_t ex = example_of[kernel];
            if (cache[ex].empty()) cache[ex] = dilation_outputs(train[ex], di, mr.dilations_[di], mr.channels_);
            const auto& c = cache[ex][kernel];
            for (std::size_t f = 0; f < mr.features_per_dilation_[di]; ++f, ++feature)
                mr.biases[feature] = quantile_linear(c, quantiles[feature]);
        }
    }
    mr.biases.resize(cfg.num_features);
    return mr;
}

std::vector<double> MiniRocket::convolve(const MultiSeries& x, std::size_t combination) const {
    if (combination >= num_combinations()) throw BaselineError("combination out of range");
    const std::size_t di = combination / MiniRocketConfig::kNumKernels;
    auto all = dilation_outputs(x, di, dilations_[di], channels_);
    return std::move(all[combination % MiniRocketConfig::kNumKernels]);
}

Vector MiniRocket::transform(const MultiSeries& x) const {
    if (x.channels() != input_channels_) throw BaselineError("channel count differs from the fitted transform");
    const std::size_t n = x.steps();
    if (n < MiniRocketConfig::kKernelLength || 2 * kHalf * dilations_.back() >= n)
        throw BaselineError("series of " + std::to_string(n) + " steps is shorter than the receptive field " +
                            std::to_string(2 * kHalf * dilations_.back() + 1));
    constexpr std::size_t kernels = MiniRocketConfig::kNumKernels;
    Vector out(static_cast<Eigen::Index>(num_features_));
    std::size_t feature = 0;
    for (std::size_t di = 0; di < dilations_.size() && feature < num_features_; ++di) {
        const auto outputs = dilation_outputs(x, di, dilations_[di], channels_);
        const std::size_t pad = kHalf * dilations_[di];
        for (std::size_t kernel = 0; kernel < kernels && feature < num_features_; ++kernel) {
            const auto& c = outputs[kernel];
            const std::size_t lo = padded(di, kernel) ? 0 : pad;
            const std::size_t hi = padded(di, kernel) ? n : n - pad;
            const double len = static_cast<double>(hi - lo);
            for (std::size_t f = 0; f < features_per_dilation_[di] && feature < num_features_; ++f, ++feature) {
                const double b = biases[feature];
                std::size_t positive = 0;
                for (std::size_t t = lo; t < hi; ++t) positive += c[t] > b ? 1 : 0;
                out(static_cast<Eigen::Index>(feature)) = static_cast<double>(positive) / len;
            }
        }
    }
    return out;
}

Matrix MiniRocket::transform_batch(std::span<const MultiSeries> xs) const {
    Matrix out(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(num_features_));
    std::string error;
    const auto count = static_cast<std::ptrdiff_t>(xs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            out.row(i) = transform(xs[static_cast<std::size_t>(i)]).transpose();
        } catch (const std::exception& e) {
#pragma omp critical(mesad_minirocket_error)
            if (error.empty()) error = e.what();
        }
    }
    if (!error.empty()) throw BaselineError(error);
    return out;
}

Matrix MiniRocket::transform_batch_serial(std::span<const MultiSeries> xs) const {
    Matrix out(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(num_features_));
    for (std::size_t i = 0; i < xs.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = transform(xs[i]).transpose();
    return out;
}

Vector minirocket_features(const MultiSeries& x, const MiniRocketConfig& cfg, std::uint64_t seed) {
    return MiniRocket::fit(std::span(&x, 1), cfg, seed).transform(x);
}

// ---------------------------------------------------------------------------
// Ridge

void RidgeClassifier::fit(const Matrix& features, std::span<const std::size_t> labels,
                          std::size_t classes, std::span<const double> lambdas) {
    const Eigen::Index n = features.rows();
    if (n == 0 || static_cast<std::size_t>(n) != labels.size())
        throw BaselineError("ridge: feature rows and labels disagree");
    if (lambdas.empty()) throw BaselineError("ridge: empty lambda grid");
    for (double l : lambdas)
        if (!(l > 0.0)) throw BaselineError("ridge: lambda must be positive");

    Matrix y = Matrix::Zero(n, static_cast<Eigen::Index>(classes));
    for (Eigen::Index i = 0; i < n; ++i) y(i, static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)])) = 1.0;
    feature_mean_ = features.colwise().mean().transpose();
    target_mean_ = y.colwise().mean().transpose();
    const Matrix xc = features.rowwise() - feature_mean_.transpose();
    const Matrix yc = y.rowwise() - target_mean_.transpose();

    // Dual form: G = Xc Xc^T = Q diag(e) Q^T.
    const Matrix gram = xc * xc.transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    const Vector e = eig.eigenvalues().cwiseMax(0.0);
    const Matrix& q = eig.eigenvectors();
    const Matrix qty = q.transpose() * yc;

    double best_gcv = std::numeric_limits<double>::infinity();
    double best_lambda = lambdas.front();
    const double nd = static_cast<double>(n);
    for (double lambda : lambdas) {
        const Vector shrink = (e.array() / (e.array() + lambda)).matrix();
        const Matrix fitted = q * (shrink.asDiagonal() * qty);
        const double rss = (yc - fitted).squaredNorm();
        const double dof = nd - 1.0 - shrink.sum();  // intercept uses one degree of freedom
        const double gcv = dof > 1e-12 ? (rss / nd) / ((dof / nd) * (dof / nd))
                                       : std::numeric_limits<double>::infinity();
        if (gcv < best_gcv) {
            best_gcv = gcv;
            best_lambda = lambda;
        }
    }
    lambda_ = best_lambda;
    const Vector inv = (e.array() + lambda_).inverse().matrix();
    const Matrix dual = q * (inv.asDiagonal() * qty);  // (G + lambda I)^{-1} Yc
    weights_ = xc.transpose() * dual;
}

Matrix RidgeClassifier::decision(const Matrix& features) const {
    if (features.cols() != feature_mean_.size()) throw BaselineError("ridge: feature width mismatch");
    Matrix s = (features.rowwise() - feature_mean_.transpose()) * weights_;
    s.rowwise() += target_mean_.transpose();
    return s;
}

double Prediction::score(EventType t) const {
    for (const auto& [c, s] : scores)
        if (c == t) return s;
    return 0.0;
}

void MiniRocketClassifier::fit(std::span<const MultiSeries> train, std::span<const EventType> labels,
                               const MiniRocketConfig& cfg, std::uint64_t seed) {
    if (train.empty() || train.size() != labels.size())
        throw BaselineError("MiniRocket classifier needs one label per training series");
    classes_.assign(labels.begin(), labels.end());
    std::sort(classes_.begin(), classes_.end());
    classes_.erase(std::unique(classes_.begin(), classes_.end()), classes_.end());
    transform_ = MiniRocket::fit(train, cfg, seed);
    if (classes_.size() < 2) return;
    std::vector<std::size_t> idx(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        idx[i] = static_cast<std::size_t>(std::find(classes_.begin(), classes_.end(), labels[i]) - classes_.begin());
    ridge_.fit(transform_.transform_batch(train), idx, classes_.size(), cfg.lambdas);
}

Prediction MiniRocketClassifier::from_scores(const Vector& s) const {
    Prediction p;
    Eigen::Index best = 0;
    for (Eigen::Index c = 0; c < s.size(); ++c) {
        p.scores.emplace_back(classes_[static_cast<std::size_t>(c)], s(c));
        if (s(c) > s(best)) best = c;
    }
    p.label = classes_[static_cast<std::size_t>(best)];
    return p;
}

std::vector<Prediction> MiniRocketClassifier::predict(std::span<const MultiSeries> xs) const {
    if (classes_.empty()) throw BaselineError("classifier is not fitted");
    std::vector<Prediction> out;
    if (classes_.size() == 1) {
        for (std::size_t i = 0; i < xs.size(); ++i) out.push_back({classes_[0], {{classes_[0], 1.0}}});
        return out;
    }
    const Matrix s = ridge_.decision(transform_.transform_batch(xs));
    for (Eigen::Index i = 0; i < s.rows(); ++i) out.push_back(from_scores(s.row(i).transpose()));
    return out;
}

Prediction MiniRocketClassifier::predict(const MultiSeries& x) const {
    return predict(std::span(&x, 1)).front();
}

Prediction minirocket_classify(const LabeledDataset& ds, const MultiSeries& test,
                               const MiniRocketConfig& cfg, std::uint64_t seed) {
    if (ds.train.empty()) throw BaselineError("empty train set");
    std::vector<MultiSeries> xs;
    std::vector<EventType> ys;
    for (auto i : ds.train) {
        xs.push_back(ds.series[i].data);
        ys.push_back(ds.series[i].label());
    }
    MiniRocketClassifier clf;
    clf.fit(xs, ys, cfg, seed);
    return clf.predict(test);
}

void write_predictions_csv(const std::filesystem::path& path, std::span<const std::size_t> ids,
                           std::span<const Prediction> preds, std::span<const EventType> actual,
                           std::span<const EventType> classes) {
    std::ostringstream os;
    os.precision(17);
    os << "series_id,predicted,actual";
    for (auto c : classes) os << ",score_" << to_string(c);
    os << '\n';
    for (std::size_t i = 0; i < preds.size(); ++i) {
        os << ids[i] << ',' << to_string(preds[i].label) << ',' << to_string(actual[i]);
        for (auto c : classes) os << ',' << preds[i].score(c);
        os << '\n';
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw BaselineError("cannot write " + path.string());
    out << os.str();
}

}  // namespace mesad::baselines
