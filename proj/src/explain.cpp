#include "mesad/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace mesad::explain {

void ExplainerConfig::validate() const {
    if (n_samples < 10) throw ExplainError("n_samples must be at least 10");
    if (kernel_width && !(*kernel_width > 0.0)) throw ExplainError("kernel_width must be positive");
    if (!(mask_probability >= 0.0 && mask_probability < 1.0))
        throw ExplainError("mask_probability must lie in [0, 1)");
    if (!(amplitude_noise >= 0.0)) throw ExplainError("amplitude_noise must be non-negative");
    if (n_permutations == 0) throw ExplainError("n_permutations must be positive");
}

std::vector<std::size_t> rank_channels(std::span<const double> importance) {
    std::vector<std::size_t> order(importance.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return importance[a] > importance[b]; });
    std::vector<std::size_t> rank(importance.size());
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r + 1;
    return rank;
}

namespace {

Vector resolve_baseline(const ExplainerConfig& cfg, const Matrix& window) {
    if (cfg.baseline) {
        if (cfg.baseline->size() != window.cols()) throw ExplainError("baseline size does not match channel count");
        return *cfg.baseline;
    }
    return window.colwise().mean().transpose();
}

Attribution make_attribution(std::vector<double> importance) {
    Attribution a;
    a.rank = rank_channels(importance);
    a.importance = std::move(importance);
    return a;
}

Matrix masked(const Matrix& window, const Vector& baseline, std::uint64_t mask) {
    Matrix out = window;
    for (Eigen::Index k = 0; k < window.cols(); ++k)
        if (!((mask >> k) & 1U)) out.col(k).setConstant(baseline(k));
    return out;
}

}  // namespace

Matrix modulate(const Matrix& window, const Vector& baseline, std::span<const double> amplitude) {
    Matrix out(window.rows(), window.cols());
    for (Eigen::Index k = 0; k < window.cols(); ++k) {
        const double a = amplitude[static_cast<std::size_t>(k)];
        out.col(k) = (baseline(k) + a * (window.col(k).array() - baseline(k))).matrix();
    }
    return out;
}

Attribution surrogate_explain(const ScoreFn& score, const Matrix& window, const ExplainerConfig& cfg,
                              std::uint64_t seed) {
    cfg.validate();
    const auto k = window.cols();
    const Vector baseline = resolve_baseline(cfg, window);
    const double width = cfg.kernel_width.value_or(0.75 * std::sqrt(static_cast<double>(k)));

    std::mt19937_64 rng(seed);
    std::bernoulli_distribution drop(cfg.mask_probability);
    std::normal_distribution<double> jitter(0.0, cfg.amplitude_noise);

    const auto n = static_cast<Eigen::Index>(cfg.n_samples);
    Matrix z(n, k);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index c = 0; c < k; ++c) z(i, c) = drop(rng) ? 0.0 : 1.0 + jitter(rng);
    // The unperturbed window is always part of the neighbourhood.
    z.row(0).setOnes();

    Vector y(n);
    std::string error;
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) {
        try {
            const Vector amp = z.row(i).transpose();
            y(i) = score(modulate(window, baseline, std::span(amp.data(), static_cast<std::size_t>(k))));
        } catch (const std::exception& e) {
#pragma omp critical(mesad_surrogate_error)
            if (error.empty()) error = e.what();
        }
    }
    if (!error.empty()) throw ExplainError(error);

    // A score that does not move over the neighbourhood explains nothing;
    // solving anyway would rank channels by rounding noise.
    if (y.maxCoeff() - y.minCoeff() <= 1e-12 * std::max(1.0, y.cwiseAbs().maxCoeff()))
        return make_attribution(std::vector<double>(static_cast<std::size_t>(k), 0.0));

    Vector w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double d2 = (z.row(i).array() - 1.0).square().sum();
        w(i) = std::exp(-d2 / (width * width));
    }
    const double wsum = w.sum();
    if (!(wsum > 1e-300) || !std::isfinite(wsum))
        throw ExplainError("all locality weights vanished; kernel_width is too small for this neighbourhood");

    // Weighted centering keeps the intercept out of the penalty.
    const Vector zbar = (z.transpose() * w) / wsum;
    const double ybar = w.dot(y) / wsum;
    const Matrix zc = z.rowwise() - zbar.transpose();
    const Vector yc = y.array() - ybar;
    Matrix a = zc.transpose() * w.asDiagonal() * zc;
    a.diagonal().array() += cfg.ridge;
    const Vector rhs = zc.transpose() * (w.asDiagonal() * yc);
    Eigen::LDLT<Matrix> ldlt(a);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-14)
        throw ExplainError("surrogate design matrix is degenerate; check kernel_width");
    const Vector coef = ldlt.solve(rhs);
    if (!coef.allFinite()) throw ExplainError("surrogate fit produced non-finite coefficients");

    std::vector<double> importance(static_cast<std::size_t>(k));
    for (Eigen::Index c = 0; c < k; ++c) importance[static_cast<std::size_t>(c)] = std::abs(coef(c));
    return make_attribution(std::move(importance));
}

std::vector<double> coalition_values(const ScoreFn& score, const Matrix& window, const Vector& baseline) {
    const auto k = static_cast<std::size_t>(window.cols());
    if (k >= 63) throw ExplainError("too many channels for a coalition table");
    const auto count = static_cast<std::int64_t>(std::uint64_t{1} << k);
    std::vector<double> v(static_cast<std::size_t>(count));
    std::string error;
#pragma omp parallel for schedule(dynamic, 16)
    for (std::int64_t mask = 0; mask < count; ++mask) {
        try {
            v[static_cast<std::size_t>(mask)] = score(masked(window, baseline, static_cast<std::uint64_t>(mask)));
        } catch (const std::exception& e) {
#pragma omp critical(mesad_coalition_error)
            if (error.empty()) error = e.what();
        }
    }
    if (!error.empty()) throw ExplainError(error);
    return v;
}

std::vector<double> coalition_values_serial(const ScoreFn& score, const Matrix& window,
                                            const Vector& baseline) {
    const auto k = static_cast<std::size_t>(window.cols());
    if (k >= 63) throw ExplainError("too many channels for a coalition table");
    const std::uint64_t count = std::uint64_t{1} << k;
    std::vector<double> v(count);
    for (std::uint64_t mask = 0; mask < count; ++mask) v[mask] = score(masked(window, baseline, mask));
    return v;
}

std::vector<double> shapley_from_coalitions(std::span<const double> values, std::size_t channels) {
    if (values.size() != (std::size_t{1} << channels)) throw ExplainError("coalition table has wrong size");
    // weight(s) = s! (K - s - 1)! / K!
    std::vector<double> weight(channels);
    for (std::size_t s = 0; s < channels; ++s) {
        double lw = std::lgamma(static_cast<double>(s) + 1.0) +
                    std::lgamma(static_cast<double>(channels - s)) -
                    std::lgamma(static_cast<double>(channels) + 1.0);
        weight[s] = std::exp(lw);
    }
    std::vector<double> phi(channels, 0.0);
    for (std::size_t i = 0; i < channels; ++i) {
        const std::uint64_t bit = std::uint64_t{1} << i;
        double acc = 0.0;
        for (std::uint64_t mask = 0; mask < values.size(); ++mask) {
            if (mask & bit) continue;
            const auto size = static_cast<std::size_t>(std::popcount(mask));
            acc += weight[size] * (values[mask | bit] - values[mask]);
        }
        phi[i] = acc;
    }
    return phi;
}

std::vector<double> shapley_values(const ScoreFn& score, const Matrix& window, const ExplainerConfig& cfg,
                                   std::uint64_t seed) {
    cfg.validate();
    const auto k = static_cast<std::size_t>(window.cols());
    const Vector baseline = resolve_baseline(cfg, window);
    bool exact = cfg.shapley_mode == ShapleyMode::Exact ||
                 (cfg.shapley_mode == ShapleyMode::Auto && k <= cfg.exact_max_channels);
    if (exact && k > 20)
        throw ExplainError("exact Shapley enumeration refused for K = " + std::to_string(k) + " > 20");
    if (exact) return shapley_from_coalitions(coalition_values(score, window, baseline), k);

    // Permutation sampling: marginal contribution of each channel when added
    // in a random order to the coalition of its predecessors.
    std::mt19937_64 rng(seed);
    const std::size_t perms = cfg.n_permutations;
    std::vector<std::vector<std::size_t>> orders(perms, std::vector<std::size_t>(k));
    for (auto& o : orders) {
        std::iota(o.begin(), o.end(), 0);
        std::shuffle(o.begin(), o.end(), rng);
    }
    std::vector<double> contrib(perms * k, 0.0);
    std::string error;
    const auto np = static_cast<std::ptrdiff_t>(perms);
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t p = 0; p < np; ++p) {
        try {
            const auto& order = orders[static_cast<std::size_t>(p)];
            Matrix current = window;
            for (Eigen::Index c = 0; c < window.cols(); ++c) current.col(c).setConstant(baseline(c));
            double prev = score(current);
            for (std::size_t j = 0; j < k; ++j) {
                const auto c = static_cast<Eigen::Index>(order[j]);
                current.col(c) = window.col(c);
                const double next = score(current);
                contrib[static_cast<std::size_t>(p) * k + order[j]] = next - prev;
                prev = next;
            }
        } catch (const std::exception& e) {
#pragma omp critical(mesad_permutation_error)
            if (error.empty()) error = e.what();
        }
    }
    if (!error.empty()) throw ExplainError(error);
    std::vector<double> phi(k, 0.0);
    for (std::size_t p = 0; p < perms; ++p)
        for (std::size_t c = 0; c < k; ++c) phi[c] += contrib[p * k + c];
    for (double& v : phi) v /= static_cast<double>(perms);
    return phi;
}

Attribution shapley_explain(const ScoreFn& score, const Matrix& window, const ExplainerConfig& cfg,
                            std::uint64_t seed) {
    auto phi = shapley_values(score, window, cfg, seed);
    for (double& v : phi) v = std::abs(v);
    return make_attribution(std::move(phi));
}

void write_attribution_csv(const std::filesystem::path& path, std::span<const Attribution> items,
                           std::span<const std::string> channel_names) {
    std::ostringstream os;
    os.precision(17);
    os << "series_id,step,channel,importance,rank\n";
    for (const auto& a : items)
        for (std::size_t k = 0; k < a.channels(); ++k)
            os << a.series_id << ',' << a.step << ',' << channel_names[k] << ',' << a.importance[k] << ','
               << a.rank[k] << '\n';
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ExplainError("cannot write " + path.string());
    out << os.str();
}

}  // namespace mesad::explain
