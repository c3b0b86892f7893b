#include "mesad/metrics.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

namespace mesad::metrics {

namespace {

void check_inputs(std::span<const double> scores, const std::vector<bool>& labels) {
    if (scores.size() != labels.size()) throw MetricError("scores and labels differ in length");
    for (double s : scores)
        if (std::isnan(s)) throw MetricError("NaN score");
}

std::vector<std::size_t> descending_order(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

}  // namespace

double auroc(std::span<const double> scores, const std::vector<bool>& labels) {
    check_inputs(scores, labels);
    const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), true));
    const double neg = static_cast<double>(labels.size()) - pos;
    if (pos == 0 || neg == 0) throw MetricError("auROC needs both classes");

    // Mann-Whitney U with mid-ranks for ties (ascending ranks).
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double mid = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t r = i; r < j; ++r)
            if (labels[order[r]]) rank_sum += mid;
        i = j;
    }
    return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double aupr(std::span<const double> scores, const std::vector<bool>& labels) {
    check_inputs(scores, labels);
    const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), true));
    if (pos == 0) throw MetricError("auPR needs at least one positive");
    const auto order = descending_order(scores);
    double tp = 0.0, seen = 0.0, prev_recall = 0.0, area = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            if (labels[order[j]]) tp += 1.0;
            seen += 1.0;
            ++j;
        }
        const double recall = tp / pos;
        area += (recall - prev_recall) * (tp / seen);
        prev_recall = recall;
        i = j;
    }
    return area;
}

double mds(const MdsInput& in) {
    if (in.beta < 1) throw MetricError("beta must be at least 1");
    if (in.root_ranks.empty())
        throw MetricError("mean discovery score is undefined without detected anomalies");
    std::size_t hits = 0;
    for (auto r : in.root_ranks) {
        if (r < 1) throw MetricError("ranks start at 1");
        if (r <= in.beta) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(in.root_ranks.size());
}

TTestResult ttest_one_sided(std::span<const double> benchmark, std::span<const double> ours) {
    if (benchmark.empty() || ours.empty()) throw MetricError("t-test needs non-empty samples");
    if (benchmark.size() < 2 && ours.size() < 2) throw MetricError("t-test needs one sample with n >= 2");

    auto moments = [](std::span<const double> x) {
        const double n = static_cast<double>(x.size());
        // Constant samples are exactly constant; the summed mean would leave rounding residue.
        if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); }))
            return std::pair{x.front(), 0.0};
        const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
        double ss = 0.0;
        for (double v : x) ss += (v - mean) * (v - mean);
        const double var = x.size() > 1 ? ss / (n - 1.0) : 0.0;
        return std::pair{mean, var / n};  // mean, squared standard error
    };
    const auto [mb, vb] = moments(benchmark);
    const auto [mo, vo] = moments(ours);
    const double se2 = vb + vo;
    TTestResult r;
    if (se2 == 0.0) {
        if (mb == mo) throw MetricError("t statistic undefined: both samples constant and equal");
        r.statistic = mo > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        r.p_value = mo > mb ? 0.0 : 1.0;
        r.dof = std::numeric_limits<double>::infinity();
        return r;
    }
    r.statistic = (mo - mb) / std::sqrt(se2);
    // Welch-Satterthwaite; a zero-variance sample drops out of the denominator.
    double denom = 0.0;
    if (vb > 0.0) denom += vb * vb / static_cast<double>(benchmark.size() - 1);
    if (vo > 0.0) denom += vo * vo / static_cast<double>(ours.size() - 1);
    r.dof = se2 * se2 / denom;
    if (r.statistic == 0.0) {
        r.p_value = 0.5;
        return r;
    }
    const boost::math::students_t dist(r.dof);
    r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
    return r;
}

Summary summarize(std::span<const double> values) {
    Summary s;
    if (values.empty()) return s;
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    s.n = v.size();
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / n);
    // All-equal samples get exactly zero spread regardless of rounding in the mean.
    if (v.front() == v.back()) {
        s.mean = v.front();
        s.std = 0.0;
    }
    auto quantile = [&v](double q) {
        const double pos = q * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    s.min = v.front();
    s.max = v.back();
    s.q1 = quantile(0.25);
    s.median = quantile(0.5);
    s.q3 = quantile(0.75);
    const double iqr = s.q3 - s.q1;
    const double lo_fence = s.q1 - 1.5 * iqr;
    const double hi_fence = s.q3 + 1.5 * iqr;
    s.whisker_low = *std::find_if(v.begin(), v.end(), [&](double x) { return x >= lo_fence; });
    s.whisker_high = *std::find_if(v.rbegin(), v.rend(), [&](double x) { return x <= hi_fence; });
    return s;
}

std::vector<ModelSummary> aggregate_trials(std::span<const TrialReport> reports) {
    using Key = std::pair<std::string, std::string>;
    std::vector<Key> order;
    std::map<Key, std::pair<std::vector<double>, std::vector<double>>> values;
    for (const auto& r : reports) {
        Key key{r.model, r.unit};
        if (!values.count(key)) order.push_back(key);
        values[key].first.push_back(r.auroc);
        values[key].second.push_back(r.aupr);
    }
    std::vector<ModelSummary> out;
    for (const auto& key : order)
        out.push_back({key.first, key.second, summarize(values[key].first), summarize(values[key].second)});
    return out;
}

}  // namespace mesad::metrics
