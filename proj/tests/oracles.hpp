// Independent reference computations used by the tests. Each one takes the
// slow, obvious route and shares no code with the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

namespace oracle {

// Row-major m x m cost table -> minimum over every monotone contiguous path
// from (0,0) to (m-1,m-1), by explicit depth-first enumeration.
inline double min_path_cost(const std::vector<double>& cost, std::size_t m) {
    double best = std::numeric_limits<double>::infinity();
    std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double acc) {
        acc += cost[i * m + j];
        if (i == m - 1 && j == m - 1) {
            best = std::min(best, acc);
            return;
        }
        if (i + 1 < m) walk(i + 1, j, acc);
        if (j + 1 < m) walk(i, j + 1, acc);
        if (i + 1 < m && j + 1 < m) walk(i + 1, j + 1, acc);
    };
    walk(0, 0, 0.0);
    return best;
}

// a[t][k]; squared scalar costs of one channel.
inline double dtw_channel(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b,
                          std::size_t k) {
    const std::size_t m = a.size();
    std::vector<double> c(m * m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) c[i * m + j] = (a[i][k] - b[j][k]) * (a[i][k] - b[j][k]);
    return min_path_cost(c, m);
}

inline double idtw(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.front().size(); ++k) s += dtw_channel(a, b, k);
    return s;
}

inline double ddtw(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
    const std::size_t m = a.size();
    std::vector<double> c(m * m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t k = 0; k < a[i].size(); ++k) c[i * m + j] += (a[i][k] - b[j][k]) * (a[i][k] - b[j][k]);
    return min_path_cost(c, m);
}

// Fraction of (positive, negative) pairs ordered correctly; ties count 1/2.
inline double concordance(const std::vector<double>& s, const std::vector<bool>& y) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!y[i]) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j]) continue;
            den += 1.0;
            num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
    }
    return num / den;
}

// Sweep every distinct score as a threshold (predict positive when s >= thr),
// highest first, and sum precision times the recall gained.
inline double threshold_sweep_ap(const std::vector<double>& s, const std::vector<bool>& y) {
    std::vector<double> thr(s);
    std::sort(thr.begin(), thr.end(), std::greater<>());
    thr.erase(std::unique(thr.begin(), thr.end()), thr.end());
    double pos = 0.0;
    for (bool b : y) pos += b ? 1.0 : 0.0;
    double prev_recall = 0.0, area = 0.0;
    for (double t : thr) {
        double tp = 0.0, pp = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i)
            if (s[i] >= t) {
                pp += 1.0;
                tp += y[i] ? 1.0 : 0.0;
            }
        const double recall = tp / pos;
        area += (recall - prev_recall) * (tp / pp);
        prev_recall = recall;
    }
    return area;
}

inline double mds_count(const std::vector<std::size_t>& ranks, std::size_t beta) {
    std::size_t hit = 0;
    for (auto r : ranks) hit += r <= beta ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(ranks.size());
}

// Upper tail of Student's t by Gauss-Legendre quadrature of the density in
// long double: 0.5 - integral_0^t f for t >= 0.
inline long double t_upper_tail(long double t, long double nu) {
    if (t < 0) return 1.0L - t_upper_tail(-t, nu);
    const long double logc = std::lgamma((nu + 1.0L) / 2.0L) - std::lgamma(nu / 2.0L) -
                             0.5L * std::log(nu * 3.141592653589793238462643383279502884L);
    auto pdf = [&](long double x) { return std::exp(logc - (nu + 1.0L) / 2.0L * std::log1p(x * x / nu)); };
    // 10-point Gauss-Legendre on many panels.
    static const long double xg[5] = {0.1488743389816312108848260L, 0.4333953941292471907992659L,
                                      0.6794095682990244062343274L, 0.8650633666889845107320967L,
                                      0.9739065285171717200779640L};
    static const long double wg[5] = {0.2955242247147528701738930L, 0.2692667193099963550912269L,
                                      0.2190863625159820439955349L, 0.1494513491505805931457763L,
                                      0.0666713443086881375935688L};
    const int panels = 4000;
    const long double h = t / panels;
    long double sum = 0.0L;
    for (int p = 0; p < panels; ++p) {
        const long double mid = (p + 0.5L) * h, half = h / 2.0L;
        for (int g = 0; g < 5; ++g) sum += wg[g] * half * (pdf(mid - half * xg[g]) + pdf(mid + half * xg[g]));
    }
    return 0.5L - sum;
}

struct Welch {
    long double statistic;
    long double dof;
    long double p;
};

// H0: mean(bench) >= mean(ours); reject for large statistic.
inline Welch welch_one_sided(const std::vector<double>& bench, const std::vector<double>& ours) {
    auto mv = [](const std::vector<double>& x) {
        long double m = 0.0L;
        for (double v : x) m += v;
        m /= x.size();
        long double ss = 0.0L;
        for (double v : x) ss += (v - m) * (v - m);
        return std::pair<long double, long double>{m, ss / (x.size() - 1)};
    };
    const auto [mb, vb] = mv(bench);
    const auto [mo, vo] = mv(ours);
    const long double sb = vb / bench.size(), so = vo / ours.size();
    Welch w;
    w.statistic = (mo - mb) / std::sqrt(sb + so);
    w.dof = (sb + so) * (sb + so) / (sb * sb / (bench.size() - 1) + so * so / (ours.size() - 1));
    w.p = t_upper_tail(w.statistic, w.dof);
    return w;
}

// Shapley values by averaging marginal contributions over all K! orderings.
// value(mask) is the game; bit k set means player k is present.
inline std::vector<double> shapley_by_orderings(const std::function<double(unsigned)>& value, std::size_t k) {
    std::vector<std::size_t> order(k);
    for (std::size_t i = 0; i < k; ++i) order[i] = i;
    std::vector<double> phi(k, 0.0);
    double count = 0.0;
    do {
        unsigned mask = 0;
        double before = value(mask);
        for (std::size_t p : order) {
            mask |= 1u << p;
            const double after = value(mask);
            phi[p] += after - before;
            before = after;
        }
        count += 1.0;
    } while (std::next_permutation(order.begin(), order.end()));
    for (auto& v : phi) v /= count;
    return phi;
}

}  // namespace oracle
