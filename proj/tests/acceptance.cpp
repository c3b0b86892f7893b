// Acceptance gate: one PASS/FAIL line per criterion; exit status 1 if any fails.
#include "gradcheck.hpp"
#include "oracles.hpp"

#include "mesad/baselines.hpp"
#include "mesad/harness.hpp"
#include "mesad/mes.hpp"
#include "mesad/metrics.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

using namespace mesad;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

using Rows = std::vector<std::vector<double>>;

// Multiples of 1/8: every sum along a warping path is exact.
Rows dyadic_rows(std::mt19937_64& rng, std::size_t m, std::size_t k) {
    Rows r(m, std::vector<double>(k));
    for (auto& row : r)
        for (auto& v : row) v = static_cast<double>(static_cast<int>(rng() % 129) - 64) / 8.0;
    return r;
}

MultiSeries to_series(const Rows& r) {
    Matrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.front().size()));
    for (std::size_t i = 0; i < r.size(); ++i)
        for (std::size_t k = 0; k < r[i].size(); ++k)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = r[i][k];
    return MultiSeries::with_default_names(m);
}

std::vector<double> column(const Rows& r, std::size_t k) {
    std::vector<double> c;
    for (const auto& row : r) c.push_back(row[k]);
    return c;
}

Outcome dtw_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(101);
    double worst = 0.0;
    for (int rep = 0; rep < 500; ++rep) {
        const std::size_t m = 1 + rng() % 5, k = 1 + rng() % 3;
        const Rows ra = dyadic_rows(rng, m, k), rb = dyadic_rows(rng, m, k);
        const auto a = to_series(ra), b = to_series(rb);
        for (std::size_t c = 0; c < k; ++c)
            worst = std::max(worst, std::abs(baselines::dtw(column(ra, c), column(rb, c)) - oracle::dtw_channel(ra, rb, c)));
        worst = std::max(worst, std::abs(baselines::idtw(a, b) - oracle::idtw(ra, rb)));
        worst = std::max(worst, std::abs(baselines::ddtw(a, b) - oracle::ddtw(ra, rb)));
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-12 && secs < 30.0, "max |diff| " + fmt("%.3g", worst) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome dimension_one() {
    std::mt19937_64 rng(102);
    std::size_t mismatches = 0;
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t m = 1 + rng() % 12;
        const Rows ra = dyadic_rows(rng, m, 1), rb = dyadic_rows(rng, m, 1);
        const auto a = to_series(ra), b = to_series(rb);
        const double d = baselines::dtw(column(ra, 0), column(rb, 0));
        if (baselines::idtw(a, b) != d || baselines::ddtw(a, b) != d) ++mismatches;
    }
    return {mismatches == 0, std::to_string(mismatches) + " of 100 pairs differ"};
}

Outcome gradient() {
    const auto r = gradcheck::run(2, 4, 5, 3, 42);
    return {r.max_relative <= 1e-4 && r.parameters > 0,
            std::to_string(r.parameters) + " parameters, max relative error " + fmt("%.3g", r.max_relative)};
}

Outcome coverage() {
    SynthConfig s;
    s.channels = 2;
    s.steps = 480;
    s.series = 16;
    s.event_rate = 0.0;
    s.season_amplitude = 0.0;
    s.trend_scale = 0.0;
    s.noise_correlation = 0.0;
    LabeledDataset train = synth_generate(s, 11);
    train.train.clear();
    train.test.clear();
    for (std::size_t i = 0; i < train.series.size(); ++i) train.train.push_back(i);

    harness::RunConfig cfg;
    const auto td = harness::train_detector(train, cfg, 11);
    s.steps = 5000;
    s.series = 1;
    const auto test = synth_generate(s, 12);
    const auto sd = harness::run_detector(td, test.series[0].data, cfg);
    double inside = 0.0, total = 0.0;
    for (Eigen::Index t = static_cast<Eigen::Index>(sd.intervals.first_valid); t < 5000; ++t)
        for (Eigen::Index k = 0; k < 2; ++k) {
            const double r = sd.residuals.values()(t, k);
            inside += (r >= sd.intervals.lower(t, k) && r <= sd.intervals.upper(t, k)) ? 1.0 : 0.0;
            total += 1.0;
        }
    const double cov = inside / total;
    return {std::abs(cov - 0.95) <= 0.03, "coverage " + fmt("%.4f", cov) + " over " + fmt("%.0f", total) + " cells"};
}

Outcome spike_benchmark() {
    harness::RunConfig cfg;
    SynthConfig s = SynthConfig::desk_profile();
    s.channels = 4;
    s.series = 16;
    s.event_types = {EventType::BusFault};
    s.severity = 20.0;
    std::size_t events = 0, found = 0;
    double false_pos = 0.0, normal_steps = 0.0, auroc_sum = 0.0;
    std::size_t auroc_trials = 0;
    for (std::size_t trial = 0; trial < 35; ++trial) {
        const std::uint64_t seed = 700 + trial;
        const auto ds = synth_generate(s, seed);
        const auto td = harness::train_detector(ds, cfg, seed);
        std::vector<double> scores;
        std::vector<bool> labels;
        for (auto id : ds.test) {
            const auto& x = ds.series[id];
            const auto sd = harness::run_detector(td, x.data, cfg);
            const auto truth = x.step_labels();
            for (const auto& ev : x.events) {
                ++events;
                bool hit = false;
                for (std::size_t t = ev.start_idx; t <= ev.end_idx; ++t) hit |= sd.result.flags[t];
                found += hit;
            }
            for (std::size_t t = sd.result.first_detectable; t < truth.size(); ++t) {
                scores.push_back(sd.result.scores[t]);
                labels.push_back(truth[t]);
                if (!truth[t]) {
                    normal_steps += 1.0;
                    false_pos += sd.result.flags[t] ? 1.0 : 0.0;
                }
            }
        }
        if (std::count(labels.begin(), labels.end(), true) > 0) {
            auroc_sum += metrics::auroc(scores, labels);
            ++auroc_trials;
        }
    }
    const double recall = events ? static_cast<double>(found) / static_cast<double>(events) : 0.0;
    const double fpr = false_pos / normal_steps;
    const double mean_auroc = auroc_trials ? auroc_sum / static_cast<double>(auroc_trials) : 0.0;
    return {events > 0 && recall >= 0.9 && fpr <= 0.01 && mean_auroc >= 0.95,
            "recall " + fmt("%.3f", recall) + " (" + std::to_string(found) + "/" + std::to_string(events) +
                "), per-step FPR " + fmt("%.4f", fpr) + ", mean auROC " + fmt("%.4f", mean_auroc) + " over " +
                std::to_string(auroc_trials) + " trials"};
}

Outcome shapley_efficiency() {
    std::mt19937_64 rng(106);
    std::normal_distribution<double> g;
    double worst = 0.0;
    std::size_t dummies = 0, nonzero_dummies = 0;
    for (int rep = 0; rep < 50; ++rep) {
        const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng() % 8);
        Matrix w(4, k);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = g(rng);
        std::vector<bool> used(static_cast<std::size_t>(k));
        for (auto&& u : used) u = rng() % 4 != 0;
        Vector lin(k);
        Matrix quad(k, k);
        for (Eigen::Index i = 0; i < k; ++i) lin(i) = used[static_cast<std::size_t>(i)] ? g(rng) : 0.0;
        for (Eigen::Index i = 0; i < k; ++i)
            for (Eigen::Index j = 0; j < k; ++j)
                quad(i, j) = used[static_cast<std::size_t>(i)] && used[static_cast<std::size_t>(j)] ? g(rng) : 0.0;
        const explain::ScoreFn f = [lin, quad, used](const Matrix& m) {
            double s = 0.0;
            for (Eigen::Index i = 0; i < lin.size(); ++i) {
                if (!used[static_cast<std::size_t>(i)]) continue;
                const double x = m(m.rows() - 1, i), mean = m.col(i).mean();
                s += lin(i) * x + std::tanh(mean);
                for (Eigen::Index j = 0; j < lin.size(); ++j)
                    if (used[static_cast<std::size_t>(j)]) s += quad(i, j) * x * m(m.rows() - 1, j);
            }
            return std::max(s, -2.0);
        };
        explain::ExplainerConfig cfg;
        cfg.shapley_mode = explain::ShapleyMode::Exact;
        Vector base(k);
        for (Eigen::Index i = 0; i < k; ++i) base(i) = g(rng);
        cfg.baseline = base;
        const auto phi = explain::shapley_values(f, w, cfg, 0);
        Matrix all_base = w;
        for (Eigen::Index i = 0; i < k; ++i) all_base.col(i).setConstant(base(i));
        double sum = 0.0;
        for (double v : phi) sum += v;
        worst = std::max(worst, std::abs(sum - (f(w) - f(all_base))));
        for (Eigen::Index i = 0; i < k; ++i)
            if (!used[static_cast<std::size_t>(i)]) {
                ++dummies;
                nonzero_dummies += phi[static_cast<std::size_t>(i)] != 0.0;
            }
    }
    return {worst <= 1e-9 && nonzero_dummies == 0,
            "max efficiency gap " + fmt("%.3g", worst) + ", " + std::to_string(nonzero_dummies) + " of " +
                std::to_string(dummies) + " dummy channels nonzero"};
}

Outcome mds_oracle() {
    std::mt19937_64 rng(107);
    std::size_t mismatches = 0, non_monotone = 0;
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t k = 1 + rng() % 40;
        std::vector<std::size_t> ranks(1 + rng() % 25);
        for (auto& r : ranks) r = 1 + rng() % k;
        const std::size_t beta = 1 + rng() % k;
        const double v = metrics::mds({ranks, beta});
        if (v != oracle::mds_count(ranks, beta)) ++mismatches;
        if (beta < k && metrics::mds({ranks, beta + 1}) < v) ++non_monotone;
    }
    return {mismatches == 0 && non_monotone == 0,
            std::to_string(mismatches) + " mismatches, " + std::to_string(non_monotone) + " monotonicity breaks"};
}

Outcome metric_oracles() {
    std::mt19937_64 rng(108);
    double worst = 0.0;
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t n = 2 + rng() % 99;
        std::vector<double> s(n);
        std::vector<bool> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = rep % 2 ? static_cast<double>(rng() % 10) / 10.0 : std::ldexp(static_cast<double>(rng() >> 11), -53);
            y[i] = rng() % 3 == 0;
        }
        y[0] = true;
        y[1] = false;
        worst = std::max(worst, std::abs(metrics::auroc(s, y) - oracle::concordance(s, y)));
        worst = std::max(worst, std::abs(metrics::aupr(s, y) - oracle::threshold_sweep_ap(s, y)));
    }
    std::uniform_real_distribution<double> u;
    std::vector<double> s(10000);
    std::vector<bool> y(10000);
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = u(rng);
        y[i] = u(rng) < 0.5;
    }
    const double random_auc = metrics::auroc(s, y);
    return {worst <= 1e-12 && std::abs(random_auc - 0.5) <= 0.02,
            "max |diff| " + fmt("%.3g", worst) + ", random auROC " + fmt("%.4f", random_auc)};
}

Outcome ttest_reference() {
    std::mt19937_64 rng(109);
    std::normal_distribution<double> g;
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> bench(35), ours(35);
        for (auto& v : bench) v = 0.7 + 0.05 * g(rng);
        for (auto& v : ours) v = 0.72 + 0.08 * g(rng);
        if (rep == 0) std::fill(bench.begin(), bench.end(), 0.6998);  // zero-variance benchmark
        const auto r = metrics::ttest_one_sided(bench, ours);
        const auto o = oracle::welch_one_sided(bench, ours);
        worst = std::max(worst, std::abs(r.p_value - static_cast<double>(o.p)));
    }
    std::vector<double> same(35);
    for (auto& v : same) v = g(rng);
    const double p_same = metrics::ttest_one_sided(same, same).p_value;
    return {worst <= 1e-6 && std::abs(p_same - 0.5) <= 1e-12,
            "max |p - oracle| " + fmt("%.3g", worst) + ", identical samples p = " + fmt("%.15f", p_same)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream is(slurp(p));
    for (std::string line; std::getline(is, line);) {
        std::vector<std::string> cells;
        std::istringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
        rows.push_back(cells);
    }
    return rows;
}

// Desk-scale protocol run, shared by the structural MDS check.
struct ProtocolRun {
    bool done = false;
    Outcome outcome;
    bool mds_monotone = false;
    std::string mds_detail;
};

ProtocolRun& protocol() {
    static ProtocolRun run;
    if (run.done) return run;
    run.done = true;
    const fs::path root = fs::temp_directory_path() / "mesad_acceptance";
    fs::remove_all(root);
    harness::RunConfig cfg;
    cfg.out = root / "a";
    std::ostringstream log;
    const auto t0 = std::chrono::steady_clock::now();
    const int code_a = harness::cmd_run(cfg, log);
    const double secs = seconds_since(t0);
    cfg.out = root / "b";
    cfg.workers = 2;
    const int code_b = harness::cmd_run(cfg, log);

    std::vector<std::string> problems;
    if (code_a != 0 || code_b != 0) problems.push_back("exit codes " + std::to_string(code_a) + "/" + std::to_string(code_b));
    std::map<std::string, std::string> files_a, files_b;
    for (const auto& e : fs::recursive_directory_iterator(root / "a"))
        if (e.is_regular_file()) files_a[fs::relative(e.path(), root / "a").string()] = slurp(e.path());
    for (const auto& e : fs::recursive_directory_iterator(root / "b"))
        if (e.is_regular_file()) files_b[fs::relative(e.path(), root / "b").string()] = slurp(e.path());
    if (files_a != files_b) problems.push_back("reruns differ");

    const fs::path a = root / "a";
    for (const char* name : {"summary_auroc.csv", "summary_aupr.csv"}) {
        const auto rows = csv_rows(a / name);
        std::size_t series_rows = 0;
        for (const auto& r : rows) {
            if (r.size() != 10) continue;
            if (r[1] == "series") ++series_rows;
            if (r[1] == "series" && (r[0] == "1NN" || r[0] == "iDTW" || r[0] == "dDTW") && r[4] != "0.0000")
                problems.push_back(std::string(name) + ": " + r[0] + " std " + r[4]);
            if (r[0] != "model" && r[2] != "35") problems.push_back(std::string(name) + ": " + r[0] + " has " + r[2] + " trials");
        }
        if (series_rows != 5) problems.push_back(std::string(name) + ": " + std::to_string(series_rows) + " models");
    }
    for (const char* name : {"ttest_auroc.csv", "ttest_aupr.csv"}) {
        const auto rows = csv_rows(a / name);
        if (rows.size() != 5) problems.push_back(std::string(name) + ": " + std::to_string(rows.size()) + " lines");
    }
    run.mds_monotone = true;
    for (const char* name : {"mds_surrogate.csv", "mds_shapley.csv"}) {
        const auto rows = csv_rows(a / name);
        if (rows.size() != 4) {
            problems.push_back(std::string(name) + ": " + std::to_string(rows.size()) + " lines");
            run.mds_monotone = false;
            continue;
        }
        double prev = -1.0;
        run.mds_detail += std::string(run.mds_detail.empty() ? "" : "; ") + name + ":";
        for (std::size_t i = 1; i < rows.size(); ++i) {
            if (rows[i].size() < 3 || rows[i][2] == "NA") {
                run.mds_monotone = false;
                run.mds_detail += " NA";
                continue;
            }
            const double v = std::stod(rows[i][2]);
            run.mds_detail += " " + rows[i][0] + "=" + rows[i][2];
            if (v < prev) run.mds_monotone = false;
            prev = v;
        }
    }
    if (secs > 600.0) problems.push_back("first run took " + fmt("%.0f", secs) + " s");

    std::string detail = fmt("%.0f", secs) + " s per run, " + std::to_string(files_a.size()) + " files";
    for (const auto& p : problems) detail += "; " + p;
    run.outcome = {problems.empty(), detail};
    return run;
}

Outcome mds_full() {
    const auto unit = mds_oracle();
    auto& run = protocol();
    return {unit.pass && run.mds_monotone, unit.detail + "; desk run " + run.mds_detail};
}

Outcome protocol_reproduction() { return protocol().outcome; }

Outcome mes_roundtrip() {
    std::mt19937_64 rng(111);
    std::normal_distribution<double> g;
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t k = 1 + rng() % 5, m = 1 + rng() % 24, n = 2 * m + 10 + rng() % 200;
        Matrix v(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
        for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = 20.0 * g(rng);
        const auto x = MultiSeries::with_default_names(v);
        const auto dec = mes::preprocess(x, mes::fit(x, m));
        worst = std::max(worst, (mes::postprocess(dec.residuals, dec).values() - v).cwiseAbs().maxCoeff());
    }
    mes::ChannelState st;
    st.level = 10.0;
    st.trend = 1.0;
    st.seasonal = {0.0};
    st.params = {0.5, 0.5, 0.0};
    const double f = mes::update(st, 1, 0, 12.0);
    const bool holt = f == 11.0 && st.level == 11.5 && st.trend == 1.25;
    return {worst <= 1e-12 && holt, "max roundtrip error " + fmt("%.3g", worst) + ", Holt step " +
                                        (holt ? "l=11.5 b=1.25" : "mismatch")};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"DTW oracle equivalence", dtw_oracle},
        {"dimension-1 collapse", dimension_one},
        {"forecaster gradient check", gradient},
        {"interval calibration", coverage},
        {"detector spike benchmark", spike_benchmark},
        {"Shapley efficiency", shapley_efficiency},
        {"MDS correctness", mds_full},
        {"auROC/auPR oracle equivalence", metric_oracles},
        {"t-test reference", ttest_reference},
        {"protocol reproduction", protocol_reproduction},
        {"MES roundtrip", mes_roundtrip},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
