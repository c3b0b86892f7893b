// Parallel kernels against their serial references: wall time and agreement.
#include "mesad/baselines.hpp"
#include "mesad/explain.hpp"

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>

using namespace mesad;

namespace {

double time_it(const std::function<void()>& fn, int reps) {
    fn();  // warm-up
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
}

void row(const char* name, double serial, double parallel, double max_diff) {
    std::printf("%-22s serial %9.4f s  parallel %9.4f s  speedup %5.2fx  max|diff| %.3g\n", name, serial, parallel,
                serial / parallel, max_diff);
}

}  // namespace

int main(int argc, char** argv) {
    const int reps = argc > 1 ? std::atoi(argv[1]) : 3;
    std::printf("threads: %d\n", omp_get_max_threads());

    SynthConfig sc = SynthConfig::desk_profile();
    sc.series = 32;
    const auto ds = synth_generate(sc, 1);
    std::vector<MultiSeries> xs;
    for (const auto& s : ds.series) xs.push_back(s.data);
    const std::span<const MultiSeries> q(xs.data(), 8), r(xs.data() + 8, xs.size() - 8);

    for (auto m : {baselines::Metric::IDTW, baselines::Metric::DDTW}) {
        Matrix a, b;
        const double ts = time_it([&] { a = baselines::pairwise_distances_serial(q, r, m); }, reps);
        const double tp = time_it([&] { b = baselines::pairwise_distances(q, r, m); }, reps);
        const std::string name = "pairwise " + std::string(baselines::to_string(m));
        row(name.c_str(), ts, tp, (a - b).cwiseAbs().maxCoeff());
    }

    {
        const auto rocket = baselines::MiniRocket::fit(xs, {}, 7);
        Matrix a, b;
        const double ts = time_it([&] { a = rocket.transform_batch_serial(xs); }, reps);
        const double tp = time_it([&] { b = rocket.transform_batch(xs); }, reps);
        row("minirocket transform", ts, tp, (a - b).cwiseAbs().maxCoeff());
    }

    {
        const Matrix window = xs.front().values().topRows(49);
        const Vector base = window.colwise().mean().transpose();
        const explain::ScoreFn score = [](const Matrix& w) {
            double acc = 0.0;
            for (int rep = 0; rep < 20; ++rep) acc += (w.array() * w.array()).sum() / (1.0 + rep);
            return acc;
        };
        std::vector<double> a, b;
        const double ts = time_it([&] { a = explain::coalition_values_serial(score, window, base); }, reps);
        const double tp = time_it([&] { b = explain::coalition_values(score, window, base); }, reps);
        double diff = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
        row("coalition table", ts, tp, diff);
    }
    return 0;
}
