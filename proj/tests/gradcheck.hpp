// Central finite differences against the analytic LSTM gradient.
#pragma once

#include "mesad/forecaster.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace gradcheck {

struct Result {
    double max_relative = 0.0;
    std::size_t parameters = 0;
};

// Relative error |a - n| / max(|a|, |n|, floor); the floor keeps parameters
// with an (almost) vanishing gradient from dividing rounding noise by zero.
inline Result run(std::size_t k, std::size_t h, std::size_t w, std::size_t batch, std::uint64_t seed,
                  double step = 1e-5, double floor = 1e-7) {
    mesad::forecast::RecurrentModel model(k, h, w, seed);
    std::mt19937_64 rng(seed + 1);
    std::normal_distribution<double> g;
    std::vector<mesad::Matrix> inputs(w, mesad::Matrix(k, batch));
    for (auto& m : inputs)
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    mesad::Matrix targets(k, batch);
    for (Eigen::Index i = 0; i < targets.size(); ++i) targets.data()[i] = g(rng);

    mesad::forecast::LstmWeights grad;
    model.loss_and_gradient(inputs, targets, &grad);
    std::vector<double> analytic;
    grad.for_each([&](double& v) { analytic.push_back(v); });

    Result r;
    r.parameters = analytic.size();
    for (std::size_t p = 0; p < analytic.size(); ++p) {
        auto nudge = [&](double delta) {
            std::size_t i = 0;
            model.weights().for_each([&](double& v) {
                if (i++ == p) v += delta;
            });
        };
        nudge(step);
        const double up = model.loss_and_gradient(inputs, targets, nullptr);
        nudge(-2.0 * step);
        const double down = model.loss_and_gradient(inputs, targets, nullptr);
        nudge(step);
        const double numeric = (up - down) / (2.0 * step);
        const double denom = std::max({std::abs(analytic[p]), std::abs(numeric), floor});
        r.max_relative = std::max(r.max_relative, std::abs(analytic[p] - numeric) / denom);
    }
    return r;
}

}  // namespace gradcheck
