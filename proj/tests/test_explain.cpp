#include "mesad/explain.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace mesad;
using namespace mesad::explain;

namespace {

Matrix random_window(Eigen::Index rows, Eigen::Index k, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Matrix w(rows, k);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = g(rng);
    return w;
}

// A smooth nonlinear score with pairwise interactions over the last row.
struct Polynomial {
    Vector lin;
    Matrix quad;
    double operator()(const Matrix& w) const {
        const Vector x = w.row(w.rows() - 1).transpose();
        return lin.dot(x) + x.dot(quad * x) + 0.3 * std::pow(x(0), 3);
    }
};

Polynomial random_polynomial(Eigen::Index k, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Polynomial p{Vector(k), Matrix(k, k)};
    for (Eigen::Index i = 0; i < k; ++i) p.lin(i) = g(rng);
    for (Eigen::Index i = 0; i < p.quad.size(); ++i) p.quad.data()[i] = 0.5 * g(rng);
    return p;
}

std::vector<double> oracle_phi(const ScoreFn& f, const Matrix& w, const Vector& base) {
    const auto k = static_cast<std::size_t>(w.cols());
    return oracle::shapley_by_orderings(
        [&](unsigned mask) {
            Matrix m = w;
            for (std::size_t c = 0; c < k; ++c)
                if (!(mask & (1u << c))) m.col(static_cast<Eigen::Index>(c)).setConstant(base(static_cast<Eigen::Index>(c)));
            return f(m);
        },
        k);
}

}  // namespace

TEST_CASE("ranking breaks ties by channel index") {
    const std::vector<double> imp = {0.2, 0.9, 0.2, 0.5};
    CHECK(rank_channels(imp) == std::vector<std::size_t>{3, 1, 4, 2});
    const std::vector<double> flat(5, 0.0);
    CHECK(rank_channels(flat) == std::vector<std::size_t>{1, 2, 3, 4, 5});
}

TEST_CASE("surrogate recovers a single linear driver") {
    std::mt19937_64 rng(4);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Matrix w = random_window(8, 6, rng);
        ExplainerConfig cfg;
        cfg.baseline = Vector::Zero(6);
        const ScoreFn f = [](const Matrix& m) { return 5.0 * m(m.rows() - 1, 3); };
        const auto a = surrogate_explain(f, w, cfg, seed);
        CHECK(a.rank[3] == 1);
        CHECK(a.importance[3] == doctest::Approx(5.0 * std::abs(w(7, 3))).epsilon(1e-3));
    }
}

TEST_CASE("constant score gives zero coefficients and index-order ranks") {
    std::mt19937_64 rng(5);
    const Matrix w = random_window(5, 4, rng);
    const ScoreFn f = [](const Matrix&) { return 2.5; };
    const auto a = surrogate_explain(f, w, ExplainerConfig{}, 1);
    for (double v : a.importance) CHECK(v <= 1e-8);
    CHECK(a.rank == std::vector<std::size_t>{1, 2, 3, 4});
    const auto s = shapley_explain(f, w, ExplainerConfig{}, 1);
    for (double v : s.importance) CHECK(v == 0.0);
    CHECK(s.rank == std::vector<std::size_t>{1, 2, 3, 4});
}

TEST_CASE("symmetric channels receive equal importance") {
    std::mt19937_64 rng(6);
    Matrix w = random_window(6, 4, rng);
    w.col(2) = w.col(0);
    const ScoreFn f = [](const Matrix& m) {
        const auto r = m.rows() - 1;
        return m(r, 0) * m(r, 0) + m(r, 2) * m(r, 2) + 0.5 * m(r, 1);
    };
    ExplainerConfig cfg;
    cfg.baseline = Vector::Zero(4);
    const auto a = surrogate_explain(f, w, cfg, 3);
    CHECK(std::abs(a.importance[0] - a.importance[2]) <= 0.05 * std::max(a.importance[0], a.importance[2]));
    const auto phi = shapley_values(f, w, cfg, 3);
    CHECK(std::abs(phi[0] - phi[2]) <= 1e-12);
}

TEST_CASE("dummy channels get nothing") {
    std::mt19937_64 rng(7);
    const Matrix w = random_window(5, 5, rng);
    const ScoreFn f = [](const Matrix& m) { return 5.0 * m(4, 0) - 3.0 * m(4, 1) * m(4, 3); };
    ExplainerConfig cfg;
    cfg.n_samples = 10000;
    const auto phi = shapley_values(f, w, cfg, 1);
    CHECK(phi[2] == 0.0);
    CHECK(phi[4] == 0.0);
    const auto a = surrogate_explain(f, w, cfg, 1);
    CHECK(a.importance[2] <= 1e-2);
    CHECK(a.importance[4] <= 1e-2);
}

TEST_CASE("exact Shapley of an additive score") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    for (int rep = 0; rep < 20; ++rep) {
        const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng() % 8);
        const Matrix w = random_window(4, k, rng);
        Vector c(k), base(k);
        for (Eigen::Index i = 0; i < k; ++i) {
            c(i) = g(rng);
            base(i) = g(rng);
        }
        const ScoreFn f = [&](const Matrix& m) { return c.dot(m.row(3).transpose()); };
        ExplainerConfig cfg;
        cfg.shapley_mode = ShapleyMode::Exact;
        cfg.baseline = base;
        const auto phi = shapley_values(f, w, cfg, 0);
        for (Eigen::Index i = 0; i < k; ++i)
            CHECK(std::abs(phi[static_cast<std::size_t>(i)] - c(i) * (w(3, i) - base(i))) <= 1e-12);
    }
}

TEST_CASE("exact Shapley matches the ordering oracle and is efficient") {
    std::mt19937_64 rng(9);
    for (int rep = 0; rep < 30; ++rep) {
        const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng() % 7);
        const Matrix w = random_window(3, k, rng);
        const auto poly = random_polynomial(k, rng);
        const ScoreFn f = poly;
        ExplainerConfig cfg;
        cfg.shapley_mode = ShapleyMode::Exact;
        const Vector base = w.colwise().mean().transpose();
        const auto phi = shapley_values(f, w, cfg, 0);
        const auto expect = oracle_phi(f, w, base);
        double sum = 0.0;
        for (std::size_t i = 0; i < phi.size(); ++i) {
            CHECK(std::abs(phi[i] - expect[i]) <= 1e-10);
            sum += phi[i];
        }
        Matrix all_base = w;
        for (Eigen::Index c = 0; c < k; ++c) all_base.col(c).setConstant(base(c));
        CHECK(std::abs(sum - (f(w) - f(all_base))) <= 1e-9);
    }
}

TEST_CASE("permutation sampling approaches the exact values") {
    std::mt19937_64 rng(10);
    const Matrix w = random_window(3, 8, rng);
    const ScoreFn f = random_polynomial(8, rng);
    ExplainerConfig cfg;
    cfg.shapley_mode = ShapleyMode::Exact;
    const auto exact = shapley_values(f, w, cfg, 0);
    cfg.shapley_mode = ShapleyMode::Sampling;
    cfg.n_permutations = 20000;
    const auto approx = shapley_values(f, w, cfg, 5);
    const auto [lo, hi] = std::minmax_element(exact.begin(), exact.end());
    for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(approx[i] - exact[i]) <= 0.05 * (*hi - *lo));
    // Sampling is reproducible for a fixed seed.
    CHECK(shapley_values(f, w, cfg, 5) == approx);
}

TEST_CASE("parallel coalition table equals the serial one") {
    std::mt19937_64 rng(11);
    const Matrix w = random_window(6, 10, rng);
    const ScoreFn f = random_polynomial(10, rng);
    const Vector base = Vector::Zero(10);
    CHECK(coalition_values(f, w, base) == coalition_values_serial(f, w, base));
}

TEST_CASE("modulation endpoints") {
    std::mt19937_64 rng(12);
    const Matrix w = random_window(4, 3, rng);
    const Vector base = Vector::Constant(3, 0.7);
    const std::vector<double> ones(3, 1.0), zeros(3, 0.0);
    CHECK((modulate(w, base, ones) - w).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((modulate(w, base, zeros).array() == 0.7).all());
}

TEST_CASE("explainer errors") {
    std::mt19937_64 rng(13);
    const Matrix w = random_window(4, 3, rng);
    const ScoreFn f = [](const Matrix& m) { return m.sum(); };
    ExplainerConfig cfg;
    cfg.n_samples = 2;
    CHECK_THROWS_AS(surrogate_explain(f, w, cfg, 0), ExplainError);
    cfg = ExplainerConfig{};
    cfg.baseline = Vector::Zero(2);
    CHECK_THROWS_AS(shapley_values(f, w, cfg, 0), ExplainError);
    const ScoreFn bad = [](const Matrix&) -> double { throw std::runtime_error("model failed"); };
    CHECK_THROWS_AS(shapley_values(bad, w, ExplainerConfig{}, 0), ExplainError);
    CHECK_THROWS_AS(shapley_from_coalitions(std::vector<double>(5, 0.0), 2), ExplainError);
}
