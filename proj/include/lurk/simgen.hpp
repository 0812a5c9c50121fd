#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "lurk/common.hpp"
#include "lurk/dataset.hpp"
#include "lurk/effects.hpp"
#include "lurk/estimator.hpp"

namespace lurk {

// 1-D test function: f(x) = sin(30(x-0.9)^4) cos(2(x-0.9)) + (x-0.9)/2.
inline double xiong_f(double x) {
    const double u = x - 0.9;
    return std::sin(30.0 * u * u * u * u) * std::cos(2.0 * u) + u / 2.0;
}

// What the generators know and the estimator is asked to rediscover.
struct GroundTruth {
    std::string suite;               // "toy" or "degradation"
    Vector f_grid_x;                 // raw input grid
    Vector f_grid_value;             // true input-output curve on the grid
    double trend_slope = 0.0;
    Vector shocks;                   // e by time position (index 0 is e_1 = 0)
    Vector delta;                    // cumulative shocks, time order
    std::vector<Index> shock_positions;  // 1-based time positions
    std::vector<Index> tune_up_shots;    // 1-based shot indices (degradation)
    Vector intended_energy;          // per shot (degradation)
    Vector true_energy;              // per shot after degradation
};

// ---------------------------------------------------------------------------
// Toy study: Xiong curve + linear time trend + five persistent shocks.
// ---------------------------------------------------------------------------

struct ToySpec {
    int levels = 50;
    int replicates = 2;
    bool randomize = true;
    double noise_sd = 0.01;
    double shock_magnitude = 0.5;
    std::vector<Index> shock_indices = {10, 30, 50, 70, 90};  // 1-based time positions
    double trend_slope = 2.0;
    std::uint64_t seed = 0;

    Index n() const { return static_cast<Index>(levels) * replicates; }

    void validate() const {
        require(levels >= 1 && replicates >= 1, "ToySpec: levels/replicates must be positive");
        require(noise_sd >= 0.0, "ToySpec: noise_sd must be nonnegative");
        for (Index k : shock_indices)
            require(k >= 2 && k <= n(), "ToySpec: shock indices must lie in [2, n]");
    }

    // Default shock fractions rescaled to an arbitrary run length.
    static std::vector<Index> scaled_shock_indices(Index n) {
        std::vector<Index> out;
        for (double frac : {0.1, 0.3, 0.5, 0.7, 0.9})
            out.push_back(std::max<Index>(2, static_cast<Index>(std::llround(frac * n))));
        return out;
    }
};

// x levels (i-.5)/levels each replicated, order shuffled (or sorted when
// randomization is off), t = run order, and
//   y_i = f(x_i) + slope*(t_i - 0.5) + sum_{k<=i} e_k + eps_i.
// Draw order from the seed: shuffle, then shock signs, then noise.
inline std::pair<Dataset, GroundTruth> gen_toy(const ToySpec& spec) {
    spec.validate();
    const Index n = spec.n();
    std::mt19937_64 rng(spec.seed);

    std::vector<double> xs;
    xs.reserve(n);
    for (int i = 1; i <= spec.levels; ++i)
        for (int r = 0; r < spec.replicates; ++r)
            xs.push_back((i - 0.5) / spec.levels);
    if (spec.randomize)
        std::shuffle(xs.begin(), xs.end(), rng);
    // else: already ascending

    GroundTruth truth;
    truth.suite = "toy";
    truth.trend_slope = spec.trend_slope;
    truth.shock_positions = spec.shock_indices;
    truth.shocks = Vector::Zero(n);
    std::uniform_int_distribution<int> coin(0, 1);
    for (Index k : spec.shock_indices)
        truth.shocks[k - 1] = (coin(rng) == 0 ? 1.0 : -1.0) * spec.shock_magnitude;
    truth.delta = Vector(n);
    double cum = 0.0;
    for (Index i = 0; i < n; ++i) {
        cum += truth.shocks[i];
        truth.delta[i] = cum;
    }

    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix X(n, 1);
    Vector t(n), y(n);
    for (Index i = 0; i < n; ++i) {
        X(i, 0) = xs[i];
        t[i] = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
        y[i] = xiong_f(xs[i]) + spec.trend_slope * (t[i] - 0.5) + truth.delta[i] +
               spec.noise_sd * gauss(rng);
    }

    truth.f_grid_x = Vector::LinSpaced(201, 0.0, 1.0);
    truth.f_grid_value = truth.f_grid_x.unaryExpr([](double v) { return xiong_f(v); });
    return {Dataset(std::move(X), std::move(t), std::move(y)), std::move(truth)};
}

// ---------------------------------------------------------------------------
// Degradation / tune-up study with a synthetic yield stand-in.
// ---------------------------------------------------------------------------

// E_true(s) = {1 - 0.5 (s/S)^2} * E_intended, s shots since the last tune-up.
inline double degradation_factor(Index s, Index S) {
    require(S >= 1, "degradation_factor: S must be positive");
    require(s >= 0 && s < S, "degradation_factor: s must lie in [0, S); tune-up resets s = 0");
    const double r = static_cast<double>(s) / static_cast<double>(S);
    return 1.0 - 0.5 * r * r;
}

struct DegradationSpec {
    Index shots_per_tune_up = 50;  // S
    int levels = 50;
    int replicates = 2;
    double energy_lo = 100.0, energy_hi = 2500.0;  // joules
    // Maps true energy (J) to yield. The default below is an invented smooth
    // saturating stand-in for the out-of-scope physics code.
    std::function<double(double)> yield_fn;
    bool log_scale = true;
    bool degradation_enabled = true;
    std::uint64_t seed = 0;

    Index n() const { return static_cast<Index>(levels) * replicates; }

    double default_yield(double energy) const {
        const double e01 = (energy - energy_lo) / (energy_hi - energy_lo);
        return std::exp(16.0 + 6.0 * (1.0 - std::exp(-3.0 * e01)));
    }

    double yield(double energy) const {
        return yield_fn ? yield_fn(energy) : default_yield(energy);
    }

    double response(double energy) const {
        const double v = yield(energy);
        if (!log_scale) return v;
        require(v > 0.0, "DegradationSpec: yield must be positive for the log scale");
        return std::log(v);
    }

    void validate() const {
        require(shots_per_tune_up >= 1, "DegradationSpec: S must be positive");
        require(levels >= 1 && replicates >= 1, "DegradationSpec: n must be positive");
        require(energy_lo < energy_hi, "DegradationSpec: energy range unordered");
    }
};

// Intended energies on a linear grid, replicated, fully shuffled; the shot
// counter s resets every S shots (first tune-up right after shot S). x is the
// scaled intended energy, t is run order, responses are noiseless.
inline std::pair<Dataset, GroundTruth> gen_degradation_study(const DegradationSpec& spec) {
    spec.validate();
    const Index n = spec.n();
    std::mt19937_64 rng(spec.seed);

    std::vector<double> energies;
    energies.reserve(n);
    for (int i = 0; i < spec.levels; ++i)
        for (int r = 0; r < spec.replicates; ++r)
            energies.push_back(spec.levels == 1
                                   ? spec.energy_lo
                                   : spec.energy_lo + (spec.energy_hi - spec.energy_lo) * i /
                                                          (spec.levels - 1));
    std::shuffle(energies.begin(), energies.end(), rng);

    GroundTruth truth;
    truth.suite = "degradation";
    truth.intended_energy = Vector(n);
    truth.true_energy = Vector(n);

    Matrix X(n, 1);
    Vector t(n), y(n);
    for (Index i = 0; i < n; ++i) {
        const Index s = i % spec.shots_per_tune_up;
        if (s == 0 && i > 0) truth.tune_up_shots.push_back(i + 1);
        const double factor = spec.degradation_enabled
                                  ? degradation_factor(s, spec.shots_per_tune_up)
                                  : 1.0;
        truth.intended_energy[i] = energies[i];
        truth.true_energy[i] = factor * energies[i];
        X(i, 0) = energies[i];
        t[i] = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
        y[i] = spec.response(truth.true_energy[i]);
    }

    truth.f_grid_x = Vector::LinSpaced(201, spec.energy_lo, spec.energy_hi);
    truth.f_grid_value =
        truth.f_grid_x.unaryExpr([&](double e) { return spec.response(e); });
    return {Dataset(std::move(X), std::move(t), std::move(y)), std::move(truth)};
}

// Piecewise-linear interpolant over a tabulated (energy, yield) curve, for
// user-supplied stand-ins.
inline std::function<double(double)> tabulated_yield_fn(std::vector<std::pair<double, double>> table) {
    require(table.size() >= 2, "tabulated_yield_fn: need at least two rows");
    std::sort(table.begin(), table.end());
    return [table = std::move(table)](double e) {
        if (e <= table.front().first) return table.front().second;
        if (e >= table.back().first) return table.back().second;
        auto hi = std::upper_bound(table.begin(), table.end(), std::make_pair(e, 0.0),
                                   [](const auto& a, const auto& b) { return a.first < b.first; });
        auto lo = hi - 1;
        const double w = (e - lo->first) / (hi->first - lo->first);
        return lo->second + w * (hi->second - lo->second);
    };
}

// ---------------------------------------------------------------------------
// Scores and benchmark suites.
// ---------------------------------------------------------------------------

struct ToyScores {
    double mse_sudden = 0.0;
    double mse_gradual = 0.0;
    double mse_prediction = 0.0;
};

// Sudden: delta vs truth over the shot sequence. Gradual: g(t) vs the true
// trend on a 200-point grid, both mean-centered over the grid (g is
// identified only up to the constant absorbed by mu). Prediction: the
// t-marginalized input-output curve vs the true f on a 200-point grid.
inline ToyScores score_toy_fit(const FitResult& fit, const GroundTruth& truth) {
    ToyScores s;
    s.mse_sudden = (fit.delta - truth.delta).squaredNorm() / truth.delta.size();

    const Vector t_grid = Vector::LinSpaced(200, 0.0, 1.0);
    Vector g = gradual_effect(fit, t_grid);
    Vector g_true(t_grid.size());
    for (Index j = 0; j < t_grid.size(); ++j) {
        const double t_raw = fit.data.raw_t(t_grid[j]);
        g_true[j] = truth.trend_slope * (t_raw - 0.5);
    }
    g.array() -= g.mean();
    g_true.array() -= g_true.mean();
    s.mse_gradual = (g - g_true).squaredNorm() / t_grid.size();

    Matrix x_grid(200, 1);
    x_grid.col(0) = Vector::LinSpaced(200, 0.0, 1.0);
    const Vector fhat = prediction_marginal_t(fit, x_grid);
    Vector f_true(x_grid.rows());
    for (Index j = 0; j < x_grid.rows(); ++j)
        f_true[j] = xiong_f(fit.data.raw_x(0, x_grid(j, 0)));
    s.mse_prediction = (fhat - f_true).squaredNorm() / x_grid.rows();
    return s;
}

enum class BenchmarkSuite { replication, randomization };

struct BenchmarkRow {
    std::string config;
    int repeat = 0;
    std::uint64_t seed = 0;
    bool ok = false;        // fit completed (converged or best iterate)
    bool converged = false;
    double mse_sudden = std::numeric_limits<double>::quiet_NaN();
    double mse_gradual = std::numeric_limits<double>::quiet_NaN();
    double mse_prediction = std::numeric_limits<double>::quiet_NaN();
    double seconds = 0.0;
};

struct BenchmarkTable {
    BenchmarkSuite suite = BenchmarkSuite::replication;
    std::vector<BenchmarkRow> rows;
    std::vector<std::string> configs;

    bool has_failures() const {
        for (const auto& r : rows)
            if (!r.ok) return true;
        return false;
    }
};

inline double median_of(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const size_t m = v.size() / 2;
    return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline double benchmark_median(const BenchmarkTable& table, const std::string& config,
                               double BenchmarkRow::*metric) {
    std::vector<double> vals;
    for (const auto& r : table.rows)
        if (r.ok && r.config == config && std::isfinite(r.*metric)) vals.push_back(r.*metric);
    return median_of(vals);
}

namespace detail {

inline void parallel_run(std::vector<std::function<void()>>& jobs, int threads) {
    if (threads <= 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<int>(threads, static_cast<int>(jobs.size()));
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t j = next.fetch_add(1); j < jobs.size(); j = next.fetch_add(1)) jobs[j]();
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < threads; ++w) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
}

}  // namespace detail

// Replication suite: replicates in {1,2,5}, randomized order. Randomization
// suite: sorted vs randomized order at two replicates. Repeats are paired by
// seed across configurations; fits run concurrently.
inline BenchmarkTable benchmark(BenchmarkSuite suite, int repeats, std::uint64_t base_seed,
                                const FitConfig& base_config = {}, int threads = 0) {
    require(repeats >= 1, "benchmark: repeats must be positive");
    BenchmarkTable table;
    table.suite = suite;

    struct Config {
        std::string label;
        int replicates;
        bool randomize;
    };
    std::vector<Config> configs;
    if (suite == BenchmarkSuite::replication)
        configs = {{"replicates=1", 1, true}, {"replicates=2", 2, true}, {"replicates=5", 5, true}};
    else
        configs = {{"sorted", 2, false}, {"randomized", 2, true}};
    for (const auto& c : configs) table.configs.push_back(c.label);

    table.rows.resize(configs.size() * repeats);
    std::vector<std::function<void()>> jobs;
    for (size_t c = 0; c < configs.size(); ++c) {
        for (int r = 0; r < repeats; ++r) {
            const size_t slot = c * repeats + r;
            jobs.push_back([&, c, r, slot] {
                BenchmarkRow& row = table.rows[slot];
                row.config = configs[c].label;
                row.repeat = r;
                row.seed = base_seed + static_cast<std::uint64_t>(r);
                ToySpec spec;
                spec.replicates = configs[c].replicates;
                spec.randomize = configs[c].randomize;
                spec.seed = row.seed;
                spec.shock_indices = ToySpec::scaled_shock_indices(spec.n());
                FitConfig fc = base_config;
                fc.seed = row.seed;
                const auto start = std::chrono::steady_clock::now();
                try {
                    auto [data, truth] = gen_toy(spec);
                    FitResult fit_res = fit(data, fc);
                    const ToyScores s = score_toy_fit(fit_res, truth);
                    row.mse_sudden = s.mse_sudden;
                    row.mse_gradual = s.mse_gradual;
                    row.mse_prediction = s.mse_prediction;
                    row.converged = fit_res.converged;
                    row.ok = true;
                } catch (const std::exception&) {
                    row.ok = false;  // missing cells, not a suite abort
                }
                row.seconds = std::chrono::duration<double>(
                                  std::chrono::steady_clock::now() - start)
                                  .count();
            });
        }
    }
    detail::parallel_run(jobs, threads);
    return table;
}

}  // namespace lurk
