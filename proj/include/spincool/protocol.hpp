/*
   Copyright 2026 The spincool Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

// Gain sweeps, greedy multi-round gain optimization and the feedback-noise
// calibration fit.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "spincool/analysis.hpp"
#include "spincool/core.hpp"
#include "spincool/engine_mc.hpp"
#include "spincool/engine_moments.hpp"
#include "spincool/schedule.hpp"

namespace spincool {

enum class EngineKind { moments, mc };

struct EngineOptions {
    EngineKind kind = EngineKind::moments;
    std::size_t n_trials = 10000;
    std::uint64_t master_seed = 1;
    unsigned threads = 0;
};

/// Delta^2 F at the readout point with its standard error (0 for moments).
inline Estimate evaluate_total_variance(const ExperimentParams &p, const Schedule &schedule,
                                        const EngineOptions &engine) {
    if (engine.kind == EngineKind::moments)
        return {predict_total_variance(p, schedule), 0.0};
    const auto s = run_ensemble(p, schedule, engine.n_trials, engine.master_seed, engine.threads);
    return {s.total_variance, s.total_variance_se};
}

/// Inclusive grid g_min, g_min + step, ..., not exceeding g_max (+1e-9 slack).
inline std::vector<double> gain_grid(double g_min, double g_max, double step) {
    if (!(step > 0.0))
        throw std::invalid_argument("gain_grid: step must be positive");
    if (g_min > g_max)
        throw std::invalid_argument("gain_grid: g_min must not exceed g_max");
    std::vector<double> out;
    for (std::size_t i = 0;; ++i) {
        const double g = g_min + static_cast<double>(i) * step;
        if (g > g_max + 1e-9)
            break;
        out.push_back(g);
    }
    return out;
}

using ScheduleBuilder = std::function<Schedule(double)>;

struct SweepPoint {
    double g = 0.0;
    double total_variance = 0.0;
    double std_err = 0.0;
};

inline std::vector<SweepPoint> sweep_gain(const ExperimentParams &p, const ScheduleBuilder &builder,
                                          std::span<const double> grid, const EngineOptions &engine = {}) {
    if (grid.empty())
        throw std::invalid_argument("sweep_gain: empty gain grid");
    std::vector<SweepPoint> out;
    out.reserve(grid.size());
    for (double g : grid) {
        const auto e = evaluate_total_variance(p, builder(g), engine);
        out.push_back({g, e.value, e.se});
    }
    return out;
}

inline std::size_t sweep_argmin(std::span<const SweepPoint> sweep) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < sweep.size(); ++i)
        if (sweep[i].total_variance < sweep[best].total_variance)
            best = i;
    return best;
}

struct OptimizerOptions {
    double grid_min = -2.0;
    double grid_max = 0.0;
    double grid_step = 0.125;
    double tolerance = 0.01;  // final bracket width
};

struct LineMinimum {
    double g = 0.0;
    double value = 0.0;
    bool bracketed = true;  // false: grid minimum on the boundary or grid not unimodal
};

/// Coarse grid, then golden-section search inside the grid neighbours of the
/// grid minimum.  Returns the best point evaluated overall.
inline LineMinimum minimize_gain(const std::function<double(double)> &f, const OptimizerOptions &opt = {}) {
    const auto grid = gain_grid(opt.grid_min, opt.grid_max, opt.grid_step);
    std::vector<double> vals(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        vals[i] = f(grid[i]);

    std::size_t best = 0;
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (vals[i] < vals[best])
            best = i;
    LineMinimum out{grid[best], vals[best], true};

    // Unimodal: non-increasing up to the minimum, non-decreasing after it.
    for (std::size_t i = 1; i <= best; ++i)
        if (vals[i] > vals[i - 1])
            out.bracketed = false;
    for (std::size_t i = best + 1; i < grid.size(); ++i)
        if (vals[i] < vals[i - 1])
            out.bracketed = false;
    if (best == 0 || best + 1 == grid.size())
        out.bracketed = false;
    if (!out.bracketed)
        return out;

    constexpr double inv_phi = 0.6180339887498949;
    double a = grid[best - 1], b = grid[best + 1];
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > opt.tolerance) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    const double mid = 0.5 * (a + b);
    const double fm = f(mid);
    for (auto [g, v] : {std::pair{c, fc}, std::pair{d, fd}, std::pair{mid, fm}})
        if (v < out.value)
            out = {g, v, true};
    return out;
}

struct OptimizationResult {
    std::vector<double> gains;
    std::vector<double> variances;  // input level, then after each round
    std::vector<bool> bracketed;
};

/// Greedy round-by-round optimization: round r minimizes Delta^2 F at the
/// readout point of measure -> rounds 1..r -> measure with rounds 1..r-1 held
/// at their optimized gains.
inline OptimizationResult optimize_gains(const ExperimentParams &p, std::size_t n_rounds,
                                         const EngineOptions &engine = {}, const OptimizerOptions &opt = {}) {
    if (n_rounds < 1)
        throw std::invalid_argument("optimize_gains: need at least one round");
    OptimizationResult out;
    out.variances.push_back(total_variance(SpinMoments{p.initial_mean, p.initial_covariance}));
    for (std::size_t r = 0; r < n_rounds; ++r) {
        std::vector<double> gains = out.gains;
        gains.push_back(0.0);
        const auto f = [&](double g) {
            gains.back() = g;
            return evaluate_total_variance(p, characterization_schedule(gains), engine).value;
        };
        const auto m = minimize_gain(f, opt);
        out.gains.push_back(m.g);
        out.variances.push_back(m.value);
        out.bracketed.push_back(m.bracketed);
    }
    return out;
}

/// Reductions the calibration aims for, in dB relative to the input level.
struct CalibrationTargets {
    double one_round_db = 10.0 * std::log10(6.7e8 / 9.7e7);  // optimized single round
    double two_round_db = 10.0 * std::log10(6.7e8 / 4.2e7);  // fixed first round, optimized second
    double first_round_gain = -0.75;
    double coeff_min = 100.0;
    double coeff_max = 2.0e4;
    double log_tolerance = 1e-3;
};

struct CalibrationResult {
    double feedback_noise_coeff = 0.0;
    double one_round_db = 0.0;
    double two_round_db = 0.0;
    double objective = 0.0;
};

/// Least-squares fit of the feedback-noise coefficient (alpha0 held at its
/// configured value) to the two dB targets, using the moment engine.
inline CalibrationResult calibrate_feedback_noise(const ExperimentParams &base,
                                                  const CalibrationTargets &t = {}) {
    const double input = total_variance(SpinMoments{base.initial_mean, base.initial_covariance});
    const auto eval = [&](double coeff) {
        ExperimentParams p = base;
        p.noise.feedback_noise_coeff = coeff;
        CalibrationResult r;
        r.feedback_noise_coeff = coeff;
        const auto one = minimize_gain([&](double g) { return predict_total_variance(p, paper_characterization_schedule(g)); });
        const auto two = minimize_gain(
            [&](double g) { return predict_total_variance(p, paper_two_round_schedule(t.first_round_gain, g)); });
        r.one_round_db = db_reduction(input, one.value);
        r.two_round_db = db_reduction(input, two.value);
        r.objective = std::pow(r.one_round_db - t.one_round_db, 2) + std::pow(r.two_round_db - t.two_round_db, 2);
        return r;
    };

    constexpr double inv_phi = 0.6180339887498949;
    double a = std::log(t.coeff_min), b = std::log(t.coeff_max);
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    auto rc = eval(std::exp(c)), rd = eval(std::exp(d));
    while (b - a > t.log_tolerance) {
        if (rc.objective < rd.objective) {
            b = d;
            d = c;
            rd = rc;
            c = b - inv_phi * (b - a);
            rc = eval(std::exp(c));
        } else {
            a = c;
            c = d;
            rc = rd;
            d = a + inv_phi * (b - a);
            rd = eval(std::exp(d));
        }
    }
    return rc.objective < rd.objective ? rc : rd;
}

}  // namespace spincool
