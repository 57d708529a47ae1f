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

// Monte Carlo trajectory engine.  Each trial carries a classical spin vector
// and its own RNG substream derived from (master_seed, trial_index), so the
// ensemble result does not depend on how trials are spread over threads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "spincool/analysis.hpp"
#include "spincool/core.hpp"
#include "spincool/dynamics.hpp"
#include "spincool/noise.hpp"
#include "spincool/schedule.hpp"

namespace spincool {

using Rng = std::mt19937_64;

/// Independent generator for one trial.
inline Rng substream(std::uint64_t master_seed, std::uint64_t trial_index) {
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(trial_index), static_cast<std::uint32_t>(trial_index >> 32),
                      0x5eedu};
    return Rng(seq);
}

struct RecordEntry {
    std::size_t step_index = 0;
    Axis axis = Axis::z;
    double outcome = 0.0;  // spins
};

struct MeasurementRecord {
    std::vector<RecordEntry> entries;

    void push(const RecordEntry &e) {
        if (!entries.empty() && e.step_index <= entries.back().step_index)
            throw std::logic_error("MeasurementRecord: step indices must increase");
        entries.push_back(e);
    }
    std::size_t size() const { return entries.size(); }
};

struct TrajectoryState {
    Vec3 spin         = Vec3::Zero();
    Vec3 input_spin   = Vec3::Zero();
    Vec3 readout_spin = Vec3::Zero();
    MeasurementRecord record;
    Rng rng;
};

/// Draws initial spins with mean `initial_mean` and covariance `initial_covariance`.
class InitialStateSampler {
public:
    explicit InitialStateSampler(const ExperimentParams &p) : mode_(p.initial_mode), mean_(p.initial_mean) {
        const Mat3 &cov = p.initial_covariance;
        const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
        if (mode_ == InitialStateMode::gaussian) {
            Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
            if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() < -1e-9 * scale)
                throw std::runtime_error("initial covariance factorization failed (not PSD)");
            const Vec3 root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
            factor_ = es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
        } else {
            // Mixed-state fiducial plus one zero-mean normal pump per axis;
            // reproduces the diagonal of the configured covariance.
            mixed_sd_ = std::sqrt(mixed_state_variance(p.ensemble));
            for (int i = 0; i < 3; ++i) {
                const double extra = cov(i, i) - mixed_sd_ * mixed_sd_;
                if (extra < -1e-9 * scale)
                    throw std::runtime_error("procedural initial state: variance below mixed-state level");
                pump_sd_[i] = std::sqrt(std::max(0.0, extra));
            }
        }
    }

    Vec3 operator()(Rng &rng) const {
        std::normal_distribution<double> n01;
        Vec3 xi;
        for (int i = 0; i < 3; ++i)
            xi[i] = n01(rng);
        if (mode_ == InitialStateMode::gaussian)
            return mean_ + factor_ * xi;
        Vec3 out = mean_ + mixed_sd_ * xi;
        for (int i = 0; i < 3; ++i)
            out[i] += pump_sd_[i] * n01(rng);  // signed amplitude s*A
        return out;
    }

private:
    InitialStateMode mode_;
    Vec3 mean_;
    Mat3 factor_ = Mat3::Zero();
    double mixed_sd_ = 0.0;
    Vec3 pump_sd_ = Vec3::Zero();
};

inline Vec3 sample_initial_state(const ExperimentParams &p, Rng &rng) { return InitialStateSampler(p)(rng); }

namespace detail {

inline double normal(Rng &rng, double var) {
    if (!(var > 0.0))
        return 0.0;
    std::normal_distribution<double> n01;
    return std::sqrt(var) * n01(rng);
}

inline Vec3 transverse_noise(Rng &rng, double var, const Mat3 &transverse) {
    if (!(var > 0.0))
        return Vec3::Zero();
    std::normal_distribution<double> n01;
    Vec3 xi;
    for (int i = 0; i < 3; ++i)
        xi[i] = n01(rng);
    return std::sqrt(var) * (transverse * xi);
}

/// Step-independent quantities shared by every trajectory.
struct StepConstants {
    MeasurementCoupling coupling;
    Mat3 x_lat, x_bar, transverse;
    double eta_s = 0.0, deph_lat = 0.0, deph_bar = 0.0;

    explicit StepConstants(const ExperimentParams &p)
        : coupling(MeasurementCoupling::from(p.probe)),
          x_lat(precession_map(derived_theta(p.field), p.field)),
          x_bar(precession_map(derived_theta_bar(p.field), p.field)),
          transverse(Mat3::Identity() - axis_projector(p.field.axis)) {
        if (p.noise.enable_spont && p.ensemble.n_atoms > 0.0)
            eta_s = eta_spont(p.probe, p.ensemble, p.noise);
        if (p.noise.enable_dephasing_noise) {
            deph_lat = dephase_noise_var(eta_dephase(derived_theta(p.field), p.field, p.noise.dephasing_model),
                                         p.ensemble);
            deph_bar = dephase_noise_var(eta_dephase(derived_theta_bar(p.field), p.field, p.noise.dephasing_model),
                                         p.ensemble);
        }
    }
};

/// measure -> spontaneous emission + back-action -> latency precession ->
/// feedback -> remainder precession.
inline void advance(TrajectoryState &t, const ExperimentParams &p, const StepConstants &c, const Step &step) {
    const bool atoms = p.ensemble.n_atoms > 0.0;
    const double G = atoms ? physical_gain(step.normalized_gain, p.probe) : 0.0;

    const auto meas = faraday_measure(t.spin, c.coupling, normal(t.rng, c.coupling.readout_noise_var));
    t.record.push({step.index, step.axis, meas.estimate});

    if (c.eta_s > 0.0) {
        const Vec3 single = t.spin / p.ensemble.n_atoms;
        const Vec3 var = spont_noise_var(c.eta_s, p.ensemble, single, p.noise.polarization_threshold);
        t.spin *= (1.0 - c.eta_s);
        for (int i = 0; i < 3; ++i)
            t.spin[i] += normal(t.rng, var[i]);
    }
    if (p.noise.enable_backaction && atoms)
        t.spin = backaction_rotation(t.spin, normal(t.rng, p.probe.stokes_variance()), p.probe);

    t.spin = c.x_lat * t.spin + transverse_noise(t.rng, c.deph_lat, c.transverse);

    if (G != 0.0) {
        const double before = t.spin.z();
        t.spin = feedback_displace(t.spin, meas.sy, G, p.noise.feedback_quantum);
        if (p.noise.enable_feedback_noise)
            t.spin.z() += normal(t.rng, feedback_noise_var(t.spin.z() - before, p.noise));
    }

    t.spin = c.x_bar * t.spin + transverse_noise(t.rng, c.deph_bar, c.transverse);
}

inline TrajectoryState run_trajectory(const ExperimentParams &p, const Schedule &schedule,
                                      const InitialStateSampler &sampler, const StepConstants &c, Rng rng) {
    TrajectoryState t;
    t.rng = std::move(rng);
    t.spin = t.input_spin = sampler(t.rng);
    const std::size_t readout = schedule.readout_step();
    if (readout == 0)
        t.readout_spin = t.spin;
    for (const auto &step : schedule.steps()) {
        advance(t, p, c, step);
        if (step.index + 1 == readout)
            t.readout_spin = t.spin;
    }
    return t;
}

}  // namespace detail

/// Runs one trial from a fresh initial sample.
inline TrajectoryState run_trajectory(const ExperimentParams &p, const Schedule &schedule, Rng rng) {
    schedule.validate();
    return detail::run_trajectory(p, schedule, InitialStateSampler(p), detail::StepConstants(p), std::move(rng));
}

/// Per-trial data of an ensemble run, one row per trial.
struct McRun {
    MatrixXd input_spins;    // n x 3
    MatrixXd readout_spins;  // n x 3
    MatrixXd final_spins;    // n x 3
    MatrixXd records;        // n x steps
    std::vector<std::string> record_labels;
    std::size_t readout_step = 0;
};

inline unsigned default_parallelism() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Runs `n_trials` independent trajectories.  Trial i always uses
/// substream(master_seed, i), and rows are stored by trial index, so the
/// output is bitwise identical for any `threads`.
inline McRun run_trials(const ExperimentParams &p, const Schedule &schedule, std::size_t n_trials,
                        std::uint64_t master_seed, unsigned threads = 0) {
    schedule.validate();
    if (threads == 0)
        threads = default_parallelism();
    const InitialStateSampler sampler(p);
    const detail::StepConstants consts(p);
    const auto n_steps = static_cast<Eigen::Index>(schedule.n_steps());
    const auto n = static_cast<Eigen::Index>(n_trials);

    McRun out;
    out.input_spins.resize(n, 3);
    out.readout_spins.resize(n, 3);
    out.final_spins.resize(n, 3);
    out.records.resize(n, n_steps);
    out.record_labels = schedule.record_labels();
    out.readout_step = schedule.readout_step();

    const auto work = [&](unsigned worker) {
        for (Eigen::Index i = worker; i < n; i += threads) {
            const auto t = detail::run_trajectory(p, schedule, sampler, consts,
                                                  substream(master_seed, static_cast<std::uint64_t>(i)));
            out.input_spins.row(i) = t.input_spin.transpose();
            out.readout_spins.row(i) = t.readout_spin.transpose();
            out.final_spins.row(i) = t.spin.transpose();
            for (Eigen::Index s = 0; s < n_steps; ++s)
                out.records(i, s) = t.record.entries[static_cast<std::size_t>(s)].outcome;
        }
    };
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n_trials, 1)));
    if (threads <= 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (unsigned w = 0; w < threads; ++w)
            pool.emplace_back(work, w);
    }
    return out;
}

inline RunSummary summarize_trials(const McRun &run, const ProbeParams &probe) {
    const auto n = static_cast<std::size_t>(run.input_spins.rows());
    if (n < 2)
        throw std::invalid_argument("run_ensemble: need at least 2 trials");
    RunSummary s;
    s.engine = "mc";
    s.n_trials = n;

    const auto readout = sample_covariance(run.readout_spins);
    s.mean_spin = readout.mean;
    s.component_variances = readout.cov.diagonal();
    const auto tv = total_variance_estimate(run.readout_spins);
    s.total_variance = tv.value;
    s.total_variance_se = tv.se;
    const auto in = total_variance_estimate(run.input_spins);
    s.input_total_variance = in.value;
    s.input_total_variance_se = in.se;

    s.record_labels = run.record_labels;
    s.readout_floor = readout_floor(probe);
    if (run.records.cols() > 0) {
        const auto rec = sample_covariance(run.records);
        s.record_mean = rec.mean;
        s.record_cov = rec.cov;
        s.record_cov_se = rec.cov_se;
        const auto first = static_cast<Eigen::Index>(run.readout_step);
        const Eigen::Index len = std::min<Eigen::Index>(3, run.records.cols() - first);
        if (len > 0) {
            const auto rtv = total_variance_estimate(run.records.middleCols(first, len));
            s.record_total_variance = rtv.value;
            s.record_total_variance_se = rtv.se;
            s.floor_subtracted_variance = rtv.value - s.readout_floor;
        }
    }
    return s;
}

/// Runs the ensemble and reduces it to a RunSummary.
inline RunSummary run_ensemble(const ExperimentParams &p, const Schedule &schedule, std::size_t n_trials,
                               std::uint64_t master_seed, unsigned threads = 0) {
    if (n_trials < 2)
        throw std::invalid_argument("run_ensemble: need at least 2 trials");
    return summarize_trials(run_trials(p, schedule, n_trials, master_seed, threads), p.probe);
}

}  // namespace spincool
