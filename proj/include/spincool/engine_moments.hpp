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

// Exact propagation of first and second moments of the joint vector
// (spin, recorded estimates) through a schedule.
//
// Every channel is affine in the spin except the probe back-action (random
// rotation) and the two state-dependent noise variances.  For the rotation
// the second moments still transform linearly and are handled exactly; the
// noise variances are evaluated in expectation under the current moments
// (feedback noise uses the folded-normal mean of |G S_y|).

#include <cmath>
#include <cstddef>
#include <stdexcept>

#include <Eigen/Dense>

#include "spincool/analysis.hpp"
#include "spincool/core.hpp"
#include "spincool/dynamics.hpp"
#include "spincool/noise.hpp"
#include "spincool/schedule.hpp"

namespace spincool {

/// Mean and covariance of (F_x, F_y, F_z, r_1, ..., r_n): the spin followed by
/// the recorded estimates in step order.
struct JointGaussian {
    VectorXd mean = VectorXd::Zero(3);
    MatrixXd cov  = MatrixXd::Zero(3, 3);

    Eigen::Index dim() const { return mean.size(); }
    std::size_t n_records() const { return static_cast<std::size_t>(mean.size() - 3); }

    SpinMoments spin() const { return {mean.head<3>(), cov.topLeftCorner<3, 3>()}; }

    static JointGaussian from_spin(const SpinMoments &m) {
        JointGaussian j;
        j.mean.head<3>() = m.mean;
        j.cov.topLeftCorner<3, 3>() = m.cov;
        return j;
    }
};

inline constexpr std::size_t kDefaultMaxSteps = 64;

namespace detail {

inline void transform_spin(JointGaussian &j, const Mat3 &a) {
    j.mean.head<3>() = a * j.mean.head<3>();
    j.cov.topRows<3>()  = a * j.cov.topRows<3>();
    j.cov.leftCols<3>() = j.cov.leftCols<3>() * a.transpose();
}

inline void add_spin_noise(JointGaussian &j, const Mat3 &q) { j.cov.topLeftCorner<3, 3>() += q; }

/// x' = x cos phi - y sin phi, y' = x sin phi + y cos phi with
/// phi ~ N(0, var_phi) independent of everything else.
inline void random_z_rotation(JointGaussian &j, double var_phi) {
    const double c1 = std::exp(-0.5 * var_phi);            // E cos
    const double c2 = 0.5 * (1.0 + std::exp(-2.0 * var_phi));  // E cos^2
    const double s2 = 0.5 * (1.0 - std::exp(-2.0 * var_phi));  // E sin^2
    const double mx = j.mean[0], my = j.mean[1];
    const double rxx = j.cov(0, 0) + mx * mx;
    const double ryy = j.cov(1, 1) + my * my;
    const double rxy = j.cov(0, 1) + mx * my;

    // Cross terms with every other coordinate scale by E cos.
    j.cov.topRows<2>() *= c1;
    j.cov.leftCols<2>() *= c1;
    j.mean.head<2>() *= c1;
    const double nmx = j.mean[0], nmy = j.mean[1];
    j.cov(0, 0) = c2 * rxx + s2 * ryy - nmx * nmx;
    j.cov(1, 1) = s2 * rxx + c2 * ryy - nmy * nmy;
    j.cov(0, 1) = j.cov(1, 0) = (c2 - s2) * rxy - nmx * nmy;
}

}  // namespace detail

/// Appends the estimate of this step and applies one measurement + feedback
/// step to the spin.  Existing record coordinates are untouched.
inline JointGaussian apply_step(const JointGaussian &joint, const ExperimentParams &p, double gain_G,
                                std::size_t max_steps = kDefaultMaxSteps) {
    if (joint.n_records() >= max_steps)
        throw std::length_error("apply_step: record exceeds " + std::to_string(max_steps) + " steps");

    const auto coupling = MeasurementCoupling::from(p.probe);
    const double k = coupling.readout_gain;
    const double shot = coupling.readout_noise_var;
    const bool atoms = p.ensemble.n_atoms > 0.0;
    const double G = atoms ? gain_G : 0.0;

    JointGaussian j;
    const Eigen::Index d = joint.dim();
    const Eigen::Index r = d;  // index of the new record
    j.mean.resize(d + 1);
    j.cov.resize(d + 1, d + 1);
    j.mean.head(d) = joint.mean;
    j.cov.topLeftCorner(d, d) = joint.cov;

    // Record: r = F_z + e / k.
    j.mean[r] = joint.mean[2];
    j.cov.row(r).head(d) = joint.cov.row(2);
    j.cov.col(r).head(d) = joint.cov.col(2);
    j.cov(r, r) = joint.cov(2, 2) + coupling.estimate_noise_var();

    // E|G S_y| must be taken before the spin is altered.
    double fb_var = 0.0;
    if (p.noise.enable_feedback_noise && G != 0.0)
        fb_var = feedback_noise_var(std::abs(G) * k * folded_normal_mean(j.mean[r], j.cov(r, r)), p.noise);
    if (p.noise.feedback_quantum > 0.0 && G != 0.0)
        fb_var += p.noise.feedback_quantum * p.noise.feedback_quantum / 12.0;

    if (p.noise.enable_spont && atoms) {
        const double eta = eta_spont(p.probe, p.ensemble, p.noise);
        const Vec3 second = j.cov.diagonal().head<3>() + j.mean.head<3>().cwiseProduct(j.mean.head<3>());
        const Vec3 q = expected_spont_noise_var(eta, p.ensemble, second);
        detail::transform_spin(j, (1.0 - eta) * Mat3::Identity());
        detail::add_spin_noise(j, q.asDiagonal());
    }

    if (p.noise.enable_backaction && atoms)
        detail::random_z_rotation(j, p.probe.kappa1 * p.probe.kappa1 * p.probe.stokes_variance());

    const Mat3 transverse = Mat3::Identity() - axis_projector(p.field.axis);
    const auto precess = [&](double angle) {
        detail::transform_spin(j, precession_map(angle, p.field));
        if (p.noise.enable_dephasing_noise)
            detail::add_spin_noise(
                j, dephase_noise_var(eta_dephase(angle, p.field, p.noise.dephasing_model), p.ensemble) *
                       transverse);
    };

    precess(derived_theta(p.field));

    // F_z += G S_y = G k r.
    if (G != 0.0) {
        const double w = G * k;
        j.mean[2] += w * j.mean[r];
        j.cov.row(2) += w * j.cov.row(r);
        j.cov.col(2) += w * j.cov.col(r);
    }
    j.cov(2, 2) += fb_var;

    precess(derived_theta_bar(p.field));

    j.cov = 0.5 * (j.cov + j.cov.transpose());
    return j;
}

struct MomentsRun {
    JointGaussian final_state;
    SpinMoments input;
    SpinMoments readout;
    std::size_t readout_step = 0;
};

inline MomentsRun run_moments(const ExperimentParams &p, const Schedule &schedule,
                              std::size_t max_steps = kDefaultMaxSteps) {
    MomentsRun out;
    out.input = {p.initial_mean, p.initial_covariance};
    out.readout_step = schedule.readout_step();
    JointGaussian j = JointGaussian::from_spin(out.input);
    if (out.readout_step == 0)
        out.readout = j.spin();
    for (const auto &step : schedule.steps()) {
        j = apply_step(j, p, physical_gain(step.normalized_gain, p.probe), max_steps);
        if (step.index + 1 == out.readout_step)
            out.readout = j.spin();
    }
    out.final_state = std::move(j);
    return out;
}

/// Delta^2 F at the readout point of `schedule`.
inline double predict_total_variance(const ExperimentParams &p, const Schedule &schedule) {
    return total_variance(run_moments(p, schedule).readout);
}

/// Marginal covariance of all recorded estimates.
inline MatrixXd record_covariance(const ExperimentParams &p, const Schedule &schedule) {
    const auto run = run_moments(p, schedule);
    const Eigen::Index n = run.final_state.dim() - 3;
    return run.final_state.cov.bottomRightCorner(n, n);
}

inline RunSummary summarize_moments(const ExperimentParams &p, const Schedule &schedule) {
    const auto run = run_moments(p, schedule);
    RunSummary s;
    s.engine = "moments";
    s.mean_spin = run.readout.mean;
    s.component_variances = run.readout.cov.diagonal();
    s.total_variance = total_variance(run.readout);
    s.input_total_variance = total_variance(run.input);

    const Eigen::Index n = run.final_state.dim() - 3;
    s.record_labels = schedule.record_labels();
    s.record_mean = run.final_state.mean.tail(n);
    s.record_cov = run.final_state.cov.bottomRightCorner(n, n);
    s.record_cov_se = MatrixXd::Zero(n, n);

    s.readout_floor = readout_floor(p.probe);
    const auto first = static_cast<Eigen::Index>(run.readout_step);
    const Eigen::Index len = std::min<Eigen::Index>(3, n - first);
    if (len > 0) {
        s.record_total_variance = s.record_cov.block(first, first, len, len).trace() +
                                  s.record_mean.segment(first, len).squaredNorm();
        s.floor_subtracted_variance = s.record_total_variance - s.readout_floor;
    }
    return s;
}

}  // namespace spincool
