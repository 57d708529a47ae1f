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

// Deterministic maps of one measurement + feedback step: Larmor precession
// with transverse dephasing, Faraday readout of F_z, probe back-action,
// optical-pumping displacement, and their composition.

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "spincool/core.hpp"
#include "spincool/noise.hpp"

namespace spincool {

enum class Axis { x = 0, y = 1, z = 2 };

inline char axis_label(Axis a) {
    switch (a) {
    case Axis::x: return 'x';
    case Axis::y: return 'y';
    case Axis::z: return 'z';
    }
    return '?';
}

inline Axis parse_axis(char c) {
    switch (c) {
    case 'x': return Axis::x;
    case 'y': return Axis::y;
    case 'z': return Axis::z;
    default: throw std::invalid_argument(std::string("unknown axis label '") + c + "'");
    }
}

inline Mat3 axis_projector(const Vec3 &axis) { return axis * axis.transpose(); }

/// Right-handed rotation by `angle` about the unit vector `axis` (Rodrigues).
/// About [1,1,1] a third of a turn sends the z-component to the position of
/// the former y-component: (R F)_z = F_y, (R F)_y = F_x, (R F)_x = F_z.  A
/// fixed lab-frame F_z probe therefore reads F_z, F_y, F_x in turn.
inline Mat3 rotation_about(const Vec3 &axis, double angle) {
    Mat3 k;
    k << 0.0, -axis.z(), axis.y(),
         axis.z(), 0.0, -axis.x(),
        -axis.y(), axis.x(), 0.0;
    return Mat3::Identity() + std::sin(angle) * k + (1.0 - std::cos(angle)) * k * k;
}

/// Precession with dephasing, X(theta) = P_B + exp(-theta/(omega_L T2)) R_B(theta) (1 - P_B).
inline Mat3 precession_map(double theta, const FieldParams &field) {
    const Mat3 pb = axis_projector(field.axis);
    return pb + transverse_decay(theta, field) * rotation_about(field.axis, theta) *
                    (Mat3::Identity() - pb);
}

/// Faraday readout of F_z.
struct MeasurementCoupling {
    double readout_gain      = 0.0;  // kappa1 S_x, units of S_y per spin
    double readout_noise_var = 0.0;  // Var(S_y)

    static MeasurementCoupling from(const ProbeParams &probe) {
        return {probe.readout_gain(), probe.stokes_variance()};
    }

    double estimator_scale() const { return 1.0 / readout_gain; }
    /// Variance of the spin estimate contributed by shot noise alone.
    double estimate_noise_var() const { return readout_noise_var / (readout_gain * readout_gain); }
};

struct FaradayOutcome {
    double sy       = 0.0;  // S_y^(out)
    double estimate = 0.0;  // S_y^(out) / (kappa1 S_x), spins
};

inline FaradayOutcome faraday_measure(const Vec3 &spin, const MeasurementCoupling &coupling,
                                      double shot_noise) {
    FaradayOutcome out;
    out.sy       = shot_noise + coupling.readout_gain * spin.z();
    out.estimate = out.sy * coupling.estimator_scale();
    return out;
}

/// Back-action of one pulse: rotation about z by kappa1 * S_z.  F_z is
/// unchanged and |F| is preserved.
inline Vec3 backaction_rotation(const Vec3 &spin, double sz_sample, const ProbeParams &probe) {
    const double phi = probe.kappa1 * sz_sample;
    const double c = std::cos(phi), s = std::sin(phi);
    return {c * spin.x() - s * spin.y(), s * spin.x() + c * spin.y(), spin.z()};
}

/// Optical-pumping displacement along z by G * S_y.  With a positive
/// `quantum` the displacement is rounded to whole AOM ticks.
inline Vec3 feedback_displace(const Vec3 &spin, double outcome_sy, double gain_G,
                              double quantum = 0.0) {
    double d = gain_G * outcome_sy;
    if (quantum > 0.0)
        d = quantum * std::round(d / quantum);
    return spin + d * Vec3::UnitZ();
}

/// E|Y| for Y ~ N(mean, var).
inline double folded_normal_mean(double mean, double var) {
    if (!(var > 0.0))
        return std::abs(mean);
    const double sd = std::sqrt(var);
    return sd * std::sqrt(2.0 / std::numbers::pi) * std::exp(-0.5 * mean * mean / var) +
           mean * std::erf(mean / (sd * std::numbers::sqrt2));
}

/// x -> linear x + offset + w, Cov(w) = noise_cov.
struct AffineMap {
    Mat3 linear    = Mat3::Identity();
    Vec3 offset    = Vec3::Zero();
    Mat3 noise_cov = Mat3::Zero();

    Vec3 apply(const Vec3 &x) const { return linear * x + offset; }

    SpinMoments propagate(const SpinMoments &m) const {
        return {linear * m.mean + offset, linear * m.cov * linear.transpose() + noise_cov};
    }

    /// `next` applied after *this.
    AffineMap then(const AffineMap &next) const {
        return {next.linear * linear, next.linear * offset + next.offset,
                next.linear * noise_cov * next.linear.transpose() + next.noise_cov};
    }
};

/// One measurement + feedback step as an affine map on the spin together with
/// the linear functional producing the recorded estimate
///   record = record_row . F + e,  Var(e) = record_noise_var,
/// and the covariance between e and the spin noise (the fed-back shot noise).
struct StepMap {
    AffineMap spin;
    Eigen::RowVector3d record_row = Eigen::RowVector3d::UnitZ();
    double record_noise_var       = 0.0;
    Vec3 spin_record_noise_cov    = Vec3::Zero();
    Axis axis                     = Axis::z;
};

/// Composition measure -> spontaneous emission -> latency precession ->
/// feedback -> remainder precession.  State-dependent noise terms (the
/// polarized spontaneous-emission form and the feedback noise) are evaluated
/// at `prior`.  Probe back-action is not affine and is left out; the moment
/// engine applies it separately.
inline StepMap one_step_map(const ExperimentParams &p, double gain_G, const SpinMoments &prior,
                            Axis axis = Axis::z) {
    const auto coupling = MeasurementCoupling::from(p.probe);
    const double k      = coupling.readout_gain;
    const double shot   = coupling.readout_noise_var;
    const double G      = p.ensemble.n_atoms > 0.0 ? gain_G : 0.0;
    const double theta  = derived_theta(p.field);
    const double theta_bar = derived_theta_bar(p.field);
    const Mat3 x_lat = precession_map(theta, p.field);
    const Mat3 x_bar = precession_map(theta_bar, p.field);
    const Mat3 zz    = Vec3::UnitZ() * Vec3::UnitZ().transpose();
    const Mat3 transverse = Mat3::Identity() - axis_projector(p.field.axis);

    double damping = 1.0;
    Mat3 spont     = Mat3::Zero();
    if (p.noise.enable_spont && p.ensemble.n_atoms > 0.0) {
        const double eta = eta_spont(p.probe, p.ensemble, p.noise);
        damping = 1.0 - eta;
        const Vec3 second = prior.cov.diagonal() + prior.mean.cwiseProduct(prior.mean);
        spont = expected_spont_noise_var(eta, p.ensemble, second).asDiagonal();
    }

    Mat3 deph_lat = Mat3::Zero(), deph_bar = Mat3::Zero();
    if (p.noise.enable_dephasing_noise) {
        deph_lat = dephase_noise_var(eta_dephase(theta, p.field, p.noise.dephasing_model), p.ensemble) *
                   transverse;
        deph_bar = dephase_noise_var(eta_dephase(theta_bar, p.field, p.noise.dephasing_model),
                                     p.ensemble) * transverse;
    }

    double fb_var = 0.0;
    if (p.noise.enable_feedback_noise && G != 0.0) {
        const double sy_mean = k * prior.mean.z();
        const double sy_var  = k * k * prior.cov(2, 2) + shot;
        fb_var = feedback_noise_var(std::abs(G) * folded_normal_mean(sy_mean, sy_var), p.noise);
    }
    if (p.noise.feedback_quantum > 0.0 && G != 0.0)
        fb_var += p.noise.feedback_quantum * p.noise.feedback_quantum / 12.0;

    StepMap out;
    out.axis = axis;
    out.spin.linear = x_bar * (G * k * zz + damping * x_lat);
    out.spin.offset = Vec3::Zero();
    const Mat3 inner = x_lat * spont * x_lat.transpose() + deph_lat + (G * G * shot + fb_var) * zz;
    out.spin.noise_cov = x_bar * inner * x_bar.transpose() + deph_bar;
    out.record_row       = Eigen::RowVector3d::UnitZ();
    out.record_noise_var = coupling.estimate_noise_var();
    // e = shot/k enters the spin through x_bar * G * shot * z.
    out.spin_record_noise_cov = x_bar * Vec3::UnitZ() * (G * shot / k);
    return out;
}

}  // namespace spincool
