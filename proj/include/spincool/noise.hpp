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

// Stochastic channels acting on the collective spin: readout shot noise,
// spontaneous-emission randomization, dephasing randomization and
// optical-pumping (feedback) noise.  Every function here returns variances;
// sampling lives in the Monte Carlo engine.

#include <algorithm>
#include <cmath>
#include <numbers>

#include "spincool/core.hpp"

namespace spincool {

/// Fraction of atoms spin-randomized by spontaneous emission during one probe
/// pulse, 2 kappa1^2 N_A N_L / (3 alpha0), clamped to [0, 1].
/// Values above 0.1 are outside the weak-scattering regime; see
/// model_warnings().
inline double eta_spont(const ProbeParams &probe, const EnsembleParams &ensemble,
                        const NoiseParams &noise) {
    if (!std::isfinite(noise.alpha0))
        return 0.0;
    const double eta = 2.0 * probe.kappa1 * probe.kappa1 * ensemble.n_atoms * probe.n_photons /
                       (3.0 * noise.alpha0);
    return std::clamp(eta, 0.0, 1.0);
}

/// Per-axis variance added by spontaneous emission.
///
/// `mean_single_spin` is the mean spin per atom, <F>/N_A.  Below
/// `threshold` the unpolarized closed form N_A eta (2 - eta) f(f+1)/3 is used;
/// otherwise Var(f_i) eta (1 - eta) N_A + eta N_A f(f+1)/3 with the
/// near-mixed single-atom variance Var(f_i) = f(f+1)/3 - <f_i>^2.
inline Vec3 spont_noise_var(double eta_s, const EnsembleParams &ensemble,
                            const Vec3 &mean_single_spin, double threshold = 1.0e-3) {
    const double ff = ensemble.f_spin * (ensemble.f_spin + 1.0) / 3.0;
    const double na = ensemble.n_atoms;
    if (mean_single_spin.norm() < threshold)
        return Vec3::Constant(na * eta_s * (2.0 - eta_s) * ff);
    Vec3 out;
    for (int i = 0; i < 3; ++i) {
        const double single_var = std::max(0.0, ff - mean_single_spin[i] * mean_single_spin[i]);
        out[i] = single_var * eta_s * (1.0 - eta_s) * na + eta_s * na * ff;
    }
    return out;
}

/// Ensemble expectation of the polarized form of spont_noise_var(), given
/// the raw second moments E[F_i^2] of the collective spin.
inline Vec3 expected_spont_noise_var(double eta_s, const EnsembleParams &ensemble,
                                     const Vec3 &second_moment_diag) {
    const double ff = ensemble.f_spin * (ensemble.f_spin + 1.0) / 3.0;
    const double na = ensemble.n_atoms;
    if (na <= 0.0)
        return Vec3::Zero();
    Vec3 out;
    for (int i = 0; i < 3; ++i) {
        const double single_var = std::max(0.0, ff - second_moment_diag[i] / (na * na));
        out[i] = single_var * eta_s * (1.0 - eta_s) * na + eta_s * na * ff;
    }
    return out;
}

/// Transverse amplitude decay over a precession by `theta`,
/// exp(-theta / (omega_L T2)).
inline double transverse_decay(double theta, const FieldParams &field) {
    if (std::isinf(field.t2_transverse))
        return 1.0;
    return std::exp(-theta / (field.omega_larmor() * field.t2_transverse));
}

/// Fraction of transverse polarization randomized during a precession segment.
inline double eta_dephase(double theta, const FieldParams &field,
                          DephasingModel model = DephasingModel::decay) {
    if (model == DephasingModel::printed) {
        const double v = 1.0 - std::exp(theta / (2.0 * std::numbers::pi * field.larmor_period));
        return std::clamp(v, 0.0, 1.0);
    }
    return 1.0 - transverse_decay(theta, field);
}

/// Per-transverse-axis variance N_A eta_D (2 - eta_D) f(f+1)/3.
inline double dephase_noise_var(double eta_d, const EnsembleParams &ensemble) {
    return ensemble.n_atoms * eta_d * (2.0 - eta_d) * ensemble.f_spin * (ensemble.f_spin + 1.0) / 3.0;
}

/// Optical-pumping noise variance for a displacement of the given size.
/// Pumping is uncorrelated among atoms, so the variance is linear in the
/// number of atoms moved (RMS grows as the square root).
inline double feedback_noise_var(double displacement_magnitude, const NoiseParams &noise) {
    return noise.feedback_noise_coeff * std::abs(displacement_magnitude);
}

/// Per-pulse noise levels at a reference operating point.
struct NoiseBudget {
    double readout_var            = 0.0;  // Var(S_y), photons
    double readout_var_spins      = 0.0;  // Var(S_y) / (kappa1 S_x)^2, spins^2
    double spont_fraction         = 0.0;
    double spont_var_per_axis     = 0.0;
    double dephasing_fraction     = 0.0;  // latency segment
    double dephasing_var_per_axis = 0.0;
    double dephasing_fraction_bar     = 0.0;  // remainder segment
    double dephasing_var_per_axis_bar = 0.0;
    double feedback_var           = 0.0;  // at `displacement`
};

/// Evaluates every channel for an unpolarized ensemble and a feedback
/// displacement of `displacement` spins.
inline NoiseBudget noise_budget(const ExperimentParams &p, double displacement) {
    NoiseBudget b;
    b.readout_var       = p.probe.stokes_variance();
    b.readout_var_spins = b.readout_var / (p.probe.readout_gain() * p.probe.readout_gain());
    b.spont_fraction    = eta_spont(p.probe, p.ensemble, p.noise);
    b.spont_var_per_axis = spont_noise_var(b.spont_fraction, p.ensemble, Vec3::Zero())[0];
    const double theta = derived_theta(p.field);
    b.dephasing_fraction     = eta_dephase(theta, p.field, p.noise.dephasing_model);
    b.dephasing_var_per_axis = dephase_noise_var(b.dephasing_fraction, p.ensemble);
    b.dephasing_fraction_bar = eta_dephase(derived_theta_bar(p.field), p.field, p.noise.dephasing_model);
    b.dephasing_var_per_axis_bar = dephase_noise_var(b.dephasing_fraction_bar, p.ensemble);
    b.feedback_var = feedback_noise_var(displacement, p.noise);
    return b;
}

}  // namespace spincool
