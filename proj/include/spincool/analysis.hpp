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

// Observables: total variance, dB reduction, phase-space volume factor,
// record covariance / correlation and the shot-noise readout floor, plus the
// delete-one jackknife used for Monte Carlo error bars.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spincool/core.hpp"
#include "spincool/dynamics.hpp"

namespace spincool {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Aggregated observables of one run (either engine).  Standard errors are
/// zero for the moment engine and +inf when too few trials exist.
struct RunSummary {
    std::string engine;
    std::size_t n_trials = 0;

    Vec3 mean_spin           = Vec3::Zero();
    Vec3 component_variances = Vec3::Zero();
    double total_variance    = 0.0;  // at the readout point
    double total_variance_se = 0.0;
    double input_total_variance    = 0.0;
    double input_total_variance_se = 0.0;

    // Record-based view of the readout phase: includes shot noise.
    double record_total_variance    = 0.0;
    double record_total_variance_se = 0.0;
    double readout_floor            = 0.0;
    double floor_subtracted_variance = 0.0;

    std::vector<std::string> record_labels;
    VectorXd record_mean;
    MatrixXd record_cov;
    MatrixXd record_cov_se;
};

/// 10 log10(before / after).
inline double db_reduction(double before, double after) {
    if (!(before > 0.0) || !(after > 0.0))
        throw std::domain_error("db_reduction: variances must be positive");
    return 10.0 * std::log10(before / after);
}

/// Reduction of the volume spanned by the three principal standard
/// deviations, (before / after)^(3/2).
inline double volume_factor(double before, double after) {
    if (!(before > 0.0) || !(after > 0.0))
        throw std::domain_error("volume_factor: variances must be positive");
    return std::pow(before / after, 1.5);
}

/// Shot-noise contribution to a three-component record-based total
/// variance, 3 Var(S_y) / (kappa1 S_x)^2 (= 6 / (kappa1^2 N_L) by default).
inline double readout_floor(const ProbeParams &probe) {
    return 3.0 * MeasurementCoupling::from(probe).estimate_noise_var();
}

inline MatrixXd correlation_matrix(const MatrixXd &cov) {
    const Eigen::Index n = cov.rows();
    VectorXd sd(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(cov(i, i) > 0.0))
            throw std::domain_error("correlation_matrix: zero-variance row " + std::to_string(i));
        sd[i] = std::sqrt(cov(i, i));
    }
    MatrixXd out(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            out(i, j) = i == j ? 1.0 : std::clamp(cov(i, j) / (sd[i] * sd[j]), -1.0, 1.0);
    return out;
}

struct SampleCovariance {
    VectorXd mean;
    MatrixXd cov;     // unbiased (n - 1)
    MatrixXd cov_se;  // delete-one jackknife
};

/// Mean, unbiased covariance and per-entry jackknife standard errors of the
/// rows of `samples` (one row per trial).
///
/// The leave-one-out covariance has the closed form
///   C_(-k) = (C - y_k y_k^T n/(n-1)) / (n-2),   y_k = x_k - mean,
/// so the jackknife costs O(n d^2).
inline SampleCovariance sample_covariance(const MatrixXd &samples) {
    const Eigen::Index n = samples.rows(), d = samples.cols();
    if (n < 2)
        throw std::invalid_argument("sample_covariance: need at least 2 samples");
    SampleCovariance out;
    out.mean = samples.colwise().mean().transpose();
    const MatrixXd y = samples.rowwise() - out.mean.transpose();
    out.cov = (y.transpose() * y) / static_cast<double>(n - 1);
    out.cov = 0.5 * (out.cov + out.cov.transpose());
    out.cov_se = MatrixXd::Constant(d, d, std::numeric_limits<double>::infinity());
    if (n < 3)
        return out;
    const double nn = static_cast<double>(n);
    const double scale = nn / ((nn - 1.0) * (nn - 2.0));
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = i; j < d; ++j) {
            const VectorXd prod = y.col(i).cwiseProduct(y.col(j));
            const double pbar = prod.mean();
            const double ss = (prod.array() - pbar).square().sum();
            const double se = scale * std::sqrt((nn - 1.0) / nn * ss);
            out.cov_se(i, j) = out.cov_se(j, i) = se;
        }
    }
    return out;
}

struct Estimate {
    double value = 0.0;
    double se    = 0.0;
};

/// trace(sample covariance) + |sample mean|^2 of 3-vectors, with a delete-one
/// jackknife standard error.
inline Estimate total_variance_estimate(const MatrixXd &spins) {
    const Eigen::Index n = spins.rows();
    if (n < 2)
        throw std::invalid_argument("total_variance: need at least 2 samples");
    const VectorXd mean = spins.colwise().mean().transpose();
    const MatrixXd y = spins.rowwise() - mean.transpose();
    const double nn = static_cast<double>(n);
    const double ss = y.squaredNorm();
    Estimate out;
    out.value = ss / (nn - 1.0) + mean.squaredNorm();
    if (n < 3) {
        out.se = std::numeric_limits<double>::infinity();
        return out;
    }
    VectorXd loo(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const double yk2 = y.row(k).squaredNorm();
        const double tr = (ss - yk2 * nn / (nn - 1.0)) / (nn - 2.0);
        const VectorXd m = mean - y.row(k).transpose() / (nn - 1.0);
        loo[k] = tr + m.squaredNorm();
    }
    const double lbar = loo.mean();
    out.se = std::sqrt((nn - 1.0) / nn * (loo.array() - lbar).square().sum());
    return out;
}

/// Total variance of a sample of spin vectors, trace(cov) + |mean|^2.
inline double total_variance(const MatrixXd &spins) { return total_variance_estimate(spins).value; }

}  // namespace spincool
