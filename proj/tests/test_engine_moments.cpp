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

#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "spincool/analysis.hpp"
#include "spincool/engine_moments.hpp"
#include "spincool/schedule.hpp"

using namespace spincool;

namespace {

double min_eigenvalue(const MatrixXd &m) {
    return Eigen::SelfAdjointEigenSolver<MatrixXd>(m).eigenvalues().minCoeff();
}

}  // namespace

TEST(MomentEngine, CovarianceStaysPositiveSemidefinite) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> gain(-2.0, 0.5);
    for (int trial = 0; trial < 40; ++trial) {
        ExperimentParams p = calibrated_params();
        std::vector<double> gains(1 + trial % 3);
        for (auto &g : gains)
            g = gain(rng);
        const auto run = run_moments(p, characterization_schedule(gains));
        const auto &c = run.final_state.cov;
        EXPECT_LT((c - c.transpose()).cwiseAbs().maxCoeff(), 1e-6);
        EXPECT_GE(min_eigenvalue(c), -1e-6 * c.cwiseAbs().maxCoeff());
    }
}

TEST(MomentEngine, ShotNoisePosteriorOfFirstRecord) {
    const ExperimentParams p;
    const auto j = apply_step(JointGaussian::from_spin({Vec3::Zero(), p.initial_covariance}), p, 0.0);
    EXPECT_NEAR(j.cov(3, 3) - p.initial_covariance(2, 2), 1281558.3749839808, 1e-3);
    // Gaussian conditioning on the first record shrinks Var(F_z) towards the
    // shot-noise level: 1/(1/V + 1/s).
    const double v = p.initial_covariance(2, 2), s = 1281558.3749839808;
    const Eigen::Matrix2d zr = (Eigen::Matrix2d() << v, v, v, v + s).finished();
    EXPECT_NEAR(zr(0, 0) - zr(0, 1) * zr(1, 0) / zr(1, 1), 1.0 / (1.0 / v + 1.0 / s), 1e-3);
}

TEST(MomentEngine, RecordOverflowThrows) {
    const ExperimentParams p;
    JointGaussian j = JointGaussian::from_spin({Vec3::Zero(), p.initial_covariance});
    for (int i = 0; i < 4; ++i)
        j = apply_step(j, p, 0.0, 4);
    EXPECT_EQ(j.n_records(), 4u);
    EXPECT_THROW(apply_step(j, p, 0.0, 4), std::length_error);
}

TEST(MomentEngine, ZeroGainEqualsMeasureOnly) {
    const auto p = calibrated_params();
    for (const auto &s : {paper_characterization_schedule(0.0), paper_two_round_schedule(0.0, 0.0)}) {
        const auto a = run_moments(p, s);
        const auto b = run_moments(p, measure_only_equivalent(s));
        EXPECT_EQ(a.final_state.mean, b.final_state.mean);
        EXPECT_EQ(a.final_state.cov, b.final_state.cov);
    }
}

// Without state-dependent noise the moment engine is an exact affine
// propagation, so a direct composition of the step maps must agree.
TEST(MomentEngine, AffineExactness) {
    ExperimentParams p;
    p.noise.enable_backaction = false;
    p.noise.enable_feedback_noise = false;
    p.initial_mean = Vec3(1e4, -2e4, 5e3);
    const auto s = paper_two_round_schedule(-0.7, -0.4);
    SpinMoments m{p.initial_mean, p.initial_covariance};
    for (const auto &step : s.steps())
        m = one_step_map(p, physical_gain(step.normalized_gain, p.probe), m).spin.propagate(m);
    const auto run = run_moments(p, s);
    const SpinMoments got = run.final_state.spin();
    EXPECT_LT((got.mean - m.mean).norm(), 1e-6);
    EXPECT_LT((got.cov - m.cov).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(MomentEngine, BackactionConservesSecondMomentTrace) {
    ExperimentParams p;
    p.noise.enable_spont = p.noise.enable_dephasing_noise = p.noise.enable_feedback_noise = false;
    p.field.t2_transverse = std::numeric_limits<double>::infinity();
    p.initial_mean = Vec3(3e4, -1e4, 2e4);
    const auto run = run_moments(p, paper_characterization_schedule(0.0));
    // Random rotations about z and unitary precession preserve E|F|^2.
    EXPECT_NEAR(total_variance(run.final_state.spin()) / total_variance(run.input), 1.0, 1e-12);
    EXPECT_LT(run.final_state.spin().mean.norm(), run.input.mean.norm());
}

TEST(MomentEngine, MeasureOnlyRecordsAreStronglyCorrelated) {
    const auto p = calibrated_params();
    const auto s = paper_characterization_schedule(0.0);
    const MatrixXd corr = correlation_matrix(record_covariance(p, s));
    for (int i = 0; i < 3; ++i) {
        EXPECT_GT(corr(i, i + 3), 0.9);
        EXPECT_GT(corr(i, i + 6), 0.9);
    }
    // Distinct components of the initial state are nearly uncorrelated except
    // where the preparation correlates them.
    EXPECT_NEAR(corr(0, 1), p.initial_covariance(2, 1) / std::sqrt(p.initial_covariance(2, 2) * p.initial_covariance(1, 1)), 0.02);
}

TEST(MomentEngine, FeedbackDecorrelatesOutputFromInput) {
    const auto p = calibrated_params();
    const MatrixXd c0 = correlation_matrix(record_covariance(p, paper_characterization_schedule(0.0)));
    const MatrixXd c1 = correlation_matrix(record_covariance(p, paper_characterization_schedule(-0.8)));
    const MatrixXd c2 = correlation_matrix(record_covariance(p, paper_characterization_schedule(-1.0)));
    for (int i = 0; i < 3; ++i) {
        EXPECT_LT(std::abs(c1(i, i + 6)), c0(i, i + 6));
        EXPECT_LT(std::abs(c2(i, i + 6)), std::abs(c1(i, i + 6)));
    }
    // The first-measured component is corrected most directly.
    EXPECT_LT(std::abs(c1(0, 6)), 0.3);
}

TEST(MomentEngine, NoAtomsGivesShotNoiseDiagonal) {
    ExperimentParams p;
    p.ensemble.n_atoms = 0.0;
    p.initial_covariance.setZero();
    const auto s = paper_characterization_schedule(-0.75);
    const MatrixXd c = record_covariance(p, s);
    const double shot = 1281558.3749839808;
    EXPECT_LT((c - shot * MatrixXd::Identity(9, 9)).cwiseAbs().maxCoeff(), 1e-6);
    const auto sum = summarize_moments(p, s);
    EXPECT_NEAR(sum.record_total_variance, 3844675.1249519424, 1e-6);
    EXPECT_NEAR(sum.floor_subtracted_variance, 0.0, 1e-6);
}

TEST(MomentEngine, SummaryFields) {
    const auto p = calibrated_params();
    const auto s = paper_characterization_schedule(-0.75);
    const auto sum = summarize_moments(p, s);
    EXPECT_EQ(sum.engine, "moments");
    EXPECT_DOUBLE_EQ(sum.input_total_variance, 7.2e8);
    EXPECT_LT(sum.total_variance, sum.input_total_variance);
    EXPECT_EQ(sum.record_labels.size(), 9u);
    EXPECT_EQ(sum.record_cov.rows(), 9);
    EXPECT_EQ(sum.record_cov_se, MatrixXd::Zero(9, 9));
    // Readout records see the readout-point spin plus shot noise and the
    // evolution across the readout phase.
    EXPECT_GT(sum.record_total_variance, sum.readout_floor);
}

TEST(MomentEngine, ReadoutPointIsBeforeTrailingMeasurement) {
    EXPECT_EQ(paper_characterization_schedule(-0.5).readout_step(), 6u);
    EXPECT_EQ(paper_two_round_schedule(-0.5, -0.5).readout_step(), 9u);
    const auto p = calibrated_params();
    const auto run = run_moments(p, paper_characterization_schedule(-0.5));
    JointGaussian j = JointGaussian::from_spin(run.input);
    for (int i = 0; i < 3; ++i)
        j = apply_step(j, p, 0.0);
    for (int i = 0; i < 3; ++i)
        j = apply_step(j, p, physical_gain(-0.5, p.probe));
    EXPECT_EQ(j.spin().cov, run.readout.cov);
}
