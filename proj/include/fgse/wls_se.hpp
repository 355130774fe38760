#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <vector>

#include "fgse/measurements.hpp"

namespace fgse {

// State vector: [v_re(0..n-1), v_im(0..n-1)], length 2n.
using StateVector = Eigen::VectorXd;

StateVector state_from_operating_point(const OperatingPoint& op);

// Linear PMU measurement model z = H x + e.
//   - voltage phasor rows select v_re(i) / v_im(i) with coefficient 1;
//   - current phasor rows carry the rectangular expansion of
//     I = y_a * V_from + y_b * V_to (four structural entries per row);
//   - sigma is block-diagonal, one 2x2 block per phasor, stored per phasor.
struct SigmaBlock {
    double var_re, var_im, cov;
};

struct MeasurementModel {
    Eigen::SparseMatrix<double, Eigen::RowMajor> h;  // m x 2n
    std::vector<SigmaBlock> sigma;                   // one per phasor
    Eigen::VectorXd z;                               // length m
    int n = 0;

    int m() const { return static_cast<int>(z.size()); }
};

MeasurementModel build_model(const PowerSystem& sys, const PmuPlacement& placement,
                             const MeasurementSet& meas);

struct WlsReport {
    int iterations = 1;           // linear model: single solve
    double condition_estimate = 0.0;
};

// Exact WLS: full 2x2 covariance blocks inverted analytically, gain matrix
// H^T Sigma^-1 H factorized with a sparse SPD (LLT) decomposition.
StateVector solve_exact(const MeasurementModel& model, WlsReport* report = nullptr);

// Approximative WLS: identical pipeline with all covariances zeroed first.
StateVector solve_approximative(const MeasurementModel& model, WlsReport* report = nullptr);

// Labels each measurement set via solve_exact. Model topology is shared; only
// sigma and z change per sample.
std::vector<StateVector> label_dataset(const PowerSystem& sys, const PmuPlacement& placement,
                                       const std::vector<MeasurementSet>& samples);

}  // namespace fgse
