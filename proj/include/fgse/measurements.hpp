#pragma once

#include <cstdint>
#include <vector>

#include "fgse/grid_model.hpp"
#include "fgse/powerflow.hpp"

namespace fgse {

enum class PhasorKind { BusVoltage, BranchCurrentFrom, BranchCurrentTo };

struct PolarPhasor {
    PhasorKind kind = PhasorKind::BusVoltage;
    int location = 0;  // bus id for voltages, branch index for currents
    double magnitude = 0.0;
    double angle = 0.0;  // radians
    double var_mag = 0.0;
    double var_ang = 0.0;
};

struct RectMeasurement {
    double z_re = 0.0;
    double z_im = 0.0;
    double var_re = 0.0;
    double var_im = 0.0;
    double cov = 0.0;
};

// Phasor order: bus voltages by bus id, then branch currents by branch index
// with the from side before the to side.
struct MeasurementSet {
    std::vector<PolarPhasor> polar;
    std::vector<RectMeasurement> rect;
    int clamp_count = 0;  // noisy magnitudes clamped at zero

    size_t size() const { return polar.size(); }
};

std::vector<PolarPhasor> true_phasors(const PowerSystem& sys, const OperatingPoint& op,
                                      const PmuPlacement& placement);

// Adds independent zero-mean Gaussian noise to each magnitude and angle and
// records the variances on the phasor. Negative noisy magnitudes are clamped
// to zero; the clamp count is returned through clamp_count.
std::vector<PolarPhasor> add_noise(const std::vector<PolarPhasor>& phasors, double var_mag,
                                   double var_ang, uint64_t rng_seed, int* clamp_count = nullptr);

// First-order propagation of (var_mag, var_ang) through M*exp(j*theta).
// The magnitude entering the variance formulas is floored at both
// kMinPropagationMag and sqrt(var_mag): a reported magnitude below its own
// noise scale carries no angle-direction information, and evaluating
// M^2*var_ang there would understate the variance so badly that the
// covariance block becomes near-singular (or exactly singular for a clamped
// zero magnitude).
constexpr double kMinPropagationMag = 1e-3;
RectMeasurement to_rectangular(const PolarPhasor& p);

MeasurementSet make_measurement_set(const std::vector<PolarPhasor>& noisy);

// Convenience: true phasors -> noise -> rectangular conversion.
MeasurementSet synthesize_measurements(const PowerSystem& sys, const OperatingPoint& op,
                                       const PmuPlacement& placement, double var_mag,
                                       double var_ang, uint64_t rng_seed);

}  // namespace fgse
