#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "fgse/grid_model.hpp"

namespace fgse {

struct OperatingPoint {
    std::vector<double> v_mag;
    std::vector<double> v_ang;
    bool converged = false;
    int iterations = 0;
    double max_mismatch = 0.0;

    std::complex<double> voltage(int bus) const {
        return std::polar(v_mag[bus], v_ang[bus]);
    }
};

// Per-bus (P,Q) overrides applied on top of the case data before solving.
struct InjectionOverrides {
    std::vector<double> p_load;
    std::vector<double> q_load;
    std::vector<double> p_gen;
};

InjectionOverrides nominal_injections(const PowerSystem& sys);

// Each PQ bus load is scaled by an independent factor uniform in
// [1-spread, 1+spread] (same factor for P and Q); PV generation is scaled by
// the aggregate load-scaling factor to keep the dispatch roughly balanced.
InjectionOverrides sample_injections(const PowerSystem& sys, uint64_t rng_seed, double spread);

struct PowerFlowOptions {
    double tol = 1e-8;
    int max_iter = 20;
};

// Newton-Raphson in polar coordinates. Slack holds (v_setpoint, angle 0),
// PV buses hold (P, v_setpoint), PQ buses hold (P, Q).
OperatingPoint solve_power_flow(const PowerSystem& sys, const InjectionOverrides& inj,
                                const PowerFlowOptions& opt = {});

// Dense bus admittance matrix entries as triplets (row, col, value).
struct YbusEntry {
    int row, col;
    std::complex<double> y;
};
std::vector<YbusEntry> build_ybus(const PowerSystem& sys);

}  // namespace fgse
