#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fgse/grid_model.hpp"
#include "fgse/measurements.hpp"
#include "fgse/wls_se.hpp"

namespace fgse {

// One labeled sample: a noisy measurement snapshot of a random operating
// point, labeled by the exact WLS solution.
struct Sample {
    uint64_t seed = 0;
    double injections_spread = 0.0;
    MeasurementSet meas;
    StateVector label;
};

struct DatasetManifest {
    std::string system_name;
    std::string system_digest;
    int count = 0;
    double var_mag = 0.0;
    double var_ang = 0.0;
    double spread = 0.0;
    uint64_t seed_base = 0;
    int discarded = 0;  // attempts rejected for non-convergence
    int clamped = 0;    // negative noisy magnitudes clamped to zero
    std::string toolkit_version = "fgse 1.0";
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<Sample> samples;
};

struct GenerateOptions {
    int count = 0;
    uint64_t seed_base = 1;
    double spread = 0.5;
    double var_mag = 0.5;
    double var_ang = 0.5;
    int jobs = 1;
};

// Draws operating points (attempt t uses seed seed_base + t), discards
// non-convergent power flows, adds measurement noise, and labels each sample
// with solve_exact. Output is independent of the job count. Throws
// NumericalError if more than 10% of attempts are discarded.
Dataset generate_dataset(const PowerSystem& sys, const GenerateOptions& opt);

std::string manifest_path(const std::string& dataset_path);

// JSON-lines samples plus a sidecar manifest; byte-deterministic.
void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

}  // namespace fgse
