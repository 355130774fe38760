#pragma once

#include <string>
#include <vector>

#include "fgse/dataset.hpp"
#include "fgse/train/trainer.hpp"

namespace fgse {

// One trained size in the sample-efficiency sweep. The baseline is the mean
// squared difference between the approximative-WLS state and the exact-WLS
// label on the shared test set; it does not depend on the training size.
struct SweepRow {
    int size = 0;
    double test_mse = 0.0;
    double baseline_mse = 0.0;
    int best_epoch = 0;
    std::string stop_reason;
};

struct SweepOptions {
    std::vector<int> sizes = {10, 100, 1000};
    int val_count = 100;
    int test_count = 100;
    uint64_t data_seed = 1000;
    uint64_t init_seed = 42;
    double spread = 0.5;
    double var_mag = 0.5;
    double var_ang = 0.5;
    int jobs = 1;
};

// Trains one model per size on nested subsets of a shared pool and evaluates
// on a shared test set. Train/val/test seed ranges are disjoint.
std::vector<SweepRow> sample_efficiency_sweep(const PowerSystem& sys,
                                              const gnn::GnnConfig& gnn_cfg,
                                              const train::TrainConfig& train_cfg,
                                              const SweepOptions& opt);

// Mean squared difference between solve_approximative and the stored labels.
double approx_baseline_mse(const PowerSystem& sys, const std::vector<Sample>& samples);

// Mean squared error of each solver against the true power-flow states over
// freshly sampled noisy snapshots; used to compare exact vs approximative.
struct SolverComparison {
    double exact_mse = 0.0;
    double approx_mse = 0.0;
    int samples = 0;
};
SolverComparison compare_solvers(const PowerSystem& sys, int samples, double var_mag,
                                 double var_ang, double spread, uint64_t seed_base);

struct BenchRow {
    std::string system;
    int n = 0;
    long long graph_nodes = 0;
    double wls_us = 0.0;  // median per-sample exact-WLS solve time
    double gnn_us = 0.0;  // median per-sample eval-mode inference time
    double ratio = 0.0;
};

struct BenchOptions {
    int samples_per_run = 100;
    int warmup_runs = 3;
    int timed_runs = 5;
    uint64_t seed = 99;
};

BenchRow bench_inference(const PowerSystem& sys, const gnn::GnnConfig& gnn_cfg,
                         const BenchOptions& opt);

// Ordinary least-squares R^2 of y against x.
double linear_fit_r2(const std::vector<double>& x, const std::vector<double>& y);

std::string sweep_csv(const std::vector<SweepRow>& rows);
std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace fgse
