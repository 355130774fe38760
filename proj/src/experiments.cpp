#include "fgse/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

#include "fgse/factor_graph.hpp"
#include "fgse/powerflow.hpp"

namespace fgse {

namespace {

gnn::GraphTopology topology_for(const PowerSystem& sys, const PmuPlacement& placement,
                                const MeasurementSet& meas, int width_b) {
    const MeasurementModel model = build_model(sys, placement, meas);
    const AugmentedFactorGraph g = build_graph(model, meas, sys.n(), width_b);
    return gnn::build_topology(g);
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t k = v.size() / 2;
    return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

}  // namespace

double approx_baseline_mse(const PowerSystem& sys, const std::vector<Sample>& samples) {
    if (samples.empty()) throw ValidationError("baseline requires at least one sample");
    const PmuPlacement placement = maximal_placement(sys);
    double total = 0.0;
    for (const auto& s : samples) {
        const StateVector x = solve_approximative(build_model(sys, placement, s.meas));
        total += (x - s.label).squaredNorm() / static_cast<double>(x.size());
    }
    return total / static_cast<double>(samples.size());
}

SolverComparison compare_solvers(const PowerSystem& sys, int samples, double var_mag,
                                 double var_ang, double spread, uint64_t seed_base) {
    if (samples <= 0) throw ValidationError("sample count must be positive");
    const PmuPlacement placement = maximal_placement(sys);
    SolverComparison cmp;
    uint64_t attempt = 0;
    while (cmp.samples < samples) {
        const uint64_t seed = seed_base + attempt++;
        if (attempt > static_cast<uint64_t>(samples) * 2 + 100)
            throw NumericalError("solver comparison could not collect enough converged samples");
        const InjectionOverrides inj = sample_injections(sys, seed * 2, spread);
        OperatingPoint op;
        try {
            op = solve_power_flow(sys, inj, PowerFlowOptions{});
        } catch (const NumericalError&) {
            continue;
        }
        if (!op.converged) continue;
        const MeasurementSet meas =
            synthesize_measurements(sys, op, placement, var_mag, var_ang, seed * 2 + 1);
        const MeasurementModel model = build_model(sys, placement, meas);
        const StateVector truth = state_from_operating_point(op);
        const StateVector xe = solve_exact(model);
        const StateVector xa = solve_approximative(model);
        cmp.exact_mse += (xe - truth).squaredNorm() / static_cast<double>(truth.size());
        cmp.approx_mse += (xa - truth).squaredNorm() / static_cast<double>(truth.size());
        ++cmp.samples;
    }
    cmp.exact_mse /= cmp.samples;
    cmp.approx_mse /= cmp.samples;
    return cmp;
}

std::vector<SweepRow> sample_efficiency_sweep(const PowerSystem& sys,
                                              const gnn::GnnConfig& gnn_cfg,
                                              const train::TrainConfig& train_cfg,
                                              const SweepOptions& opt) {
    if (opt.sizes.empty()) throw ValidationError("sweep needs at least one training size");
    const int pool = *std::max_element(opt.sizes.begin(), opt.sizes.end());

    GenerateOptions gen;
    gen.spread = opt.spread;
    gen.var_mag = opt.var_mag;
    gen.var_ang = opt.var_ang;
    gen.jobs = opt.jobs;
    gen.count = pool;
    gen.seed_base = opt.data_seed;
    const Dataset train_pool = generate_dataset(sys, gen);
    gen.count = opt.val_count;
    gen.seed_base = opt.data_seed + 10000019;
    const Dataset val_set = generate_dataset(sys, gen);
    gen.count = opt.test_count;
    gen.seed_base = opt.data_seed + 20000033;
    const Dataset test_set = generate_dataset(sys, gen);

    const PmuPlacement placement = maximal_placement(sys);
    const gnn::GraphTopology topo =
        topology_for(sys, placement, train_pool.samples[0].meas, gnn_cfg.encoding_width);

    const auto pool_gs = train::to_graph_samples<float>(train_pool);
    const auto val_gs = train::to_graph_samples<float>(val_set);
    const auto test_gs = train::to_graph_samples<float>(test_set);
    const double baseline = approx_baseline_mse(sys, test_set.samples);

    gnn::GnnParameters<float> params;
    params.configure(gnn_cfg);
    train::NetworkCache<float> cache(&params, topo);

    std::vector<SweepRow> rows;
    for (int size : opt.sizes) {
        if (size <= 0 || size > pool) throw ValidationError("invalid training size in sweep");
        params.configure(gnn_cfg);
        params.init(opt.init_seed);
        const std::vector<train::GraphSample<float>> subset(pool_gs.begin(),
                                                            pool_gs.begin() + size);
        const train::TrainLog log =
            train::train(params, topo, subset, val_gs, train_cfg, &cache);
        SweepRow row;
        row.size = size;
        row.test_mse = train::evaluate(cache, test_gs, train_cfg.batch_size);
        row.baseline_mse = baseline;
        row.best_epoch = log.best_epoch;
        row.stop_reason = log.stop_reason;
        rows.push_back(row);
    }
    return rows;
}

BenchRow bench_inference(const PowerSystem& sys, const gnn::GnnConfig& gnn_cfg,
                         const BenchOptions& opt) {
    const PmuPlacement placement = maximal_placement(sys);
    const OperatingPoint op = solve_power_flow(sys, nominal_injections(sys), PowerFlowOptions{});
    if (!op.converged) throw NumericalError("nominal power flow did not converge for benchmark");
    const MeasurementSet meas =
        synthesize_measurements(sys, op, placement, 1e-4, 1e-4, opt.seed);
    const MeasurementModel model = build_model(sys, placement, meas);
    const AugmentedFactorGraph g = build_graph(model, meas, sys.n(), gnn_cfg.encoding_width);
    const gnn::GraphTopology topo = gnn::build_topology(g);

    gnn::GnnParameters<float> params;
    params.configure(gnn_cfg);
    params.init(opt.seed);
    gnn::GnnNetwork<float> net(&params, topo, 1);
    const gnn::Mat<float> features = gnn::factor_feature_matrix<float>(g);
    net.load_graph_features_only(0, features);
    net.g.train_mode = false;

    using clock = std::chrono::steady_clock;
    volatile double sink = 0.0;

    auto time_wls = [&]() {
        const auto t0 = clock::now();
        for (int i = 0; i < opt.samples_per_run; ++i) sink = sink + solve_exact(model)[0];
        return std::chrono::duration<double, std::micro>(clock::now() - t0).count();
    };
    auto time_gnn = [&]() {
        const auto t0 = clock::now();
        for (int i = 0; i < opt.samples_per_run; ++i) {
            net.g.run_forward();
            sink = sink + static_cast<double>(net.prediction(0)(0, 0));
        }
        return std::chrono::duration<double, std::micro>(clock::now() - t0).count();
    };

    for (int i = 0; i < opt.warmup_runs; ++i) {
        time_wls();
        time_gnn();
    }
    std::vector<double> wls_runs, gnn_runs;
    for (int i = 0; i < opt.timed_runs; ++i) {
        wls_runs.push_back(time_wls());
        gnn_runs.push_back(time_gnn());
    }

    BenchRow row;
    row.system = sys.name;
    row.n = sys.n();
    row.graph_nodes = g.num_vars() + g.num_factors();
    row.wls_us = median(wls_runs) / opt.samples_per_run;
    row.gnn_us = median(gnn_runs) / opt.samples_per_run;
    row.ratio = row.wls_us / row.gnn_us;
    return row;
}

double linear_fit_r2(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 3)
        throw ValidationError("linear fit needs at least three points");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double denom = n * sxx - sx * sx;
    if (denom <= 0.0) throw ValidationError("degenerate abscissa in linear fit");
    const double slope = (n * sxy - sx * sy) / denom;
    const double intercept = (sy - slope * sx) / n;
    double ss_res = 0, ss_tot = 0;
    const double mean_y = sy / n;
    for (size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (slope * x[i] + intercept);
        ss_res += r * r;
        ss_tot += (y[i] - mean_y) * (y[i] - mean_y);
    }
    if (ss_tot <= 0.0) return 1.0;
    return 1.0 - ss_res / ss_tot;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = "size,test_mse,baseline_mse,best_epoch,stop_reason\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%d,%s\n", r.size, r.test_mse,
                      r.baseline_mse, r.best_epoch, r.stop_reason.c_str());
        out += buf;
    }
    return out;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::string out = "system,n,graph_nodes,wls_us,gnn_us,ratio\n";
    char buf[200];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%lld,%.9g,%.9g,%.9g\n", r.system.c_str(), r.n,
                      r.graph_nodes, r.wls_us, r.gnn_us, r.ratio);
        out += buf;
    }
    return out;
}

}  // namespace fgse
