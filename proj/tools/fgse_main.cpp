#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fgse/dataset.hpp"
#include "fgse/experiments.hpp"
#include "fgse/factor_graph.hpp"
#include "fgse/gnn/checkpoint.hpp"
#include "fgse/gnn/model.hpp"
#include "fgse/powerflow.hpp"
#include "fgse/train/trainer.hpp"

namespace {

using namespace fgse;

uint64_t env_seed(uint64_t fallback) {
    const char* s = std::getenv("FGSE_SEED");
    if (!s || !*s) return fallback;
    try {
        return std::stoull(s);
    } catch (const std::exception&) {
        throw ValidationError("FGSE_SEED is not an unsigned integer: " + std::string(s));
    }
}

void refuse_overwrite(const std::string& path, bool force) {
    if (!force && std::filesystem::exists(path))
        throw ValidationError("refusing to overwrite existing file " + path +
                              " (pass --force to allow)");
}

gnn::GraphTopology topology_from_sample(const PowerSystem& sys, const Sample& sample,
                                        int width_b) {
    const PmuPlacement placement = maximal_placement(sys);
    const MeasurementModel model = build_model(sys, placement, sample.meas);
    const AugmentedFactorGraph g = build_graph(model, sample.meas, sys.n(), width_b);
    return gnn::build_topology(g);
}

void check_digest(const std::string& have, const std::string& want, const std::string& what) {
    if (have != want)
        throw ValidationError(what + " was produced for a different power system (digest " +
                              have + ", case digest " + want + ")");
}

int run(int argc, char** argv) {
    CLI::App app{"Factor-graph state estimation toolkit"};
    app.require_subcommand(1);

    // generate
    auto* gen_cmd = app.add_subcommand("generate", "Generate a labeled measurement dataset");
    std::string gen_case, gen_out;
    GenerateOptions gen_opt;
    gen_opt.seed_base = env_seed(1);
    double gen_variance = -1.0;
    bool gen_force = false;
    gen_cmd->add_option("--case", gen_case, "Power system case file")->required();
    gen_cmd->add_option("--count", gen_opt.count, "Number of samples")->required();
    gen_cmd->add_option("--seed", gen_opt.seed_base, "Base seed (default FGSE_SEED or 1)");
    gen_cmd->add_option("--spread", gen_opt.spread, "Load scaling spread in [0,1)");
    gen_cmd->add_option("--var-mag", gen_opt.var_mag, "Magnitude noise variance");
    gen_cmd->add_option("--var-ang", gen_opt.var_ang, "Angle noise variance");
    gen_cmd->add_option("--variance", gen_variance, "Sets both noise variances");
    gen_cmd->add_option("--jobs", gen_opt.jobs, "Parallel sample workers");
    gen_cmd->add_option("--out", gen_out, "Output JSONL path")->required();
    gen_cmd->add_flag("--force", gen_force, "Overwrite existing output");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a state estimation model");
    std::string tr_case, tr_data, tr_val, tr_out, tr_log;
    train::TrainConfig tr_cfg;
    gnn::GnnConfig tr_gnn;
    bool tr_force = false;
    tr_cfg.shuffle_seed = env_seed(7);
    train_cmd->add_option("--case", tr_case, "Power system case file")->required();
    train_cmd->add_option("--data", tr_data, "Training dataset JSONL")->required();
    train_cmd->add_option("--val", tr_val, "Validation dataset JSONL")->required();
    train_cmd->add_option("--out", tr_out, "Checkpoint output path")->required();
    train_cmd->add_option("--log", tr_log, "TrainLog CSV output path");
    train_cmd->add_option("--epochs", tr_cfg.max_epochs, "Maximum epochs");
    train_cmd->add_option("--lr", tr_cfg.lr, "Learning rate");
    train_cmd->add_option("--batch", tr_cfg.batch_size, "Minibatch size");
    train_cmd->add_option("--clip", tr_cfg.clip, "Global gradient-norm clip");
    train_cmd->add_option("--patience", tr_cfg.patience, "Epochs without improvement");
    train_cmd->add_option("--min-delta", tr_cfg.min_delta, "Plateau threshold");
    train_cmd->add_option("--seed", tr_cfg.shuffle_seed, "Shuffle/init seed");
    train_cmd->add_option("--embedding-size", tr_gnn.embedding_size, "Node embedding width");
    train_cmd->add_option("--layers", tr_gnn.num_layers, "Message passing iterations");
    train_cmd->add_flag("--force", tr_force, "Overwrite existing outputs");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    std::string ev_case, ev_data, ev_model;
    eval_cmd->add_option("--case", ev_case, "Power system case file")->required();
    eval_cmd->add_option("--data", ev_data, "Dataset JSONL")->required();
    eval_cmd->add_option("--model", ev_model, "Checkpoint path")->required();

    // stats
    auto* stats_cmd = app.add_subcommand("stats", "Augmented-graph statistics");
    std::string st_case;
    int st_width = 12;
    stats_cmd->add_option("--case", st_case, "Power system case file")->required();
    stats_cmd->add_option("--width-b", st_width, "Index encoding width");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "Per-sample solver vs inference timing");
    std::vector<std::string> be_cases;
    BenchOptions be_opt;
    bench_cmd->add_option("--case", be_cases, "Case file (repeatable)")->required();
    bench_cmd->add_option("--samples", be_opt.samples_per_run, "Samples per timed run");
    bench_cmd->add_option("--runs", be_opt.timed_runs, "Timed runs (median reported)");
    bench_cmd->add_option("--warmup", be_opt.warmup_runs, "Untimed warmup runs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    if (gen_cmd->parsed()) {
        if (gen_variance > 0.0) {
            gen_opt.var_mag = gen_variance;
            gen_opt.var_ang = gen_variance;
        }
        refuse_overwrite(gen_out, gen_force);
        const PowerSystem sys = load_case(gen_case);
        const Dataset ds = generate_dataset(sys, gen_opt);
        write_dataset(gen_out, ds);
        std::printf("wrote %zu samples to %s (discarded %d, clamped %d)\n", ds.samples.size(),
                    gen_out.c_str(), ds.manifest.discarded, ds.manifest.clamped);
    } else if (train_cmd->parsed()) {
        refuse_overwrite(tr_out, tr_force);
        if (!tr_log.empty()) refuse_overwrite(tr_log, tr_force);
        const PowerSystem sys = load_case(tr_case);
        const std::string digest = case_digest_hex(sys);
        const Dataset train_ds = read_dataset(tr_data);
        const Dataset val_ds = read_dataset(tr_val);
        check_digest(train_ds.manifest.system_digest, digest, "training dataset");
        check_digest(val_ds.manifest.system_digest, digest, "validation dataset");
        const gnn::GraphTopology topo =
            topology_from_sample(sys, train_ds.samples.at(0), tr_gnn.encoding_width);
        gnn::GnnParameters<float> params;
        params.configure(tr_gnn);
        params.init(tr_cfg.shuffle_seed);
        const auto train_gs = train::to_graph_samples<float>(train_ds);
        const auto val_gs = train::to_graph_samples<float>(val_ds);
        const train::TrainLog log = train::train(params, topo, train_gs, val_gs, tr_cfg);
        gnn::save_checkpoint(tr_out, params, digest);
        if (!tr_log.empty()) train::write_train_log(tr_log, log);
        std::printf("trained %d epochs, best validation loss %.9g at epoch %d (%s)\n",
                    static_cast<int>(log.rows.size()), log.best_val, log.best_epoch,
                    log.stop_reason.c_str());
    } else if (eval_cmd->parsed()) {
        const PowerSystem sys = load_case(ev_case);
        const std::string digest = case_digest_hex(sys);
        const Dataset ds = read_dataset(ev_data);
        check_digest(ds.manifest.system_digest, digest, "dataset");
        gnn::GnnParameters<float> params;
        const std::string ckpt_digest = gnn::load_checkpoint(ev_model, params);
        check_digest(ckpt_digest, digest, "checkpoint");
        const gnn::GraphTopology topo =
            topology_from_sample(sys, ds.samples.at(0), params.cfg.encoding_width);
        train::NetworkCache<float> cache(&params, topo);
        const auto gs = train::to_graph_samples<float>(ds);
        const double mse = train::evaluate(cache, gs, 32);
        const double baseline = approx_baseline_mse(sys, ds.samples);
        std::printf("gnn_mse=%.9g approx_baseline_mse=%.9g samples=%zu\n", mse, baseline,
                    ds.samples.size());
    } else if (stats_cmd->parsed()) {
        const PowerSystem sys = load_case(st_case);
        const PmuPlacement placement = maximal_placement(sys);
        const OperatingPoint op =
            solve_power_flow(sys, nominal_injections(sys), PowerFlowOptions{});
        if (!op.converged) throw NumericalError("nominal power flow did not converge");
        const MeasurementSet meas = synthesize_measurements(sys, op, placement, 1e-4, 1e-4, 1);
        const MeasurementModel model = build_model(sys, placement, meas);
        const AugmentedFactorGraph g = build_graph(model, meas, sys.n(), st_width);
        const GraphStats s = graph_stats(g);
        std::printf("system,nodes,edges,avg_degree,avg_path_length,avg_clustering,redundancy\n");
        std::printf("%s,%d,%lld,%.9g,%.9g,%.9g,%.9g\n", sys.name.c_str(), s.nodes, s.edges,
                    s.avg_degree, s.avg_path_length, s.avg_clustering, s.redundancy);
    } else if (bench_cmd->parsed()) {
        std::vector<BenchRow> rows;
        for (const auto& path : be_cases)
            rows.push_back(bench_inference(load_case(path), gnn::GnnConfig{}, be_opt));
        std::fputs(bench_csv(rows).c_str(), stdout);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const NumericalError& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
