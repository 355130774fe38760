#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "fgse/dataset.hpp"
#include "fgse/factor_graph.hpp"
#include "fgse/gnn/model.hpp"
#include "fgse/train/trainer.hpp"
#include "test_util.hpp"

using fgse::Dataset;
using fgse::GenerateOptions;
using fgse::NumericalError;
using fgse::ParseError;
using fgse::ValidationError;
using fgse::train::NetworkCache;
using fgse::train::TrainConfig;
using fgse::train::TrainLog;

namespace {

GenerateOptions gen_options(int count, uint64_t seed_base, int jobs = 1) {
    GenerateOptions opt;
    opt.count = count;
    opt.seed_base = seed_base;
    opt.jobs = jobs;
    return opt;
}

fgse::gnn::GraphTopology topology_from(const fgse::PowerSystem& sys,
                                       const fgse::MeasurementSet& meas) {
    const auto placement = fgse::maximal_placement(sys);
    const auto model = fgse::build_model(sys, placement, meas);
    return fgse::gnn::build_topology(fgse::build_graph(model, meas, sys.n()));
}

fgse::gnn::GnnConfig small_config(const fgse::gnn::GraphTopology& topo) {
    fgse::gnn::GnnConfig c;
    c.embedding_size = 8;
    c.num_layers = 2;
    c.encoding_width = topo.width_b;
    return c;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(static_cast<bool>(is));
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("factor features encode measurements in graph order") {
    fgse::MeasurementSet ms;
    fgse::PolarPhasor v, c;
    v.kind = fgse::PhasorKind::BusVoltage;
    c.kind = fgse::PhasorKind::BranchCurrentFrom;
    ms.polar = {v, c};
    ms.rect = {{2.0, 3.0, 4.0, 5.0, 6.0}, {7.0, 8.0, 9.0, 10.0, 11.0}};

    const auto f = fgse::train::sample_features<double>(ms);
    REQUIRE(f.rows() == 4);
    REQUIRE(f.cols() == 7);
    const double expected[4][7] = {
        {2.0, 4.0, 6.0, 1.0, 0.0, 0.0, 0.0},   // voltage, real part
        {3.0, 5.0, 6.0, 0.0, 1.0, 0.0, 0.0},   // voltage, imaginary part
        {7.0, 9.0, 11.0, 0.0, 0.0, 1.0, 0.0},  // current, real part
        {8.0, 10.0, 11.0, 0.0, 0.0, 0.0, 1.0},
    };
    for (int r = 0; r < 4; ++r)
        for (int col = 0; col < 7; ++col) CHECK(f(r, col) == expected[r][col]);
}

TEST_CASE("dataset generation is deterministic and job-count invariant") {
    const auto sys = load_fixture("two_bus");
    const Dataset a = fgse::generate_dataset(sys, gen_options(12, 5));
    const Dataset b = fgse::generate_dataset(sys, gen_options(12, 5));
    const Dataset c = fgse::generate_dataset(sys, gen_options(12, 5, 2));

    fgse::write_dataset("/tmp/fgse_ds_a.jsonl", a);
    fgse::write_dataset("/tmp/fgse_ds_b.jsonl", b);
    fgse::write_dataset("/tmp/fgse_ds_c.jsonl", c);
    CHECK(slurp("/tmp/fgse_ds_a.jsonl") == slurp("/tmp/fgse_ds_b.jsonl"));
    CHECK(slurp("/tmp/fgse_ds_a.jsonl") == slurp("/tmp/fgse_ds_c.jsonl"));
    CHECK(slurp(fgse::manifest_path("/tmp/fgse_ds_a.jsonl")) ==
          slurp(fgse::manifest_path("/tmp/fgse_ds_c.jsonl")));

    REQUIRE(a.samples.size() == 12);
    CHECK(a.manifest.system_name == sys.name);
    CHECK(a.manifest.system_digest == fgse::case_digest_hex(sys));
    CHECK(a.manifest.count == 12);
    CHECK(a.manifest.seed_base == 5);
    CHECK(a.manifest.var_mag == 0.5);
    CHECK(a.manifest.spread == 0.5);

    const auto placement = fgse::maximal_placement(sys);
    uint64_t prev = 0;
    for (const auto& s : a.samples) {
        CHECK(s.meas.size() == static_cast<size_t>(placement.phasor_count));
        CHECK(s.label.size() == 2 * sys.n());
        CHECK(s.seed >= 5);
        CHECK(s.seed > prev);
        CHECK(s.injections_spread == 0.5);
        prev = s.seed;
    }
}

TEST_CASE("sample seeds partition across different bases") {
    const auto sys = load_fixture("two_bus");
    const Dataset a = fgse::generate_dataset(sys, gen_options(10, 1));
    const Dataset b = fgse::generate_dataset(sys, gen_options(10, 1000));
    std::set<uint64_t> seeds;
    for (const auto& s : a.samples) seeds.insert(s.seed);
    for (const auto& s : b.samples) CHECK(seeds.count(s.seed) == 0);
}

TEST_CASE("datasets round-trip through files") {
    const auto sys = load_fixture("two_bus");
    const Dataset out = fgse::generate_dataset(sys, gen_options(6, 42));
    fgse::write_dataset("/tmp/fgse_ds_rt.jsonl", out);
    const Dataset in = fgse::read_dataset("/tmp/fgse_ds_rt.jsonl");

    CHECK(in.manifest.system_digest == out.manifest.system_digest);
    CHECK(in.manifest.count == out.manifest.count);
    CHECK(in.manifest.seed_base == out.manifest.seed_base);
    CHECK(in.manifest.toolkit_version == out.manifest.toolkit_version);
    REQUIRE(in.samples.size() == out.samples.size());
    for (size_t i = 0; i < out.samples.size(); ++i) {
        const auto& x = out.samples[i];
        const auto& y = in.samples[i];
        CHECK(y.seed == x.seed);
        CHECK(y.injections_spread == x.injections_spread);
        REQUIRE(y.meas.size() == x.meas.size());
        for (size_t p = 0; p < x.meas.size(); ++p) {
            CHECK(y.meas.polar[p].kind == x.meas.polar[p].kind);
            CHECK(y.meas.polar[p].location == x.meas.polar[p].location);
            CHECK(y.meas.polar[p].magnitude == x.meas.polar[p].magnitude);
            CHECK(y.meas.rect[p].z_re == x.meas.rect[p].z_re);
            CHECK(y.meas.rect[p].var_re == x.meas.rect[p].var_re);
            CHECK(y.meas.rect[p].cov == x.meas.rect[p].cov);
        }
        REQUIRE(y.label.size() == x.label.size());
        for (Eigen::Index k = 0; k < x.label.size(); ++k) CHECK(y.label[k] == x.label[k]);
    }

    // a second serialization of the parsed dataset is byte-identical
    fgse::write_dataset("/tmp/fgse_ds_rt2.jsonl", in);
    CHECK(slurp("/tmp/fgse_ds_rt.jsonl") == slurp("/tmp/fgse_ds_rt2.jsonl"));
}

TEST_CASE("malformed dataset files are rejected") {
    const auto sys = load_fixture("two_bus");
    const Dataset out = fgse::generate_dataset(sys, gen_options(3, 7));

    SUBCASE("missing manifest") {
        fgse::write_dataset("/tmp/fgse_ds_nomani.jsonl", out);
        std::remove(fgse::manifest_path("/tmp/fgse_ds_nomani.jsonl").c_str());
        CHECK_THROWS_AS(fgse::read_dataset("/tmp/fgse_ds_nomani.jsonl"), ValidationError);
    }

    SUBCASE("unparsable record") {
        fgse::write_dataset("/tmp/fgse_ds_bad.jsonl", out);
        std::ofstream os("/tmp/fgse_ds_bad.jsonl", std::ios::app);
        os << "{not json\n";
        os.close();
        CHECK_THROWS_AS(fgse::read_dataset("/tmp/fgse_ds_bad.jsonl"), ParseError);
    }

    SUBCASE("sample count disagrees with the manifest") {
        fgse::write_dataset("/tmp/fgse_ds_short.jsonl", out);
        const std::string all = slurp("/tmp/fgse_ds_short.jsonl");
        const size_t second_last = all.rfind('\n', all.size() - 2);
        std::ofstream os("/tmp/fgse_ds_short.jsonl", std::ios::binary | std::ios::trunc);
        os << all.substr(0, second_last + 1);
        os.close();
        CHECK_THROWS_AS(fgse::read_dataset("/tmp/fgse_ds_short.jsonl"), ValidationError);
    }
}

TEST_CASE("generation aborts when attempts keep failing") {
    auto sys = load_fixture("two_bus");
    for (auto& bus : sys.buses)
        if (bus.kind == fgse::BusKind::PQ) bus.p_load = 500.0;  // far beyond transferable power
    CHECK_THROWS_AS(fgse::generate_dataset(sys, gen_options(10, 1)), NumericalError);
}

TEST_CASE("evaluate matches per-graph losses") {
    const auto sys = load_fixture("two_bus");
    const Dataset ds = fgse::generate_dataset(sys, gen_options(6, 30));
    const auto topo = topology_from(sys, ds.samples[0].meas);
    const auto gs = fgse::train::to_graph_samples<double>(ds);

    fgse::gnn::GnnParameters<double> params;
    params.configure(small_config(topo));
    params.init(13);

    NetworkCache<double> cache(&params, topo);
    const double batched = fgse::train::evaluate(cache, gs, 4);

    auto& single = cache.get(1);
    double manual = 0.0;
    for (const auto& s : gs) {
        single.load_graph(0, s.features, s.label);
        manual += single.forward(false);
    }
    manual /= static_cast<double>(gs.size());
    CHECK(batched == doctest::Approx(manual).epsilon(1e-12));

    const std::vector<fgse::train::GraphSample<double>> empty;
    CHECK_THROWS_AS(fgse::train::evaluate(cache, empty, 4), ValidationError);
}

TEST_CASE("training is deterministic and accepts a shared network cache") {
    const auto sys = load_fixture("two_bus");
    const Dataset ds = fgse::generate_dataset(sys, gen_options(16, 60));
    const auto topo = topology_from(sys, ds.samples[0].meas);
    auto gs = fgse::train::to_graph_samples<float>(ds);
    const std::vector<fgse::train::GraphSample<float>> train_set(gs.begin(), gs.begin() + 12);
    const std::vector<fgse::train::GraphSample<float>> val_set(gs.begin() + 12, gs.end());

    TrainConfig cfg;
    cfg.lr = 3e-3;
    cfg.batch_size = 4;
    cfg.max_epochs = 5;
    cfg.min_delta = 0.0;  // a zero threshold disables the plateau rule
    cfg.patience = 100;

    fgse::gnn::GnnParameters<float> params;
    params.configure(small_config(topo));
    params.init(5);
    const TrainLog a = fgse::train::train(params, topo, train_set, val_set, cfg);

    params.configure(small_config(topo));
    params.init(5);
    NetworkCache<float> shared(&params, topo);
    const TrainLog b = fgse::train::train(params, topo, train_set, val_set, cfg, &shared);

    REQUIRE(a.rows.size() == b.rows.size());
    for (size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].epoch == b.rows[i].epoch);
        CHECK(a.rows[i].train_loss == b.rows[i].train_loss);
        CHECK(a.rows[i].val_loss == b.rows[i].val_loss);
    }
    CHECK(a.best_epoch == b.best_epoch);
    CHECK(a.best_val == b.best_val);
    CHECK(a.stop_reason == b.stop_reason);
}

TEST_CASE("stopping rules") {
    const auto sys = load_fixture("two_bus");
    const Dataset ds = fgse::generate_dataset(sys, gen_options(10, 90));
    const auto topo = topology_from(sys, ds.samples[0].meas);
    auto gs = fgse::train::to_graph_samples<float>(ds);
    const std::vector<fgse::train::GraphSample<float>> train_set(gs.begin(), gs.begin() + 8);
    const std::vector<fgse::train::GraphSample<float>> val_set(gs.begin() + 8, gs.end());

    fgse::gnn::GnnParameters<float> params;

    SUBCASE("plateau fires after window consecutive small changes") {
        params.configure(small_config(topo));
        params.init(3);
        TrainConfig cfg;
        cfg.batch_size = 4;
        cfg.max_epochs = 50;
        cfg.min_delta = 1e18;  // every change counts as small
        cfg.patience = 100;
        const TrainLog log = fgse::train::train(params, topo, train_set, val_set, cfg);
        CHECK(log.rows.size() == 6);  // window of 5 plus the first epoch
        CHECK(log.stop_reason == "plateau");
    }

    SUBCASE("patience fires without a new validation minimum") {
        params.configure(small_config(topo));
        params.init(3);
        TrainConfig cfg;
        cfg.batch_size = 4;
        cfg.max_epochs = 50;
        cfg.min_delta = 0.0;
        cfg.patience = 0;  // stop as soon as the mechanism engages
        const TrainLog log = fgse::train::train(params, topo, train_set, val_set, cfg);
        CHECK(log.rows.size() == 1);
        CHECK(log.stop_reason == "patience");
    }

    SUBCASE("epoch cap and best-epoch bookkeeping") {
        params.configure(small_config(topo));
        params.init(3);
        TrainConfig cfg;
        cfg.batch_size = 4;
        cfg.max_epochs = 3;
        cfg.min_delta = 0.0;
        cfg.patience = 100;
        const TrainLog log = fgse::train::train(params, topo, train_set, val_set, cfg);
        CHECK(log.rows.size() == 3);
        CHECK(log.stop_reason == "max_epochs");
        REQUIRE(log.best_epoch >= 1);
        REQUIRE(log.best_epoch <= 3);
        CHECK(log.rows[log.best_epoch - 1].val_loss == log.best_val);
        for (const auto& r : log.rows) CHECK(r.val_loss >= log.best_val);
    }
}

TEST_CASE("training restores the parameters of the best validation epoch") {
    const auto sys = load_fixture("two_bus");
    const Dataset ds = fgse::generate_dataset(sys, gen_options(12, 120));
    const auto topo = topology_from(sys, ds.samples[0].meas);
    auto gs = fgse::train::to_graph_samples<float>(ds);
    const std::vector<fgse::train::GraphSample<float>> train_set(gs.begin(), gs.begin() + 8);
    const std::vector<fgse::train::GraphSample<float>> val_set(gs.begin() + 8, gs.end());

    fgse::gnn::GnnParameters<float> params;
    params.configure(small_config(topo));
    params.init(8);

    TrainConfig cfg;
    cfg.lr = 3e-3;
    cfg.batch_size = 4;
    cfg.max_epochs = 6;
    cfg.min_delta = 0.0;
    cfg.patience = 100;
    const TrainLog log = fgse::train::train(params, topo, train_set, val_set, cfg);

    NetworkCache<float> cache(&params, topo);
    const double val_now = fgse::train::evaluate(cache, val_set, cfg.batch_size);
    CHECK(val_now == doctest::Approx(log.best_val).epsilon(1e-12));
}

TEST_CASE("training reduces the loss on a hundred-sample set") {
    const auto sys = load_fixture("two_bus");
    const Dataset ds = fgse::generate_dataset(sys, gen_options(120, 200));
    const auto topo = topology_from(sys, ds.samples[0].meas);
    auto gs = fgse::train::to_graph_samples<float>(ds);
    const std::vector<fgse::train::GraphSample<float>> train_set(gs.begin(), gs.begin() + 100);
    const std::vector<fgse::train::GraphSample<float>> val_set(gs.begin() + 100, gs.end());

    fgse::gnn::GnnParameters<float> params;
    params.configure(small_config(topo));
    params.init(1);

    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.batch_size = 32;
    cfg.max_epochs = 10;
    cfg.min_delta = 0.0;
    cfg.patience = 100;
    const TrainLog log = fgse::train::train(params, topo, train_set, val_set, cfg);
    REQUIRE(log.rows.size() == 10);
    CHECK(log.rows.back().train_loss < log.rows.front().train_loss);
}

TEST_CASE("non-finite losses abort training with a diagnostic") {
    const auto sys = load_fixture("two_bus");
    const Dataset ds = fgse::generate_dataset(sys, gen_options(8, 300));
    const auto topo = topology_from(sys, ds.samples[0].meas);
    auto gs = fgse::train::to_graph_samples<float>(ds);
    std::vector<fgse::train::GraphSample<float>> train_set(gs.begin(), gs.begin() + 4);
    const std::vector<fgse::train::GraphSample<float>> val_set(gs.begin() + 4, gs.end());
    train_set[0].label(0, 0) = std::numeric_limits<float>::quiet_NaN();

    fgse::gnn::GnnParameters<float> params;
    params.configure(small_config(topo));
    params.init(4);

    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.max_epochs = 2;
    CHECK_THROWS_AS(fgse::train::train(params, topo, train_set, val_set, cfg), NumericalError);
}

TEST_CASE("train log files are canonical") {
    TrainLog log;
    log.rows = {{1, 0.5, 0.25}, {2, 0.125, 0.0625}};
    log.best_epoch = 2;
    log.best_val = 0.0625;
    log.stop_reason = "max_epochs";

    fgse::train::write_train_log("/tmp/fgse_trainlog.csv", log);
    const std::string expected =
        "epoch,train_loss,val_loss\n"
        "1,0.5,0.25\n"
        "2,0.125,0.0625\n"
        "# best_epoch=2 best_val=0.0625 stop=max_epochs\n";
    CHECK(slurp("/tmp/fgse_trainlog.csv") == expected);

    fgse::train::write_train_log("/tmp/fgse_trainlog2.csv", log);
    CHECK(slurp("/tmp/fgse_trainlog.csv") == slurp("/tmp/fgse_trainlog2.csv"));
}
