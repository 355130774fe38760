#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "fgse/dataset.hpp"
#include "fgse/gnn/model.hpp"

namespace fgse::train {

// A dataset sample reduced to what the network consumes: the factor feature
// matrix (2 rows per phasor) and the labeled state as a column.
template <typename T>
struct GraphSample {
    gnn::Mat<T> features;
    gnn::Mat<T> label;
};

// Factor features in measurement order, matching the augmented-graph layout:
// [z component, variance component, covariance, one-hot(V_re, V_im, I_re, I_im)].
template <typename T>
gnn::Mat<T> sample_features(const MeasurementSet& meas) {
    gnn::Mat<T> f(static_cast<Eigen::Index>(2 * meas.size()), 7);
    f.setZero();
    for (size_t i = 0; i < meas.size(); ++i) {
        const RectMeasurement& r = meas.rect[i];
        const bool voltage = meas.polar[i].kind == PhasorKind::BusVoltage;
        const Eigen::Index re = static_cast<Eigen::Index>(2 * i);
        f(re, 0) = static_cast<T>(r.z_re);
        f(re, 1) = static_cast<T>(r.var_re);
        f(re, 2) = static_cast<T>(r.cov);
        f(re, 3 + (voltage ? 0 : 2)) = T(1);
        f(re + 1, 0) = static_cast<T>(r.z_im);
        f(re + 1, 1) = static_cast<T>(r.var_im);
        f(re + 1, 2) = static_cast<T>(r.cov);
        f(re + 1, 3 + (voltage ? 1 : 3)) = T(1);
    }
    return f;
}

template <typename T>
std::vector<GraphSample<T>> to_graph_samples(const Dataset& ds) {
    std::vector<GraphSample<T>> out;
    out.reserve(ds.samples.size());
    for (const auto& s : ds.samples) {
        GraphSample<T> g;
        g.features = sample_features<T>(s.meas);
        g.label.resize(s.label.size(), 1);
        for (Eigen::Index i = 0; i < s.label.size(); ++i)
            g.label(i, 0) = static_cast<T>(s.label[i]);
        out.push_back(std::move(g));
    }
    return out;
}

// One compiled network per batch size, built lazily and reused across epochs.
template <typename T>
class NetworkCache {
public:
    NetworkCache(gnn::GnnParameters<T>* params, const gnn::GraphTopology& topo)
        : params_(params), topo_(topo) {}

    gnn::GnnNetwork<T>& get(int batch_size) {
        auto it = nets_.find(batch_size);
        if (it == nets_.end())
            it = nets_
                     .emplace(batch_size,
                              std::make_unique<gnn::GnnNetwork<T>>(params_, topo_, batch_size))
                     .first;
        return *it->second;
    }

private:
    gnn::GnnParameters<T>* params_;
    gnn::GraphTopology topo_;
    std::map<int, std::unique_ptr<gnn::GnnNetwork<T>>> nets_;
};

// Mean per-node squared error over the whole set, computed in eval mode.
template <typename T>
double evaluate(NetworkCache<T>& cache, const std::vector<GraphSample<T>>& set, int batch_size) {
    if (set.empty()) throw ValidationError("evaluation set is empty");
    double total = 0.0;
    size_t i = 0;
    while (i < set.size()) {
        const int bs = static_cast<int>(std::min<size_t>(batch_size, set.size() - i));
        auto& net = cache.get(bs);
        for (int slot = 0; slot < bs; ++slot)
            net.load_graph(slot, set[i + slot].features, set[i + slot].label);
        total += static_cast<double>(net.forward(false)) * bs;
        i += static_cast<size_t>(bs);
    }
    return total / static_cast<double>(set.size());
}

struct TrainConfig {
    double lr = 4e-4;
    int batch_size = 32;
    double clip = 0.5;
    nn::ClipMode clip_mode = nn::ClipMode::Norm;
    int max_epochs = 200;
    double min_delta = 1e-5;  // plateau threshold on validation-loss changes
    int plateau_window = 5;   // consecutive small changes required to stop
    int patience = 100;       // epochs without a new validation minimum
    uint64_t shuffle_seed = 7;
};

struct TrainRow {
    int epoch;
    double train_loss;
    double val_loss;
};

struct TrainLog {
    std::vector<TrainRow> rows;
    int best_epoch = 0;
    double best_val = 0.0;
    std::string stop_reason;
};

// Minibatch training with gradient clipping and Adam. Validation loss is
// computed in eval mode after every epoch; the parameters (and centering
// running means) at the validation minimum are restored before returning.
template <typename T>
TrainLog train(gnn::GnnParameters<T>& params, const gnn::GraphTopology& topo,
               const std::vector<GraphSample<T>>& train_set,
               const std::vector<GraphSample<T>>& val_set, const TrainConfig& cfg,
               NetworkCache<T>* shared_cache = nullptr) {
    if (train_set.empty()) throw ValidationError("training set is empty");
    if (val_set.empty()) throw ValidationError("validation set is empty");
    if (cfg.batch_size <= 0) throw ValidationError("batch size must be positive");

    NetworkCache<T> local_cache(&params, topo);
    NetworkCache<T>& cache = shared_cache ? *shared_cache : local_cache;
    const std::vector<nn::Parameter<T>*> plist = params.all();
    const std::vector<nn::BnState<T>*> bnlist = params.bn_all();

    std::vector<gnn::Mat<T>> best_values(plist.size());
    std::vector<gnn::Mat<T>> best_means(bnlist.size());
    auto snapshot = [&]() {
        for (size_t i = 0; i < plist.size(); ++i) best_values[i] = plist[i]->value;
        for (size_t i = 0; i < bnlist.size(); ++i) best_means[i] = bnlist[i]->running_mean;
    };
    auto restore = [&]() {
        for (size_t i = 0; i < plist.size(); ++i) plist[i]->value = best_values[i];
        for (size_t i = 0; i < bnlist.size(); ++i) bnlist[i]->running_mean = best_means[i];
    };

    Rng shuffle_rng(cfg.shuffle_seed);
    std::vector<int> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    TrainLog log;
    log.best_val = std::numeric_limits<double>::infinity();
    int epochs_since_best = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double train_total = 0.0;
        size_t i = 0;
        while (i < order.size()) {
            const int bs = static_cast<int>(std::min<size_t>(cfg.batch_size, order.size() - i));
            auto& net = cache.get(bs);
            for (int slot = 0; slot < bs; ++slot) {
                const GraphSample<T>& s = train_set[order[i + slot]];
                net.load_graph(slot, s.features, s.label);
            }
            const double loss = static_cast<double>(net.forward(true));
            if (!std::isfinite(loss))
                throw NumericalError("training loss became non-finite at epoch " +
                                     std::to_string(epoch));
            net.backward();
            nn::clip_gradients(plist, cfg.clip, cfg.clip_mode);
            nn::adam_step(plist, cfg.lr);
            train_total += loss * bs;
            i += static_cast<size_t>(bs);
        }
        const double train_loss = train_total / static_cast<double>(order.size());
        const double val_loss = evaluate(cache, val_set, cfg.batch_size);
        if (!std::isfinite(val_loss))
            throw NumericalError("validation loss became non-finite at epoch " +
                                 std::to_string(epoch));
        log.rows.push_back({epoch, train_loss, val_loss});

        if (val_loss < log.best_val) {
            log.best_val = val_loss;
            log.best_epoch = epoch;
            snapshot();
            epochs_since_best = 0;
        } else {
            ++epochs_since_best;
        }

        bool plateau = static_cast<int>(log.rows.size()) > cfg.plateau_window;
        if (plateau)
            for (size_t k = log.rows.size() - cfg.plateau_window; k < log.rows.size(); ++k)
                if (std::abs(log.rows[k].val_loss - log.rows[k - 1].val_loss) >= cfg.min_delta) {
                    plateau = false;
                    break;
                }
        if (plateau) {
            log.stop_reason = "plateau";
            break;
        }
        if (epochs_since_best >= cfg.patience) {
            log.stop_reason = "patience";
            break;
        }
    }
    if (log.stop_reason.empty()) log.stop_reason = "max_epochs";
    restore();
    return log;
}

inline void write_train_log(const std::string& path, const TrainLog& log) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("cannot open training log for writing: " + path);
    os << "epoch,train_loss,val_loss\n";
    char buf[128];
    for (const auto& r : log.rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g\n", r.epoch, r.train_loss, r.val_loss);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "# best_epoch=%d best_val=%.9g stop=%s\n", log.best_epoch,
                  log.best_val, log.stop_reason.c_str());
    os << buf;
    if (!os) throw ValidationError("failed writing training log: " + path);
}

}  // namespace fgse::train
