#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <vector>

#include "fgse/factor_graph.hpp"
#include "fgse/nn/autodiff.hpp"

namespace fgse::gnn {

using nn::BnState;
using nn::Graph;
using nn::Mat;
using nn::Parameter;

struct GnnConfig {
    int embedding_size = 64;
    int num_layers = 4;
    int encoding_width = 12;
    double leaky_slope = 0.2;
    double bn_momentum = 0.2;
};

template <typename T>
struct MessageMlp {
    Parameter<T> w_send, w_recv, b1, w2, b2;
};

template <typename T>
struct AttentionParams {
    Parameter<T> a_recv, a_msg;
};

template <typename T>
struct UpdateParams {
    Parameter<T> u_self, u_msg, b;
};

// Aggregates variable-to-factor messages into factor embeddings.
template <typename T>
struct LayerF {
    MessageMlp<T> msg;
    AttentionParams<T> attn;
    UpdateParams<T> upd;
};

// Aggregates factor-to-variable and variable-to-variable messages (separate
// message parameters, one shared attention softmax) into variable embeddings.
template <typename T>
struct LayerV {
    MessageMlp<T> msg_f, msg_v;
    AttentionParams<T> attn;
    UpdateParams<T> upd;
};

template <typename T>
struct GnnParameters {
    GnnConfig cfg;
    Parameter<T> var_enc_w, var_enc_b, fac_enc_w, fac_enc_b;
    std::vector<LayerF<T>> layers_f;
    std::vector<LayerV<T>> layers_v;
    Parameter<T> pred_w1, pred_b1, pred_w2, pred_b2;
    std::vector<BnState<T>> bn_fac, bn_var;

    void configure(const GnnConfig& c) {
        cfg = c;
        const int s = c.embedding_size;
        auto shape_mlp = [s](MessageMlp<T>& m, const std::string& prefix) {
            m.w_send.resize(s, s);
            m.w_recv.resize(s, s);
            m.b1.resize(1, s);
            m.w2.resize(s, s);
            m.b2.resize(1, s);
            m.w_send.name = prefix + ".w_send";
            m.w_recv.name = prefix + ".w_recv";
            m.b1.name = prefix + ".b1";
            m.w2.name = prefix + ".w2";
            m.b2.name = prefix + ".b2";
        };
        auto shape_attn = [s](AttentionParams<T>& a, const std::string& prefix) {
            a.a_recv.resize(s, 1);
            a.a_msg.resize(s, 1);
            a.a_recv.name = prefix + ".a_recv";
            a.a_msg.name = prefix + ".a_msg";
        };
        auto shape_upd = [s](UpdateParams<T>& u, const std::string& prefix) {
            u.u_self.resize(s, s);
            u.u_msg.resize(s, s);
            u.b.resize(1, s);
            u.u_self.name = prefix + ".u_self";
            u.u_msg.name = prefix + ".u_msg";
            u.b.name = prefix + ".b";
        };
        var_enc_w.resize(c.encoding_width, s);
        var_enc_b.resize(1, s);
        fac_enc_w.resize(7, s);
        fac_enc_b.resize(1, s);
        var_enc_w.name = "var_enc.w";
        var_enc_b.name = "var_enc.b";
        fac_enc_w.name = "fac_enc.w";
        fac_enc_b.name = "fac_enc.b";
        layers_f.resize(c.num_layers);
        layers_v.resize(c.num_layers);
        bn_fac.resize(c.num_layers);
        bn_var.resize(c.num_layers);
        for (int k = 0; k < c.num_layers; ++k) {
            const std::string lf = "layer" + std::to_string(k) + ".f";
            const std::string lv = "layer" + std::to_string(k) + ".v";
            shape_mlp(layers_f[k].msg, lf + ".msg");
            shape_attn(layers_f[k].attn, lf + ".attn");
            shape_upd(layers_f[k].upd, lf + ".upd");
            shape_mlp(layers_v[k].msg_f, lv + ".msg_f");
            shape_mlp(layers_v[k].msg_v, lv + ".msg_v");
            shape_attn(layers_v[k].attn, lv + ".attn");
            shape_upd(layers_v[k].upd, lv + ".upd");
            bn_fac[k].running_mean.setZero(1, s);
            bn_fac[k].momentum = static_cast<T>(c.bn_momentum);
            bn_var[k].running_mean.setZero(1, s);
            bn_var[k].momentum = static_cast<T>(c.bn_momentum);
        }
        pred_w1.resize(s, s);
        pred_b1.resize(1, s);
        pred_w2.resize(s, 1);
        pred_b2.resize(1, 1);
        pred_w1.name = "pred.w1";
        pred_b1.name = "pred.b1";
        pred_w2.name = "pred.w2";
        pred_b2.name = "pred.b2";
    }

    std::vector<Parameter<T>*> all() {
        std::vector<Parameter<T>*> out{&var_enc_w, &var_enc_b, &fac_enc_w, &fac_enc_b};
        auto add_mlp = [&out](MessageMlp<T>& m) {
            out.push_back(&m.w_send);
            out.push_back(&m.w_recv);
            out.push_back(&m.b1);
            out.push_back(&m.w2);
            out.push_back(&m.b2);
        };
        for (int k = 0; k < cfg.num_layers; ++k) {
            add_mlp(layers_f[k].msg);
            out.push_back(&layers_f[k].attn.a_recv);
            out.push_back(&layers_f[k].attn.a_msg);
            out.push_back(&layers_f[k].upd.u_self);
            out.push_back(&layers_f[k].upd.u_msg);
            out.push_back(&layers_f[k].upd.b);
            add_mlp(layers_v[k].msg_f);
            add_mlp(layers_v[k].msg_v);
            out.push_back(&layers_v[k].attn.a_recv);
            out.push_back(&layers_v[k].attn.a_msg);
            out.push_back(&layers_v[k].upd.u_self);
            out.push_back(&layers_v[k].upd.u_msg);
            out.push_back(&layers_v[k].upd.b);
        }
        out.push_back(&pred_w1);
        out.push_back(&pred_b1);
        out.push_back(&pred_w2);
        out.push_back(&pred_b2);
        return out;
    }

    std::vector<BnState<T>*> bn_all() {
        std::vector<BnState<T>*> out;
        for (auto& b : bn_fac) out.push_back(&b);
        for (auto& b : bn_var) out.push_back(&b);
        return out;
    }

    // Row vectors (1 x c) are biases and start at zero; everything else is a
    // weight drawn uniformly from +-sqrt(6/(fan_in+fan_out)).
    void init(uint64_t seed) {
        Rng rng(seed);
        for (auto* p : all()) {
            if (p->value.rows() == 1)
                p->value.setZero();
            else
                nn::fill_uniform(*p, rng);
            p->grad.setZero();
            p->adam_m.setZero();
            p->adam_v.setZero();
            p->step_count = 0;
        }
        for (auto* b : bn_all()) b->running_mean.setZero();
    }

    long long count_parameters() {
        long long total = 0;
        for (auto* p : all()) total += static_cast<long long>(p->value.size());
        return total;
    }
};

// Batch-independent edge orderings derived from the augmented factor graph.
// All receiver-grouped lists are sorted by receiver so that attention softmax
// segments are contiguous.
struct GraphTopology {
    int num_vars = 0;
    int num_factors = 0;
    int width_b = 0;
    Mat<double> var_features;  // num_vars x width_b

    // variable -> factor (receiver: factor)
    std::vector<int> vf_send, vf_recv, vf_offsets;
    // factor -> variable, in factor->variable enumeration order
    std::vector<int> fv_send, fv_recv;
    // variable -> variable, both directions of each augmentation edge
    std::vector<int> vvd_send, vvd_recv;
    // combined variable-side incoming list, sorted by receiving variable:
    // comb_perm indexes into [fv rows; vvd rows]
    std::vector<int> comb_perm, comb_recv, comb_offsets;
};

inline GraphTopology build_topology(const AugmentedFactorGraph& g) {
    GraphTopology t;
    t.num_vars = g.num_vars();
    t.num_factors = g.num_factors();
    t.width_b = g.width_b;
    t.var_features.resize(t.num_vars, g.width_b);
    for (int v = 0; v < t.num_vars; ++v)
        for (int k = 0; k < g.width_b; ++k) t.var_features(v, k) = g.variable_nodes[v].feature[k];

    std::vector<std::pair<int, int>> vf;  // (recv factor, send var)
    vf.reserve(g.fv_edges.size());
    for (const auto& [f, v] : g.fv_edges) vf.emplace_back(f, v);
    std::sort(vf.begin(), vf.end());
    t.vf_offsets.assign(t.num_factors + 1, 0);
    for (const auto& [f, v] : vf) {
        t.vf_send.push_back(v);
        t.vf_recv.push_back(f);
        ++t.vf_offsets[f + 1];
    }
    for (int f = 0; f < t.num_factors; ++f) t.vf_offsets[f + 1] += t.vf_offsets[f];

    std::vector<std::pair<int, int>> fv;  // (recv var, send factor)
    fv.reserve(g.fv_edges.size());
    for (const auto& [f, v] : g.fv_edges) fv.emplace_back(v, f);
    std::sort(fv.begin(), fv.end());
    for (const auto& [v, f] : fv) {
        t.fv_send.push_back(f);
        t.fv_recv.push_back(v);
    }

    std::vector<std::pair<int, int>> vvd;  // (recv var, send var)
    vvd.reserve(g.vv_edges.size() * 2);
    for (const auto& [a, b] : g.vv_edges) {
        vvd.emplace_back(a, b);
        vvd.emplace_back(b, a);
    }
    std::sort(vvd.begin(), vvd.end());
    for (const auto& [v, u] : vvd) {
        t.vvd_send.push_back(u);
        t.vvd_recv.push_back(v);
    }

    // merge the two variable-side lists by receiver, factor messages first
    const int efv = static_cast<int>(t.fv_recv.size());
    const int evv = static_cast<int>(t.vvd_recv.size());
    t.comb_offsets.assign(t.num_vars + 1, 0);
    size_t i = 0, j = 0;
    while (i < t.fv_recv.size() || j < t.vvd_recv.size()) {
        const bool take_f =
            j >= t.vvd_recv.size() ||
            (i < t.fv_recv.size() && t.fv_recv[i] <= t.vvd_recv[j]);
        if (take_f) {
            t.comb_perm.push_back(static_cast<int>(i));
            t.comb_recv.push_back(t.fv_recv[i]);
            ++i;
        } else {
            t.comb_perm.push_back(efv + static_cast<int>(j));
            t.comb_recv.push_back(t.vvd_recv[j]);
            ++j;
        }
    }
    for (int r : t.comb_recv) ++t.comb_offsets[r + 1];
    for (int v = 0; v < t.num_vars; ++v) t.comb_offsets[v + 1] += t.comb_offsets[v];
    (void)evv;
    return t;
}

// The topology replicated for a minibatch of identically-shaped graphs.
struct BatchLayout {
    int batch_size = 0;
    int vars_per_graph = 0, facs_per_graph = 0;
    std::vector<int> vf_send, vf_recv, vf_offsets;
    std::vector<int> fv_send, fv_recv;
    std::vector<int> vvd_send, vvd_recv;
    std::vector<int> comb_perm, comb_recv, comb_offsets;
};

inline BatchLayout make_layout(const GraphTopology& t, int batch_size) {
    BatchLayout L;
    L.batch_size = batch_size;
    L.vars_per_graph = t.num_vars;
    L.facs_per_graph = t.num_factors;
    const int efv = static_cast<int>(t.fv_send.size());
    const int evv = static_cast<int>(t.vvd_send.size());
    L.vf_offsets.push_back(0);
    L.comb_offsets.push_back(0);
    for (int b = 0; b < batch_size; ++b) {
        const int vo = b * t.num_vars;
        const int fo = b * t.num_factors;
        const int eo = b * (efv + evv);
        for (size_t e = 0; e < t.vf_send.size(); ++e) {
            L.vf_send.push_back(t.vf_send[e] + vo);
            L.vf_recv.push_back(t.vf_recv[e] + fo);
        }
        for (int f = 1; f <= t.num_factors; ++f)
            L.vf_offsets.push_back(t.vf_offsets[f] + b * static_cast<int>(t.vf_send.size()));
        for (size_t e = 0; e < t.fv_send.size(); ++e) {
            L.fv_send.push_back(t.fv_send[e] + fo);
            L.fv_recv.push_back(t.fv_recv[e] + vo);
        }
        for (size_t e = 0; e < t.vvd_send.size(); ++e) {
            L.vvd_send.push_back(t.vvd_send[e] + vo);
            L.vvd_recv.push_back(t.vvd_recv[e] + vo);
        }
        for (size_t e = 0; e < t.comb_perm.size(); ++e) {
            const int p = t.comb_perm[e];
            L.comb_perm.push_back(p < efv ? p + b * efv : efv * batch_size + (p - efv) + b * evv);
            L.comb_recv.push_back(t.comb_recv[e] + vo);
        }
        for (int v = 1; v <= t.num_vars; ++v)
            L.comb_offsets.push_back(t.comb_offsets[v] + eo);
    }
    return L;
}

// A compiled forward/backward network over a fixed batch layout. Inputs
// (factor features, labels) are refilled in place between runs.
template <typename T>
class GnnNetwork {
public:
    GnnNetwork(GnnParameters<T>* params, const GraphTopology& topo, int batch_size)
        : P(params), L(make_layout(topo, batch_size)) {
        const int s = P->cfg.embedding_size;
        const T slope = static_cast<T>(P->cfg.leaky_slope);
        const int nv = L.vars_per_graph * batch_size;
        const int nf = L.facs_per_graph * batch_size;

        in_var_ = g.input(nv, topo.width_b);
        in_fac_ = g.input(nf, 7);
        in_label_ = g.input(nv, 1);
        for (int b = 0; b < batch_size; ++b)
            g.value(in_var_).middleRows(b * topo.num_vars, topo.num_vars) =
                topo.var_features.cast<T>();

        auto mlp = [&](MessageMlp<T>& m, int sender_rows, int recv_rows) {
            const int hid = g.relu(g.add_rowvec(
                g.add(g.matmul(sender_rows, pid(&m.w_send)), g.matmul(recv_rows, pid(&m.w_recv))),
                pid(&m.b1)));
            return g.add_rowvec(g.matmul(hid, pid(&m.w2)), pid(&m.b2));
        };

        int h_var = g.relu(g.add_rowvec(g.matmul(in_var_, pid(&P->var_enc_w)), pid(&P->var_enc_b)));
        int h_fac = g.relu(g.add_rowvec(g.matmul(in_fac_, pid(&P->fac_enc_w)), pid(&P->fac_enc_b)));

        for (int k = 0; k < P->cfg.num_layers; ++k) {
            LayerF<T>& lf = P->layers_f[k];
            LayerV<T>& lv = P->layers_v[k];

            // factor side, reading level k-1 embeddings
            const int xs = g.gather_rows(h_var, L.vf_send);
            const int xr = g.gather_rows(h_fac, L.vf_recv);
            const int mf = mlp(lf.msg, xs, xr);
            const int ef = g.leaky_relu(
                g.add(g.matmul(xr, pid(&lf.attn.a_recv)), g.matmul(mf, pid(&lf.attn.a_msg))),
                slope);
            const int af = g.segment_softmax(ef, L.vf_offsets);
            const int aggf = g.segment_sum(g.weighted_rows(mf, af), L.vf_offsets, nf);
            const int fac_new = g.mean_center(
                g.relu(g.add_rowvec(g.add(g.matmul(h_fac, pid(&lf.upd.u_self)),
                                          g.matmul(aggf, pid(&lf.upd.u_msg))),
                                    pid(&lf.upd.b))),
                &P->bn_fac[k]);

            // variable side, also reading level k-1 embeddings
            const int xsf = g.gather_rows(h_fac, L.fv_send);
            const int xrf = g.gather_rows(h_var, L.fv_recv);
            const int m_from_f = mlp(lv.msg_f, xsf, xrf);
            const int xsv = g.gather_rows(h_var, L.vvd_send);
            const int xrv = g.gather_rows(h_var, L.vvd_recv);
            const int m_from_v = mlp(lv.msg_v, xsv, xrv);
            const int mall = g.gather_rows(g.concat_rows(m_from_f, m_from_v), L.comb_perm);
            const int xr_all = g.gather_rows(h_var, L.comb_recv);
            const int ev = g.leaky_relu(g.add(g.matmul(xr_all, pid(&lv.attn.a_recv)),
                                              g.matmul(mall, pid(&lv.attn.a_msg))),
                                        slope);
            const int av = g.segment_softmax(ev, L.comb_offsets);
            const int aggv = g.segment_sum(g.weighted_rows(mall, av), L.comb_offsets, nv);
            const int var_new = g.mean_center(
                g.relu(g.add_rowvec(g.add(g.matmul(h_var, pid(&lv.upd.u_self)),
                                          g.matmul(aggv, pid(&lv.upd.u_msg))),
                                    pid(&lv.upd.b))),
                &P->bn_var[k]);

            h_fac = fac_new;
            h_var = var_new;
        }

        const int pred_hid =
            g.relu(g.add_rowvec(g.matmul(h_var, pid(&P->pred_w1)), pid(&P->pred_b1)));
        pred_ = g.add_rowvec(g.matmul(pred_hid, pid(&P->pred_w2)), pid(&P->pred_b2));
        loss_ = g.mse(pred_, in_label_);
    }

    // features: per-graph (facs_per_graph x 7), labels: per-graph (vars x 1)
    void load_graph(int slot, const Mat<T>& fac_features, const Mat<T>& label) {
        g.value(in_fac_).middleRows(slot * L.facs_per_graph, L.facs_per_graph) = fac_features;
        g.value(in_label_).middleRows(slot * L.vars_per_graph, L.vars_per_graph) = label;
    }

    void load_graph_features_only(int slot, const Mat<T>& fac_features) {
        g.value(in_fac_).middleRows(slot * L.facs_per_graph, L.facs_per_graph) = fac_features;
    }

    T forward(bool train) {
        g.train_mode = train;
        g.run_forward();
        return g.value(loss_)(0, 0);
    }

    void backward() { g.run_backward(loss_); }

    Mat<T> prediction(int slot) const {
        return g.value(pred_).middleRows(slot * L.vars_per_graph, L.vars_per_graph);
    }

    T graph_mse(int slot) const {
        const auto diff = g.value(pred_).middleRows(slot * L.vars_per_graph, L.vars_per_graph) -
                          g.value(in_label_).middleRows(slot * L.vars_per_graph, L.vars_per_graph);
        return diff.squaredNorm() / static_cast<T>(L.vars_per_graph);
    }

    int batch_size() const { return L.batch_size; }

    Graph<T> g;

private:
    int pid(Parameter<T>* p) {
        auto it = param_ids_.find(p);
        if (it != param_ids_.end()) return it->second;
        const int id = g.param(p);
        param_ids_[p] = id;
        return id;
    }

    GnnParameters<T>* P;
    BatchLayout L;
    std::map<Parameter<T>*, int> param_ids_;
    int in_var_ = -1, in_fac_ = -1, in_label_ = -1, pred_ = -1, loss_ = -1;
};

// Factor feature matrix (num_factors x 7) for one sample's graph.
template <typename T>
Mat<T> factor_feature_matrix(const AugmentedFactorGraph& g) {
    Mat<T> f(g.num_factors(), 7);
    for (int i = 0; i < g.num_factors(); ++i)
        for (int c = 0; c < 7; ++c) f(i, c) = static_cast<T>(g.factor_nodes[i].feature[c]);
    return f;
}

// Single-graph eval-mode prediction assembled in state-vector order.
template <typename T>
StateVector predict(GnnNetwork<T>& net, const Mat<T>& fac_features) {
    if (net.batch_size() != 1)
        throw ValidationError("predict expects a single-graph network");
    net.load_graph_features_only(0, fac_features);
    net.g.train_mode = false;
    net.g.run_forward();
    const Mat<T> out = net.prediction(0);
    StateVector x(out.rows());
    for (Eigen::Index i = 0; i < out.rows(); ++i) x[i] = static_cast<double>(out(i, 0));
    return x;
}

}  // namespace fgse::gnn
