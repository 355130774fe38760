#include "fgse/factor_graph.hpp"

#include <algorithm>
#include <queue>

#include "fgse/errors.hpp"
#include "fgse/rng.hpp"

namespace fgse {

std::vector<double> binary_encoding(int index, int width_b) {
    if (width_b <= 0 || width_b >= 31) throw ValidationError("encoding width out of range");
    if (index < 0 || index >= (1 << width_b))
        throw ValidationError("index " + std::to_string(index) + " out of range for width " +
                              std::to_string(width_b));
    std::vector<double> bits(width_b);
    for (int k = 0; k < width_b; ++k)
        bits[k] = (index >> (width_b - 1 - k)) & 1 ? 1.0 : 0.0;
    return bits;
}

AugmentedFactorGraph build_graph(const MeasurementModel& model, const MeasurementSet& meas,
                                 int n, int width_b) {
    if (2 * n > (1 << width_b))
        throw ValidationError("encoding width " + std::to_string(width_b) +
                              " too small for " + std::to_string(2 * n) + " variable nodes");
    if (static_cast<int>(meas.size()) != static_cast<int>(model.sigma.size()))
        throw ValidationError("measurement set inconsistent with model");

    AugmentedFactorGraph g;
    g.n_buses = n;
    g.width_b = width_b;
    g.variable_nodes.resize(2 * n);
    for (int v = 0; v < 2 * n; ++v) {
        g.variable_nodes[v].index = v;
        g.variable_nodes[v].feature = binary_encoding(v, width_b);
    }

    const int num_phasors = static_cast<int>(meas.size());
    g.factor_nodes.resize(2 * num_phasors);
    for (int p = 0; p < num_phasors; ++p) {
        const PolarPhasor& ph = meas.polar[p];
        const RectMeasurement& rm = meas.rect[p];
        const bool is_voltage = ph.kind == PhasorKind::BusVoltage;
        for (int comp = 0; comp < 2; ++comp) {
            FactorNode& f = g.factor_nodes[2 * p + comp];
            f.index = 2 * p + comp;
            f.phasor_id = p;
            f.component = comp;
            f.feature.fill(0.0);
            f.feature[0] = comp == 0 ? rm.z_re : rm.z_im;
            f.feature[1] = comp == 0 ? rm.var_re : rm.var_im;
            f.feature[2] = rm.cov;
            const int one_hot = (is_voltage ? 0 : 2) + comp;
            f.feature[3 + one_hot] = 1.0;
        }
    }

    std::vector<std::pair<int, int>> vv;
    std::vector<int> row_vars;
    for (int row = 0; row < model.m(); ++row) {
        row_vars.clear();
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(model.h, row); it;
             ++it) {
            g.fv_edges.emplace_back(row, static_cast<int>(it.col()));
            row_vars.push_back(static_cast<int>(it.col()));
        }
        for (size_t a = 0; a < row_vars.size(); ++a)
            for (size_t b = a + 1; b < row_vars.size(); ++b)
                vv.emplace_back(std::min(row_vars[a], row_vars[b]),
                                std::max(row_vars[a], row_vars[b]));
    }
    std::sort(vv.begin(), vv.end());
    vv.erase(std::unique(vv.begin(), vv.end()), vv.end());
    g.vv_edges = std::move(vv);
    return g;
}

AugmentedFactorGraph simulate_measurement_loss(const AugmentedFactorGraph& g,
                                               const std::vector<int>& phasor_ids) {
    const int num_phasors = g.num_factors() / 2;
    std::vector<char> drop(num_phasors, 0);
    for (int id : phasor_ids) {
        if (id < 0 || id >= num_phasors)
            throw ValidationError("unknown phasor id " + std::to_string(id));
        drop[id] = 1;
    }
    AugmentedFactorGraph out;
    out.n_buses = g.n_buses;
    out.width_b = g.width_b;
    out.variable_nodes = g.variable_nodes;
    out.vv_edges = g.vv_edges;
    std::vector<int> remap(g.num_factors(), -1);
    for (const auto& f : g.factor_nodes) {
        if (drop[f.phasor_id]) continue;
        remap[f.index] = static_cast<int>(out.factor_nodes.size());
        FactorNode nf = f;
        nf.index = remap[f.index];
        out.factor_nodes.push_back(nf);
    }
    for (const auto& [fi, vi] : g.fv_edges)
        if (remap[fi] >= 0) out.fv_edges.emplace_back(remap[fi], vi);
    return out;
}

namespace {

std::vector<std::vector<int>> combined_adjacency(const AugmentedFactorGraph& g) {
    const int nv = g.num_vars();
    const int total = nv + g.num_factors();
    std::vector<std::vector<int>> adj(total);
    for (const auto& [fi, vi] : g.fv_edges) {
        adj[nv + fi].push_back(vi);
        adj[vi].push_back(nv + fi);
    }
    for (const auto& [a, b] : g.vv_edges) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    for (auto& v : adj) std::sort(v.begin(), v.end());
    return adj;
}

int bfs_distances(const std::vector<std::vector<int>>& adj, int src, std::vector<int>& dist) {
    dist.assign(adj.size(), -1);
    std::queue<int> q;
    dist[src] = 0;
    q.push(src);
    int reached = 1;
    while (!q.empty()) {
        const int u = q.front();
        q.pop();
        for (int v : adj[u])
            if (dist[v] < 0) {
                dist[v] = dist[u] + 1;
                ++reached;
                q.push(v);
            }
    }
    return reached;
}

}  // namespace

bool graph_connected(const AugmentedFactorGraph& g, int* component_count) {
    const auto adj = combined_adjacency(g);
    std::vector<int> dist;
    int components = 0;
    std::vector<char> seen(adj.size(), 0);
    for (size_t s = 0; s < adj.size(); ++s) {
        if (seen[s]) continue;
        ++components;
        bfs_distances(adj, static_cast<int>(s), dist);
        for (size_t i = 0; i < adj.size(); ++i)
            if (dist[i] >= 0) seen[i] = 1;
    }
    if (component_count) *component_count = components;
    return components == 1;
}

GraphStats graph_stats(const AugmentedFactorGraph& g) {
    const auto adj = combined_adjacency(g);
    const int total = static_cast<int>(adj.size());
    int components = 0;
    if (!graph_connected(g, &components))
        throw ValidationError("graph disconnected: " + std::to_string(components) +
                              " components");

    GraphStats st;
    st.nodes = total;
    st.edges = static_cast<long long>(g.fv_edges.size() + g.vv_edges.size());
    st.avg_degree = 2.0 * static_cast<double>(st.edges) / total;
    st.redundancy = static_cast<double>(g.num_factors()) / g.num_vars();

    // local clustering, degree < 2 contributes 0
    double cl_sum = 0.0;
    for (int u = 0; u < total; ++u) {
        const auto& nb = adj[u];
        const size_t d = nb.size();
        if (d < 2) continue;
        long long links = 0;
        for (size_t a = 0; a < d; ++a)
            for (size_t b = a + 1; b < d; ++b)
                if (std::binary_search(adj[nb[a]].begin(), adj[nb[a]].end(), nb[b])) ++links;
        cl_sum += 2.0 * static_cast<double>(links) / (static_cast<double>(d) * (d - 1));
    }
    st.avg_clustering = cl_sum / total;

    std::vector<int> sources;
    if (total <= 5000) {
        sources.resize(total);
        for (int i = 0; i < total; ++i) sources[i] = i;
    } else {
        Rng rng(12345);
        for (int i = 0; i < 1000; ++i)
            sources.push_back(static_cast<int>(rng.uniform_int(total)));
    }
    double dist_sum = 0.0;
    long long pair_count = 0;
    std::vector<int> dist;
    for (int s : sources) {
        bfs_distances(adj, s, dist);
        for (int i = 0; i < total; ++i)
            if (i != s) {
                dist_sum += dist[i];
                ++pair_count;
            }
    }
    st.avg_path_length = pair_count ? dist_sum / static_cast<double>(pair_count) : 0.0;
    return st;
}

}  // namespace fgse
