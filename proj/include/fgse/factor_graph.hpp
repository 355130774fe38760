#pragma once

#include <array>
#include <vector>

#include "fgse/wls_se.hpp"

namespace fgse {

// Variable nodes mirror the state vector: index 0..2n-1, v_re before v_im.
struct VariableNode {
    int index = 0;
    std::vector<double> feature;  // big-endian binary encoding of index, width B
};

// Two factor nodes per phasor (real and imaginary measurement component).
// feature = [z_component, variance, covariance, one-hot(4) of V_re/V_im/I_re/I_im]
struct FactorNode {
    int index = 0;
    int phasor_id = 0;
    int component = 0;  // 0 = re, 1 = im
    std::array<double, 7> feature{};
};

struct AugmentedFactorGraph {
    int n_buses = 0;
    int width_b = 0;
    std::vector<VariableNode> variable_nodes;
    std::vector<FactorNode> factor_nodes;
    // (factor index, variable index), one per structural nonzero of H
    std::vector<std::pair<int, int>> fv_edges;
    // unordered variable pairs (a < b) sharing at least one factor
    std::vector<std::pair<int, int>> vv_edges;

    int num_vars() const { return static_cast<int>(variable_nodes.size()); }
    int num_factors() const { return static_cast<int>(factor_nodes.size()); }
};

struct GraphStats {
    int nodes = 0;
    long long edges = 0;
    double avg_degree = 0.0;
    double avg_path_length = 0.0;
    double avg_clustering = 0.0;
    double redundancy = 0.0;
};

std::vector<double> binary_encoding(int index, int width_b);

AugmentedFactorGraph build_graph(const MeasurementModel& model, const MeasurementSet& meas,
                                 int n, int width_b = 12);

// Removes the two factor nodes of each listed phasor (and their fv edges);
// vv edges are untouched, which is what keeps the graph connected.
AugmentedFactorGraph simulate_measurement_loss(const AugmentedFactorGraph& g,
                                               const std::vector<int>& phasor_ids);

// Degree/path/clustering over the union of fv and vv edges; exact BFS for
// graphs up to 5000 nodes, 1000 sampled sources beyond.
GraphStats graph_stats(const AugmentedFactorGraph& g);

bool graph_connected(const AugmentedFactorGraph& g, int* component_count = nullptr);

}  // namespace fgse
