#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fgse/errors.hpp"
#include "fgse/rng.hpp"

namespace fgse::nn {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct Parameter {
    std::string name;
    Mat<T> value;
    Mat<T> grad;
    Mat<T> adam_m;
    Mat<T> adam_v;
    long long step_count = 0;

    void resize(Eigen::Index rows, Eigen::Index cols) {
        value.setZero(rows, cols);
        grad.setZero(rows, cols);
        adam_m.setZero(rows, cols);
        adam_v.setZero(rows, cols);
    }
};

// Per-feature running mean for mean-only batch normalization.
template <typename T>
struct BnState {
    Mat<T> running_mean;  // 1 x features
    T momentum = static_cast<T>(0.2);
};

template <typename T>
void fill_uniform(Parameter<T>& p, Rng& rng) {
    const double fan_in = static_cast<double>(p.value.rows());
    const double fan_out = static_cast<double>(p.value.cols());
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index i = 0; i < p.value.rows(); ++i)
        for (Eigen::Index j = 0; j < p.value.cols(); ++j)
            p.value(i, j) = static_cast<T>(rng.uniform(-limit, limit));
}

// Re-runnable computational graph: build the op sequence once, then call
// run_forward / run_backward per step. All buffers are preallocated, inputs
// are refilled in place between runs.
template <typename T>
class Graph {
public:
    bool train_mode = true;

    int input(Eigen::Index rows, Eigen::Index cols) {
        const int id = new_node(rows, cols);
        steps_.push_back({[] {}, [] {}});
        return id;
    }

    int param(Parameter<T>* p) {
        const int id = new_node(p->value.rows(), p->value.cols());
        steps_.push_back({[this, id, p] { val_[id] = p->value; },
                          [this, id, p] { p->grad += grad_[id]; }});
        return id;
    }

    int matmul(int a, int b) {
        check_cols_rows(a, b);
        const int id = new_node(val_[a].rows(), val_[b].cols());
        steps_.push_back({[this, id, a, b] { val_[id].noalias() = val_[a] * val_[b]; },
                          [this, id, a, b] {
                              grad_[a].noalias() += grad_[id] * val_[b].transpose();
                              grad_[b].noalias() += val_[a].transpose() * grad_[id];
                          }});
        return id;
    }

    int add(int a, int b) {
        check_same_shape(a, b);
        const int id = new_node(val_[a].rows(), val_[a].cols());
        steps_.push_back({[this, id, a, b] { val_[id] = val_[a] + val_[b]; },
                          [this, id, a, b] {
                              grad_[a] += grad_[id];
                              grad_[b] += grad_[id];
                          }});
        return id;
    }

    // broadcast a 1 x C bias over every row
    int add_rowvec(int a, int bias) {
        if (val_[bias].rows() != 1 || val_[bias].cols() != val_[a].cols())
            throw ValidationError(shape_msg("add_rowvec", a, bias));
        const int id = new_node(val_[a].rows(), val_[a].cols());
        steps_.push_back(
            {[this, id, a, bias] { val_[id] = val_[a].rowwise() + val_[bias].row(0); },
             [this, id, a, bias] {
                 grad_[a] += grad_[id];
                 grad_[bias].row(0) += grad_[id].colwise().sum();
             }});
        return id;
    }

    int concat_rows(int a, int b) {
        if (val_[a].cols() != val_[b].cols())
            throw ValidationError(shape_msg("concat_rows", a, b));
        const Eigen::Index ra = val_[a].rows();
        const int id = new_node(ra + val_[b].rows(), val_[a].cols());
        steps_.push_back({[this, id, a, b, ra] {
                              val_[id].topRows(ra) = val_[a];
                              val_[id].bottomRows(val_[b].rows()) = val_[b];
                          },
                          [this, id, a, b, ra] {
                              grad_[a] += grad_[id].topRows(ra);
                              grad_[b] += grad_[id].bottomRows(val_[b].rows());
                          }});
        return id;
    }

    int concat_cols(int a, int b) {
        if (val_[a].rows() != val_[b].rows())
            throw ValidationError(shape_msg("concat_cols", a, b));
        const Eigen::Index ca = val_[a].cols();
        const int id = new_node(val_[a].rows(), ca + val_[b].cols());
        steps_.push_back({[this, id, a, b, ca] {
                              val_[id].leftCols(ca) = val_[a];
                              val_[id].rightCols(val_[b].cols()) = val_[b];
                          },
                          [this, id, a, b, ca] {
                              grad_[a] += grad_[id].leftCols(ca);
                              grad_[b] += grad_[id].rightCols(val_[b].cols());
                          }});
        return id;
    }

    int gather_rows(int a, std::vector<int> idx) {
        const int id = new_node(static_cast<Eigen::Index>(idx.size()), val_[a].cols());
        steps_.push_back({[this, id, a, idx] {
                              for (size_t r = 0; r < idx.size(); ++r)
                                  val_[id].row(static_cast<Eigen::Index>(r)) = val_[a].row(idx[r]);
                          },
                          [this, id, a, idx] {
                              for (size_t r = 0; r < idx.size(); ++r)
                                  grad_[a].row(idx[r]) +=
                                      grad_[id].row(static_cast<Eigen::Index>(r));
                          }});
        return id;
    }

    int relu(int a) {
        const int id = new_node(val_[a].rows(), val_[a].cols());
        steps_.push_back(
            {[this, id, a] { val_[id] = val_[a].cwiseMax(static_cast<T>(0)); },
             [this, id, a] {
                 grad_[a].array() +=
                     grad_[id].array() * (val_[a].array() > static_cast<T>(0)).template cast<T>();
             }});
        return id;
    }

    int leaky_relu(int a, T slope) {
        const int id = new_node(val_[a].rows(), val_[a].cols());
        steps_.push_back(
            {[this, id, a, slope] {
                 val_[id] = val_[a].unaryExpr([slope](T v) { return v > T(0) ? v : slope * v; });
             },
             [this, id, a, slope] {
                 grad_[a].array() += grad_[id].array() *
                                     val_[a].unaryExpr([slope](T v) {
                                             return v > T(0) ? T(1) : slope;
                                         }).array();
             }});
        return id;
    }

    // scores: E x 1 column, rows grouped contiguously by segment via CSR
    // offsets (size R+1). Softmax within each segment; empty segments allowed.
    int segment_softmax(int scores, std::vector<int> offsets) {
        if (val_[scores].cols() != 1)
            throw ValidationError("segment_softmax expects a column vector");
        const int id = new_node(val_[scores].rows(), 1);
        steps_.push_back({[this, id, scores, offsets] {
                              auto& s = val_[scores];
                              auto& a = val_[id];
                              for (size_t g = 0; g + 1 < offsets.size(); ++g) {
                                  const int lo = offsets[g], hi = offsets[g + 1];
                                  if (lo == hi) continue;
                                  T mx = s(lo, 0);
                                  for (int i = lo + 1; i < hi; ++i) mx = std::max(mx, s(i, 0));
                                  T sum = T(0);
                                  for (int i = lo; i < hi; ++i) {
                                      a(i, 0) = std::exp(s(i, 0) - mx);
                                      sum += a(i, 0);
                                  }
                                  for (int i = lo; i < hi; ++i) a(i, 0) /= sum;
                              }
                          },
                          [this, id, scores, offsets] {
                              auto& a = val_[id];
                              auto& ga = grad_[id];
                              auto& gs = grad_[scores];
                              for (size_t g = 0; g + 1 < offsets.size(); ++g) {
                                  const int lo = offsets[g], hi = offsets[g + 1];
                                  T dot = T(0);
                                  for (int i = lo; i < hi; ++i) dot += a(i, 0) * ga(i, 0);
                                  for (int i = lo; i < hi; ++i)
                                      gs(i, 0) += a(i, 0) * (ga(i, 0) - dot);
                              }
                          }});
        return id;
    }

    // rows of m scaled by the matching entry of the E x 1 column w
    int weighted_rows(int m, int w) {
        if (val_[w].cols() != 1 || val_[w].rows() != val_[m].rows())
            throw ValidationError(shape_msg("weighted_rows", m, w));
        const int id = new_node(val_[m].rows(), val_[m].cols());
        steps_.push_back(
            {[this, id, m, w] {
                 val_[id] = val_[m].array().colwise() * val_[w].col(0).array();
             },
             [this, id, m, w] {
                 grad_[m].array() += grad_[id].array().colwise() * val_[w].col(0).array();
                 grad_[w].col(0).array() +=
                     (grad_[id].array() * val_[m].array()).rowwise().sum();
             }});
        return id;
    }

    // sums row blocks given by CSR offsets into out_rows rows; empty segments
    // produce zero rows
    int segment_sum(int a, std::vector<int> offsets, Eigen::Index out_rows) {
        if (static_cast<Eigen::Index>(offsets.size()) != out_rows + 1)
            throw ValidationError("segment_sum offsets do not match output rows");
        const int id = new_node(out_rows, val_[a].cols());
        steps_.push_back({[this, id, a, offsets] {
                              val_[id].setZero();
                              for (size_t g = 0; g + 1 < offsets.size(); ++g)
                                  for (int i = offsets[g]; i < offsets[g + 1]; ++i)
                                      val_[id].row(static_cast<Eigen::Index>(g)) += val_[a].row(i);
                          },
                          [this, id, a, offsets] {
                              for (size_t g = 0; g + 1 < offsets.size(); ++g)
                                  for (int i = offsets[g]; i < offsets[g + 1]; ++i)
                                      grad_[a].row(i) +=
                                          grad_[id].row(static_cast<Eigen::Index>(g));
                          }});
        return id;
    }

    // Mean-only batch normalization. Train mode subtracts the per-feature batch
    // mean and updates the running mean; eval mode subtracts the running mean.
    int mean_center(int a, BnState<T>* state) {
        if (state->running_mean.size() == 0) state->running_mean.setZero(1, val_[a].cols());
        if (state->running_mean.cols() != val_[a].cols())
            throw ValidationError("batchnorm state width mismatch");
        const int id = new_node(val_[a].rows(), val_[a].cols());
        steps_.push_back(
            {[this, id, a, state] {
                 if (train_mode) {
                     const Mat<T> mean =
                         val_[a].colwise().mean();
                     val_[id] = val_[a].rowwise() - mean.row(0);
                     state->running_mean =
                         (T(1) - state->momentum) * state->running_mean + state->momentum * mean;
                 } else {
                     val_[id] = val_[a].rowwise() - state->running_mean.row(0);
                 }
             },
             [this, id, a] {
                 if (train_mode) {
                     const Mat<T> gmean = grad_[id].colwise().mean();
                     grad_[a] += grad_[id].rowwise() - gmean.row(0);
                 } else {
                     grad_[a] += grad_[id];
                 }
             }});
        return id;
    }

    // mean over all entries of (pred - target)^2; target is an input node
    int mse(int pred, int target) {
        check_same_shape(pred, target);
        const int id = new_node(1, 1);
        const T inv = T(1) / static_cast<T>(val_[pred].size());
        steps_.push_back(
            {[this, id, pred, target, inv] {
                 val_[id](0, 0) = (val_[pred] - val_[target]).squaredNorm() * inv;
             },
             [this, id, pred, target, inv] {
                 const T scale = T(2) * inv * grad_[id](0, 0);
                 grad_[pred] += scale * (val_[pred] - val_[target]);
                 grad_[target] -= scale * (val_[pred] - val_[target]);
             }});
        return id;
    }

    Mat<T>& value(int id) { return val_[id]; }
    const Mat<T>& value(int id) const { return val_[id]; }
    const Mat<T>& gradient(int id) const { return grad_[id]; }

    void run_forward() {
        for (auto& s : steps_) s.fwd();
    }

    // Zeroes node gradients, seeds d(loss)=1, runs the chain in reverse.
    // Parameter gradients are accumulated (callers clear them via the
    // optimizer or explicitly).
    void run_backward(int loss) {
        if (val_[loss].size() != 1) throw ValidationError("backward target must be scalar");
        for (auto& g : grad_) g.setZero();
        grad_[loss](0, 0) = T(1);
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) it->bwd();
    }

private:
    struct Step {
        std::function<void()> fwd;
        std::function<void()> bwd;
    };

    int new_node(Eigen::Index rows, Eigen::Index cols) {
        val_.emplace_back(Mat<T>::Zero(rows, cols));
        grad_.emplace_back(Mat<T>::Zero(rows, cols));
        return static_cast<int>(val_.size() - 1);
    }

    void check_cols_rows(int a, int b) const {
        if (val_[a].cols() != val_[b].rows()) throw ValidationError(shape_msg("matmul", a, b));
    }
    void check_same_shape(int a, int b) const {
        if (val_[a].rows() != val_[b].rows() || val_[a].cols() != val_[b].cols())
            throw ValidationError(shape_msg("add", a, b));
    }
    std::string shape_msg(const char* op, int a, int b) const {
        return std::string(op) + ": incompatible shapes (" + std::to_string(val_[a].rows()) +
               "x" + std::to_string(val_[a].cols()) + ") vs (" +
               std::to_string(val_[b].rows()) + "x" + std::to_string(val_[b].cols()) + ")";
    }

    std::vector<Mat<T>> val_;
    std::vector<Mat<T>> grad_;
    std::vector<Step> steps_;
};

template <typename T>
double global_grad_norm(const std::vector<Parameter<T>*>& params) {
    double sq = 0.0;
    for (const auto* p : params) sq += p->grad.template cast<double>().squaredNorm();
    return std::sqrt(sq);
}

enum class ClipMode { Norm, Value };

// Norm mode: rescale all gradients when the global L2 norm exceeds max_value.
// Value mode: clamp each gradient entry into [-max_value, max_value].
template <typename T>
void clip_gradients(const std::vector<Parameter<T>*>& params, double max_value,
                    ClipMode mode = ClipMode::Norm) {
    if (mode == ClipMode::Value) {
        for (auto* p : params)
            p->grad = p->grad.cwiseMax(static_cast<T>(-max_value))
                          .cwiseMin(static_cast<T>(max_value));
        return;
    }
    const double norm = global_grad_norm(params);
    if (norm <= max_value || norm == 0.0) return;
    const T scale = static_cast<T>(max_value / norm);
    for (auto* p : params) p->grad *= scale;
}

// Standard Adam with bias correction; gradients are cleared afterwards.
template <typename T>
void adam_step(const std::vector<Parameter<T>*>& params, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8) {
    for (auto* p : params) {
        if (p->grad.size() != p->value.size())
            throw ValidationError("adam_step: gradient missing for " + p->name);
        ++p->step_count;
        const T b1 = static_cast<T>(beta1), b2 = static_cast<T>(beta2);
        p->adam_m = b1 * p->adam_m + (T(1) - b1) * p->grad;
        p->adam_v.array() = b2 * p->adam_v.array() + (T(1) - b2) * p->grad.array().square();
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(p->step_count));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(p->step_count));
        const T a1 = static_cast<T>(1.0 / bc1);
        const T a2 = static_cast<T>(1.0 / std::sqrt(bc2));
        p->value.array() -= static_cast<T>(lr) * (a1 * p->adam_m.array()) /
                            ((a2 * p->adam_v.array().sqrt()) + static_cast<T>(eps));
        p->grad.setZero();
    }
}

}  // namespace fgse::nn
