#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "fgse/errors.hpp"
#include "fgse/gnn/model.hpp"

namespace fgse::gnn {

// Binary checkpoint: model configuration, the digest of the power system the
// model was built for, every named parameter tensor with its optimizer state,
// and the running means of the centering layers. Round-trips bit exactly.
namespace detail {

constexpr uint64_t kCheckpointMagic = 0x46475345434b5031ull;  // "FGSECKP1"

inline void put_u64(std::ostream& os, uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline uint64_t get_u64(std::istream& is) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw ParseError("checkpoint truncated while reading integer");
    return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
    put_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is) {
    const uint64_t len = get_u64(is);
    if (len > (1u << 20)) throw ParseError("checkpoint string length is implausible");
    std::string s(len, '\0');
    is.read(s.data(), static_cast<std::streamsize>(len));
    if (!is) throw ParseError("checkpoint truncated while reading string");
    return s;
}

template <typename T>
void put_mat(std::ostream& os, const Mat<T>& m) {
    put_u64(os, static_cast<uint64_t>(m.rows()));
    put_u64(os, static_cast<uint64_t>(m.cols()));
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(sizeof(T) * m.size()));
}

template <typename T>
void get_mat(std::istream& is, Mat<T>& m) {
    const uint64_t rows = get_u64(is);
    const uint64_t cols = get_u64(is);
    if (static_cast<Eigen::Index>(rows) != m.rows() ||
        static_cast<Eigen::Index>(cols) != m.cols())
        throw ValidationError("checkpoint tensor shape " + std::to_string(rows) + "x" +
                              std::to_string(cols) + " does not match expected " +
                              std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    is.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(T) * m.size()));
    if (!is) throw ParseError("checkpoint truncated while reading tensor");
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, GnnParameters<T>& params,
                     const std::string& system_digest) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("cannot open checkpoint for writing: " + path);
    using namespace detail;
    put_u64(os, kCheckpointMagic);
    put_u64(os, sizeof(T));
    put_string(os, system_digest);
    put_u64(os, static_cast<uint64_t>(params.cfg.embedding_size));
    put_u64(os, static_cast<uint64_t>(params.cfg.num_layers));
    put_u64(os, static_cast<uint64_t>(params.cfg.encoding_width));
    put_mat<double>(os, Mat<double>::Constant(1, 1, params.cfg.leaky_slope));
    put_mat<double>(os, Mat<double>::Constant(1, 1, params.cfg.bn_momentum));
    const auto ps = params.all();
    put_u64(os, ps.size());
    for (auto* p : ps) {
        put_string(os, p->name);
        put_mat(os, p->value);
        put_mat(os, p->adam_m);
        put_mat(os, p->adam_v);
        put_u64(os, static_cast<uint64_t>(p->step_count));
    }
    const auto bns = params.bn_all();
    put_u64(os, bns.size());
    for (auto* b : bns) put_mat(os, b->running_mean);
    if (!os) throw ValidationError("failed writing checkpoint: " + path);
}

// Loads into a freshly configured parameter set; returns the stored digest so
// callers can verify the checkpoint matches the system they are about to use.
template <typename T>
std::string load_checkpoint(const std::string& path, GnnParameters<T>& params) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open checkpoint: " + path);
    using namespace detail;
    if (get_u64(is) != kCheckpointMagic)
        throw ParseError("not a model checkpoint: " + path);
    if (get_u64(is) != sizeof(T))
        throw ValidationError("checkpoint scalar width does not match this build");
    const std::string digest = get_string(is);
    GnnConfig cfg;
    cfg.embedding_size = static_cast<int>(get_u64(is));
    cfg.num_layers = static_cast<int>(get_u64(is));
    cfg.encoding_width = static_cast<int>(get_u64(is));
    Mat<double> scalar(1, 1);
    get_mat<double>(is, scalar);
    cfg.leaky_slope = scalar(0, 0);
    get_mat<double>(is, scalar);
    cfg.bn_momentum = scalar(0, 0);
    params.configure(cfg);
    const auto ps = params.all();
    if (get_u64(is) != ps.size())
        throw ValidationError("checkpoint parameter count does not match configuration");
    for (auto* p : ps) {
        const std::string name = get_string(is);
        if (name != p->name)
            throw ValidationError("checkpoint tensor order mismatch: expected " + p->name +
                                  ", found " + name);
        get_mat(is, p->value);
        get_mat(is, p->adam_m);
        get_mat(is, p->adam_v);
        p->step_count = static_cast<long long>(get_u64(is));
        p->grad.setZero();
    }
    const auto bns = params.bn_all();
    if (get_u64(is) != bns.size())
        throw ValidationError("checkpoint centering-state count does not match configuration");
    for (auto* b : bns) get_mat(is, b->running_mean);
    return digest;
}

}  // namespace fgse::gnn
