#include "fgse/powerflow.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <cmath>

#include "fgse/errors.hpp"
#include "fgse/rng.hpp"

namespace fgse {

InjectionOverrides nominal_injections(const PowerSystem& sys) {
    InjectionOverrides inj;
    const int n = sys.n();
    inj.p_load.resize(n);
    inj.q_load.resize(n);
    inj.p_gen.resize(n);
    for (int i = 0; i < n; ++i) {
        inj.p_load[i] = sys.buses[i].p_load;
        inj.q_load[i] = sys.buses[i].q_load;
        inj.p_gen[i] = sys.buses[i].kind == BusKind::PV ? sys.buses[i].p_gen : 0.0;
    }
    return inj;
}

InjectionOverrides sample_injections(const PowerSystem& sys, uint64_t rng_seed, double spread) {
    if (spread < 0.0 || spread >= 1.0)
        throw ValidationError("injection spread must lie in [0, 1)");
    InjectionOverrides inj = nominal_injections(sys);
    if (spread == 0.0) return inj;
    Rng rng(rng_seed);
    double nominal_total = 0.0, scaled_total = 0.0;
    for (int i = 0; i < sys.n(); ++i) {
        if (sys.buses[i].kind != BusKind::PQ) continue;
        const double f = rng.uniform(1.0 - spread, 1.0 + spread);
        inj.p_load[i] *= f;
        inj.q_load[i] *= f;
        nominal_total += sys.buses[i].p_load;
        scaled_total += inj.p_load[i];
    }
    const double agg = nominal_total > 0.0 ? scaled_total / nominal_total : 1.0;
    for (int i = 0; i < sys.n(); ++i)
        if (sys.buses[i].kind == BusKind::PV) inj.p_gen[i] *= agg;
    return inj;
}

std::vector<YbusEntry> build_ybus(const PowerSystem& sys) {
    std::vector<YbusEntry> out;
    out.reserve(sys.branches.size() * 4 + sys.buses.size());
    for (const auto& br : sys.branches) {
        const BranchAdmittance a = branch_admittance(br);
        out.push_back({br.from, br.from, a.y_ff});
        out.push_back({br.from, br.to, a.y_ft});
        out.push_back({br.to, br.from, a.y_tf});
        out.push_back({br.to, br.to, a.y_tt});
    }
    for (const auto& b : sys.buses)
        out.push_back({b.id, b.id, {b.g_shunt, b.b_shunt}});
    return out;
}

OperatingPoint solve_power_flow(const PowerSystem& sys, const InjectionOverrides& inj,
                                const PowerFlowOptions& opt) {
    if (opt.tol <= 0) throw ValidationError("power flow tolerance must be positive");
    const int n = sys.n();

    Eigen::SparseMatrix<std::complex<double>> Y(n, n);
    {
        std::vector<Eigen::Triplet<std::complex<double>>> trip;
        for (const auto& e : build_ybus(sys)) trip.emplace_back(e.row, e.col, e.y);
        Y.setFromTriplets(trip.begin(), trip.end());
    }

    std::vector<double> p_spec(n), q_spec(n);
    for (int i = 0; i < n; ++i) {
        p_spec[i] = inj.p_gen[i] - inj.p_load[i];
        q_spec[i] = -inj.q_load[i];
    }

    OperatingPoint op;
    op.v_mag.assign(n, 1.0);
    op.v_ang.assign(n, 0.0);
    for (const auto& b : sys.buses)
        if (b.kind != BusKind::PQ) op.v_mag[b.id] = b.v_setpoint;

    // unknown layout: angles at non-slack buses, then magnitudes at PQ buses
    std::vector<int> ang_pos(n, -1), mag_pos(n, -1), pvpq, pq;
    for (const auto& b : sys.buses) {
        if (b.kind != BusKind::Slack) {
            ang_pos[b.id] = static_cast<int>(pvpq.size());
            pvpq.push_back(b.id);
        }
        if (b.kind == BusKind::PQ) pq.push_back(b.id);
    }
    for (size_t k = 0; k < pq.size(); ++k) mag_pos[pq[k]] = static_cast<int>(pvpq.size() + k);
    const int m = static_cast<int>(pvpq.size() + pq.size());

    Eigen::VectorXd p_calc(n), q_calc(n);
    // Row-wise admittance storage for the residual/Jacobian loops.
    Eigen::SparseMatrix<std::complex<double>, Eigen::RowMajor> Yr(Y);

    auto refresh = [&]() {
        for (int i = 0; i < n; ++i) {
            double pi = 0.0, qi = 0.0;
            for (Eigen::SparseMatrix<std::complex<double>, Eigen::RowMajor>::InnerIterator
                     it(Yr, i);
                 it; ++it) {
                const int k = static_cast<int>(it.col());
                const double g = it.value().real(), b = it.value().imag();
                const double th = op.v_ang[i] - op.v_ang[k];
                const double vv = op.v_mag[i] * op.v_mag[k];
                pi += vv * (g * std::cos(th) + b * std::sin(th));
                qi += vv * (g * std::sin(th) - b * std::cos(th));
            }
            p_calc[i] = pi;
            q_calc[i] = qi;
        }
    };

    Eigen::VectorXd mis(m);
    auto mismatch = [&]() {
        refresh();
        for (size_t k = 0; k < pvpq.size(); ++k) mis[k] = p_spec[pvpq[k]] - p_calc[pvpq[k]];
        for (size_t k = 0; k < pq.size(); ++k)
            mis[pvpq.size() + k] = q_spec[pq[k]] - q_calc[pq[k]];
        return mis.size() ? mis.cwiseAbs().maxCoeff() : 0.0;
    };

    op.max_mismatch = mismatch();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    for (op.iterations = 0; op.iterations < opt.max_iter; ++op.iterations) {
        if (op.max_mismatch <= opt.tol) {
            op.converged = true;
            return op;
        }
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(Yr.nonZeros() * 4);
        for (int i = 0; i < n; ++i) {
            const bool want_p = ang_pos[i] >= 0;  // non-slack
            const bool want_q = mag_pos[i] >= 0;  // PQ
            if (!want_p && !want_q) continue;
            const int row_p = ang_pos[i];
            const int row_q = want_q ? mag_pos[i] : -1;
            const double vi = op.v_mag[i];
            for (Eigen::SparseMatrix<std::complex<double>, Eigen::RowMajor>::InnerIterator
                     it(Yr, i);
                 it; ++it) {
                const int k = static_cast<int>(it.col());
                const double g = it.value().real(), b = it.value().imag();
                if (k == i) {
                    const double gii = g, bii = b;
                    if (want_p) {
                        trip.emplace_back(row_p, ang_pos[i], -q_calc[i] - bii * vi * vi);
                        if (mag_pos[i] >= 0)
                            trip.emplace_back(row_p, mag_pos[i], p_calc[i] / vi + gii * vi);
                    }
                    if (want_q) {
                        trip.emplace_back(row_q, ang_pos[i], p_calc[i] - gii * vi * vi);
                        trip.emplace_back(row_q, mag_pos[i], q_calc[i] / vi - bii * vi);
                    }
                    continue;
                }
                const double th = op.v_ang[i] - op.v_ang[k];
                const double vk = op.v_mag[k];
                const double c = std::cos(th), s = std::sin(th);
                const double dp_dtk = vi * vk * (g * s - b * c);
                const double dq_dtk = -vi * vk * (g * c + b * s);
                if (want_p) {
                    if (ang_pos[k] >= 0) trip.emplace_back(row_p, ang_pos[k], dp_dtk);
                    if (mag_pos[k] >= 0)
                        trip.emplace_back(row_p, mag_pos[k], vi * (g * c + b * s));
                }
                if (want_q) {
                    if (ang_pos[k] >= 0) trip.emplace_back(row_q, ang_pos[k], dq_dtk);
                    if (mag_pos[k] >= 0)
                        trip.emplace_back(row_q, mag_pos[k], vi * (g * s - b * c));
                }
            }
        }
        Eigen::SparseMatrix<double> J(m, m);
        J.setFromTriplets(trip.begin(), trip.end());
        lu.compute(J);
        if (lu.info() != Eigen::Success)
            throw NumericalError(sys.name + ": singular power-flow Jacobian at iteration " +
                                 std::to_string(op.iterations));
        const Eigen::VectorXd dx = lu.solve(mis);
        for (size_t k = 0; k < pvpq.size(); ++k) op.v_ang[pvpq[k]] += dx[k];
        for (size_t k = 0; k < pq.size(); ++k) op.v_mag[pq[k]] += dx[pvpq.size() + k];
        op.max_mismatch = mismatch();
        if (!std::isfinite(op.max_mismatch))
            throw NumericalError(sys.name + ": power flow diverged at iteration " +
                                 std::to_string(op.iterations));
    }
    op.converged = op.max_mismatch <= opt.tol;
    return op;
}

}  // namespace fgse
