#include "fgse/wls_se.hpp"

#include <Eigen/SparseCholesky>
#include <cmath>

#include "fgse/errors.hpp"

namespace fgse {

StateVector state_from_operating_point(const OperatingPoint& op) {
    const int n = static_cast<int>(op.v_mag.size());
    StateVector x(2 * n);
    for (int i = 0; i < n; ++i) {
        x[i] = op.v_mag[i] * std::cos(op.v_ang[i]);
        x[n + i] = op.v_mag[i] * std::sin(op.v_ang[i]);
    }
    return x;
}

MeasurementModel build_model(const PowerSystem& sys, const PmuPlacement& placement,
                             const MeasurementSet& meas) {
    const int n = sys.n();
    if (static_cast<int>(meas.size()) != placement.phasor_count)
        throw ValidationError("measurement set size does not match placement");

    MeasurementModel model;
    model.n = n;
    const int m = 2 * placement.phasor_count;
    model.z.resize(m);
    model.sigma.reserve(placement.phasor_count);

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(placement.phasor_count * 8);
    const auto adm = branch_admittances(sys);

    const size_t nv = placement.measured_buses.size();
    for (size_t p = 0; p < meas.size(); ++p) {
        const PolarPhasor& ph = meas.polar[p];
        const RectMeasurement& rm = meas.rect[p];
        const int row_re = static_cast<int>(2 * p);
        const int row_im = row_re + 1;
        if (p < nv) {
            if (ph.kind != PhasorKind::BusVoltage)
                throw ValidationError("phasor ordering: expected bus voltage at index " +
                                      std::to_string(p));
            const int i = ph.location;
            trip.emplace_back(row_re, i, 1.0);
            trip.emplace_back(row_im, n + i, 1.0);
        } else {
            const size_t k = p - nv;
            const size_t bi = k / 2;
            const bool from_side = (k % 2 == 0);
            const PhasorKind want =
                from_side ? PhasorKind::BranchCurrentFrom : PhasorKind::BranchCurrentTo;
            if (ph.kind != want || ph.location != static_cast<int>(bi))
                throw ValidationError("phasor ordering: unexpected current phasor at index " +
                                      std::to_string(p));
            const Branch& br = sys.branches[bi];
            const std::complex<double> y_a = from_side ? adm[bi].y_ff : adm[bi].y_tf;
            const std::complex<double> y_b = from_side ? adm[bi].y_ft : adm[bi].y_tt;
            const int f = br.from, t = br.to;
            // I_re = g_a*v_re(f) - b_a*v_im(f) + g_b*v_re(t) - b_b*v_im(t)
            trip.emplace_back(row_re, f, y_a.real());
            trip.emplace_back(row_re, n + f, -y_a.imag());
            trip.emplace_back(row_re, t, y_b.real());
            trip.emplace_back(row_re, n + t, -y_b.imag());
            // I_im = b_a*v_re(f) + g_a*v_im(f) + b_b*v_re(t) + g_b*v_im(t)
            trip.emplace_back(row_im, f, y_a.imag());
            trip.emplace_back(row_im, n + f, y_a.real());
            trip.emplace_back(row_im, t, y_b.imag());
            trip.emplace_back(row_im, n + t, y_b.real());
        }
        model.z[row_re] = rm.z_re;
        model.z[row_im] = rm.z_im;
        model.sigma.push_back({rm.var_re, rm.var_im, rm.cov});
    }
    model.h.resize(m, 2 * n);
    model.h.setFromTriplets(trip.begin(), trip.end());
    return model;
}

namespace {

StateVector solve_weighted(const MeasurementModel& model, bool use_cov, WlsReport* report) {
    const int dim = 2 * model.n;
    std::vector<Eigen::Triplet<double>> gain_trip;
    gain_trip.reserve(model.sigma.size() * 36);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);

    // column index -> (coefficient in re row, coefficient in im row)
    std::vector<int> cols;
    std::vector<double> a_re, a_im;
    cols.reserve(8);
    a_re.reserve(8);
    a_im.reserve(8);

    for (size_t p = 0; p < model.sigma.size(); ++p) {
        const SigmaBlock& sb = model.sigma[p];
        if (sb.var_re <= 0 || sb.var_im <= 0)
            throw NumericalError("nonpositive measurement variance at phasor " +
                                 std::to_string(p));
        const double cov = use_cov ? sb.cov : 0.0;
        const double det = sb.var_re * sb.var_im - cov * cov;
        if (det <= 0)
            throw NumericalError("singular 2x2 covariance block at phasor " + std::to_string(p));
        const double w_rr = sb.var_im / det;
        const double w_ii = sb.var_re / det;
        const double w_ri = -cov / det;

        cols.clear();
        a_re.clear();
        a_im.clear();
        const int row_re = static_cast<int>(2 * p);
        auto add_entry = [&](int col, double v, bool is_re) {
            for (size_t c = 0; c < cols.size(); ++c)
                if (cols[c] == col) {
                    (is_re ? a_re[c] : a_im[c]) += v;
                    return;
                }
            cols.push_back(col);
            a_re.push_back(is_re ? v : 0.0);
            a_im.push_back(is_re ? 0.0 : v);
        };
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(model.h, row_re); it;
             ++it)
            add_entry(static_cast<int>(it.col()), it.value(), true);
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(model.h, row_re + 1);
             it; ++it)
            add_entry(static_cast<int>(it.col()), it.value(), false);

        const double z_re = model.z[row_re], z_im = model.z[row_re + 1];
        for (size_t c1 = 0; c1 < cols.size(); ++c1) {
            const double u_re = w_rr * a_re[c1] + w_ri * a_im[c1];
            const double u_im = w_ri * a_re[c1] + w_ii * a_im[c1];
            rhs[cols[c1]] += u_re * z_re + u_im * z_im;
            for (size_t c2 = 0; c2 < cols.size(); ++c2)
                gain_trip.emplace_back(cols[c1], cols[c2],
                                       u_re * a_re[c2] + u_im * a_im[c2]);
        }
    }

    Eigen::SparseMatrix<double> gain(dim, dim);
    gain.setFromTriplets(gain_trip.begin(), gain_trip.end());
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt;
    llt.compute(gain);
    if (llt.info() != Eigen::Success)
        throw NumericalError(
            "gain matrix factorization failed (not positive definite): system unobservable "
            "or covariance blocks degenerate; dim=" +
            std::to_string(dim));
    if (report) {
        const Eigen::VectorXd diag = Eigen::SparseMatrix<double>(llt.matrixL()).diagonal();
        const double dmin = diag.minCoeff(), dmax = diag.maxCoeff();
        report->iterations = 1;
        report->condition_estimate = dmin > 0 ? (dmax / dmin) * (dmax / dmin) : INFINITY;
    }
    StateVector x = llt.solve(rhs);
    if (!x.allFinite()) throw NumericalError("WLS solution contains non-finite values");
    return x;
}

}  // namespace

StateVector solve_exact(const MeasurementModel& model, WlsReport* report) {
    return solve_weighted(model, true, report);
}

StateVector solve_approximative(const MeasurementModel& model, WlsReport* report) {
    return solve_weighted(model, false, report);
}

std::vector<StateVector> label_dataset(const PowerSystem& sys, const PmuPlacement& placement,
                                       const std::vector<MeasurementSet>& samples) {
    std::vector<StateVector> labels;
    labels.reserve(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        try {
            const MeasurementModel model = build_model(sys, placement, samples[i]);
            labels.push_back(solve_exact(model));
        } catch (const std::exception& e) {
            throw NumericalError("labeling failed at sample " + std::to_string(i) + ": " +
                                 e.what());
        }
    }
    return labels;
}

}  // namespace fgse
