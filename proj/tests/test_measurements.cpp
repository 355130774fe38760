#include <cmath>
#include <complex>

#include "doctest.h"
#include "fgse/errors.hpp"
#include "fgse/measurements.hpp"
#include "fgse/powerflow.hpp"
#include "fgse/rng.hpp"
#include "test_util.hpp"

using namespace fgse;

TEST_CASE("noise-free phasors follow bus-then-branch-end order") {
    const PowerSystem sys = load_fixture("ieee30");
    const OperatingPoint op = solve_power_flow(sys, nominal_injections(sys));
    REQUIRE(op.converged);
    const PmuPlacement placement = maximal_placement(sys);
    const auto phasors = true_phasors(sys, op, placement);
    REQUIRE(static_cast<int>(phasors.size()) == placement.phasor_count);
    for (int i = 0; i < sys.n(); ++i) {
        CHECK(phasors[i].kind == PhasorKind::BusVoltage);
        CHECK(phasors[i].location == i);
        CHECK(phasors[i].magnitude == doctest::Approx(op.v_mag[i]).epsilon(1e-14));
        CHECK(phasors[i].angle == doctest::Approx(op.v_ang[i]).epsilon(1e-14));
    }
    for (size_t k = 0; k < sys.branches.size(); ++k) {
        const auto& from = phasors[sys.n() + 2 * k];
        const auto& to = phasors[sys.n() + 2 * k + 1];
        CHECK(from.kind == PhasorKind::BranchCurrentFrom);
        CHECK(to.kind == PhasorKind::BranchCurrentTo);
        CHECK(from.location == static_cast<int>(k));
        CHECK(to.location == static_cast<int>(k));
    }
}

TEST_CASE("branch current phasors match direct complex arithmetic") {
    const PowerSystem sys = load_fixture("ieee30");
    const OperatingPoint op = solve_power_flow(sys, nominal_injections(sys));
    REQUIRE(op.converged);
    const auto phasors = true_phasors(sys, op, maximal_placement(sys));
    const auto adm = branch_admittances(sys);
    for (size_t k = 0; k < sys.branches.size(); ++k) {
        const auto& br = sys.branches[k];
        const std::complex<double> vf = op.voltage(br.from);
        const std::complex<double> vt = op.voltage(br.to);
        const std::complex<double> i_from = adm[k].y_ff * vf + adm[k].y_ft * vt;
        const std::complex<double> i_to = adm[k].y_tf * vf + adm[k].y_tt * vt;
        const auto& pf = phasors[sys.n() + 2 * k];
        const auto& pt = phasors[sys.n() + 2 * k + 1];
        CHECK(std::abs(std::polar(pf.magnitude, pf.angle) - i_from) < 1e-12);
        CHECK(std::abs(std::polar(pt.magnitude, pt.angle) - i_to) < 1e-12);
    }
}

TEST_CASE("currents vanish on an unloaded flat system") {
    PowerSystem sys = load_fixture("two_bus");
    sys.buses[1].p_load = 0.0;
    sys.buses[1].q_load = 0.0;
    sys.buses[0].v_setpoint = 1.0;
    for (auto& br : sys.branches) br.b_charging = 0.0;
    const OperatingPoint op = solve_power_flow(sys, nominal_injections(sys));
    REQUIRE(op.converged);
    const auto phasors = true_phasors(sys, op, maximal_placement(sys));
    CHECK(phasors[2].magnitude < 1e-9);
    CHECK(phasors[3].magnitude < 1e-9);
}

TEST_CASE("unconverged operating points are rejected") {
    const PowerSystem sys = load_fixture("two_bus");
    OperatingPoint op;
    op.v_mag = {1.0, 1.0};
    op.v_ang = {0.0, 0.0};
    op.converged = false;
    CHECK_THROWS_AS(true_phasors(sys, op, maximal_placement(sys)), ValidationError);
}

TEST_CASE("noise is deterministic per seed and records variances") {
    const PowerSystem sys = load_fixture("ieee30");
    const OperatingPoint op = solve_power_flow(sys, nominal_injections(sys));
    const auto clean = true_phasors(sys, op, maximal_placement(sys));
    const auto a = add_noise(clean, 1e-4, 1e-4, 77);
    const auto b = add_noise(clean, 1e-4, 1e-4, 77);
    const auto c = add_noise(clean, 1e-4, 1e-4, 78);
    bool all_equal = true, any_equal_to_c = false, any_noise = false;
    for (size_t i = 0; i < a.size(); ++i) {
        all_equal = all_equal && a[i].magnitude == b[i].magnitude && a[i].angle == b[i].angle;
        // clamping can collide magnitudes across seeds, so compare the pair
        any_equal_to_c =
            any_equal_to_c || (a[i].magnitude == c[i].magnitude && a[i].angle == c[i].angle);
        any_noise = any_noise || a[i].magnitude != clean[i].magnitude;
        CHECK(a[i].var_mag == 1e-4);
        CHECK(a[i].var_ang == 1e-4);
    }
    CHECK(all_equal);
    CHECK(!any_equal_to_c);
    CHECK(any_noise);
}

TEST_CASE("vanishing variance leaves phasors unchanged") {
    const PowerSystem sys = load_fixture("two_bus");
    const OperatingPoint op = solve_power_flow(sys, nominal_injections(sys));
    const auto clean = true_phasors(sys, op, maximal_placement(sys));
    const auto noisy = add_noise(clean, 1e-30, 1e-30, 5);
    for (size_t i = 0; i < clean.size(); ++i) {
        CHECK(std::abs(noisy[i].magnitude - clean[i].magnitude) < 1e-12);
        CHECK(std::abs(noisy[i].angle - clean[i].angle) < 1e-12);
    }
}

TEST_CASE("non-positive variances are rejected") {
    PolarPhasor p;
    p.magnitude = 1.0;
    CHECK_THROWS_AS(add_noise({p}, 0.0, 1e-4, 1), ValidationError);
    CHECK_THROWS_AS(add_noise({p}, 1e-4, -1.0, 1), ValidationError);
}

TEST_CASE("negative noisy magnitudes clamp to zero and are counted") {
    PolarPhasor p;
    p.kind = PhasorKind::BusVoltage;
    p.magnitude = 1e-6;  // essentially every draw at var 0.5 goes negative or tiny
    p.angle = 0.3;
    std::vector<PolarPhasor> many(200, p);
    int clamped = 0;
    const auto noisy = add_noise(many, 0.5, 1e-6, 31, &clamped);
    CHECK(clamped > 0);
    int zeros = 0;
    for (const auto& q : noisy) {
        CHECK(q.magnitude >= 0.0);
        zeros += q.magnitude == 0.0;
    }
    CHECK(zeros == clamped);
}

TEST_CASE("magnitude noise has the requested variance") {
    PolarPhasor p;
    p.magnitude = 5.0;  // far enough from zero that clamping never triggers
    p.angle = 0.0;
    std::vector<PolarPhasor> many(100000, p);
    const auto noisy = add_noise(many, 0.5, 0.5, 99);
    double sum = 0.0, sq = 0.0;
    for (const auto& q : noisy) {
        const double e = q.magnitude - p.magnitude;
        sum += e;
        sq += e * e;
    }
    const double mean = sum / many.size();
    const double var = sq / many.size() - mean * mean;
    CHECK(std::abs(var - 0.5) < 0.025);
}

TEST_CASE("rectangular conversion of an axis-aligned phasor") {
    PolarPhasor p;
    p.magnitude = 1.0;
    p.angle = 0.0;
    p.var_mag = 0.5;
    p.var_ang = 0.5;
    const RectMeasurement r = to_rectangular(p);
    CHECK(r.z_re == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r.z_im == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(r.var_re == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.var_im == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.cov == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("rectangular conversion at 45 degrees") {
    PolarPhasor p;
    p.magnitude = 1.0;
    p.angle = 3.14159265358979323846 / 4.0;
    p.var_mag = 0.1;
    p.var_ang = 0.2;
    const RectMeasurement r = to_rectangular(p);
    CHECK(r.var_re == doctest::Approx(0.15).epsilon(1e-12));
    CHECK(r.var_im == doctest::Approx(0.15).epsilon(1e-12));
    CHECK(r.cov == doctest::Approx(-0.05).epsilon(1e-10));
}

TEST_CASE("covariance vanishes when var_mag equals M^2 var_ang") {
    PolarPhasor p;
    p.magnitude = 2.0;
    p.angle = 1.1;
    p.var_ang = 0.03;
    p.var_mag = 4.0 * 0.03;
    const RectMeasurement r = to_rectangular(p);
    CHECK(std::abs(r.cov) < 1e-15);
}

TEST_CASE("propagation trace identity and positive definiteness") {
    Rng rng(12);
    for (int i = 0; i < 2000; ++i) {
        PolarPhasor p;
        p.magnitude = rng.uniform(0.0, 3.0);
        p.angle = rng.uniform(-3.2, 3.2);
        p.var_mag = rng.uniform(1e-6, 0.6);
        p.var_ang = rng.uniform(1e-6, 0.6);
        const RectMeasurement r = to_rectangular(p);
        const double m_eff = std::max({p.magnitude, std::sqrt(p.var_mag), kMinPropagationMag});
        CHECK(r.var_re + r.var_im ==
              doctest::Approx(p.var_mag + m_eff * m_eff * p.var_ang).epsilon(1e-9));
        CHECK(r.var_re > 0.0);
        CHECK(r.var_im > 0.0);
        CHECK(r.cov * r.cov < r.var_re * r.var_im);
    }
}

TEST_CASE("clamped zero magnitude still yields a positive definite block") {
    PolarPhasor p;
    p.magnitude = 0.0;
    p.angle = 0.9;
    p.var_mag = 0.5;
    p.var_ang = 0.5;
    const RectMeasurement r = to_rectangular(p);
    CHECK(r.var_re > 0.0);
    CHECK(r.var_im > 0.0);
    CHECK(r.cov * r.cov < r.var_re * r.var_im);
    CHECK(r.z_re == 0.0);
    CHECK(r.z_im == 0.0);
}

TEST_CASE("propagated covariance matches Monte-Carlo at small variance") {
    PolarPhasor p;
    p.magnitude = 1.0;
    p.angle = 0.7;
    // distinct variances keep the propagated covariance away from zero so
    // the relative comparison below is well-defined
    p.var_mag = 2e-4;
    p.var_ang = 5e-5;
    const RectMeasurement prop = to_rectangular(p);
    Rng rng(404);
    const int n = 100000;
    double mre = 0, mim = 0, sre = 0, sim = 0, sc = 0;
    std::vector<double> re(n), im(n);
    for (int i = 0; i < n; ++i) {
        const double m = p.magnitude + rng.normal(0.0, std::sqrt(p.var_mag));
        const double a = p.angle + rng.normal(0.0, std::sqrt(p.var_ang));
        re[i] = m * std::cos(a);
        im[i] = m * std::sin(a);
        mre += re[i];
        mim += im[i];
    }
    mre /= n;
    mim /= n;
    for (int i = 0; i < n; ++i) {
        sre += (re[i] - mre) * (re[i] - mre);
        sim += (im[i] - mim) * (im[i] - mim);
        sc += (re[i] - mre) * (im[i] - mim);
    }
    sre /= n;
    sim /= n;
    sc /= n;
    CHECK(std::abs(sre - prop.var_re) / prop.var_re < 0.10);
    CHECK(std::abs(sim - prop.var_im) / prop.var_im < 0.10);
    CHECK(std::abs(sc - prop.cov) / std::abs(prop.cov) < 0.10);
}

TEST_CASE("synthesized measurement sets are complete and deterministic") {
    const PowerSystem sys = load_fixture("ieee30");
    const OperatingPoint op = solve_power_flow(sys, nominal_injections(sys));
    const PmuPlacement placement = maximal_placement(sys);
    const MeasurementSet a = synthesize_measurements(sys, op, placement, 0.5, 0.5, 3);
    const MeasurementSet b = synthesize_measurements(sys, op, placement, 0.5, 0.5, 3);
    CHECK(a.size() == static_cast<size_t>(placement.phasor_count));
    CHECK(a.rect.size() == a.polar.size());
    CHECK(a.clamp_count == b.clamp_count);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a.rect[i].z_re == b.rect[i].z_re);
        CHECK(a.rect[i].cov == b.rect[i].cov);
    }
}
