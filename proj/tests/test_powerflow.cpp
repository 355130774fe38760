#include <cmath>
#include <complex>
#include <vector>

#include "doctest.h"
#include "fgse/errors.hpp"
#include "fgse/powerflow.hpp"
#include "test_util.hpp"

using namespace fgse;

namespace {

// Dense complex bus injections S_i = V_i * conj(sum_j Y_ij V_j).
std::vector<std::complex<double>> injections_from_solution(const PowerSystem& sys,
                                                           const OperatingPoint& op) {
    const int n = sys.n();
    std::vector<std::complex<double>> current(n, 0.0);
    for (const auto& e : build_ybus(sys)) current[e.row] += e.y * op.voltage(e.col);
    std::vector<std::complex<double>> s(n);
    for (int i = 0; i < n; ++i) s[i] = op.voltage(i) * std::conj(current[i]);
    return s;
}

}  // namespace

TEST_CASE("unloaded flat system solves in at most two iterations") {
    PowerSystem sys = load_fixture("two_bus");
    sys.buses[1].p_load = 0.0;
    sys.buses[1].q_load = 0.0;
    sys.buses[0].v_setpoint = 1.0;
    for (auto& br : sys.branches) br.b_charging = 0.0;
    const OperatingPoint op = solve_power_flow(sys, nominal_injections(sys));
    CHECK(op.converged);
    CHECK(op.iterations <= 2);
    CHECK(op.v_mag[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(op.v_mag[1] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(std::abs(op.v_ang[1]) < 1e-10);
}

TEST_CASE("two-bus solution matches a Gauss-Seidel oracle") {
    const PowerSystem sys = load_fixture("two_bus");
    const OperatingPoint op = solve_power_flow(sys, nominal_injections(sys));
    REQUIRE(op.converged);

    // independent fixed-point solve of the single PQ bus
    std::complex<double> y00(0, 0), y01(0, 0), y10(0, 0), y11(0, 0);
    for (const auto& e : build_ybus(sys)) {
        if (e.row == 0 && e.col == 0) y00 += e.y;
        if (e.row == 0 && e.col == 1) y01 += e.y;
        if (e.row == 1 && e.col == 0) y10 += e.y;
        if (e.row == 1 && e.col == 1) y11 += e.y;
    }
    const std::complex<double> v0 = std::polar(sys.buses[0].v_setpoint, 0.0);
    const std::complex<double> s1(-sys.buses[1].p_load, -sys.buses[1].q_load);
    std::complex<double> v1(1.0, 0.0);
    for (int it = 0; it < 500; ++it)
        v1 = (std::conj(s1 / v1) - y10 * v0) / y11;
    CHECK(std::abs(op.voltage(1) - v1) < 1e-8);
    CHECK(std::abs(op.voltage(0) - v0) < 1e-12);
}

TEST_CASE("all bundled systems converge from a flat start") {
    for (const char* name : {"two_bus", "ieee14", "ieee30", "ieee118", "synth300"}) {
        const PowerSystem sys = load_fixture(name);
        const OperatingPoint op = solve_power_flow(sys, nominal_injections(sys));
        CHECK_MESSAGE(op.converged, name);
        CHECK(op.iterations <= 10);
        CHECK(op.max_mismatch <= 1e-8);
        for (double v : op.v_mag) {
            CHECK(v > 0.85);
            CHECK(v < 1.15);
        }
    }
}

TEST_CASE("slack angle is exactly zero and PV magnitudes hold") {
    const PowerSystem sys = load_fixture("ieee30");
    const OperatingPoint op = solve_power_flow(sys, nominal_injections(sys));
    REQUIRE(op.converged);
    CHECK(op.v_ang[sys.slack_index()] == 0.0);
    CHECK(op.v_mag[sys.slack_index()] == sys.buses[sys.slack_index()].v_setpoint);
    for (const auto& b : sys.buses)
        if (b.kind == BusKind::PV) CHECK(op.v_mag[b.id] == doctest::Approx(b.v_setpoint).epsilon(1e-12));
}

TEST_CASE("solved injections satisfy the specified loads") {
    const PowerSystem sys = load_fixture("ieee30");
    const InjectionOverrides inj = nominal_injections(sys);
    const OperatingPoint op = solve_power_flow(sys, inj);
    REQUIRE(op.converged);
    const auto s = injections_from_solution(sys, op);
    double total_p = 0.0;
    for (int i = 0; i < sys.n(); ++i) {
        total_p += s[i].real();
        if (sys.buses[i].kind == BusKind::PQ) {
            CHECK(s[i].real() == doctest::Approx(-inj.p_load[i]).epsilon(1e-6));
            CHECK(s[i].imag() == doctest::Approx(-inj.q_load[i]).epsilon(1e-6));
        }
        if (sys.buses[i].kind == BusKind::PV)
            CHECK(s[i].real() == doctest::Approx(inj.p_gen[i] - inj.p_load[i]).epsilon(1e-6));
    }
    // net real injection equals the (positive) network losses
    CHECK(total_p > 0.0);
    CHECK(total_p < 0.2);
}

TEST_CASE("power flow is deterministic") {
    const PowerSystem sys = load_fixture("ieee118");
    const OperatingPoint a = solve_power_flow(sys, nominal_injections(sys));
    const OperatingPoint b = solve_power_flow(sys, nominal_injections(sys));
    REQUIRE(a.converged);
    CHECK(a.v_mag == b.v_mag);
    CHECK(a.v_ang == b.v_ang);
    CHECK(a.iterations == b.iterations);
}

TEST_CASE("injection sampling rejects bad spreads") {
    const PowerSystem sys = load_fixture("ieee30");
    CHECK_THROWS_AS(sample_injections(sys, 1, -0.1), ValidationError);
    CHECK_THROWS_AS(sample_injections(sys, 1, 1.0), ValidationError);
}

TEST_CASE("zero spread returns the nominal injections") {
    const PowerSystem sys = load_fixture("ieee30");
    const InjectionOverrides nom = nominal_injections(sys);
    const InjectionOverrides inj = sample_injections(sys, 123, 0.0);
    CHECK(inj.p_load == nom.p_load);
    CHECK(inj.q_load == nom.q_load);
    CHECK(inj.p_gen == nom.p_gen);
}

TEST_CASE("injection sampling is deterministic and seed-sensitive") {
    const PowerSystem sys = load_fixture("ieee30");
    const InjectionOverrides a = sample_injections(sys, 5, 0.5);
    const InjectionOverrides b = sample_injections(sys, 5, 0.5);
    const InjectionOverrides c = sample_injections(sys, 6, 0.5);
    CHECK(a.p_load == b.p_load);
    CHECK(a.p_load != c.p_load);
}

TEST_CASE("per-bus scaling stays inside the spread and preserves power factor") {
    const PowerSystem sys = load_fixture("ieee30");
    const InjectionOverrides nom = nominal_injections(sys);
    const InjectionOverrides inj = sample_injections(sys, 9, 0.5);
    for (int i = 0; i < sys.n(); ++i) {
        if (sys.buses[i].kind != BusKind::PQ) {
            CHECK(inj.p_load[i] == nom.p_load[i]);
            continue;
        }
        if (nom.p_load[i] == 0.0) continue;
        const double f = inj.p_load[i] / nom.p_load[i];
        CHECK(f >= 0.5);
        CHECK(f <= 1.5);
        if (nom.q_load[i] != 0.0)
            CHECK(inj.q_load[i] / nom.q_load[i] == doctest::Approx(f).epsilon(1e-12));
    }
}

TEST_CASE("empirical scale factors are centered on one") {
    const PowerSystem sys = load_fixture("ieee30");
    const InjectionOverrides nom = nominal_injections(sys);
    const int draws = 10000;
    std::vector<double> mean(sys.n(), 0.0);
    for (int d = 0; d < draws; ++d) {
        const InjectionOverrides inj = sample_injections(sys, 1000 + d, 0.5);
        for (int i = 0; i < sys.n(); ++i)
            if (sys.buses[i].kind == BusKind::PQ && nom.p_load[i] != 0.0)
                mean[i] += inj.p_load[i] / nom.p_load[i];
    }
    for (int i = 0; i < sys.n(); ++i) {
        if (sys.buses[i].kind != BusKind::PQ || nom.p_load[i] == 0.0) continue;
        const double m = mean[i] / draws;
        CHECK(m > 0.98);
        CHECK(m < 1.02);
    }
}

TEST_CASE("randomized operating points still converge and differ") {
    const PowerSystem sys = load_fixture("ieee30");
    const OperatingPoint a = solve_power_flow(sys, sample_injections(sys, 11, 0.5));
    const OperatingPoint b = solve_power_flow(sys, sample_injections(sys, 12, 0.5));
    REQUIRE(a.converged);
    REQUIRE(b.converged);
    CHECK(a.v_mag != b.v_mag);
}
