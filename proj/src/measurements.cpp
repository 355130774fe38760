#include "fgse/measurements.hpp"

#include <cmath>
#include <complex>

#include "fgse/errors.hpp"
#include "fgse/rng.hpp"

namespace fgse {

std::vector<PolarPhasor> true_phasors(const PowerSystem& sys, const OperatingPoint& op,
                                      const PmuPlacement& placement) {
    if (!op.converged) throw ValidationError("operating point did not converge");
    std::vector<PolarPhasor> out;
    out.reserve(placement.phasor_count);
    for (int bus : placement.measured_buses) {
        PolarPhasor p;
        p.kind = PhasorKind::BusVoltage;
        p.location = bus;
        p.magnitude = op.v_mag[bus];
        p.angle = op.v_ang[bus];
        out.push_back(p);
    }
    const auto adm = branch_admittances(sys);
    for (size_t bi = 0; bi < sys.branches.size(); ++bi) {
        const Branch& br = sys.branches[bi];
        const std::complex<double> vf = op.voltage(br.from);
        const std::complex<double> vt = op.voltage(br.to);
        const std::complex<double> i_from = adm[bi].y_ff * vf + adm[bi].y_ft * vt;
        const std::complex<double> i_to = adm[bi].y_tf * vf + adm[bi].y_tt * vt;
        PolarPhasor pf;
        pf.kind = PhasorKind::BranchCurrentFrom;
        pf.location = static_cast<int>(bi);
        pf.magnitude = std::abs(i_from);
        pf.angle = std::arg(i_from);
        out.push_back(pf);
        PolarPhasor pt;
        pt.kind = PhasorKind::BranchCurrentTo;
        pt.location = static_cast<int>(bi);
        pt.magnitude = std::abs(i_to);
        pt.angle = std::arg(i_to);
        out.push_back(pt);
    }
    return out;
}

std::vector<PolarPhasor> add_noise(const std::vector<PolarPhasor>& phasors, double var_mag,
                                   double var_ang, uint64_t rng_seed, int* clamp_count) {
    if (var_mag <= 0 || var_ang <= 0) throw ValidationError("noise variances must be positive");
    Rng rng(rng_seed);
    const double sd_mag = std::sqrt(var_mag);
    const double sd_ang = std::sqrt(var_ang);
    std::vector<PolarPhasor> out;
    out.reserve(phasors.size());
    int clamps = 0;
    for (const auto& p : phasors) {
        PolarPhasor q = p;
        q.magnitude = p.magnitude + rng.normal(0.0, sd_mag);
        q.angle = p.angle + rng.normal(0.0, sd_ang);
        if (q.magnitude < 0.0) {
            q.magnitude = 0.0;
            ++clamps;
        }
        q.var_mag = var_mag;
        q.var_ang = var_ang;
        out.push_back(q);
    }
    if (clamp_count) *clamp_count = clamps;
    return out;
}

RectMeasurement to_rectangular(const PolarPhasor& p) {
    const double c = std::cos(p.angle);
    const double s = std::sin(p.angle);
    RectMeasurement r;
    r.z_re = p.magnitude * c;
    r.z_im = p.magnitude * s;
    const double m = std::max({p.magnitude, std::sqrt(p.var_mag), kMinPropagationMag});
    r.var_re = c * c * p.var_mag + m * m * s * s * p.var_ang;
    r.var_im = s * s * p.var_mag + m * m * c * c * p.var_ang;
    r.cov = s * c * (p.var_mag - m * m * p.var_ang);
    return r;
}

MeasurementSet make_measurement_set(const std::vector<PolarPhasor>& noisy) {
    MeasurementSet set;
    set.polar = noisy;
    set.rect.reserve(noisy.size());
    for (const auto& p : noisy) set.rect.push_back(to_rectangular(p));
    return set;
}

MeasurementSet synthesize_measurements(const PowerSystem& sys, const OperatingPoint& op,
                                       const PmuPlacement& placement, double var_mag,
                                       double var_ang, uint64_t rng_seed) {
    const auto clean = true_phasors(sys, op, placement);
    int clamps = 0;
    const auto noisy = add_noise(clean, var_mag, var_ang, rng_seed, &clamps);
    MeasurementSet set = make_measurement_set(noisy);
    set.clamp_count = clamps;
    return set;
}

}  // namespace fgse
