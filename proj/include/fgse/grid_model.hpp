#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace fgse {

enum class BusKind { Slack, PV, PQ };

struct Bus {
    int id = 0;       // dense 0-based index assigned at load time
    int ext_id = 0;   // id as written in the case file
    BusKind kind = BusKind::PQ;
    double p_load = 0.0;
    double q_load = 0.0;
    double g_shunt = 0.0;
    double b_shunt = 0.0;
    double v_setpoint = 1.0;  // Slack/PV only
    double p_gen = 0.0;       // PV only
};

struct Branch {
    int from = 0;
    int to = 0;
    double r = 0.0;
    double x = 0.0;
    double b_charging = 0.0;
    double tap = 1.0;
    double shift = 0.0;  // radians
};

struct PowerSystem {
    std::string name;
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;

    int n() const { return static_cast<int>(buses.size()); }
    int slack_index() const;
};

// Standard pi-model with the off-nominal tap and phase shift on the from side:
//   I_from = y_ff*V_f + y_ft*V_t,  I_to = y_tf*V_f + y_tt*V_t
struct BranchAdmittance {
    std::complex<double> y_ff, y_ft, y_tf, y_tt;
};

struct PmuPlacement {
    std::vector<int> measured_buses;
    int phasor_count = 0;  // n + 2*|branches| under maximal placement
};

PowerSystem load_case(const std::string& path);
PowerSystem case_from_json_text(const std::string& text, const std::string& origin);
std::string case_to_json_text(const PowerSystem& sys);
void validate_system(const PowerSystem& sys);

// FNV-1a 64-bit digest of the canonical JSON serialization; ties datasets and
// checkpoints to the exact system they were produced from.
uint64_t case_digest(const PowerSystem& sys);
std::string case_digest_hex(const PowerSystem& sys);

std::vector<BranchAdmittance> branch_admittances(const PowerSystem& sys);
BranchAdmittance branch_admittance(const Branch& br);

// Every bus measured: one voltage phasor per bus plus one current phasor per
// branch end, giving n + 2*|branches| phasors and m = 2*(n + 2*|branches|)
// measurement equations.
PmuPlacement maximal_placement(const PowerSystem& sys);

const char* bus_kind_name(BusKind k);

}  // namespace fgse
