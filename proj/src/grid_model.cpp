#include "fgse/grid_model.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "fgse/errors.hpp"
#include "json.hpp"

namespace fgse {

using nlohmann::json;

const char* bus_kind_name(BusKind k) {
    switch (k) {
        case BusKind::Slack: return "slack";
        case BusKind::PV: return "pv";
        case BusKind::PQ: return "pq";
    }
    return "?";
}

static BusKind bus_kind_from_name(const std::string& s, const std::string& ctx) {
    if (s == "slack") return BusKind::Slack;
    if (s == "pv") return BusKind::PV;
    if (s == "pq") return BusKind::PQ;
    throw ValidationError(ctx + ": unknown bus kind \"" + s + "\"");
}

int PowerSystem::slack_index() const {
    for (const auto& b : buses)
        if (b.kind == BusKind::Slack) return b.id;
    throw ValidationError(name + ": no slack bus");
}

void validate_system(const PowerSystem& sys) {
    const std::string& nm = sys.name;
    if (sys.buses.empty()) throw ValidationError(nm + ": no buses");
    if (sys.base_mva <= 0) throw ValidationError(nm + ": base_mva must be positive");
    int slack_count = 0;
    for (size_t i = 0; i < sys.buses.size(); ++i) {
        const Bus& b = sys.buses[i];
        if (b.id != static_cast<int>(i))
            throw ValidationError(nm + ": bus ids not dense 0..n-1 at position " +
                                  std::to_string(i));
        if (b.kind == BusKind::Slack) ++slack_count;
        if (b.kind != BusKind::PQ && b.v_setpoint <= 0)
            throw ValidationError(nm + ": bus " + std::to_string(b.ext_id) +
                                  ": v_setpoint must be positive");
    }
    if (slack_count != 1)
        throw ValidationError(nm + ": expected exactly one slack bus, found " +
                              std::to_string(slack_count));
    const int n = sys.n();
    std::vector<std::vector<int>> adj(n);
    for (const auto& br : sys.branches) {
        if (br.from < 0 || br.from >= n || br.to < 0 || br.to >= n)
            throw ValidationError(nm + ": branch endpoint out of range");
        if (br.from == br.to) throw ValidationError(nm + ": branch from == to");
        if (br.r == 0.0 && br.x == 0.0)
            throw ValidationError(nm + ": branch with zero series impedance");
        if (br.tap <= 0) throw ValidationError(nm + ": branch tap must be positive");
        adj[br.from].push_back(br.to);
        adj[br.to].push_back(br.from);
    }
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int reached = 1;
    while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        for (int v : adj[u])
            if (!seen[v]) {
                seen[v] = 1;
                ++reached;
                stack.push_back(v);
            }
    }
    if (reached != n)
        throw ValidationError(nm + ": graph disconnected, reached " + std::to_string(reached) +
                              " of " + std::to_string(n) + " buses");
}

PowerSystem case_from_json_text(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(origin + ": " + e.what());
    }
    PowerSystem sys;
    try {
        sys.name = j.value("name", origin);
        sys.base_mva = j.at("base_mva").get<double>();
        std::map<int, int> ext2int;
        std::vector<int> ext_order;
        for (const auto& jb : j.at("buses")) {
            const int ext = jb.at("id").get<int>();
            if (ext2int.count(ext))
                throw ValidationError(origin + ": duplicate bus id " + std::to_string(ext));
            ext2int[ext] = 0;
            ext_order.push_back(ext);
        }
        std::sort(ext_order.begin(), ext_order.end());
        for (size_t i = 0; i < ext_order.size(); ++i) ext2int[ext_order[i]] = static_cast<int>(i);
        sys.buses.resize(ext_order.size());
        for (const auto& jb : j.at("buses")) {
            Bus b;
            b.ext_id = jb.at("id").get<int>();
            b.id = ext2int[b.ext_id];
            b.kind = bus_kind_from_name(jb.at("kind").get<std::string>(), origin);
            b.p_load = jb.value("p_load", 0.0);
            b.q_load = jb.value("q_load", 0.0);
            b.g_shunt = jb.value("g_shunt", 0.0);
            b.b_shunt = jb.value("b_shunt", 0.0);
            if (b.kind != BusKind::PQ) {
                b.v_setpoint = jb.at("v_setpoint").get<double>();
                b.p_gen = jb.value("p_gen", 0.0);
            }
            sys.buses[b.id] = b;
        }
        for (const auto& jb : j.at("branches")) {
            Branch br;
            const int f_ext = jb.at("from").get<int>();
            const int t_ext = jb.at("to").get<int>();
            if (!ext2int.count(f_ext) || !ext2int.count(t_ext))
                throw ValidationError(origin + ": branch references unknown bus");
            br.from = ext2int[f_ext];
            br.to = ext2int[t_ext];
            br.r = jb.at("r").get<double>();
            br.x = jb.at("x").get<double>();
            br.b_charging = jb.value("b", 0.0);
            br.tap = jb.value("tap", 1.0);
            br.shift = jb.value("shift", 0.0);
            sys.branches.push_back(br);
        }
    } catch (const json::exception& e) {
        throw ParseError(origin + ": " + e.what());
    }
    validate_system(sys);
    return sys;
}

PowerSystem load_case(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open case file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return case_from_json_text(ss.str(), path);
}

std::string case_to_json_text(const PowerSystem& sys) {
    json j;
    j["name"] = sys.name;
    j["base_mva"] = sys.base_mva;
    j["buses"] = json::array();
    for (const auto& b : sys.buses) {
        json jb;
        jb["id"] = b.ext_id;
        jb["kind"] = bus_kind_name(b.kind);
        jb["p_load"] = b.p_load;
        jb["q_load"] = b.q_load;
        jb["g_shunt"] = b.g_shunt;
        jb["b_shunt"] = b.b_shunt;
        if (b.kind != BusKind::PQ) {
            jb["v_setpoint"] = b.v_setpoint;
            jb["p_gen"] = b.p_gen;
        }
        j["buses"].push_back(jb);
    }
    j["branches"] = json::array();
    for (const auto& br : sys.branches) {
        json jb;
        jb["from"] = sys.buses[br.from].ext_id;
        jb["to"] = sys.buses[br.to].ext_id;
        jb["r"] = br.r;
        jb["x"] = br.x;
        jb["b"] = br.b_charging;
        jb["tap"] = br.tap;
        jb["shift"] = br.shift;
        j["branches"].push_back(jb);
    }
    return j.dump();
}

uint64_t case_digest(const PowerSystem& sys) {
    const std::string text = case_to_json_text(sys);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string case_digest_hex(const PowerSystem& sys) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(case_digest(sys)));
    return std::string(buf);
}

BranchAdmittance branch_admittance(const Branch& br) {
    const std::complex<double> y_s = 1.0 / std::complex<double>(br.r, br.x);
    const std::complex<double> y_sh(0.0, br.b_charging / 2.0);
    const std::complex<double> t = std::polar(br.tap, br.shift);
    BranchAdmittance a;
    a.y_ff = (y_s + y_sh) / (br.tap * br.tap);
    a.y_ft = -y_s / std::conj(t);
    a.y_tf = -y_s / t;
    a.y_tt = y_s + y_sh;
    return a;
}

std::vector<BranchAdmittance> branch_admittances(const PowerSystem& sys) {
    std::vector<BranchAdmittance> out;
    out.reserve(sys.branches.size());
    for (const auto& br : sys.branches) out.push_back(branch_admittance(br));
    return out;
}

PmuPlacement maximal_placement(const PowerSystem& sys) {
    PmuPlacement p;
    p.measured_buses.resize(sys.buses.size());
    for (size_t i = 0; i < sys.buses.size(); ++i) p.measured_buses[i] = static_cast<int>(i);
    p.phasor_count = sys.n() + 2 * static_cast<int>(sys.branches.size());
    return p;
}

}  // namespace fgse
