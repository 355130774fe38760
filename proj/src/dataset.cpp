#include "fgse/dataset.hpp"

#include <atomic>
#include <fstream>
#include <thread>

#include "fgse/errors.hpp"
#include "fgse/powerflow.hpp"
#include "json.hpp"

namespace fgse {

namespace {

using nlohmann::json;

struct Attempt {
    bool accepted = false;
    Sample sample;
};

Attempt run_attempt(const PowerSystem& sys, const PmuPlacement& placement,
                    const GenerateOptions& opt, uint64_t sample_seed) {
    Attempt a;
    const InjectionOverrides inj = sample_injections(sys, sample_seed * 2, opt.spread);
    OperatingPoint op;
    try {
        op = solve_power_flow(sys, inj, PowerFlowOptions{});
    } catch (const NumericalError&) {
        return a;
    }
    if (!op.converged) return a;
    a.sample.seed = sample_seed;
    a.sample.injections_spread = opt.spread;
    a.sample.meas =
        synthesize_measurements(sys, op, placement, opt.var_mag, opt.var_ang, sample_seed * 2 + 1);
    try {
        a.sample.label = solve_exact(build_model(sys, placement, a.sample.meas));
    } catch (const NumericalError&) {
        return a;
    }
    a.accepted = true;
    return a;
}

const char* kind_name(PhasorKind k) {
    switch (k) {
        case PhasorKind::BusVoltage: return "voltage";
        case PhasorKind::BranchCurrentFrom: return "current_from";
        default: return "current_to";
    }
}

PhasorKind kind_from_name(const std::string& s) {
    if (s == "voltage") return PhasorKind::BusVoltage;
    if (s == "current_from") return PhasorKind::BranchCurrentFrom;
    if (s == "current_to") return PhasorKind::BranchCurrentTo;
    throw ParseError("unknown phasor kind: " + s);
}

}  // namespace

Dataset generate_dataset(const PowerSystem& sys, const GenerateOptions& opt) {
    if (opt.count <= 0) throw ValidationError("sample count must be positive");
    if (opt.var_mag <= 0.0 || opt.var_ang <= 0.0)
        throw ValidationError("measurement variances must be positive");
    const PmuPlacement placement = maximal_placement(sys);
    const int max_discards = (opt.count + 9) / 10;

    Dataset ds;
    ds.manifest.system_name = sys.name;
    ds.manifest.system_digest = case_digest_hex(sys);
    ds.manifest.count = opt.count;
    ds.manifest.var_mag = opt.var_mag;
    ds.manifest.var_ang = opt.var_ang;
    ds.manifest.spread = opt.spread;
    ds.manifest.seed_base = opt.seed_base;
    ds.samples.reserve(opt.count);

    const int jobs = std::max(1, opt.jobs);
    uint64_t next_attempt = 0;
    while (static_cast<int>(ds.samples.size()) < opt.count) {
        const int remaining = opt.count - static_cast<int>(ds.samples.size());
        const int chunk = jobs == 1 ? 1 : std::max(remaining, jobs);
        std::vector<Attempt> attempts(chunk);
        if (jobs == 1) {
            attempts[0] = run_attempt(sys, placement, opt, opt.seed_base + next_attempt);
        } else {
            std::vector<std::thread> workers;
            std::atomic<int> cursor{0};
            for (int w = 0; w < jobs; ++w)
                workers.emplace_back([&]() {
                    for (int t = cursor.fetch_add(1); t < chunk; t = cursor.fetch_add(1))
                        attempts[t] =
                            run_attempt(sys, placement, opt, opt.seed_base + next_attempt + t);
                });
            for (auto& w : workers) w.join();
        }
        for (int t = 0; t < chunk && static_cast<int>(ds.samples.size()) < opt.count; ++t) {
            ++next_attempt;
            if (attempts[t].accepted) {
                ds.manifest.clamped += attempts[t].sample.meas.clamp_count;
                ds.samples.push_back(std::move(attempts[t].sample));
            } else {
                ++ds.manifest.discarded;
                if (ds.manifest.discarded > max_discards)
                    throw NumericalError(
                        "dataset generation discarded more than 10% of attempts (spread " +
                        std::to_string(opt.spread) + " is likely too aggressive for " + sys.name +
                        ")");
            }
        }
    }
    return ds;
}

std::string manifest_path(const std::string& dataset_path) {
    return dataset_path + ".manifest.json";
}

void write_dataset(const std::string& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("cannot open dataset for writing: " + path);
    for (const auto& s : ds.samples) {
        json phasors = json::array();
        for (size_t i = 0; i < s.meas.size(); ++i) {
            const PolarPhasor& p = s.meas.polar[i];
            const RectMeasurement& r = s.meas.rect[i];
            phasors.push_back({{"kind", kind_name(p.kind)},
                               {"location", p.location},
                               {"mag", p.magnitude},
                               {"ang", p.angle},
                               {"var_mag", p.var_mag},
                               {"var_ang", p.var_ang},
                               {"z_re", r.z_re},
                               {"z_im", r.z_im},
                               {"var_re", r.var_re},
                               {"var_im", r.var_im},
                               {"cov", r.cov}});
        }
        std::vector<double> label(s.label.data(), s.label.data() + s.label.size());
        const json row = {{"seed", s.seed},
                          {"injections_spread", s.injections_spread},
                          {"phasors", phasors},
                          {"label", label},
                          {"label_source", "exact_wls"}};
        os << row.dump() << "\n";
    }
    if (!os) throw ValidationError("failed writing dataset: " + path);

    std::ofstream ms(manifest_path(path), std::ios::binary);
    if (!ms) throw ValidationError("cannot open manifest for writing: " + manifest_path(path));
    const json m = {{"system", ds.manifest.system_name},
                    {"digest", ds.manifest.system_digest},
                    {"count", ds.manifest.count},
                    {"var_mag", ds.manifest.var_mag},
                    {"var_ang", ds.manifest.var_ang},
                    {"spread", ds.manifest.spread},
                    {"seed_base", ds.manifest.seed_base},
                    {"discarded", ds.manifest.discarded},
                    {"clamped", ds.manifest.clamped},
                    {"toolkit_version", ds.manifest.toolkit_version}};
    ms << m.dump(1) << "\n";
    if (!ms) throw ValidationError("failed writing manifest: " + manifest_path(path));
}

Dataset read_dataset(const std::string& path) {
    std::ifstream ms(manifest_path(path));
    if (!ms) throw ValidationError("dataset manifest not found: " + manifest_path(path));
    Dataset ds;
    try {
        const json m = json::parse(ms);
        ds.manifest.system_name = m.at("system").get<std::string>();
        ds.manifest.system_digest = m.at("digest").get<std::string>();
        ds.manifest.count = m.at("count").get<int>();
        ds.manifest.var_mag = m.at("var_mag").get<double>();
        ds.manifest.var_ang = m.at("var_ang").get<double>();
        ds.manifest.spread = m.at("spread").get<double>();
        ds.manifest.seed_base = m.at("seed_base").get<uint64_t>();
        ds.manifest.discarded = m.at("discarded").get<int>();
        ds.manifest.clamped = m.at("clamped").get<int>();
        ds.manifest.toolkit_version = m.at("toolkit_version").get<std::string>();
    } catch (const json::exception& e) {
        throw ParseError("invalid dataset manifest " + manifest_path(path) + ": " + e.what());
    }

    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open dataset: " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json row = json::parse(line);
            Sample s;
            s.seed = row.at("seed").get<uint64_t>();
            s.injections_spread = row.at("injections_spread").get<double>();
            if (row.at("label_source").get<std::string>() != "exact_wls")
                throw ParseError("unsupported label source");
            for (const auto& pj : row.at("phasors")) {
                PolarPhasor p;
                p.kind = kind_from_name(pj.at("kind").get<std::string>());
                p.location = pj.at("location").get<int>();
                p.magnitude = pj.at("mag").get<double>();
                p.angle = pj.at("ang").get<double>();
                p.var_mag = pj.at("var_mag").get<double>();
                p.var_ang = pj.at("var_ang").get<double>();
                RectMeasurement r;
                r.z_re = pj.at("z_re").get<double>();
                r.z_im = pj.at("z_im").get<double>();
                r.var_re = pj.at("var_re").get<double>();
                r.var_im = pj.at("var_im").get<double>();
                r.cov = pj.at("cov").get<double>();
                s.meas.polar.push_back(p);
                s.meas.rect.push_back(r);
            }
            const auto& lj = row.at("label");
            s.label.resize(static_cast<Eigen::Index>(lj.size()));
            for (size_t i = 0; i < lj.size(); ++i) s.label[static_cast<Eigen::Index>(i)] = lj[i].get<double>();
            ds.samples.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw ParseError("invalid dataset record at " + path + ":" + std::to_string(line_no) +
                             ": " + e.what());
        }
    }
    if (static_cast<int>(ds.samples.size()) != ds.manifest.count)
        throw ValidationError("dataset has " + std::to_string(ds.samples.size()) +
                              " samples but manifest declares " +
                              std::to_string(ds.manifest.count));
    return ds;
}

}  // namespace fgse
