#include "rytof/pulse.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>

namespace rytof {

double VoltageWaveform::window_start_s() const {
    if (channels.empty()) throw std::invalid_argument("waveform: no channels");
    double t = -1e300;
    for (const auto& [name, segs] : channels) t = std::max(t, segs.front().t_start_s);
    return t;
}

double VoltageWaveform::window_end_s() const {
    if (channels.empty()) throw std::invalid_argument("waveform: no channels");
    double t = 1e300;
    for (const auto& [name, segs] : channels) t = std::min(t, segs.back().t_end_s);
    return t;
}

void VoltageWaveform::validate() const {
    if (channels.empty()) throw std::invalid_argument("waveform: no channels");
    for (const auto& [name, segs] : channels) {
        if (segs.empty())
            throw std::invalid_argument("waveform: channel " + name + " has no segments");
        for (size_t i = 0; i < segs.size(); ++i) {
            if (!(segs[i].t_end_s > segs[i].t_start_s))
                throw std::invalid_argument("waveform: empty segment on " + name);
            if (i > 0 && std::abs(segs[i].t_start_s - segs[i - 1].t_end_s) > 1e-15)
                throw std::invalid_argument("waveform: gap or overlap on " + name);
        }
    }
    if (!(window_end_s() > window_start_s()))
        throw std::invalid_argument("waveform: channels share no common window");
}

double VoltageWaveform::eval(const std::string& electrode, double t_s) const {
    auto it = channels.find(electrode);
    if (it == channels.end()) return 0.0;  // undriven electrode
    const auto& segs = it->second;
    if (t_s < segs.front().t_start_s - 1e-15 || t_s > segs.back().t_end_s + 1e-15)
        throw std::domain_error("waveform: time outside window for " + electrode);
    for (const auto& s : segs) {
        if (t_s <= s.t_end_s + 1e-15) {
            if (s.t_end_s == s.t_start_s) return s.v_end_V;
            const double f = std::clamp((t_s - s.t_start_s) / (s.t_end_s - s.t_start_s), 0.0, 1.0);
            return s.v_start_V * (1.0 - f) + s.v_end_V * f;
        }
    }
    return segs.back().v_end_V;
}

VoltageWaveform VoltageWaveform::fig2_preset() {
    const double us = 1e-6, ns = 1e-9;
    VoltageWaveform w;
    w.channels["P1"] = {
        {0.0, 1.2 * us, 0.0, -115.0},
        {1.2 * us, 2.5 * us, -115.0, -115.0},
        {2.5 * us, 3.7 * us, -115.0, -230.0},
        {3.7 * us, 4.5 * us, -230.0, -230.0},
    };
    const double pulse_on = 1.8 * us;
    w.channels["P2"] = {
        {0.0, pulse_on, 0.0, 0.0},
        {pulse_on, pulse_on + 10 * ns, 0.0, 10.0},
        {pulse_on + 10 * ns, pulse_on + 40 * ns, 10.0, 10.0},
        {pulse_on + 40 * ns, pulse_on + 50 * ns, 10.0, 0.0},
        {pulse_on + 50 * ns, 4.5 * us, 0.0, 0.0},
    };
    w.fast_pulse_start_s = pulse_on;
    w.fast_pulse_end_s = pulse_on + 50 * ns;
    w.final_ramp_start_s = 2.5 * us;
    return w;
}

void write_waveform_csv(const VoltageWaveform& w, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    char buf[256];
    std::snprintf(buf, sizeof buf, "# fast_pulse_start_s = %.17g, fast_pulse_end_s = %.17g, final_ramp_start_s = %.17g\n",
                  w.fast_pulse_start_s, w.fast_pulse_end_s, w.final_ramp_start_s);
    out << buf << "electrode,t_start_s,t_end_s,V_start,V_end\n";
    for (const auto& [name, segs] : w.channels)
        for (const auto& s : segs) {
            std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g\n", name.c_str(),
                          s.t_start_s, s.t_end_s, s.v_start_V, s.v_end_V);
            out << buf;
        }
}

VoltageWaveform read_waveform_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    VoltageWaveform w;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::sscanf(line.c_str(),
                        "# fast_pulse_start_s = %lg, fast_pulse_end_s = %lg, final_ramp_start_s = %lg",
                        &w.fast_pulse_start_s, &w.fast_pulse_end_s, &w.final_ramp_start_s);
            continue;
        }
        if (line.rfind("electrode", 0) == 0) continue;
        char name[128];
        WaveformSegment s;
        if (std::sscanf(line.c_str(), "%127[^,],%lg,%lg,%lg,%lg", name, &s.t_start_s,
                        &s.t_end_s, &s.v_start_V, &s.v_end_V) != 5)
            throw std::runtime_error("waveform csv: bad row: " + line);
        w.channels[name].push_back(s);
    }
    for (auto& [name, segs] : w.channels)
        std::sort(segs.begin(), segs.end(),
                  [](const auto& a, const auto& b) { return a.t_start_s < b.t_start_s; });
    w.validate();
    return w;
}

double field_at(const VoltageWaveform& w, const ApparatusGeometry& geometry, double t_s) {
    const double v1 = w.eval("P1", t_s);
    const double v2 = w.eval("P2", t_s);
    return (v2 - v1) / geometry.plate_gap_m;
}

double field_at(const VoltageWaveform& w, const ApparatusGeometry& geometry,
                const std::map<std::string, PotentialProfile>& unit_profiles, double t_s) {
    if (unit_profiles.empty())
        throw std::invalid_argument("field_at: no unit-voltage profiles loaded");
    double field = 0.0;
    for (const auto& [name, profile] : unit_profiles)
        field += w.eval(name, t_s) * profile.gradient_at(geometry.mot_position_m);
    return field;
}

const char* to_string(PeakClass c) {
    switch (c) {
        case PeakClass::PrePulse: return "pre_pulse";
        case PeakClass::A: return "a";
        case PeakClass::B: return "b";
        case PeakClass::C: return "c";
        case PeakClass::Unionized: return "unionized";
    }
    return "?";
}

void StarkBranchModel::validate() const {
    if (branches.empty()) throw std::invalid_argument("stark model: no branches");
    double sum = 0.0;
    for (const auto& b : branches) {
        if (b.fraction < 0.0) throw std::invalid_argument("stark model: negative fraction");
        if (!(b.threshold_V_per_m > 0.0))
            throw std::invalid_argument("stark model: threshold must be > 0");
        if (b.sigma_V_per_m < 0.0) throw std::invalid_argument("stark model: negative sigma");
        sum += b.fraction;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("stark model: fractions must sum to 1");
}

StarkBranchModel StarkBranchModel::default_for(const RydbergState& state) {
    const double f_cl = classical_ionization_field_V_per_m(state);
    StarkBranchModel m;
    m.branches = {
        {"blue", 0.50, 1.2566 * f_cl, 0.0106 * f_cl},
        {"red", 0.30, 1.3095 * f_cl, 0.0040 * f_cl},
        {"red", 0.20, 1.5873 * f_cl, 0.0800 * f_cl},
    };
    return m;
}

namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Merged time breakpoints of all channels, restricted to the common window.
std::vector<double> merged_breakpoints(const VoltageWaveform& w) {
    std::set<double> pts;
    const double lo = w.window_start_s(), hi = w.window_end_s();
    pts.insert(lo);
    pts.insert(hi);
    for (const auto& [name, segs] : w.channels)
        for (const auto& s : segs) {
            if (s.t_start_s > lo && s.t_start_s < hi) pts.insert(s.t_start_s);
            if (s.t_end_s > lo && s.t_end_s < hi) pts.insert(s.t_end_s);
        }
    return {pts.begin(), pts.end()};
}

// Earliest t in the window with |field(t)| >= threshold, or nullopt.
std::optional<double> first_crossing(const std::vector<double>& pts,
                                     const std::vector<double>& fields,
                                     double threshold) {
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
        const double fa = fields[i], fb = fields[i + 1];
        if (std::abs(fa) >= threshold) return pts[i];
        // field linear on [ta, tb]; check crossings of +/- threshold
        double best = 1e300;
        for (double lvl : {threshold, -threshold}) {
            if ((fa - lvl) * (fb - lvl) <= 0.0 && fa != fb) {
                const double f = (lvl - fa) / (fb - fa);
                if (f >= 0.0 && f <= 1.0)
                    best = std::min(best, pts[i] + f * (pts[i + 1] - pts[i]));
            }
        }
        if (best < 1e300) return best;
    }
    if (std::abs(fields.back()) >= threshold) return pts.back();
    return std::nullopt;
}

}  // namespace

std::vector<IonizationEvent> ionization_events(const std::vector<EnsembleAtom>& atoms,
                                               const VoltageWaveform& waveform,
                                               const ApparatusGeometry& geometry,
                                               const IonizationConfig& config,
                                               uint64_t rng_seed) {
    waveform.validate();
    config.model.validate();
    if (config.contamination_fraction < 0.0 || config.contamination_fraction > 1.0)
        throw std::invalid_argument("ionization_events: contamination fraction outside [0,1]");
    if (config.contamination_fraction > 0.0) config.contaminant_model.validate();

    const std::vector<double> pts = merged_breakpoints(waveform);
    std::vector<double> fields(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) fields[i] = field_at(waveform, geometry, pts[i]);

    // the red branch that releases during the fast pulse: lowest-threshold red
    auto fast_red_branch = [](const StarkBranchModel& m) -> const StarkBranch* {
        const StarkBranch* best = nullptr;
        for (const auto& b : m.branches)
            if (b.label == "red" && (!best || b.threshold_V_per_m < best->threshold_V_per_m))
                best = &b;
        return best;
    };

    std::vector<IonizationEvent> events;
    events.reserve(atoms.size());
    for (const auto& atom : atoms) {
        std::mt19937_64 rng(splitmix64(rng_seed ^ splitmix64(atom.id)));
        std::uniform_real_distribution<double> uni(0.0, 1.0);

        const StarkBranch* branch = nullptr;
        const double contam_draw = uni(rng);
        if (contam_draw < config.contamination_fraction) {
            branch = fast_red_branch(config.contaminant_model);
            if (!branch)
                throw std::invalid_argument("ionization_events: contaminant model has no red branch");
        } else {
            const double pick = uni(rng);
            double acc = 0.0;
            for (const auto& b : config.model.branches) {
                acc += b.fraction;
                if (pick < acc || &b == &config.model.branches.back()) {
                    branch = &b;
                    break;
                }
            }
        }
        std::normal_distribution<double> thr(branch->threshold_V_per_m, branch->sigma_V_per_m);
        const double threshold = std::max(thr(rng), 1e-3);

        IonizationEvent ev;
        ev.atom_id = atom.id;
        ev.branch_label = branch->label;
        const auto t_rel = first_crossing(pts, fields, threshold);
        if (!t_rel) {
            ev.peak_class = PeakClass::Unionized;
        } else {
            ev.release_time_s = *t_rel;
            ev.release_position_m = atom.position_m;
            const double v1 = waveform.eval("P1", *t_rel);
            const double v2 = waveform.eval("P2", *t_rel);
            ev.release_potential_V =
                v1 + (v2 - v1) * (atom.position_m / geometry.plate_gap_m);
            if (*t_rel < waveform.fast_pulse_start_s)
                ev.peak_class = PeakClass::PrePulse;
            else if (*t_rel <= waveform.fast_pulse_end_s)
                ev.peak_class = (branch->label == "blue") ? PeakClass::A : PeakClass::B;
            else
                ev.peak_class = PeakClass::C;
        }
        events.push_back(std::move(ev));
    }
    std::sort(events.begin(), events.end(),
              [](const auto& a, const auto& b) { return a.atom_id < b.atom_id; });
    return events;
}

SelectivityResult selectivity(const std::vector<IonizationEvent>& events_state1,
                              const std::vector<IonizationEvent>& events_state0) {
    SelectivityResult r;
    for (const auto& e : events_state1)
        if (e.peak_class == PeakClass::B) ++r.b_state1;
    for (const auto& e : events_state0)
        if (e.peak_class == PeakClass::B) ++r.b_state0;
    if (r.b_state1 == 0) {
        r.undefined = true;
        return r;
    }
    if (r.b_state0 == 0) {
        r.infinite = true;
        r.ratio = std::numeric_limits<double>::infinity();
        return r;
    }
    r.ratio = static_cast<double>(r.b_state1) / static_cast<double>(r.b_state0);
    return r;
}

}  // namespace rytof
