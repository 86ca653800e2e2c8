#include "rytof/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "rytof/constants.hpp"

namespace rytof {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

void RunConfig::validate() const {
    if (!(plate_gap_m > 0.0) || !(tube_length_m > 0.0) || !(total_flight_m > 0.0))
        throw std::invalid_argument("config: lengths must be > 0");
    if (tube_length_m >= total_flight_m)
        throw std::invalid_argument("config: tube_length must be < total_flight");
    if (!(grid_spacing_m > 0.0) || !(solver_tolerance > 0.0))
        throw std::invalid_argument("config: solver parameters must be > 0");
    if (temperature_K < 0.0) throw std::invalid_argument("config: negative temperature");
    if (!(laser_diameter_1e_m > 0.0))
        throw std::invalid_argument("config: laser diameter must be > 0");
    if (contamination_fraction < 0.0 || contamination_fraction > 1.0)
        throw std::invalid_argument("config: contamination outside [0,1]");
    if (state_n < 1 || other_state_n < 1)
        throw std::invalid_argument("config: principal quantum numbers must be >= 1");
    if (transmission < 0.0 || transmission > 1.0)
        throw std::invalid_argument("config: transmission outside [0,1]");
    if (!(bin_width_s > 0.0)) throw std::invalid_argument("config: bin width must be > 0");
    if (tau_instr_s < 0.0) throw std::invalid_argument("config: negative tau");
    if (lens_count > 0 && !(lens_step_m != 0.0 || lens_count == 1))
        throw std::invalid_argument("config: lens step must be nonzero");
    if (offset_source != "fixed" && offset_source != "fitted")
        throw std::invalid_argument("config: offset_source must be fixed or fitted");
    if (cal_t_offset_s < 0.0) throw std::invalid_argument("config: negative t_offset");
    if (waveform_preset != "fig2" && waveform_preset != "file")
        throw std::invalid_argument("config: unknown waveform preset " + waveform_preset);
    if (waveform_preset == "file" && waveform_file.empty())
        throw std::invalid_argument("config: waveform.file required for preset 'file'");
}

std::string RunConfig::canonical_text() const {
    std::ostringstream out;
    out << "geometry.plate_gap_m = " << fmt(plate_gap_m) << "\n";
    out << "geometry.plate_diameter_m = " << fmt(plate_diameter_m) << "\n";
    out << "geometry.hole_diameter_m = " << fmt(hole_diameter_m) << "\n";
    out << "geometry.tube_length_m = " << fmt(tube_length_m) << "\n";
    out << "geometry.total_flight_m = " << fmt(total_flight_m) << "\n";
    out << "geometry.v_p1 = " << fmt(v_p1) << "\n";
    out << "geometry.v_p2 = " << fmt(v_p2) << "\n";
    out << "geometry.v_tube = " << fmt(v_tube) << "\n";
    out << "geometry.v_mesh = " << fmt(v_mesh) << "\n";
    out << "geometry.grid_spacing_m = " << fmt(grid_spacing_m) << "\n";
    out << "geometry.tolerance = " << fmt(solver_tolerance) << "\n";
    out << "waveform.preset = " << waveform_preset << "\n";
    out << "waveform.file = " << waveform_file << "\n";
    out << "ensemble.n_atoms = " << n_atoms << "\n";
    out << "ensemble.temperature_K = " << fmt(temperature_K) << "\n";
    out << "ensemble.lens_start_m = " << fmt(lens_start_m) << "\n";
    out << "ensemble.lens_step_m = " << fmt(lens_step_m) << "\n";
    out << "ensemble.lens_count = " << lens_count << "\n";
    out << "ensemble.laser_diameter_1e_m = " << fmt(laser_diameter_1e_m) << "\n";
    out << "ensemble.two_photon = " << (two_photon ? "true" : "false") << "\n";
    out << "ensemble.contamination_fraction = " << fmt(contamination_fraction) << "\n";
    out << "ensemble.state_n = " << state_n << "\n";
    out << "ensemble.other_state_n = " << other_state_n << "\n";
    out << "detector.tau_instr_s = " << fmt(tau_instr_s) << "\n";
    out << "detector.transmission = " << fmt(transmission) << "\n";
    out << "detector.bin_width_s = " << fmt(bin_width_s) << "\n";
    out << "calibration.E_V_per_m = " << fmt(cal_field_V_per_m) << "\n";
    out << "calibration.V0_V = " << fmt(cal_offset_V) << "\n";
    out << "calibration.t_offset_s = " << fmt(cal_t_offset_s) << "\n";
    out << "calibration.offset_source = " << offset_source << "\n";
    out << "seed = " << seed << "\n";
    out << "out_dir = " << out_dir << "\n";
    return out.str();
}

std::string RunConfig::hash() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(canonical_text())));
    return buf;
}

std::vector<double> RunConfig::lens_positions() const {
    std::vector<double> xs;
    for (uint64_t i = 0; i < lens_count; ++i)
        xs.push_back(lens_start_m + static_cast<double>(i) * lens_step_m);
    return xs;
}

ApparatusGeometry RunConfig::geometry() const {
    ApparatusGeometry g = ApparatusGeometry::paper_default(v_p1, v_p2, v_tube, v_mesh);
    g.plate_gap_m = plate_gap_m;
    g.plate_diameter_m = plate_diameter_m;
    g.hole_diameter_m = hole_diameter_m;
    g.tube_length_m = tube_length_m;
    g.total_flight_m = total_flight_m;
    // rebuild electrodes when dimensions differ from the defaults
    if (plate_gap_m != 0.025 || plate_diameter_m != 0.055 || hole_diameter_m != 0.014 ||
        tube_length_m != 0.40 || total_flight_m != 0.45) {
        const double hole_r = hole_diameter_m / 2.0;
        const double plate_r = plate_diameter_m / 2.0;
        const double thick = 1e-3;
        const double tube_start = plate_gap_m + 0.015;
        g.mot_position_m = plate_gap_m / 2.0;
        g.mesh_position_m = g.mot_position_m + total_flight_m;
        g.domain_radius_m = 3.0 * plate_r;
        g.electrodes = {
            {"P1", -thick, 0.0, hole_r, plate_r, v_p1},
            {"P2", plate_gap_m, plate_gap_m + thick, hole_r, plate_r, v_p2},
            {"tube", tube_start, tube_start + tube_length_m, hole_r, hole_r + thick, v_tube},
            {"mesh", g.mesh_position_m, g.mesh_position_m + thick, 0.0, g.domain_radius_m,
             v_mesh},
        };
    }
    return g;
}

VoltageWaveform RunConfig::waveform() const {
    if (waveform_preset == "file") return read_waveform_csv(waveform_file);
    return VoltageWaveform::fig2_preset();
}

SeriesConfig RunConfig::series_config() const {
    SeriesConfig sc;
    sc.volume.laser_diameter_1e_m = laser_diameter_1e_m;
    sc.volume.two_photon = two_photon;
    sc.temperature_K = temperature_K;
    sc.mass_kg = constants::rb85_mass_kg;
    sc.n_atoms = n_atoms;
    sc.calibration.tube_length_m = tube_length_m;
    sc.calibration.field_V_per_m = cal_field_V_per_m;
    sc.calibration.offset_V = cal_offset_V;
    sc.calibration.time_offset_s = cal_t_offset_s;
    sc.detector.tau_instr_s = tau_instr_s;
    sc.detector.mesh_transmission = transmission;
    sc.detector.bin_width_s = bin_width_s;
    sc.state_label = std::to_string(state_n) + "d";
    sc.config_hash = hash();
    return sc;
}

CalibrationOptions RunConfig::calibration_options() const {
    CalibrationOptions opt;
    opt.offset_source = offset_source == "fitted" ? OffsetSource::Fitted : OffsetSource::Fixed;
    opt.fixed_t_offset_s = cal_t_offset_s;
    opt.tube_length_m = tube_length_m;
    return opt;
}

RunConfig RunConfig::paper_preset() {
    RunConfig c;
    // ground truth w = 21 um requires a 1/e diameter of 21*sqrt(2) um under
    // the two-photon rule
    c.laser_diameter_1e_m = 21e-6 * std::sqrt(2.0);
    // U spans 0.5 eV (x=0) to 2.0 eV (x=300 um) at 50.2 V/cm
    c.cal_field_V_per_m = 5020.0;
    c.cal_offset_V = 0.5;
    return c;
}

namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;

double to_double(const std::string& v) {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("config: bad number '" + v + "'");
    return d;
}

uint64_t to_u64(const std::string& v) {
    size_t pos = 0;
    const unsigned long long u = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("config: bad integer '" + v + "'");
    return u;
}

bool to_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config: bad boolean '" + v + "'");
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"geometry.plate_gap_m", [](RunConfig& c, const std::string& v) { c.plate_gap_m = to_double(v); }},
        {"geometry.plate_diameter_m", [](RunConfig& c, const std::string& v) { c.plate_diameter_m = to_double(v); }},
        {"geometry.hole_diameter_m", [](RunConfig& c, const std::string& v) { c.hole_diameter_m = to_double(v); }},
        {"geometry.tube_length_m", [](RunConfig& c, const std::string& v) { c.tube_length_m = to_double(v); }},
        {"geometry.total_flight_m", [](RunConfig& c, const std::string& v) { c.total_flight_m = to_double(v); }},
        {"geometry.v_p1", [](RunConfig& c, const std::string& v) { c.v_p1 = to_double(v); }},
        {"geometry.v_p2", [](RunConfig& c, const std::string& v) { c.v_p2 = to_double(v); }},
        {"geometry.v_tube", [](RunConfig& c, const std::string& v) { c.v_tube = to_double(v); }},
        {"geometry.v_mesh", [](RunConfig& c, const std::string& v) { c.v_mesh = to_double(v); }},
        {"geometry.grid_spacing_m", [](RunConfig& c, const std::string& v) { c.grid_spacing_m = to_double(v); }},
        {"geometry.tolerance", [](RunConfig& c, const std::string& v) { c.solver_tolerance = to_double(v); }},
        {"waveform.preset", [](RunConfig& c, const std::string& v) { c.waveform_preset = v; }},
        {"waveform.file", [](RunConfig& c, const std::string& v) { c.waveform_file = v; }},
        {"ensemble.n_atoms", [](RunConfig& c, const std::string& v) { c.n_atoms = to_u64(v); }},
        {"ensemble.temperature_K", [](RunConfig& c, const std::string& v) { c.temperature_K = to_double(v); }},
        {"ensemble.lens_start_m", [](RunConfig& c, const std::string& v) { c.lens_start_m = to_double(v); }},
        {"ensemble.lens_step_m", [](RunConfig& c, const std::string& v) { c.lens_step_m = to_double(v); }},
        {"ensemble.lens_count", [](RunConfig& c, const std::string& v) { c.lens_count = to_u64(v); }},
        {"ensemble.laser_diameter_1e_m", [](RunConfig& c, const std::string& v) { c.laser_diameter_1e_m = to_double(v); }},
        {"ensemble.two_photon", [](RunConfig& c, const std::string& v) { c.two_photon = to_bool(v); }},
        {"ensemble.contamination_fraction", [](RunConfig& c, const std::string& v) { c.contamination_fraction = to_double(v); }},
        {"ensemble.state_n", [](RunConfig& c, const std::string& v) { c.state_n = static_cast<int>(to_u64(v)); }},
        {"ensemble.other_state_n", [](RunConfig& c, const std::string& v) { c.other_state_n = static_cast<int>(to_u64(v)); }},
        {"detector.tau_instr_s", [](RunConfig& c, const std::string& v) { c.tau_instr_s = to_double(v); }},
        {"detector.transmission", [](RunConfig& c, const std::string& v) { c.transmission = to_double(v); }},
        {"detector.bin_width_s", [](RunConfig& c, const std::string& v) { c.bin_width_s = to_double(v); }},
        {"calibration.E_V_per_m", [](RunConfig& c, const std::string& v) { c.cal_field_V_per_m = to_double(v); }},
        {"calibration.V0_V", [](RunConfig& c, const std::string& v) { c.cal_offset_V = to_double(v); }},
        {"calibration.t_offset_s", [](RunConfig& c, const std::string& v) { c.cal_t_offset_s = to_double(v); }},
        {"calibration.offset_source", [](RunConfig& c, const std::string& v) { c.offset_source = v; }},
        {"seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64(v); }},
        {"out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
    };
    return table;
}

}  // namespace

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig c;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                        " is not 'key = value'");
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        const auto it = setters().find(key);
        if (it == setters().end())
            throw std::invalid_argument("config: unknown key '" + key + "'");
        it->second(c, value);
    }
    c.validate();
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str());
}

void RunConfig::write_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << canonical_text();
}

}  // namespace rytof
