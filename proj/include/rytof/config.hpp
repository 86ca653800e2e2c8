#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rytof/analysis.hpp"
#include "rytof/field_solver.hpp"
#include "rytof/pulse.hpp"
#include "rytof/spectrum.hpp"

namespace rytof {

/// Flat "key = value" run configuration with dotted section prefixes.
/// Unknown keys are rejected; every field is checked against the module
/// preconditions before any computation starts.
struct RunConfig {
    // geometry
    double plate_gap_m = 0.025;
    double plate_diameter_m = 0.055;
    double hole_diameter_m = 0.014;
    double tube_length_m = 0.40;
    double total_flight_m = 0.45;
    double v_p1 = -115.0;
    double v_p2 = 10.0;
    double v_tube = -48.0;
    double v_mesh = 90.0;
    double grid_spacing_m = 5e-4;
    double solver_tolerance = 1e-7;

    // waveform
    std::string waveform_preset = "fig2";
    std::string waveform_file;

    // ensemble
    uint64_t n_atoms = 20000;
    double temperature_K = 300e-6;
    double lens_start_m = 0.0;
    double lens_step_m = 20e-6;
    uint64_t lens_count = 16;
    double laser_diameter_1e_m = 23e-6;
    bool two_photon = true;
    double contamination_fraction = 0.015;
    int state_n = 54;
    int other_state_n = 53;

    // detector
    double tau_instr_s = 20e-9;
    double transmission = 0.95;
    double bin_width_s = 4e-9;

    // calibration (synthesis ground truth and analysis defaults)
    double cal_field_V_per_m = 5020.0;
    double cal_offset_V = 0.5;
    double cal_t_offset_s = 13e-9;
    std::string offset_source = "fixed";  // fixed | fitted

    uint64_t seed = 1;
    std::string out_dir = "out";

    void validate() const;
    std::string canonical_text() const;
    std::string hash() const;  // FNV-1a of the canonical text, hex

    std::vector<double> lens_positions() const;
    ApparatusGeometry geometry() const;
    VoltageWaveform waveform() const;
    SeriesConfig series_config() const;
    CalibrationOptions calibration_options() const;

    /// The shipped acceptance scenario: Fig. 1/2 apparatus numbers with the
    /// published fitted parameters as synthesis ground truth (E = 50.2 V/cm,
    /// V0 giving 0.5-2.0 eV over 300 um, w = 21 um, tau = 20 ns).
    static RunConfig paper_preset();

    static RunConfig from_file(const std::string& path);
    static RunConfig from_text(const std::string& text);
    void write_file(const std::string& path) const;
};

}  // namespace rytof
