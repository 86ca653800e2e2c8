#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rytof/core_model.hpp"
#include "rytof/field_solver.hpp"

namespace rytof {

/// Laser-defined Rydberg production volume. With two-photon excitation the
/// effective Gaussian 2-sigma width is the 1/e beam diameter over sqrt(2).
struct ProductionVolume {
    double center_m = 0.0;               // x_L
    double laser_diameter_1e_m = 23e-6;
    bool two_photon = true;

    double width_2sigma_m() const;
};

struct DetectorModel {
    double tau_instr_s = 20e-9;       // 2 sigma of the time response
    double mesh_transmission = 0.95;
    double bin_width_s = 4e-9;
    /// Flat efficiency by default; energies below the knee (eV) roll off
    /// logistically when the knee is > 0.
    double rolloff_knee_eV = 0.0;
    double rolloff_scale_eV = 0.1;

    void validate() const;
    double efficiency(double energy_eV) const;
};

struct TofSpectrum {
    double t_start_s = 0.0;
    double bin_width_s = 0.0;
    std::vector<double> counts;  // integers in sampled mode, reals in expected mode
    // metadata
    double x_lens_m = 0.0;
    std::string state_label;
    uint64_t seed = 0;
    std::string config_hash;
    bool polarity_negated = false;
    double dropped_domain = 0.0;  // electrons outside the tof validity domain
    double dropped_range = 0.0;   // arrivals outside the histogram window

    size_t n_bins() const { return counts.size(); }
    double edge(size_t i) const { return t_start_s + static_cast<double>(i) * bin_width_s; }
    double bin_center(size_t i) const { return edge(i) + 0.5 * bin_width_s; }
    double total() const;
    TofSpectrum rebinned(size_t factor) const;
};

struct AtomSample {
    std::vector<double> position_m;
    std::vector<double> velocity_m_per_s;  // axial component
};

/// Positions Gaussian about the volume center (2 sigma = w), axial
/// velocities Maxwell-Boltzmann at T. Deterministic per seed and atom index.
AtomSample sample_ensemble(const ProductionVolume& vol, double temperature_K,
                           double mass_kg, size_t n_atoms, uint64_t rng_seed);

enum class SpectrumMode { Sampled, Expected };

struct SynthesisOptions {
    SpectrumMode mode = SpectrumMode::Sampled;
    double t_min_s = 0.0;  // both zero: window chosen from the data
    double t_max_s = 0.0;
    const PotentialProfile* oracle_profile = nullptr;  // arrival via integrate_flight
};

/// Forward model: per electron analytic_tof (or the trajectory oracle) plus
/// Gaussian time jitter (2 sigma = tau_instr), thinned by transmission and
/// efficiency, histogrammed. Out-of-domain electrons are tallied, not fatal.
TofSpectrum synthesize_spectrum(const std::vector<double>& positions_m,
                                const FlightCalibration& cal, const DetectorModel& det,
                                uint64_t rng_seed, const SynthesisOptions& opt = {});

struct SeriesConfig {
    ProductionVolume volume;       // center overridden per lens position
    double temperature_K = 300e-6;
    double mass_kg = 0.0;          // default Rb-85 when 0
    size_t n_atoms = 20000;
    FlightCalibration calibration;
    DetectorModel detector;
    std::string state_label = "54d";
    std::string config_hash;
    SpectrumMode mode = SpectrumMode::Sampled;
};

/// One spectrum per lens position under a shared apparatus config and a
/// shared histogram window. Deterministic per seed, independent of the
/// worker count (RYTOF_WORKERS).
std::vector<TofSpectrum> synthesize_series(const std::vector<double>& lens_positions_m,
                                           const SeriesConfig& config, uint64_t rng_seed);

// Spectrum CSV: "# key = value" header rows, then "t_s,counts". Bit-exact
// round-trip. The polarity flag on ingestion negates raw traces.
void write_spectrum_csv(const TofSpectrum& spec, const std::string& path);
TofSpectrum read_spectrum_csv(const std::string& path, bool negate_polarity = false);

void write_series_manifest(const std::vector<std::string>& csv_paths, const std::string& path);
std::vector<std::string> read_series_manifest(const std::string& path);

}  // namespace rytof
