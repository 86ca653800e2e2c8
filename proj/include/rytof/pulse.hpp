#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rytof/core_model.hpp"
#include "rytof/field_solver.hpp"

namespace rytof {

struct WaveformSegment {
    double t_start_s = 0.0;
    double t_end_s = 0.0;
    double v_start_V = 0.0;
    double v_end_V = 0.0;
};

/// Piecewise-linear voltage program per electrode. Segments are contiguous
/// and non-overlapping; evaluation is defined on the common window.
struct VoltageWaveform {
    std::map<std::string, std::vector<WaveformSegment>> channels;
    // epoch markers used for peak classification
    double fast_pulse_start_s = 0.0;
    double fast_pulse_end_s = 0.0;
    double final_ramp_start_s = 0.0;

    double window_start_s() const;
    double window_end_s() const;
    void validate() const;
    double eval(const std::string& electrode, double t_s) const;

    /// The published pulse scheme: slow ramp on P1 to -115 V in 1.2 us,
    /// plateau, 10 V / 30 ns fast pulse on P2 (10 ns rise), then ramp P1
    /// to -230 V in 1.2 us.
    static VoltageWaveform fig2_preset();
};

void write_waveform_csv(const VoltageWaveform& w, const std::string& path);
VoltageWaveform read_waveform_csv(const std::string& path);

/// Signed on-axis field between the plates at time t. With unit-voltage
/// profiles present, superposes their on-axis gradients at the MOT; without,
/// falls back to (V_P2 - V_P1) / gap.
double field_at(const VoltageWaveform& w, const ApparatusGeometry& geometry, double t_s);
double field_at(const VoltageWaveform& w, const ApparatusGeometry& geometry,
                const std::map<std::string, PotentialProfile>& unit_profiles, double t_s);

enum class PeakClass { PrePulse, A, B, C, Unionized };

const char* to_string(PeakClass c);

/// One dispersed ionization-threshold component of a state's Stark
/// manifold. During the fast pulse, "blue"-labelled branches produce peak
/// a and "red"-labelled ones peak b.
struct StarkBranch {
    std::string label;            // "blue" or "red"
    double fraction = 0.0;        // population fraction, sums to 1 per state
    double threshold_V_per_m = 0.0;
    double sigma_V_per_m = 0.0;
};

struct StarkBranchModel {
    std::vector<StarkBranch> branches;

    void validate() const;

    /// Shipped defaults, expressed as multiples of the classical threshold
    /// and calibrated so that under the fig2 waveform the red branch at
    /// 1.3095x carries 30% of the signal and releases at the pulse peak.
    static StarkBranchModel default_for(const RydbergState& state);
};

struct IonizationEvent {
    uint64_t atom_id = 0;
    double release_time_s = 0.0;
    double release_position_m = 0.0;
    double release_potential_V = 0.0;
    std::string branch_label;
    PeakClass peak_class = PeakClass::Unionized;
};

struct EnsembleAtom {
    uint64_t id = 0;
    double position_m = 0.0;  // axial, measured from P1
};

struct IonizationConfig {
    RydbergState state;
    StarkBranchModel model;
    /// Fraction of atoms spuriously excited to the other state; they draw
    /// their threshold from that state's red (peak-b) branch, which is the
    /// component the spurious-signal bound is measured on.
    double contamination_fraction = 0.0;
    RydbergState contaminant_state;
    StarkBranchModel contaminant_model;
};

/// Per-atom threshold draw plus first-crossing search on the waveform.
/// Deterministic per seed, independent of processing order (counter-based
/// per-atom streams); output sorted by atom id.
std::vector<IonizationEvent> ionization_events(const std::vector<EnsembleAtom>& atoms,
                                               const VoltageWaveform& waveform,
                                               const ApparatusGeometry& geometry,
                                               const IonizationConfig& config,
                                               uint64_t rng_seed);

struct SelectivityResult {
    size_t b_state1 = 0;
    size_t b_state0 = 0;
    double ratio = 0.0;
    bool infinite = false;   // b0 == 0, b1 > 0
    bool undefined = false;  // b1 == 0
};

/// Ratio of genuine to spurious peak-b counts.
SelectivityResult selectivity(const std::vector<IonizationEvent>& events_state1,
                              const std::vector<IonizationEvent>& events_state0);

}  // namespace rytof
