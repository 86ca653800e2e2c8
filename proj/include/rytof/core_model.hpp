#pragma once

#include <stdexcept>
#include <string>

namespace rytof {

/// Rydberg state described by its principal quantum number and an optional
/// scalar quantum defect. The effective quantum number n* = n - defect is
/// what enters the classical ionization threshold.
struct RydbergState {
    int n = 1;
    std::string l_label = "d";
    double quantum_defect = 0.0;

    double n_effective() const { return static_cast<double>(n) - quantum_defect; }
};

/// Effective flight-tube calibration: arrival time is
///   t(x) = L * sqrt(m_e / (2 e (E x + V0))) + t_offset
/// with signed E and V0, valid where E*x + V0 > 0.
struct FlightCalibration {
    double tube_length_m = 0.40;   // L
    double field_V_per_m = 0.0;    // E (signed)
    double offset_V = 0.0;         // V0 (signed)
    double time_offset_s = 0.0;    // additive, energy independent

    double energy_V(double x_m) const { return field_V_per_m * x_m + offset_V; }
};

/// Width decomposition parameters: w is the 2-sigma width of the
/// production volume in the position domain, tau the 2-sigma width of the
/// instrumental time response.
struct WidthModel {
    double w_m = 0.0;
    double tau_s = 0.0;
};

// Eq.-level operations. All pure; invalid inputs raise std::invalid_argument,
// out-of-domain inputs raise std::domain_error.

/// Dipole-dipole excitation hopping period, 9*pi*d^3/n^4 (atomic units),
/// returned in seconds. d in meters.
double hop_time_s(int n, double distance_m);

/// Classical over-the-saddle ionization threshold 1/(16 n*^4), in V/m.
double classical_ionization_field_V_per_m(const RydbergState& state);

/// Electron arrival time for an atom at position x.
double analytic_tof_s(double x_m, const FlightCalibration& cal);

/// Inverse of analytic_tof_s on the validity domain.
double position_from_tof_m(double t_s, const FlightCalibration& cal);

/// |dx/dt| of the inverse map, m_e L^2 / (e |E| (t - t_offset)^3).
double tof_slope_m_per_s(double t_s, const FlightCalibration& cal);

/// Position-domain peak width sqrt(w^2 + slope^2 tau^2).
double combined_width_m(double slope_m_per_s, const WidthModel& model);

/// Mean 3-D thermal speed sqrt(8 kB T / (pi m)) times duration.
double thermal_displacement_m(double temperature_K, double mass_kg, double duration_s);

/// Constant-force displacement of a polarized atom in a field gradient:
/// (1/2) (p * dE/dx / m) t^2.
double dipole_displacement_m(double dipole_Cm, double gradient_V_per_m2,
                             double mass_kg, double duration_s);

}  // namespace rytof
