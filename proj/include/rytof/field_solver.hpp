#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rytof/core_model.hpp"

namespace rytof {

/// Axially bounded conducting element of the apparatus. Annular in general:
/// a solid disc has r_inner = 0, a tube wall has r_inner = bore radius.
struct Electrode {
    std::string name;
    double z_min_m = 0.0;
    double z_max_m = 0.0;
    double r_inner_m = 0.0;
    double r_outer_m = 0.0;
    double voltage_V = 0.0;
};

enum class RadialBoundary {
    GroundedCylinder,  // chamber wall proxy at the domain edge
    Neumann            // dV/dr = 0; used for the parallel-plate reduction
};

struct ApparatusGeometry {
    double plate_gap_m = 0.025;
    double plate_diameter_m = 0.055;
    double hole_diameter_m = 0.014;
    double tube_length_m = 0.40;
    double total_flight_m = 0.45;   // MOT to detector plane
    double mot_position_m = 0.0125; // measured from P1, axis origin at P1
    double mesh_position_m = 0.4625;
    double domain_radius_m = 0.0825;  // 3x plate radius
    RadialBoundary radial_boundary = RadialBoundary::GroundedCylinder;
    std::vector<Electrode> electrodes;

    /// Fig.-1 layout: P1 at z=0, P2 at the gap, flight tube behind P2's
    /// hole, full mesh plane in front of the detector.
    static ApparatusGeometry paper_default(double v_p1 = -115.0, double v_p2 = 10.0,
                                           double v_tube = -48.0, double v_mesh = 90.0);

    /// Hole-free plates spanning the whole radial domain with Neumann side
    /// walls; discrete solution is the exact uniform field.
    static ApparatusGeometry parallel_plates(double v_p1, double v_p2, double gap_m);

    void validate(double grid_spacing_m) const;
    uint64_t hash() const;
};

/// On-axis slice of the solved potential, uniform grid.
struct PotentialProfile {
    std::vector<double> z_m;        // strictly increasing, uniform
    std::vector<double> potential_V;
    double grid_spacing_m = 0.0;
    double residual = 0.0;          // final relative update
    uint64_t geometry_hash = 0;
    std::vector<std::pair<std::string, double>> source_voltages;

    double value_at(double z) const;      // linear interpolation
    double gradient_at(double z) const;   // dV/dz, node-centered, linear interp
    /// Potential energy of an electron released at rest at z_start, after
    /// reaching z (J): e * (V(z) - V(z_start)) is the kinetic energy there.
    double z_min() const { return z_m.front(); }
    double z_max() const { return z_m.back(); }
};

struct SolverOptions {
    double grid_spacing_m = 5e-4;
    double tolerance = 1e-7;        // relative to the voltage span
    double over_relaxation = 1.9;
    long max_iterations = 200000;
    bool coarse_seed = true;        // solve at 2h first and prolong
};

/// Relax the axisymmetric Laplace equation for the geometry and return the
/// r=0 slice. Throws std::runtime_error on non-convergence and
/// std::invalid_argument on bad geometry.
PotentialProfile solve_potential(const ApparatusGeometry& geometry, const SolverOptions& opt = {});

enum class FlightOutcome { Detected, TurnedBack };

struct FlightResult {
    FlightOutcome outcome = FlightOutcome::Detected;
    double arrival_time_s = 0.0;     // valid when Detected
    double turning_point_m = 0.0;    // valid when TurnedBack
    double energy_drift_rel = 0.0;   // max |KE+PE-const| / initial total
    std::vector<std::pair<double, double>> trace;  // (t, z) samples
};

/// Integrate 1-D electron motion from rest (plus u0_extra_J of kinetic
/// energy) at x0 through the profile gradient until the detector plane
/// (profile end) is reached. Adaptive RK4 with step doubling.
FlightResult integrate_flight(double x0_m, double u0_extra_J,
                              const PotentialProfile& profile,
                              double step_control = 1e-10,
                              bool keep_trace = false);

/// Axial position between P1 and the tube where an electron released at
/// rest enters the tube with kinetic energy u_eV. Root-find on the profile.
double release_position_for_energy(const PotentialProfile& profile,
                                   const ApparatusGeometry& geometry, double u_eV);

struct OffsetFit {
    double t_offset_s = 0.0;
    double residual_spread_s = 0.0;  // max - min residual after the fit
    std::vector<double> residuals_s;
};

/// Least-squares constant offset between numeric arrival times and
/// analytic_tof (t_offset forced to zero) at the given tube energies.
OffsetFit fit_offset(const PotentialProfile& profile, const ApparatusGeometry& geometry,
                     const FlightCalibration& cal, const std::vector<double>& energies_eV);

/// Effective (E, V0) for the analytic model fitted jointly with a constant
/// offset against integrate_flight over the given tube energies; the
/// analytic model's coordinate matches the release positions on the solver
/// axis. Returned calibration has time_offset_s = 0 so it can be fed back
/// into fit_offset.
FlightCalibration fit_effective_calibration(const PotentialProfile& profile,
                                            const ApparatusGeometry& geometry,
                                            const std::vector<double>& energies_eV,
                                            double* fitted_offset_s = nullptr);

// CSV import/export: header line carries geometry hash and residual,
// then "z_m,V_volts" rows. Round-trips bit exactly.
void write_profile_csv(const PotentialProfile& profile, const std::string& path);
PotentialProfile read_profile_csv(const std::string& path);

}  // namespace rytof
