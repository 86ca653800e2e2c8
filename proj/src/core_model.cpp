#include "rytof/core_model.hpp"

#include <cmath>

#include "rytof/constants.hpp"

namespace rytof {

namespace k = constants;

double hop_time_s(int n, double distance_m) {
    if (n < 1) throw std::invalid_argument("hop_time: n must be >= 1");
    if (distance_m <= 0.0) throw std::invalid_argument("hop_time: distance must be > 0");
    const double d_au = distance_m / k::bohr_radius_m;
    const double n4 = std::pow(static_cast<double>(n), 4.0);
    const double t_au = 9.0 * M_PI * d_au * d_au * d_au / n4;
    return t_au * k::atomic_time_s;
}

double classical_ionization_field_V_per_m(const RydbergState& state) {
    const double ns = state.n_effective();
    if (!(ns > 0.0))
        throw std::invalid_argument("classical_ionization_field: n* must be > 0");
    const double f_au = 1.0 / (16.0 * ns * ns * ns * ns);
    return f_au * k::atomic_field_V_per_m;
}

double analytic_tof_s(double x_m, const FlightCalibration& cal) {
    const double u = cal.energy_V(x_m);
    if (!(u > 0.0))
        throw std::domain_error("analytic_tof: E*x + V0 must be > 0");
    return cal.tube_length_m *
               std::sqrt(k::electron_mass_kg / (2.0 * k::elementary_charge_C * u)) +
           cal.time_offset_s;
}

double position_from_tof_m(double t_s, const FlightCalibration& cal) {
    const double dt = t_s - cal.time_offset_s;
    if (!(dt > 0.0))
        throw std::domain_error("position_from_tof: t must exceed t_offset");
    if (cal.field_V_per_m == 0.0)
        throw std::domain_error("position_from_tof: calibration field is zero");
    const double L = cal.tube_length_m;
    const double u = L * L * k::electron_mass_kg /
                     (2.0 * k::elementary_charge_C * dt * dt);
    return (u - cal.offset_V) / cal.field_V_per_m;
}

double tof_slope_m_per_s(double t_s, const FlightCalibration& cal) {
    const double dt = t_s - cal.time_offset_s;
    if (!(dt > 0.0))
        throw std::domain_error("tof_slope: t must exceed t_offset");
    if (cal.field_V_per_m == 0.0)
        throw std::domain_error("tof_slope: calibration field is zero");
    const double L = cal.tube_length_m;
    return k::electron_mass_kg * L * L /
           (k::elementary_charge_C * std::abs(cal.field_V_per_m) * dt * dt * dt);
}

double combined_width_m(double slope_m_per_s, const WidthModel& model) {
    if (slope_m_per_s < 0.0)
        throw std::invalid_argument("combined_width: slope must be >= 0");
    return std::hypot(model.w_m, slope_m_per_s * model.tau_s);
}

double thermal_displacement_m(double temperature_K, double mass_kg, double duration_s) {
    if (temperature_K < 0.0 || duration_s < 0.0 || !(mass_kg > 0.0))
        throw std::invalid_argument("thermal_displacement: negative input");
    const double mean_speed =
        std::sqrt(8.0 * k::boltzmann_J_per_K * temperature_K / (M_PI * mass_kg));
    return mean_speed * duration_s;
}

double dipole_displacement_m(double dipole_Cm, double gradient_V_per_m2,
                             double mass_kg, double duration_s) {
    if (dipole_Cm < 0.0 || gradient_V_per_m2 < 0.0 || duration_s < 0.0 || !(mass_kg > 0.0))
        throw std::invalid_argument("dipole_displacement: negative input");
    const double accel = dipole_Cm * gradient_V_per_m2 / mass_kg;
    return 0.5 * accel * duration_s * duration_s;
}

}  // namespace rytof
