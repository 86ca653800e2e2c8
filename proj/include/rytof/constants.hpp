#pragma once

// CODATA 2018 values, fixed at build time. Echoed into report headers so
// results stay traceable to the constants they were computed with.

namespace rytof::constants {

inline constexpr double electron_mass_kg = 9.1093837015e-31;
inline constexpr double elementary_charge_C = 1.602176634e-19;
inline constexpr double boltzmann_J_per_K = 1.380649e-23;
inline constexpr double bohr_radius_m = 5.29177210903e-11;

// Atomic units expressed in SI.
inline constexpr double atomic_time_s = 2.4188843265857e-17;
inline constexpr double atomic_field_V_per_m = 5.14220674763e11;
inline constexpr double atomic_dipole_Cm = elementary_charge_C * bohr_radius_m;

// 85Rb: 84.911789738 u.
inline constexpr double atomic_mass_unit_kg = 1.66053906660e-27;
inline constexpr double rb85_mass_kg = 84.911789738 * atomic_mass_unit_kg;

}  // namespace rytof::constants
