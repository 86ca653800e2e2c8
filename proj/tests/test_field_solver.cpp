#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>

#include "rytof/constants.hpp"
#include "rytof/core_model.hpp"
#include "rytof/field_solver.hpp"

using namespace rytof;
namespace k = rytof::constants;

static SolverOptions coarse_opts(double h = 5e-4) {
    SolverOptions opt;
    opt.grid_spacing_m = h;
    opt.tolerance = 1e-7;
    return opt;
}

TEST_CASE("parallel plates give the uniform field") {
    // -115 V and +10 V across 2.5 cm -> 50 V/cm between the plates
    const auto geom = ApparatusGeometry::parallel_plates(-115.0, 10.0, 0.025);
    const auto prof = solve_potential(geom, coarse_opts());
    const double field = prof.gradient_at(0.0125);  // dV/dz at the midpoint
    CHECK(field == doctest::Approx(5000.0).epsilon(5e-3));
    // linear potential in between
    const double mid = prof.value_at(0.0125);
    CHECK(mid == doctest::Approx(0.5 * (-115.0 + 10.0)).epsilon(1e-3));
}

TEST_CASE("equal-voltage plates give a constant potential") {
    const auto geom = ApparatusGeometry::parallel_plates(25.0, 25.0, 0.025);
    const auto prof = solve_potential(geom, coarse_opts());
    for (double z = 0.0; z <= 0.025; z += 0.005)
        CHECK(prof.value_at(z) == doctest::Approx(25.0).epsilon(1e-9));
}

TEST_CASE("paper geometry: field at the MOT and grid convergence") {
    const auto geom = ApparatusGeometry::paper_default();
    const auto coarse = solve_potential(geom, coarse_opts(5e-4));
    const auto fine = solve_potential(geom, coarse_opts(2.5e-4));
    const double f_coarse = std::abs(coarse.gradient_at(geom.mot_position_m));
    const double f_fine = std::abs(fine.gradient_at(geom.mot_position_m));
    // holes in the plates reduce the field below the ideal 50 V/cm but it
    // must stay within a plausible band, and refine consistently
    CHECK(f_fine > 3500.0);
    CHECK(f_fine < 5200.0);
    CHECK(std::abs(f_coarse - f_fine) / f_fine < 0.05);
    // tube interior is field free to good accuracy
    CHECK(std::abs(fine.gradient_at(0.24)) < 0.02 * f_fine);
    CHECK(fine.value_at(0.24) == doctest::Approx(-48.0).epsilon(1e-3));
}

TEST_CASE("geometry validation") {
    auto geom = ApparatusGeometry::paper_default();
    CHECK_NOTHROW(geom.validate(5e-4));
    geom.tube_length_m = 0.5;  // longer than the flight path
    CHECK_THROWS_AS(geom.validate(5e-4), std::invalid_argument);
    auto thin = ApparatusGeometry::paper_default();
    CHECK_THROWS_AS(thin.validate(0.02), std::invalid_argument);  // electrodes under-resolved
}

TEST_CASE("profile CSV round trip is bit exact") {
    const auto geom = ApparatusGeometry::parallel_plates(-10.0, 10.0, 0.025);
    const auto prof = solve_potential(geom, coarse_opts());
    const char* path = "profile_roundtrip.csv";
    write_profile_csv(prof, path);
    const auto back = read_profile_csv(path);
    std::remove(path);
    REQUIRE(back.z_m.size() == prof.z_m.size());
    for (size_t i = 0; i < prof.z_m.size(); ++i) {
        CHECK(back.z_m[i] == prof.z_m[i]);
        CHECK(back.potential_V[i] == prof.potential_V[i]);
    }
    CHECK(back.geometry_hash == prof.geometry_hash);
    CHECK(back.grid_spacing_m == prof.grid_spacing_m);
}

TEST_CASE("flight integration: energy conservation and analytic limit") {
    // uniform field: arrival time must match the closed-form solution
    const auto geom = ApparatusGeometry::parallel_plates(0.0, 100.0, 0.05);
    const auto prof = solve_potential(geom, coarse_opts());
    const double x0 = 0.005;
    const auto res = integrate_flight(x0, 0.0, prof);
    REQUIRE(res.outcome == FlightOutcome::Detected);
    CHECK(res.energy_drift_rel < 1e-6);
    // a = eE/m, s = L - x0, t = sqrt(2 s / a)
    const double E = 100.0 / 0.05;
    const double a = k::elementary_charge_C * E / k::electron_mass_kg;
    const double s = prof.z_max() - x0;
    CHECK(res.arrival_time_s == doctest::Approx(std::sqrt(2.0 * s / a)).epsilon(1e-5));
}

TEST_CASE("flight through the paper apparatus") {
    const auto geom = ApparatusGeometry::paper_default();
    const auto prof = solve_potential(geom, coarse_opts());

    SUBCASE("arrival time decreases monotonically with tube energy") {
        double prev = 1e9;
        for (double u : {0.5, 1.0, 1.5, 2.0}) {
            const double x0 = release_position_for_energy(prof, geom, u);
            const auto res = integrate_flight(x0, 0.0, prof);
            REQUIRE(res.outcome == FlightOutcome::Detected);
            CHECK(res.arrival_time_s < prev);
            CHECK(res.energy_drift_rel < 1e-6);
            prev = res.arrival_time_s;
        }
    }

    SUBCASE("an electron released above the tube potential turns back") {
        // near P2 the potential sits well above the -48 V tube interior, so
        // an electron released at rest there cannot pass the entrance barrier
        double x0 = 0.0;
        for (double z = 0.024; z > 0.002; z -= 1e-4)
            if (prof.value_at(z) > -40.0) { x0 = z; break; }
        REQUIRE(x0 > 0.0);
        const auto res = integrate_flight(x0, 0.0, prof);
        CHECK(res.outcome == FlightOutcome::TurnedBack);
        CHECK(res.turning_point_m > x0);
        CHECK(res.turning_point_m < prof.z_max());
    }
}

TEST_CASE("offset fit against the analytic model") {
    const auto geom = ApparatusGeometry::paper_default();
    const auto prof = solve_potential(geom, coarse_opts());
    double t0 = 0.0;
    const std::vector<double> energies = {0.5, 0.8, 1.1, 1.4, 1.7, 2.0};
    const FlightCalibration eff = fit_effective_calibration(prof, geom, energies, &t0);
    CHECK(t0 > 5e-9);
    CHECK(t0 < 25e-9);
    const OffsetFit fit = fit_offset(prof, geom, eff, energies);
    CHECK(fit.t_offset_s == doctest::Approx(t0).epsilon(1e-6).scale(1e-9));
    CHECK(fit.residual_spread_s < 2e-9);
}
