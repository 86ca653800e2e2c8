// End-to-end acceptance runner: one pass/fail line per shipped guarantee.
// Exit status is nonzero when any check fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "rytof/analysis.hpp"
#include "rytof/constants.hpp"
#include "rytof/core_model.hpp"
#include "rytof/field_solver.hpp"
#include "rytof/pulse.hpp"
#include "rytof/spectrum.hpp"

using namespace rytof;
namespace k = rytof::constants;
using clk = std::chrono::steady_clock;

static int failures = 0;

static void report(int idx, const char* what, bool ok, const std::string& detail) {
    std::printf("[%s] %d. %s — %s\n", ok ? "PASS" : "FAIL", idx, what, detail.c_str());
    if (!ok) ++failures;
}

static std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

static double seconds_since(clk::time_point t0) {
    return std::chrono::duration<double>(clk::now() - t0).count();
}

// 1. hopping time
static void check_hop_time() {
    const auto t0 = clk::now();
    const double t = hop_time_s(60, 20e-6);
    const double dt = seconds_since(t0);
    const bool ok = std::abs(t - 2.8e-6) / 2.8e-6 < 0.02 && dt < 1e-3;
    report(1, "hopping time n=60, d=20 um", ok,
           fmt("t = %.4g us (target 2.8 us +-2%%), runtime %.2g ms", t * 1e6, dt * 1e3));
}

// 2. analytic time of flight at 0.5 eV
static void check_analytic_tof() {
    FlightCalibration cal;
    cal.tube_length_m = 0.40;
    cal.field_V_per_m = 1.0;
    cal.offset_V = 0.5;
    const double t = analytic_tof_s(0.0, cal);
    const bool ok = std::abs(t - 0.95e-6) / 0.95e-6 < 0.01;
    report(2, "flight time at 0.5 eV over 0.40 m", ok,
           fmt("t = %.4g us (target 0.95 us +-1%%)", t * 1e6));
}

// 3. field solver: plate reduction, full geometry, grid convergence, runtime
static void check_field_solver() {
    const auto t0 = clk::now();
    SolverOptions opt;  // default grid

    const auto plates = ApparatusGeometry::parallel_plates(-115.0, 10.0, 0.025);
    const auto pprof = solve_potential(plates, opt);
    const double f_plates = pprof.gradient_at(0.0125);

    const auto geom = ApparatusGeometry::paper_default();
    const auto prof = solve_potential(geom, opt);
    const double f_full = std::abs(prof.gradient_at(geom.mot_position_m));
    const double runtime = seconds_since(t0);

    SolverOptions fine = opt;
    fine.grid_spacing_m = opt.grid_spacing_m / 2.0;
    const auto fprof = solve_potential(geom, fine);
    const double f_fine = std::abs(fprof.gradient_at(geom.mot_position_m));

    const bool ok_plates = std::abs(f_plates - 5000.0) / 5000.0 < 0.005;
    const bool ok_full = std::abs(f_full - 5020.0) / 5020.0 < 0.10;
    const bool ok_conv = std::abs(f_fine - f_full) / f_full < 0.01;
    const bool ok_time = runtime < 60.0;
    report(3, "field solver", ok_plates && ok_full && ok_conv && ok_time,
           fmt("plates %.4g V/cm (50 +-0.5%%), full %.4g V/cm (50.2 +-10%%), "
               "grid-halving change %.3g%% (<1%%), runtime %.1f s (<60)",
               f_plates / 100.0, f_full / 100.0, 100.0 * std::abs(f_fine - f_full) / f_full,
               runtime));
}

// 4. trajectory oracle offset
static void check_offset() {
    const auto geom = ApparatusGeometry::paper_default();
    const auto prof = solve_potential(geom, {});
    const std::vector<double> energies = {0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0};
    double t0 = 0.0;
    const FlightCalibration eff = fit_effective_calibration(prof, geom, energies, &t0);
    const OffsetFit fit = fit_offset(prof, geom, eff, energies);
    const bool ok = fit.t_offset_s > 5e-9 && fit.t_offset_s < 25e-9 &&
                    fit.residual_spread_s < 2e-9;
    report(4, "trajectory-vs-analytic offset", ok,
           fmt("offset %.3g ns (in [5,25]), residual spread %.3g ns (<2)",
               fit.t_offset_s * 1e9, fit.residual_spread_s * 1e9));
}

static std::vector<TofSpectrum> acceptance_series() {
    SeriesConfig sc;
    sc.volume.laser_diameter_1e_m = 21e-6 * std::sqrt(2.0);  // 2 sigma = 21 um
    sc.n_atoms = 20000;
    sc.calibration.tube_length_m = 0.40;
    sc.calibration.field_V_per_m = 5020.0;
    sc.calibration.offset_V = 0.5;  // U in [0.5, 2.0] eV over 300 um
    sc.calibration.time_offset_s = 13e-9;
    sc.detector.tau_instr_s = 20e-9;
    sc.state_label = "54d";
    std::vector<double> lens;
    for (int i = 0; i < 16; ++i) lens.push_back(20e-6 * i);
    return synthesize_series(lens, sc, 424242);
}

// 5 & 6. round-trip calibration pipeline and the resolution report
static void check_pipeline_and_resolution() {
    const auto t0 = clk::now();
    const auto series = acceptance_series();
    CalibrationOptions opt;
    opt.fixed_t_offset_s = 13e-9;
    auto result = calibrate(series, 20e-6, opt);
    decompose_width(result);
    const auto lin = linearity(result, result.lens_positions_m);
    const double runtime = seconds_since(t0);

    const double e_err = std::abs(result.calibration.field_V_per_m - 5020.0) / 5020.0;
    const double w_err = std::abs(result.width_model.w_m - 21e-6) / 21e-6;
    const double tau_err = std::abs(result.width_model.tau_s - 20e-9) / 20e-9;
    const bool ok = e_err < 0.02 && w_err < 0.10 && tau_err < 0.10 &&
                    std::abs(lin.slope - 1.0) < 0.02 && lin.rms_residual_m < 3e-6 &&
                    runtime < 120.0;
    report(5, "calibration round trip", ok,
           fmt("E %.4g V/cm (err %.2g%%), w %.3g um (err %.2g%%), tau %.3g ns (err %.2g%%), "
               "slope %.4f, rms %.3g um, runtime %.1f s",
               result.calibration.field_V_per_m / 100.0, 100 * e_err,
               result.width_model.w_m * 1e6, 100 * w_err, result.width_model.tau_s * 1e9,
               100 * tau_err, lin.slope, lin.rms_residual_m * 1e6, runtime));

    const auto rep = resolution_report(result, 0.0, 300e-6);
    const bool ok6 = std::abs(rep.max_sigma_x_m - 40e-6) / 40e-6 < 0.20 &&
                     rep.sub20um_range_m >= 150e-6 && rep.min_sigma_x_m <= 6e-6;
    report(6, "position resolution over 300 um", ok6,
           fmt("max sigma_x %.3g um (40 +-20%%), sub-20 um range %.4g um (>=150), "
               "slow end %.3g um (<=6)",
               rep.max_sigma_x_m * 1e6, rep.sub20um_range_m * 1e6, rep.min_sigma_x_m * 1e6));
}

// 7. state selectivity
static void check_selectivity() {
    const auto geom = ApparatusGeometry::paper_default();
    const auto w = VoltageWaveform::fig2_preset();
    std::vector<EnsembleAtom> atoms(20000);
    for (size_t i = 0; i < atoms.size(); ++i)
        atoms[i] = {static_cast<uint64_t>(i), geom.mot_position_m};
    const RydbergState upper{54, "d", 0.0};
    const RydbergState lower{53, "d", 0.0};

    IonizationConfig cfg1{upper, StarkBranchModel::default_for(upper), 0.0, lower, {}};
    const auto ev1 = ionization_events(atoms, w, geom, cfg1, 7);
    size_t b1 = 0, total1 = 0;
    for (const auto& e : ev1) {
        if (e.peak_class != PeakClass::Unionized) ++total1;
        if (e.peak_class == PeakClass::B) ++b1;
    }
    const double b_frac = static_cast<double>(b1) / static_cast<double>(total1);

    IonizationConfig dirty{lower, StarkBranchModel::default_for(lower), 0.015, upper,
                           StarkBranchModel::default_for(upper)};
    const auto ev0d = ionization_events(atoms, w, geom, dirty, 8);
    const auto sel_dirty = selectivity(ev1, ev0d);

    IonizationConfig clean = dirty;
    clean.contamination_fraction = 0.0;
    const auto ev0c = ionization_events(atoms, w, geom, clean, 8);
    const auto sel_clean = selectivity(ev1, ev0c);

    const bool ok = sel_dirty.ratio > 15.0 && sel_dirty.ratio < 30.0 &&
                    std::abs(b_frac - 0.30) < 0.03 && sel_clean.infinite;
    report(7, "state selectivity", ok,
           fmt("ratio %.3g at 1.5%% contamination (in [15,30]), peak-b fraction %.3g "
               "(0.30 +-0.03), zero contamination -> %s",
               sel_dirty.ratio, b_frac, sel_clean.infinite ? "infinite" : "finite"));
}

// 8. displacement budgets
static void check_displacements() {
    const double speed = thermal_displacement_m(300e-6, k::rb85_mass_kg, 1.0);
    const double p = 1.5 * 54.0 * 54.0 * k::atomic_dipole_Cm;
    const double d = dipole_displacement_m(p, 2e5, k::rb85_mass_kg, 1.2e-6);
    const bool ok = std::abs(speed - 0.27) / 0.27 < 0.05 && d <= 0.06e-6;
    report(8, "displacement budgets", ok,
           fmt("thermal speed %.4g m/s (0.27 +-5%%), dipole drift %.3g um (<=0.06)",
               speed, d * 1e6));
}

// 9. property suites: spot checks here; the full suites run as unit tests
static void check_properties() {
    bool ok = true;
    std::string detail;

    FlightCalibration cal;
    cal.field_V_per_m = 5020.0;
    cal.offset_V = 0.5;
    cal.time_offset_s = 13e-9;
    double worst_rt = 0.0;
    for (double x = 0.0; x <= 300e-6; x += 10e-6) {
        const double back = position_from_tof_m(analytic_tof_s(x, cal), cal);
        worst_rt = std::max(worst_rt, std::abs(back - x));
    }
    ok = ok && worst_rt < 1e-10;

    const double t = analytic_tof_s(150e-6, cal);
    const double h = 1e-12;
    const double fd =
        std::abs((position_from_tof_m(t + h, cal) - position_from_tof_m(t - h, cal)) / (2 * h));
    const double slope_err = std::abs(tof_slope_m_per_s(t, cal) - fd) / fd;
    ok = ok && slope_err < 1e-6;

    const auto geom = ApparatusGeometry::parallel_plates(0.0, 100.0, 0.05);
    const auto prof = solve_potential(geom, {});
    const auto flight = integrate_flight(0.005, 0.0, prof);
    ok = ok && flight.energy_drift_rel < 1e-6;

    // seed determinism across worker counts, bit-identical series
    std::vector<double> lens = {0.0, 100e-6, 200e-6};
    SeriesConfig sc;
    sc.n_atoms = 5000;
    sc.calibration = cal;
    setenv("RYTOF_WORKERS", "1", 1);
    const auto s1 = synthesize_series(lens, sc, 99);
    setenv("RYTOF_WORKERS", "5", 1);
    const auto s5 = synthesize_series(lens, sc, 99);
    unsetenv("RYTOF_WORKERS");
    bool identical = s1.size() == s5.size();
    for (size_t i = 0; identical && i < s1.size(); ++i)
        identical = s1[i].counts == s5[i].counts && s1[i].t_start_s == s5[i].t_start_s;
    ok = ok && identical;

    report(9, "property suites", ok,
           fmt("round-trip %.2g m (<1e-10), slope-vs-FD %.2g (<1e-6), energy drift %.2g "
               "(<1e-6), worker determinism %s",
               worst_rt, slope_err, flight.energy_drift_rel, identical ? "bit-identical" : "DIFFERS"));
}

int main() {
    check_hop_time();
    check_analytic_tof();
    check_field_solver();
    check_offset();
    check_pipeline_and_resolution();
    check_selectivity();
    check_displacements();
    check_properties();
    if (failures) {
        std::printf("%d acceptance check(s) failed\n", failures);
        return 1;
    }
    std::printf("all acceptance checks passed\n");
    return 0;
}
