#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "rytof/analysis.hpp"
#include "rytof/core_model.hpp"
#include "rytof/spectrum.hpp"

using namespace rytof;

static FlightCalibration paper_cal() {
    FlightCalibration cal;
    cal.tube_length_m = 0.40;
    cal.field_V_per_m = 5020.0;
    cal.offset_V = 0.5;
    cal.time_offset_s = 13e-9;
    return cal;
}

// Spectrum with analytic Gaussians painted directly into the bins.
static TofSpectrum painted(const std::vector<std::array<double, 3>>& peaks,  // A, t0, sigma
                           double baseline, double t0 = 0.4e-6, double bw = 4e-9,
                           size_t nbins = 300) {
    TofSpectrum s;
    s.t_start_s = t0;
    s.bin_width_s = bw;
    s.counts.assign(nbins, baseline);
    for (size_t i = 0; i < nbins; ++i)
        for (const auto& p : peaks) {
            const double z = (s.bin_center(i) - p[1]) / p[2];
            s.counts[i] += p[0] * std::exp(-0.5 * z * z);
        }
    return s;
}

TEST_CASE("peak detection on a clean single peak") {
    const auto s = painted({{100.0, 1.0e-6, 20e-9}}, 2.0);
    const auto guesses = detect_peaks(s);
    REQUIRE(guesses.size() == 1);
    CHECK(std::abs(guesses[0].center_s - 1.0e-6) <= 4e-9);  // within one bin
    CHECK(guesses[0].width_2sigma_s == doctest::Approx(40e-9).epsilon(0.25));
    CHECK(guesses[0].amplitude == doctest::Approx(100.0).epsilon(0.1));
}

TEST_CASE("no peak above the noise floor throws") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> noise(10.0, 1.0);
    TofSpectrum s;
    s.t_start_s = 0.4e-6;
    s.bin_width_s = 4e-9;
    for (int i = 0; i < 300; ++i) s.counts.push_back(noise(rng));
    CHECK_THROWS_AS(detect_peaks(s), NoPeakFound);
}

TEST_CASE("two isolated peaks give two guesses") {
    const auto s = painted({{100.0, 0.8e-6, 15e-9}, {60.0, 1.3e-6, 20e-9}}, 1.0);
    const auto guesses = detect_peaks(s);
    REQUIRE(guesses.size() == 2);
    std::vector<double> centers = {guesses[0].center_s, guesses[1].center_s};
    std::sort(centers.begin(), centers.end());
    CHECK(std::abs(centers[0] - 0.8e-6) <= 4e-9);
    CHECK(std::abs(centers[1] - 1.3e-6) <= 4e-9);
}

TEST_CASE("noiseless Gaussian fit is exact") {
    const auto s = painted({{80.0, 1.1e-6, 25e-9}}, 3.0);
    const auto guesses = detect_peaks(s);
    REQUIRE(!guesses.empty());
    const auto peak = fit_gaussian(s, guesses[0]);
    CHECK(peak.center_time_s == doctest::Approx(1.1e-6).epsilon(1e-6));
    CHECK(peak.width_2sigma_s == doctest::Approx(50e-9).epsilon(1e-5));
    CHECK(peak.amplitude == doctest::Approx(80.0).epsilon(1e-5));
    CHECK(peak.baseline == doctest::Approx(3.0).epsilon(1e-4));
    CHECK(peak.residual_norm < 1e-6);
}

TEST_CASE("fit is robust to a guess displaced by five bins") {
    const auto s = painted({{80.0, 1.1e-6, 25e-9}}, 3.0);
    PeakGuess guess{1.1e-6 + 5 * 4e-9, 50e-9, 60.0};
    const auto peak = fit_gaussian(s, guess);
    CHECK(peak.center_time_s == doctest::Approx(1.1e-6).epsilon(1e-5));
}

TEST_CASE("center error bar covers the truth for Poisson noise") {
    std::mt19937_64 rng(12);
    const double truth = 1.0e-6;
    int covered = 0;
    const int replicas = 200;
    for (int r = 0; r < replicas; ++r) {
        auto s = painted({{120.0, truth, 22e-9}}, 4.0);
        for (auto& c : s.counts) c = std::poisson_distribution<long>(c)(rng);
        const auto guesses = detect_peaks(s);
        REQUIRE(!guesses.empty());
        const auto strongest = *std::max_element(
            guesses.begin(), guesses.end(),
            [](const PeakGuess& a, const PeakGuess& b) { return a.amplitude < b.amplitude; });
        const auto peak = fit_gaussian(s, strongest);
        if (std::abs(peak.center_time_s - truth) < 2.0 * peak.center_err_s()) ++covered;
    }
    // nominal 2-sigma coverage is 95%; demand at least 85%
    CHECK(covered >= 170);
}

static std::vector<TofSpectrum> demo_series(uint64_t seed, double lens_start = 0.0,
                                            int count = 16) {
    SeriesConfig sc;
    sc.volume.laser_diameter_1e_m = 21e-6 * std::sqrt(2.0);
    sc.n_atoms = 20000;
    sc.calibration = paper_cal();
    sc.state_label = "54d";
    std::vector<double> lens;
    for (int i = 0; i < count; ++i) lens.push_back(lens_start + 20e-6 * i);
    return synthesize_series(lens, sc, seed);
}

TEST_CASE("calibration round trip on a synthetic series") {
    const auto series = demo_series(101);
    CalibrationOptions opt;
    opt.offset_source = OffsetSource::Fixed;
    opt.fixed_t_offset_s = 13e-9;
    auto result = calibrate(series, 20e-6, opt);
    CHECK(result.calibration.field_V_per_m ==
          doctest::Approx(5020.0).epsilon(0.02));
    CHECK(result.center_residual_rms_m < 3e-6);
    REQUIRE(result.peaks.size() == series.size());

    SUBCASE("shuffled input gives the same calibration") {
        auto shuffled = series;
        std::mt19937_64 rng(5);
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        const auto again = calibrate(shuffled, 20e-6, opt);
        CHECK(again.calibration.field_V_per_m ==
              doctest::Approx(result.calibration.field_V_per_m).epsilon(1e-12));
    }

    SUBCASE("width decomposition recovers w and tau") {
        decompose_width(result);
        CHECK(result.width_model.w_m == doctest::Approx(21e-6).epsilon(0.10));
        CHECK(result.width_model.tau_s == doctest::Approx(20e-9).epsilon(0.10));
    }

    SUBCASE("fitted offset lands near the synthesis value") {
        CalibrationOptions fo = opt;
        fo.offset_source = OffsetSource::Fitted;
        const auto fitted = calibrate(series, 20e-6, fo);
        CHECK(std::abs(fitted.calibration.time_offset_s - 13e-9) < 10e-9);
        CHECK(fitted.calibration.field_V_per_m == doctest::Approx(5020.0).epsilon(0.03));
    }
}

TEST_CASE("lens origin shift changes only V0, not E") {
    CalibrationOptions opt;
    const auto a = calibrate(demo_series(101), 20e-6, opt);
    const auto b = calibrate(demo_series(101, 40e-6), 20e-6, opt);
    CHECK(b.calibration.field_V_per_m ==
          doctest::Approx(a.calibration.field_V_per_m).epsilon(0.02));
}

TEST_CASE("too few spectra is an analysis error") {
    const auto series = demo_series(101, 0.0, 3);
    CHECK_THROWS_AS(calibrate(series, 20e-6, {}), std::invalid_argument);
}

TEST_CASE("tau = 0 synthesis decomposes to a vanishing tau") {
    SeriesConfig sc;
    sc.volume.laser_diameter_1e_m = 21e-6 * std::sqrt(2.0);
    sc.n_atoms = 40000;
    sc.calibration = paper_cal();
    sc.detector.tau_instr_s = 0.0;
    std::vector<double> lens;
    for (int i = 0; i < 16; ++i) lens.push_back(20e-6 * i);
    const auto series = synthesize_series(lens, sc, 202);
    auto result = calibrate(series, 20e-6, {});
    decompose_width(result);
    CHECK(result.width_model.w_m == doctest::Approx(21e-6).epsilon(0.10));
    CHECK(result.width_model.tau_s < 6e-9);
}

TEST_CASE("width decomposition needs slope leverage") {
    // a series confined to a narrow position range has nearly equal slopes
    SeriesConfig sc;
    sc.volume.laser_diameter_1e_m = 21e-6 * std::sqrt(2.0);
    sc.n_atoms = 20000;
    sc.calibration = paper_cal();
    std::vector<double> lens = {150e-6, 152e-6, 154e-6, 156e-6, 158e-6};
    const auto series = synthesize_series(lens, sc, 303);
    auto result = calibrate(series, 2e-6, {});
    CHECK_THROWS_AS(decompose_width(result), IllConditionedFit);
}

TEST_CASE("resolution report over the working range") {
    auto result = calibrate(demo_series(101), 20e-6, {});
    decompose_width(result);
    const auto rep = resolution_report(result, 0.0, 300e-6);
    REQUIRE(rep.samples.size() == 301);
    // fast end (high energy, x = 300 um) has the worst resolution
    CHECK(rep.max_sigma_x_m == doctest::Approx(33.4e-6).epsilon(0.15));
    CHECK(rep.min_sigma_x_m < 6e-6);
    CHECK(rep.sub20um_range_m > 150e-6);
    // monotone for this model: sigma_x grows with x
    for (size_t i = 1; i < rep.samples.size(); ++i)
        CHECK(rep.samples[i].sigma_x_m >= rep.samples[i - 1].sigma_x_m);
}

TEST_CASE("linearity of mapped centers against the lens grid") {
    auto result = calibrate(demo_series(101), 20e-6, {});
    const auto lin = linearity(result, result.lens_positions_m);
    CHECK(lin.slope == doctest::Approx(1.0).epsilon(0.02));
    CHECK(lin.rms_residual_m < 3e-6);
}
