#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "rytof/core_model.hpp"
#include "rytof/spectrum.hpp"

namespace rytof {

struct NoPeakFound : std::runtime_error {
    NoPeakFound() : std::runtime_error("no peak found above the noise floor") {}
};
struct FitNonConvergence : std::runtime_error {
    explicit FitNonConvergence(const std::string& what) : std::runtime_error(what) {}
};
struct DegenerateFit : std::runtime_error {
    explicit DegenerateFit(const std::string& what) : std::runtime_error(what) {}
};
struct IllConditionedFit : std::runtime_error {
    explicit IllConditionedFit(const std::string& what) : std::runtime_error(what) {}
};

struct PeakGuess {
    double center_s = 0.0;
    double width_2sigma_s = 0.0;
    double amplitude = 0.0;
};

struct GaussianPeak {
    double center_time_s = 0.0;
    double width_2sigma_s = 0.0;   // 2 sigma in the time domain
    double amplitude = 0.0;
    double baseline = 0.0;
    double center_position_m = 0.0;  // filled once a calibration exists
    double width_2sigma_m = 0.0;
    double residual_norm = 0.0;
    // covariance of (amplitude, center, sigma, baseline), row-major
    std::array<double, 16> covariance{};

    double center_err_s() const;
};

/// Local-maximum search above median + k * MAD, one guess per isolated
/// maximum, FWHM-seeded widths.
std::vector<PeakGuess> detect_peaks(const TofSpectrum& spec, double k_mad = 5.0);

/// Four-parameter Gaussian-plus-constant fit (damped least squares,
/// analytic Jacobian, jittered restarts). Throws FitNonConvergence or
/// DegenerateFit (sigma below one bin).
GaussianPeak fit_gaussian(const TofSpectrum& spec, const PeakGuess& guess);

enum class OffsetSource { Fixed, Fitted };

struct CalibrationOptions {
    OffsetSource offset_source = OffsetSource::Fixed;
    double fixed_t_offset_s = 13e-9;  // field-solver oracle value
    double tube_length_m = 0.40;
};

struct ResolutionSample {
    double x_m = 0.0;
    double sigma_x_m = 0.0;
};

struct CalibrationResult {
    FlightCalibration calibration;
    std::vector<GaussianPeak> peaks;          // one per spectrum, series order
    std::vector<double> lens_positions_m;     // matching order
    WidthModel width_model;
    double width_w_err_m = 0.0;
    double width_tau_err_s = 0.0;
    double center_residual_rms_m = 0.0;
    double linearity_slope = 0.0;
    double linearity_intercept_m = 0.0;
    double linearity_rms_m = 0.0;
    std::vector<ResolutionSample> resolution;
    std::string config_hash;
};

/// Joint (E, V0[, t_offset]) calibration from a lens-position series: fits
/// the largest peak of each spectrum, then minimizes the mismatch between
/// positions mapped through the inverse time-of-flight model and the known
/// lens grid. V0 is reported in the lens coordinate frame (x0 = 0).
CalibrationResult calibrate(const std::vector<TofSpectrum>& series, double step_m,
                            const CalibrationOptions& opt = {});

/// Separate the fitted position-domain widths into the production-volume
/// width w and the instrumental time width tau. Fills the width fields of
/// the result and returns the model. Throws IllConditionedFit when the
/// slopes carry no leverage (all within 10% of each other).
WidthModel decompose_width(CalibrationResult& result);

struct ResolutionReport {
    std::vector<ResolutionSample> samples;
    double min_sigma_x_m = 0.0;
    double max_sigma_x_m = 0.0;
    double sub20um_range_m = 0.0;   // longest contiguous range with sigma_x < 20 um
    double sub20um_lo_m = 0.0;
    double sub20um_hi_m = 0.0;
};

/// Resolution curve sigma_x(x) = |dx/dt|(x) * tau over [x_lo, x_hi].
ResolutionReport resolution_report(const CalibrationResult& result, double x_lo_m,
                                   double x_hi_m, int n_samples = 301);

struct LinearityResult {
    double slope = 0.0;
    double intercept_m = 0.0;
    double rms_residual_m = 0.0;
};

/// Ordinary least-squares line through (x_L, x_TOF).
LinearityResult linearity(const CalibrationResult& result,
                          const std::vector<double>& lens_positions_m);

// Report emission: human-readable summary plus peaks.csv / resolution.csv.
void write_peaks_csv(const CalibrationResult& result, const std::string& path);
void write_resolution_csv(const ResolutionReport& report, const std::string& path);
void write_calibration_report(const CalibrationResult& result, const std::string& path);

}  // namespace rytof
