#include "rytof/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "rytof/constants.hpp"
#include "rytof/least_squares.hpp"

namespace rytof {

namespace k = constants;

double GaussianPeak::center_err_s() const { return std::sqrt(std::max(covariance[5], 0.0)); }

namespace {

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
        std::nth_element(v.begin(), v.begin() + mid - 1, v.end());
        m = 0.5 * (m + v[mid - 1]);
    }
    return m;
}

}  // namespace

std::vector<PeakGuess> detect_peaks(const TofSpectrum& spec, double k_mad) {
    const auto& c = spec.counts;
    if (c.empty()) throw std::invalid_argument("detect_peaks: empty spectrum");
    const double med = median_of(c);
    std::vector<double> dev(c.size());
    for (size_t i = 0; i < c.size(); ++i) dev[i] = std::abs(c[i] - med);
    const double mad = median_of(dev);
    const double floor = med + k_mad * mad;

    // candidate local maxima above the floor
    std::vector<size_t> maxima;
    for (size_t i = 0; i < c.size(); ++i) {
        if (!(c[i] > floor) || !(c[i] > 0.0)) continue;
        const double left = i > 0 ? c[i - 1] : -1.0;
        const double right = i + 1 < c.size() ? c[i + 1] : -1.0;
        if (c[i] >= left && c[i] > right) maxima.push_back(i);
    }
    if (maxima.empty()) throw NoPeakFound();

    // keep one maximum per isolated peak: a candidate survives only if the
    // valley between it and every taller accepted peak dips below 80% of
    // its own height above baseline
    std::sort(maxima.begin(), maxima.end(),
              [&](size_t a, size_t b) { return c[a] > c[b]; });
    std::vector<size_t> accepted;
    for (size_t m : maxima) {
        bool isolated = true;
        for (size_t a : accepted) {
            const auto [lo, hi] = std::minmax(a, m);
            double valley = c[m];
            for (size_t i = lo; i <= hi; ++i) valley = std::min(valley, c[i]);
            if (valley - med > 0.8 * (c[m] - med)) {
                isolated = false;
                break;
            }
        }
        if (isolated) accepted.push_back(m);
    }
    std::sort(accepted.begin(), accepted.end());

    std::vector<PeakGuess> guesses;
    for (size_t m : accepted) {
        const double half = med + 0.5 * (c[m] - med);
        size_t lo = m, hi = m;
        while (lo > 0 && c[lo] > half) --lo;
        while (hi + 1 < c.size() && c[hi] > half) ++hi;
        const double fwhm_bins = std::max<double>(hi - lo, 1);
        PeakGuess g;
        g.center_s = spec.bin_center(m);
        g.width_2sigma_s = 2.0 * fwhm_bins * spec.bin_width_s / 2.3548;
        g.amplitude = c[m] - med;
        guesses.push_back(g);
    }
    return guesses;
}

namespace {

struct FitWindow {
    std::vector<double> t;
    std::vector<double> y;
};

FitWindow peak_window(const TofSpectrum& spec, const PeakGuess& guess) {
    const double half_span = std::max(4.0 * guess.width_2sigma_s, 8.0 * spec.bin_width_s);
    FitWindow w;
    for (size_t i = 0; i < spec.counts.size(); ++i) {
        const double t = spec.bin_center(i);
        if (t >= guess.center_s - half_span && t <= guess.center_s + half_span) {
            w.t.push_back(t);
            w.y.push_back(spec.counts[i]);
        }
    }
    return w;
}

LeastSquaresResult run_gaussian_lm(const FitWindow& w, std::vector<double> p0) {
    const auto n = static_cast<int>(w.t.size());
    // Poisson weights (variance = counts) so the chi2/dof-scaled covariance
    // gives honest parameter errors on counting data
    std::vector<double> inv_sigma(n);
    for (int i = 0; i < n; ++i) inv_sigma[i] = 1.0 / std::sqrt(std::max(w.y[i], 1.0));
    auto fn = [&](const std::vector<double>& p, std::vector<double>& r,
                  std::vector<double>* jac) {
        const double A = p[0], t0 = p[1], sig = p[2], B = p[3];
        for (int i = 0; i < n; ++i) {
            const double d = w.t[i] - t0;
            const double s2 = sig * sig;
            const double g = std::exp(-0.5 * d * d / s2);
            const double iw = inv_sigma[i];
            r[i] = (A * g + B - w.y[i]) * iw;
            if (jac) {
                (*jac)[i * 4 + 0] = g * iw;
                (*jac)[i * 4 + 1] = A * g * d / s2 * iw;
                (*jac)[i * 4 + 2] = A * g * d * d / (s2 * sig) * iw;
                (*jac)[i * 4 + 3] = iw;
            }
        }
    };
    LeastSquaresOptions opt;
    opt.max_iterations = 200;
    return levenberg_marquardt(fn, std::move(p0), n, opt);
}

}  // namespace

GaussianPeak fit_gaussian(const TofSpectrum& spec, const PeakGuess& guess) {
    if (guess.center_s < spec.edge(0) || guess.center_s > spec.edge(spec.n_bins()))
        throw std::invalid_argument("fit_gaussian: guess outside spectrum domain");
    const FitWindow w = peak_window(spec, guess);
    if (w.t.size() < 5) throw std::invalid_argument("fit_gaussian: window too narrow");

    const double sig0 = std::max(guess.width_2sigma_s / 2.0, spec.bin_width_s / 2.0);
    std::vector<double> p0 = {guess.amplitude, guess.center_s, sig0, 0.0};

    // a converged fit that collapsed onto a single bin counts as a failed
    // attempt too; only give up after the jittered restarts
    const auto usable = [&](const LeastSquaresResult& r) {
        return r.converged && std::abs(r.params[2]) >= spec.bin_width_s;
    };
    LeastSquaresResult best = run_gaussian_lm(w, p0);
    if (!usable(best)) {
        std::mt19937_64 rng(0xF17BA5E5ULL);
        std::normal_distribution<double> jit(0.0, 1.0);
        for (int attempt = 0; attempt < 8; ++attempt) {
            std::vector<double> p = p0;
            p[0] *= 1.0 + 0.3 * jit(rng);
            p[1] += sig0 * jit(rng);
            p[2] *= std::exp(0.3 * jit(rng)) * (1.0 + 0.5 * attempt);
            LeastSquaresResult r = run_gaussian_lm(w, std::move(p));
            if (usable(r) && (!usable(best) || r.chi2 < best.chi2)) best = std::move(r);
            if (usable(best)) break;
        }
    }
    if (!best.converged)
        throw FitNonConvergence("fit_gaussian: no convergence after restarts");
    const double sigma = std::abs(best.params[2]);
    if (sigma < spec.bin_width_s)
        throw DegenerateFit("fit_gaussian: sigma collapsed below one bin");

    GaussianPeak peak;
    peak.amplitude = best.params[0];
    peak.center_time_s = best.params[1];
    peak.width_2sigma_s = 2.0 * sigma;
    peak.baseline = best.params[3];
    peak.residual_norm = std::sqrt(best.chi2);
    for (int i = 0; i < 16 && i < static_cast<int>(best.covariance.size()); ++i)
        peak.covariance[i] = best.covariance[i];
    return peak;
}

CalibrationResult calibrate(const std::vector<TofSpectrum>& series, double step_m,
                            const CalibrationOptions& opt) {
    if (series.size() < 4)
        throw std::invalid_argument("calibrate: underdetermined, need at least 4 spectra");

    // order by lens position; fall back to the step grid when metadata is flat
    std::vector<size_t> order(series.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return series[a].x_lens_m < series[b].x_lens_m;
    });
    bool distinct = true;
    for (size_t i = 1; i < order.size(); ++i)
        if (series[order[i]].x_lens_m == series[order[i - 1]].x_lens_m) distinct = false;

    CalibrationResult result;
    std::vector<double> t_centers, targets;
    for (size_t rank = 0; rank < order.size(); ++rank) {
        const auto& spec = series[order[rank]];
        const auto guesses = detect_peaks(spec);
        // the series' calibration peak is the strongest one per spectrum
        const auto strongest = std::max_element(
            guesses.begin(), guesses.end(),
            [](const auto& a, const auto& b) { return a.amplitude < b.amplitude; });
        GaussianPeak peak = fit_gaussian(spec, *strongest);
        t_centers.push_back(peak.center_time_s);
        const double x_target = distinct ? spec.x_lens_m
                                         : static_cast<double>(rank) * step_m;
        targets.push_back(x_target);
        result.peaks.push_back(std::move(peak));
        result.lens_positions_m.push_back(x_target);
        if (!result.config_hash.empty() && spec.config_hash != result.config_hash)
            throw std::invalid_argument("calibrate: spectra from mixed configs");
        result.config_hash = spec.config_hash;
    }
    if (!distinct && step_m == 0.0)
        throw std::invalid_argument("calibrate: indistinct lens positions and no step given");

    const double L = opt.tube_length_m;
    const double kinv = L * L * k::electron_mass_kg / (2.0 * k::elementary_charge_C);
    const auto n = static_cast<int>(t_centers.size());

    // model: x_i = kinv / (E (t_i - t0)^2) - (V0/E + x_shift); linear in
    // (a = kinv/E, c) for fixed t0, damped least squares when t0 is co-fit
    auto solve_linear = [&](double t0, double& a, double& c, double& rms) {
        double suu = 0, su = 0, sux = 0, sx = 0;
        for (int i = 0; i < n; ++i) {
            const double dt = t_centers[i] - t0;
            if (!(dt > 0.0)) throw std::domain_error("calibrate: t_offset exceeds a peak time");
            const double u = 1.0 / (dt * dt);
            suu += u * u;
            su += u;
            sux += u * targets[i];
            sx += targets[i];
        }
        const double det = suu * n - su * su;
        if (std::abs(det) < 1e-300)
            throw std::invalid_argument("calibrate: underdetermined, peaks carry no spread");
        a = (sux * n - su * sx) / det;
        c = (su * sux - suu * sx) / det / 1.0;
        // c from the second normal equation: a*su - c*n = sx
        c = (a * su - sx) / n;
        double chi2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double dt = t_centers[i] - t0;
            const double r = a / (dt * dt) - c - targets[i];
            chi2 += r * r;
        }
        rms = std::sqrt(chi2 / n);
    };

    double t0 = opt.fixed_t_offset_s;
    double a = 0, c = 0, rms = 0;
    if (opt.offset_source == OffsetSource::Fixed) {
        solve_linear(t0, a, c, rms);
    } else {
        solve_linear(t0, a, c, rms);
        auto fn = [&](const std::vector<double>& p, std::vector<double>& r,
                      std::vector<double>* jac) {
            for (int i = 0; i < n; ++i) {
                const double dt = t_centers[i] - p[2];
                if (!(dt > 0.0)) {
                    r[i] = 1.0;
                    if (jac) {
                        (*jac)[i * 3 + 0] = 0;
                        (*jac)[i * 3 + 1] = 0;
                        (*jac)[i * 3 + 2] = 1.0;
                    }
                    continue;
                }
                const double u = 1.0 / (dt * dt);
                r[i] = p[0] * u - p[1] - targets[i];
                if (jac) {
                    (*jac)[i * 3 + 0] = u;
                    (*jac)[i * 3 + 1] = -1.0;
                    (*jac)[i * 3 + 2] = 2.0 * p[0] / (dt * dt * dt);
                }
            }
        };
        LeastSquaresOptions lmo;
        lmo.max_iterations = 500;
        const auto res = levenberg_marquardt(fn, {a, c, t0}, n, lmo);
        if (!res.converged)
            throw FitNonConvergence("calibrate: offset co-fit did not converge");
        a = res.params[0];
        c = res.params[1];
        t0 = res.params[2];
        rms = std::sqrt(res.chi2 / n);
    }
    if (a == 0.0) throw FitNonConvergence("calibrate: degenerate field estimate");

    result.calibration.tube_length_m = L;
    result.calibration.field_V_per_m = kinv / a;
    result.calibration.offset_V = c * (kinv / a);
    result.calibration.time_offset_s = t0;
    result.center_residual_rms_m = rms;

    // map fitted peaks into the position domain
    for (auto& peak : result.peaks) {
        peak.center_position_m = position_from_tof_m(peak.center_time_s, result.calibration);
        peak.width_2sigma_m =
            tof_slope_m_per_s(peak.center_time_s, result.calibration) * peak.width_2sigma_s;
    }

    const LinearityResult lin = linearity(result, result.lens_positions_m);
    result.linearity_slope = lin.slope;
    result.linearity_intercept_m = lin.intercept_m;
    result.linearity_rms_m = lin.rms_residual_m;
    return result;
}

WidthModel decompose_width(CalibrationResult& result) {
    const auto n = result.peaks.size();
    if (n < 3)
        throw std::invalid_argument("decompose_width: need at least 3 peaks");

    std::vector<double> slope(n), dx(n);
    for (size_t i = 0; i < n; ++i) {
        slope[i] = tof_slope_m_per_s(result.peaks[i].center_time_s, result.calibration);
        dx[i] = result.peaks[i].width_2sigma_m;
    }
    const auto [smin, smax] = std::minmax_element(slope.begin(), slope.end());
    if (*smax - *smin < 0.10 * *smax)
        throw IllConditionedFit("decompose_width: slopes within 10%, no leverage on tau");

    // linear solve on squares: dx^2 = w^2 + slope^2 tau^2
    double s1 = n, ss = 0, sss = 0, sy = 0, ssy = 0;
    for (size_t i = 0; i < n; ++i) {
        const double s2 = slope[i] * slope[i];
        ss += s2;
        sss += s2 * s2;
        sy += dx[i] * dx[i];
        ssy += s2 * dx[i] * dx[i];
    }
    const double det = s1 * sss - ss * ss;
    double p = (sss * sy - ss * ssy) / det;   // w^2
    double q = (s1 * ssy - ss * sy) / det;    // tau^2
    // covariance of (p, q) from the linear fit
    double chi2_lin = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double r = p + slope[i] * slope[i] * q - dx[i] * dx[i];
        chi2_lin += r * r;
    }
    const double lin_scale = chi2_lin / std::max<double>(n - 2, 1);
    const double var_p = lin_scale * sss / det;
    const double var_q = lin_scale * s1 / det;

    double w = std::sqrt(std::max(p, 0.0));
    double tau = std::sqrt(std::max(q, 0.0));

    double w_err = w > 0.0 ? std::sqrt(var_p) / (2.0 * w) : std::sqrt(std::sqrt(var_p));
    double tau_err = tau > 0.0 ? std::sqrt(var_q) / (2.0 * tau) : std::sqrt(std::sqrt(var_q));

    if (w > 0.0 && tau > 0.0) {
        // refine on the widths themselves, simplex fallback if the damped
        // solver stalls
        auto fn = [&](const std::vector<double>& prm, std::vector<double>& r,
                      std::vector<double>* jac) {
            const double ww = prm[0], tt = prm[1];
            for (size_t i = 0; i < n; ++i) {
                const double model = std::hypot(ww, slope[i] * tt);
                r[i] = model - dx[i];
                if (jac) {
                    (*jac)[i * 2 + 0] = model > 0 ? ww / model : 1.0;
                    (*jac)[i * 2 + 1] = model > 0 ? slope[i] * slope[i] * tt / model : slope[i];
                }
            }
        };
        auto res = levenberg_marquardt(fn, {w, tau}, static_cast<int>(n));
        if (!res.converged) {
            auto chi2 = [&](const std::vector<double>& prm) {
                double s = 0.0;
                for (size_t i = 0; i < n; ++i) {
                    const double d = std::hypot(prm[0], slope[i] * prm[1]) - dx[i];
                    s += d * d;
                }
                return s;
            };
            const auto best = nelder_mead(chi2, {w, tau}, 0.1);
            res = levenberg_marquardt(fn, best, static_cast<int>(n));
        }
        w = std::abs(res.params[0]);
        tau = std::abs(res.params[1]);
        if (res.covariance.size() == 4) {
            w_err = std::sqrt(std::max(res.covariance[0], 0.0));
            tau_err = std::sqrt(std::max(res.covariance[3], 0.0));
        }
    }

    result.width_model = {w, tau};
    result.width_w_err_m = w_err;
    result.width_tau_err_s = tau_err;
    return result.width_model;
}

ResolutionReport resolution_report(const CalibrationResult& result, double x_lo_m,
                                   double x_hi_m, int n_samples) {
    if (!(x_hi_m > x_lo_m) || n_samples < 2)
        throw std::invalid_argument("resolution_report: bad range");
    const auto& cal = result.calibration;
    const double tau = result.width_model.tau_s;

    ResolutionReport rep;
    rep.min_sigma_x_m = 1e300;
    double run_start = x_lo_m;
    bool in_run = false;
    double best_lo = 0, best_hi = 0;
    for (int i = 0; i < n_samples; ++i) {
        const double x = x_lo_m + (x_hi_m - x_lo_m) * i / (n_samples - 1);
        const double t = analytic_tof_s(x, cal);  // domain errors propagate
        const double sx = tof_slope_m_per_s(t, cal) * tau;
        rep.samples.push_back({x, sx});
        rep.min_sigma_x_m = std::min(rep.min_sigma_x_m, sx);
        rep.max_sigma_x_m = std::max(rep.max_sigma_x_m, sx);
        const bool good = sx < 20e-6;
        if (good && !in_run) {
            run_start = x;
            in_run = true;
        }
        if ((!good || i == n_samples - 1) && in_run) {
            const double end = good ? x : rep.samples[rep.samples.size() - 2].x_m;
            if (end - run_start > best_hi - best_lo) {
                best_lo = run_start;
                best_hi = end;
            }
            in_run = false;
        }
    }
    rep.sub20um_lo_m = best_lo;
    rep.sub20um_hi_m = best_hi;
    rep.sub20um_range_m = best_hi - best_lo;
    return rep;
}

LinearityResult linearity(const CalibrationResult& result,
                          const std::vector<double>& lens_positions_m) {
    const auto n = lens_positions_m.size();
    if (n < 3 || result.peaks.size() != n)
        throw std::invalid_argument("linearity: need at least 3 matched points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < n; ++i) {
        const double x = lens_positions_m[i];
        const double y = result.peaks[i].center_position_m;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double dn = static_cast<double>(n);
    const double det = dn * sxx - sx * sx;
    if (std::abs(det) < 1e-30 * std::max(sxx * dn, 1.0) || det == 0.0)
        throw std::invalid_argument("linearity: degenerate abscissa");
    LinearityResult lin;
    lin.slope = (dn * sxy - sx * sy) / det;
    lin.intercept_m = (sy - lin.slope * sx) / dn;
    double chi2 = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double r = result.peaks[i].center_position_m -
                         (lin.slope * lens_positions_m[i] + lin.intercept_m);
        chi2 += r * r;
    }
    lin.rms_residual_m = std::sqrt(chi2 / dn);
    return lin;
}

void write_peaks_csv(const CalibrationResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "# config_hash = " << (result.config_hash.empty() ? "-" : result.config_hash) << "\n";
    out << "x_L_m,t_center_s,x_tof_m,width_2sigma_s,width_2sigma_m,amplitude,baseline,center_err_s\n";
    char buf[512];
    for (size_t i = 0; i < result.peaks.size(); ++i) {
        const auto& p = result.peaks[i];
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      result.lens_positions_m[i], p.center_time_s, p.center_position_m,
                      p.width_2sigma_s, p.width_2sigma_m, p.amplitude, p.baseline,
                      p.center_err_s());
        out << buf;
    }
}

void write_resolution_csv(const ResolutionReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "x_m,sigma_x_m\n";
    char buf[128];
    for (const auto& s : report.samples) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", s.x_m, s.sigma_x_m);
        out << buf;
    }
}

void write_calibration_report(const CalibrationResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    const auto& c = result.calibration;
    out << "rytof calibration report\n";
    out << "config_hash: " << (result.config_hash.empty() ? "-" : result.config_hash) << "\n";
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "E = %.6g V/cm\nV0 = %.6g V\nt_offset = %.6g ns\n",
                  c.field_V_per_m / 100.0, c.offset_V, c.time_offset_s * 1e9);
    out << buf;
    std::snprintf(buf, sizeof buf, "w = %.6g um (+- %.2g)\ntau = %.6g ns (+- %.2g)\n",
                  result.width_model.w_m * 1e6, result.width_w_err_m * 1e6,
                  result.width_model.tau_s * 1e9, result.width_tau_err_s * 1e9);
    out << buf;
    std::snprintf(buf, sizeof buf,
                  "center residual rms = %.4g um\n"
                  "linearity: slope = %.6g, intercept = %.4g um, rms = %.4g um\n",
                  result.center_residual_rms_m * 1e6, result.linearity_slope,
                  result.linearity_intercept_m * 1e6, result.linearity_rms_m * 1e6);
    out << buf;
    std::snprintf(buf, sizeof buf,
                  "constants: m_e = %.10g kg, e = %.10g C, k_B = %.7g J/K, a0 = %.11g m\n",
                  k::electron_mass_kg, k::elementary_charge_C, k::boltzmann_J_per_K,
                  k::bohr_radius_m);
    out << buf;
    out << "peaks: " << result.peaks.size() << "\n";
}

}  // namespace rytof
