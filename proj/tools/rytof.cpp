// rytof: simulate and analyze position-resolved field ionization of cold
// Rydberg atoms. Subcommands: potential, simulate, calibrate, analyze,
// hoptime. See README.md.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "rytof/analysis.hpp"
#include "rytof/config.hpp"
#include "rytof/constants.hpp"
#include "rytof/core_model.hpp"
#include "rytof/field_solver.hpp"
#include "rytof/pulse.hpp"
#include "rytof/spectrum.hpp"

namespace fs = std::filesystem;
using namespace rytof;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIoConflict = 3;
constexpr int kExitAnalysis = 4;
constexpr int kExitUsage = 64;

struct CommonArgs {
    std::string config_path;
    std::string preset;
    std::string out_dir;
    uint64_t seed = 0;
    bool seed_set = false;
    bool force = false;
    std::string offset;
};

RunConfig load_config(const CommonArgs& args) {
    RunConfig cfg;
    if (!args.config_path.empty())
        cfg = RunConfig::from_file(args.config_path);
    else if (args.preset == "paper" || args.preset.empty())
        cfg = RunConfig::paper_preset();
    else
        throw std::invalid_argument("unknown preset '" + args.preset + "'");
    if (args.seed_set) cfg.seed = args.seed;
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (!args.offset.empty()) cfg.offset_source = args.offset;
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "run configuration file");
    cmd->add_option("--preset", args.preset, "named preset (paper)");
    cmd->add_option("--seed", args.seed, "random seed")
        ->each([&](const std::string&) { args.seed_set = true; });
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_flag("--force", args.force, "overwrite existing outputs");
    cmd->add_option("--offset", args.offset, "t_offset handling: fixed or fitted")
        ->check(CLI::IsMember({"fixed", "fitted"}));
}

int ensure_out_dir(const RunConfig& cfg, bool force, const std::string& marker) {
    fs::create_directories(cfg.out_dir);
    const fs::path probe = fs::path(cfg.out_dir) / marker;
    if (fs::exists(probe) && !force) {
        std::cerr << "error: " << probe.string() << " exists (use --force to overwrite)\n";
        return kExitIoConflict;
    }
    return kExitOk;
}

int cmd_potential(const CommonArgs& args) {
    const RunConfig cfg = load_config(args);
    const int rc = ensure_out_dir(cfg, args.force, "potential.csv");
    if (rc != kExitOk) return rc;

    SolverOptions opt;
    opt.grid_spacing_m = cfg.grid_spacing_m;
    opt.tolerance = cfg.solver_tolerance;
    const ApparatusGeometry geom = cfg.geometry();
    PotentialProfile profile;
    try {
        profile = solve_potential(geom, opt);
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitAnalysis;
    }
    const fs::path out = fs::path(cfg.out_dir) / "potential.csv";
    write_profile_csv(profile, out.string());

    const double field = -profile.gradient_at(geom.mot_position_m);
    std::printf("potential solved: %zu axial nodes, grid %.3g mm, residual %.3g\n",
                profile.z_m.size(), opt.grid_spacing_m * 1e3, profile.residual);
    std::printf("on-axis field at the MOT: %.4g V/cm (magnitude)\n", std::abs(field) / 100.0);
    std::printf("wrote %s\n", out.string().c_str());
    return kExitOk;
}

int cmd_simulate(const CommonArgs& args) {
    const RunConfig cfg = load_config(args);
    const int rc = ensure_out_dir(cfg, args.force, "series_manifest.txt");
    if (rc != kExitOk) return rc;

    const std::vector<double> lens = cfg.lens_positions();
    std::vector<TofSpectrum> series;
    if (cfg.n_atoms == 0) {
        std::cerr << "warning: n_atoms = 0, emitting empty spectra\n";
        const SeriesConfig sc = cfg.series_config();
        for (double xl : lens) {
            SynthesisOptions so;
            TofSpectrum s = synthesize_spectrum({}, sc.calibration, sc.detector, cfg.seed, so);
            s.x_lens_m = xl;
            s.state_label = sc.state_label;
            s.config_hash = sc.config_hash;
            series.push_back(std::move(s));
        }
    } else {
        series = synthesize_series(lens, cfg.series_config(), cfg.seed);
    }

    std::vector<std::string> names;
    for (size_t i = 0; i < series.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "spectrum_%03zu.csv", i);
        const fs::path p = fs::path(cfg.out_dir) / name;
        write_spectrum_csv(series[i], p.string());
        names.push_back(name);
    }
    const fs::path manifest = fs::path(cfg.out_dir) / "series_manifest.txt";
    write_series_manifest(names, manifest.string());
    cfg.write_file((fs::path(cfg.out_dir) / "run_config.txt").string());
    std::printf("wrote %zu spectra and %s (config hash %s)\n", series.size(),
                manifest.string().c_str(), cfg.hash().c_str());
    return kExitOk;
}

std::vector<TofSpectrum> load_series(const std::string& manifest_path) {
    const fs::path dir = fs::path(manifest_path).parent_path();
    std::vector<TofSpectrum> series;
    for (const auto& name : read_series_manifest(manifest_path))
        series.push_back(read_spectrum_csv((dir / name).string()));
    return series;
}

int cmd_calibrate(const CommonArgs& args, const std::string& manifest_path) {
    const RunConfig cfg = load_config(args);
    const int rc = ensure_out_dir(cfg, args.force, "calibration_report.txt");
    if (rc != kExitOk) return rc;
    try {
        const std::vector<TofSpectrum> series = load_series(manifest_path);
        CalibrationResult result = calibrate(series, cfg.lens_step_m, cfg.calibration_options());
        decompose_width(result);
        const fs::path dir(cfg.out_dir);
        write_peaks_csv(result, (dir / "peaks.csv").string());
        write_calibration_report(result, (dir / "calibration_report.txt").string());
        std::printf("offset handling: %s (t_offset = %.3g ns)\n", cfg.offset_source.c_str(),
                    result.calibration.time_offset_s * 1e9);
        std::printf("E = %.4g V/cm, V0 = %.4g V, w = %.4g um, tau = %.4g ns\n",
                    result.calibration.field_V_per_m / 100.0, result.calibration.offset_V,
                    result.width_model.w_m * 1e6, result.width_model.tau_s * 1e9);
        std::printf("center residual rms = %.3g um\n", result.center_residual_rms_m * 1e6);
        std::printf("wrote %s and %s\n", (dir / "calibration_report.txt").string().c_str(),
                    (dir / "peaks.csv").string().c_str());
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitAnalysis;
    }
}

int cmd_analyze(const CommonArgs& args, const std::string& manifest_path) {
    const RunConfig cfg = load_config(args);
    const int rc = ensure_out_dir(cfg, args.force, "resolution.csv");
    if (rc != kExitOk) return rc;
    try {
        const std::vector<TofSpectrum> series = load_series(manifest_path);
        CalibrationResult result = calibrate(series, cfg.lens_step_m, cfg.calibration_options());
        decompose_width(result);

        double x_lo = 1e300, x_hi = -1e300;
        for (double x : result.lens_positions_m) {
            x_lo = std::min(x_lo, x);
            x_hi = std::max(x_hi, x);
        }
        const ResolutionReport rep = resolution_report(result, x_lo, x_hi);
        const LinearityResult lin = linearity(result, result.lens_positions_m);

        const fs::path dir(cfg.out_dir);
        write_resolution_csv(rep, (dir / "resolution.csv").string());
        write_peaks_csv(result, (dir / "peaks.csv").string());
        write_calibration_report(result, (dir / "calibration_report.txt").string());

        std::printf("resolution over [%.4g, %.4g] um: %.3g to %.3g um\n", x_lo * 1e6,
                    x_hi * 1e6, rep.min_sigma_x_m * 1e6, rep.max_sigma_x_m * 1e6);
        std::printf("sub-20 um range: %.4g um ([%.4g, %.4g] um)\n",
                    rep.sub20um_range_m * 1e6, rep.sub20um_lo_m * 1e6, rep.sub20um_hi_m * 1e6);
        std::printf("linearity: slope %.5g, intercept %.3g um, rms %.3g um\n", lin.slope,
                    lin.intercept_m * 1e6, lin.rms_residual_m * 1e6);

        // dual-state selectivity scenario under the configured waveform
        const ApparatusGeometry geom = cfg.geometry();
        const VoltageWaveform wf = cfg.waveform();
        std::vector<EnsembleAtom> atoms(cfg.n_atoms);
        for (size_t i = 0; i < atoms.size(); ++i)
            atoms[i] = {static_cast<uint64_t>(i), geom.mot_position_m};
        const RydbergState upper{cfg.state_n, "d", 0.0};
        const RydbergState lower{cfg.other_state_n, "d", 0.0};
        IonizationConfig ion1{upper, StarkBranchModel::default_for(upper), 0.0, lower, {}};
        IonizationConfig ion0{lower, StarkBranchModel::default_for(lower),
                              cfg.contamination_fraction, upper,
                              StarkBranchModel::default_for(upper)};
        const auto ev1 = ionization_events(atoms, wf, geom, ion1, cfg.seed);
        const auto ev0 = ionization_events(atoms, wf, geom, ion0, cfg.seed + 1);
        const SelectivityResult sel = selectivity(ev1, ev0);
        if (sel.undefined)
            std::printf("selectivity: undefined (no genuine peak-b signal)\n");
        else if (sel.infinite)
            std::printf("selectivity: infinite (b1 = %zu, b0 = 0)\n", sel.b_state1);
        else
            std::printf("selectivity: %.3g (b1 = %zu, b0 = %zu)\n", sel.ratio, sel.b_state1,
                        sel.b_state0);
        std::printf("wrote %s\n", (dir / "resolution.csv").string().c_str());
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitAnalysis;
    }
}

int cmd_hoptime(int n, double d_um) {
    const double t = hop_time_s(n, d_um * 1e-6);
    std::printf("hop time for n=%d, d=%.6g um: %.6g us\n", n, d_um, t * 1e6);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"time-of-flight simulation and calibration for state-selective "
                 "field ionization of cold Rydberg atoms"};
    app.require_subcommand(1);

    CommonArgs pot_args, sim_args, cal_args, ana_args;
    std::string cal_manifest, ana_manifest;
    int hop_n = 0;
    double hop_d_um = 0.0;

    auto* pot = app.add_subcommand("potential", "solve the electrode potential");
    add_common(pot, pot_args);
    auto* sim = app.add_subcommand("simulate", "synthesize a lens-position spectrum series");
    add_common(sim, sim_args);
    auto* cal = app.add_subcommand("calibrate", "fit (E, V0, t_offset) from a series");
    add_common(cal, cal_args);
    cal->add_option("manifest", cal_manifest, "series manifest file")->required();
    auto* ana = app.add_subcommand("analyze", "resolution, linearity and selectivity reports");
    add_common(ana, ana_args);
    ana->add_option("manifest", ana_manifest, "series manifest file")->required();
    auto* hop = app.add_subcommand("hoptime", "dipole-dipole hopping time");
    hop->add_option("n", hop_n, "principal quantum number")->required();
    hop->add_option("d_um", hop_d_um, "atom separation in micrometers")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (pot->parsed()) return cmd_potential(pot_args);
        if (sim->parsed()) return cmd_simulate(sim_args);
        if (cal->parsed()) return cmd_calibrate(cal_args, cal_manifest);
        if (ana->parsed()) return cmd_analyze(ana_args, ana_manifest);
        if (hop->parsed()) return cmd_hoptime(hop_n, hop_d_um);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitAnalysis;
    }
    return kExitUsage;
}
