#include "rytof/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <stdexcept>
#include <thread>

#include "rytof/constants.hpp"

namespace rytof {

namespace k = constants;

double ProductionVolume::width_2sigma_m() const {
    if (!(laser_diameter_1e_m > 0.0))
        throw std::invalid_argument("production volume: diameter must be > 0");
    return two_photon ? laser_diameter_1e_m / std::sqrt(2.0) : laser_diameter_1e_m;
}

void DetectorModel::validate() const {
    if (mesh_transmission < 0.0 || mesh_transmission > 1.0)
        throw std::invalid_argument("detector: transmission outside [0,1]");
    if (!(bin_width_s > 0.0))
        throw std::invalid_argument("detector: bin width must be > 0");
    if (tau_instr_s < 0.0)
        throw std::invalid_argument("detector: negative time response");
}

double DetectorModel::efficiency(double energy_eV) const {
    if (rolloff_knee_eV <= 0.0) return 1.0;
    return 1.0 / (1.0 + std::exp(-(energy_eV - rolloff_knee_eV) / rolloff_scale_eV));
}

double TofSpectrum::total() const {
    double s = 0.0;
    for (double c : counts) s += c;
    return s;
}

TofSpectrum TofSpectrum::rebinned(size_t factor) const {
    if (factor == 0) throw std::invalid_argument("rebinned: factor must be >= 1");
    TofSpectrum out = *this;
    out.bin_width_s = bin_width_s * static_cast<double>(factor);
    out.counts.assign((counts.size() + factor - 1) / factor, 0.0);
    for (size_t i = 0; i < counts.size(); ++i) out.counts[i / factor] += counts[i];
    return out;
}

namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::mt19937_64 atom_rng(uint64_t seed, uint64_t atom_index, uint64_t stream) {
    return std::mt19937_64(splitmix64(seed ^ splitmix64(atom_index * 3 + stream)));
}

}  // namespace

AtomSample sample_ensemble(const ProductionVolume& vol, double temperature_K,
                           double mass_kg, size_t n_atoms, uint64_t rng_seed) {
    if (n_atoms < 1) throw std::invalid_argument("sample_ensemble: need at least 1 atom");
    if (temperature_K < 0.0) throw std::invalid_argument("sample_ensemble: negative temperature");
    if (!(mass_kg > 0.0)) throw std::invalid_argument("sample_ensemble: mass must be > 0");
    const double sigma_x = vol.width_2sigma_m() / 2.0;
    const double sigma_v = std::sqrt(k::boltzmann_J_per_K * temperature_K / mass_kg);
    AtomSample s;
    s.position_m.resize(n_atoms);
    s.velocity_m_per_s.resize(n_atoms);
    for (size_t i = 0; i < n_atoms; ++i) {
        auto rng = atom_rng(rng_seed, i, 0);
        std::normal_distribution<double> nx(vol.center_m, sigma_x);
        std::normal_distribution<double> nv(0.0, sigma_v);
        s.position_m[i] = sigma_x > 0.0 ? nx(rng) : vol.center_m;
        s.velocity_m_per_s[i] = sigma_v > 0.0 ? nv(rng) : 0.0;
    }
    return s;
}

namespace {

double oracle_arrival(const PotentialProfile& profile, double x_m) {
    const FlightResult fr = integrate_flight(x_m, 0.0, profile, 1e-10);
    if (fr.outcome != FlightOutcome::Detected)
        throw std::domain_error("oracle arrival: electron turned back");
    return fr.arrival_time_s;
}

}  // namespace

TofSpectrum synthesize_spectrum(const std::vector<double>& positions_m,
                                const FlightCalibration& cal, const DetectorModel& det,
                                uint64_t rng_seed, const SynthesisOptions& opt) {
    det.validate();
    const double sigma_t = det.tau_instr_s / 2.0;

    // nominal arrivals; domain failures are tallied, not fatal
    std::vector<double> arrivals;
    std::vector<double> energies;
    arrivals.reserve(positions_m.size());
    double dropped_domain = 0.0;
    for (double x : positions_m) {
        try {
            const double t = opt.oracle_profile ? oracle_arrival(*opt.oracle_profile, x)
                                                : analytic_tof_s(x, cal);
            arrivals.push_back(t);
            energies.push_back(opt.oracle_profile ? 1.0 : cal.energy_V(x));
        } catch (const std::domain_error&) {
            dropped_domain += 1.0;
        }
    }

    double t_lo = opt.t_min_s, t_hi = opt.t_max_s;
    if (t_lo == 0.0 && t_hi == 0.0) {
        if (arrivals.empty()) {
            t_lo = 0.0;
            t_hi = det.bin_width_s;
        } else {
            const auto [mn, mx] = std::minmax_element(arrivals.begin(), arrivals.end());
            const double pad = 6.0 * sigma_t + det.bin_width_s;
            t_lo = *mn - pad;
            t_hi = *mx + pad;
        }
    }
    if (!(t_hi > t_lo)) throw std::invalid_argument("synthesize_spectrum: empty time window");

    TofSpectrum spec;
    spec.t_start_s = t_lo;
    spec.bin_width_s = det.bin_width_s;
    spec.seed = rng_seed;
    spec.dropped_domain = dropped_domain;
    const auto nb = static_cast<size_t>(std::ceil((t_hi - t_lo) / det.bin_width_s));
    spec.counts.assign(std::max<size_t>(nb, 1), 0.0);

    if (opt.mode == SpectrumMode::Sampled) {
        for (size_t i = 0; i < arrivals.size(); ++i) {
            auto rng = atom_rng(rng_seed, i, 1);
            std::uniform_real_distribution<double> uni(0.0, 1.0);
            const double keep_p = det.mesh_transmission * det.efficiency(energies[i]);
            if (uni(rng) >= keep_p) continue;
            double t = arrivals[i];
            if (sigma_t > 0.0) {
                std::normal_distribution<double> jitter(0.0, sigma_t);
                t += jitter(rng);
            }
            const auto bin = static_cast<long>(std::floor((t - spec.t_start_s) / spec.bin_width_s));
            if (bin < 0 || bin >= static_cast<long>(spec.counts.size()))
                spec.dropped_range += 1.0;
            else
                spec.counts[bin] += 1.0;
        }
    } else {
        // expected-value mode: Gaussian mass per bin via CDF differences
        const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
        for (size_t i = 0; i < arrivals.size(); ++i) {
            const double weight = det.mesh_transmission * det.efficiency(energies[i]);
            const double t = arrivals[i];
            if (sigma_t == 0.0) {
                const auto bin =
                    static_cast<long>(std::floor((t - spec.t_start_s) / spec.bin_width_s));
                if (bin < 0 || bin >= static_cast<long>(spec.counts.size()))
                    spec.dropped_range += weight;
                else
                    spec.counts[bin] += weight;
                continue;
            }
            auto cdf = [&](double edge) {
                return 0.5 * std::erfc((t - edge) / sigma_t * inv_sqrt2);
            };
            double below = cdf(spec.t_start_s);
            double prev = below;
            for (size_t b = 0; b < spec.counts.size(); ++b) {
                const double next = cdf(spec.edge(b + 1));
                spec.counts[b] += weight * (next - prev);
                prev = next;
            }
            spec.dropped_range += weight * (below + (1.0 - prev));
        }
    }
    return spec;
}

std::vector<TofSpectrum> synthesize_series(const std::vector<double>& lens_positions_m,
                                           const SeriesConfig& config, uint64_t rng_seed) {
    if (lens_positions_m.size() < 2)
        throw std::invalid_argument("synthesize_series: need at least 2 lens positions");
    const double mass = config.mass_kg > 0.0 ? config.mass_kg : k::rb85_mass_kg;

    // shared histogram window across the series
    double t_lo = 1e300, t_hi = -1e300;
    for (double xl : lens_positions_m) {
        const double w = ProductionVolume{xl, config.volume.laser_diameter_1e_m,
                                          config.volume.two_photon}.width_2sigma_m();
        for (double x : {xl - 3.0 * w, xl, xl + 3.0 * w}) {
            try {
                const double t = analytic_tof_s(x, config.calibration);
                t_lo = std::min(t_lo, t);
                t_hi = std::max(t_hi, t);
            } catch (const std::domain_error&) {
            }
        }
    }
    if (!(t_hi > t_lo))
        throw std::domain_error("synthesize_series: no lens position maps into the validity domain");
    const double pad = 6.0 * config.detector.tau_instr_s + 10.0 * config.detector.bin_width_s;

    std::vector<TofSpectrum> out(lens_positions_m.size());
    auto build_one = [&](size_t i) {
        ProductionVolume vol = config.volume;
        vol.center_m = lens_positions_m[i];
        const uint64_t spec_seed = splitmix64(rng_seed ^ splitmix64(0xA0B1C2D3ULL + i));
        const AtomSample atoms =
            sample_ensemble(vol, config.temperature_K, mass, config.n_atoms, spec_seed);
        SynthesisOptions opt;
        opt.mode = config.mode;
        opt.t_min_s = t_lo - pad;
        opt.t_max_s = t_hi + pad;
        TofSpectrum s = synthesize_spectrum(atoms.position_m, config.calibration,
                                            config.detector, spec_seed, opt);
        s.x_lens_m = lens_positions_m[i];
        s.state_label = config.state_label;
        s.config_hash = config.config_hash;
        out[i] = std::move(s);
    };

    size_t workers = 1;
    if (const char* env = std::getenv("RYTOF_WORKERS")) {
        const long w = std::strtol(env, nullptr, 10);
        if (w > 1) workers = static_cast<size_t>(w);
    }
    workers = std::min(workers, lens_positions_m.size());
    if (workers <= 1) {
        for (size_t i = 0; i < lens_positions_m.size(); ++i) build_one(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        for (size_t w = 0; w < workers; ++w)
            pool.emplace_back([&]() {
                for (size_t i = next.fetch_add(1); i < lens_positions_m.size();
                     i = next.fetch_add(1))
                    build_one(i);
            });
        for (auto& t : pool) t.join();
    }
    return out;
}

void write_spectrum_csv(const TofSpectrum& spec, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    char buf[512];
    std::snprintf(buf, sizeof buf, "# x_L_m = %.17g\n", spec.x_lens_m);
    out << buf;
    out << "# state = " << (spec.state_label.empty() ? "-" : spec.state_label) << "\n";
    std::snprintf(buf, sizeof buf, "# seed = %llu\n",
                  static_cast<unsigned long long>(spec.seed));
    out << buf;
    out << "# config_hash = " << (spec.config_hash.empty() ? "-" : spec.config_hash) << "\n";
    out << "# polarity = " << (spec.polarity_negated ? "negated" : "positive") << "\n";
    std::snprintf(buf, sizeof buf, "# bin_width_s = %.17g\n# dropped_domain = %.17g\n# dropped_range = %.17g\n",
                  spec.bin_width_s, spec.dropped_domain, spec.dropped_range);
    out << buf;
    out << "t_s,counts\n";
    for (size_t i = 0; i < spec.counts.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", spec.edge(i), spec.counts[i]);
        out << buf;
    }
}

TofSpectrum read_spectrum_csv(const std::string& path, bool negate_polarity) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    TofSpectrum spec;
    std::string line;
    std::vector<double> edges;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            double d = 0.0;
            unsigned long long u = 0;
            char s[256];
            if (std::sscanf(line.c_str(), "# x_L_m = %lg", &d) == 1) spec.x_lens_m = d;
            else if (std::sscanf(line.c_str(), "# seed = %llu", &u) == 1) spec.seed = u;
            else if (std::sscanf(line.c_str(), "# state = %255s", s) == 1 && std::string(s) != "-")
                spec.state_label = s;
            else if (std::sscanf(line.c_str(), "# config_hash = %255s", s) == 1 && std::string(s) != "-")
                spec.config_hash = s;
            else if (std::sscanf(line.c_str(), "# polarity = %255s", s) == 1)
                spec.polarity_negated = std::string(s) == "negated";
            else if (std::sscanf(line.c_str(), "# bin_width_s = %lg", &d) == 1)
                spec.bin_width_s = d;
            else if (std::sscanf(line.c_str(), "# dropped_domain = %lg", &d) == 1)
                spec.dropped_domain = d;
            else if (std::sscanf(line.c_str(), "# dropped_range = %lg", &d) == 1)
                spec.dropped_range = d;
            continue;
        }
        if (line.rfind("t_s", 0) == 0) continue;
        double t, c;
        if (std::sscanf(line.c_str(), "%lg,%lg", &t, &c) != 2)
            throw std::runtime_error("spectrum csv: bad row: " + line);
        edges.push_back(t);
        spec.counts.push_back(negate_polarity ? -c : c);
    }
    if (edges.empty()) throw std::runtime_error("spectrum csv: no data rows");
    spec.t_start_s = edges.front();
    if (spec.bin_width_s == 0.0 && edges.size() > 1) spec.bin_width_s = edges[1] - edges[0];
    if (negate_polarity) spec.polarity_negated = !spec.polarity_negated;
    return spec;
}

void write_series_manifest(const std::vector<std::string>& csv_paths, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "# rytof series manifest\n";
    for (const auto& p : csv_paths) out << p << "\n";
}

std::vector<std::string> read_series_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::string> paths;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        paths.push_back(line);
    }
    return paths;
}

}  // namespace rytof
