#include "rytof/field_solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "rytof/constants.hpp"
#include "rytof/least_squares.hpp"

namespace rytof {

namespace k = constants;

ApparatusGeometry ApparatusGeometry::paper_default(double v_p1, double v_p2,
                                                   double v_tube, double v_mesh) {
    ApparatusGeometry g;
    const double plate_r = g.plate_diameter_m / 2.0;
    const double hole_r = g.hole_diameter_m / 2.0;
    const double thick = 1e-3;
    const double tube_start = g.plate_gap_m + 0.015;  // split of the 45 cm flight, see config
    g.electrodes = {
        {"P1", -thick, 0.0, hole_r, plate_r, v_p1},
        {"P2", g.plate_gap_m, g.plate_gap_m + thick, hole_r, plate_r, v_p2},
        {"tube", tube_start, tube_start + g.tube_length_m, hole_r, hole_r + thick, v_tube},
        {"mesh", g.mesh_position_m, g.mesh_position_m + thick, 0.0, g.domain_radius_m, v_mesh},
    };
    return g;
}

ApparatusGeometry ApparatusGeometry::parallel_plates(double v_p1, double v_p2, double gap_m) {
    ApparatusGeometry g;
    g.plate_gap_m = gap_m;
    g.hole_diameter_m = 0.0;
    g.domain_radius_m = g.plate_diameter_m / 2.0;
    g.radial_boundary = RadialBoundary::Neumann;
    const double thick = 1e-3;
    g.electrodes = {
        {"P1", -thick, 0.0, 0.0, g.domain_radius_m, v_p1},
        {"P2", gap_m, gap_m + thick, 0.0, g.domain_radius_m, v_p2},
    };
    return g;
}

void ApparatusGeometry::validate(double grid_spacing_m) const {
    if (!(grid_spacing_m > 0.0))
        throw std::invalid_argument("geometry: grid spacing must be > 0");
    if (!(plate_gap_m > 0.0) || !(tube_length_m > 0.0) || !(total_flight_m > 0.0) ||
        !(domain_radius_m > 0.0))
        throw std::invalid_argument("geometry: lengths must be > 0");
    if (tube_length_m >= total_flight_m)
        throw std::invalid_argument("geometry: tube_length must be < total_flight");
    if (electrodes.empty())
        throw std::invalid_argument("geometry: no electrodes");
    for (const auto& e : electrodes) {
        if (e.z_max_m <= e.z_min_m || e.r_outer_m <= e.r_inner_m)
            throw std::invalid_argument("geometry: degenerate electrode " + e.name);
        if (e.z_max_m - e.z_min_m < 2.0 * grid_spacing_m - 1e-12)
            throw std::invalid_argument("geometry: electrode " + e.name +
                                        " spans fewer than 3 grid planes");
    }
    for (size_t a = 0; a < electrodes.size(); ++a)
        for (size_t b = a + 1; b < electrodes.size(); ++b) {
            const auto& ea = electrodes[a];
            const auto& eb = electrodes[b];
            const bool z_overlap = ea.z_min_m < eb.z_max_m && eb.z_min_m < ea.z_max_m;
            const bool r_overlap = ea.r_inner_m < eb.r_outer_m && eb.r_inner_m < ea.r_outer_m;
            if (z_overlap && r_overlap)
                throw std::invalid_argument("geometry: electrodes " + ea.name + " and " +
                                            eb.name + " overlap");
        }
}

namespace {

uint64_t fnv1a(const void* data, size_t len, uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

uint64_t hash_double(double v, uint64_t h) { return fnv1a(&v, sizeof v, h); }

}  // namespace

uint64_t ApparatusGeometry::hash() const {
    uint64_t h = 1469598103934665603ULL;
    h = hash_double(plate_gap_m, h);
    h = hash_double(plate_diameter_m, h);
    h = hash_double(hole_diameter_m, h);
    h = hash_double(tube_length_m, h);
    h = hash_double(total_flight_m, h);
    h = hash_double(mot_position_m, h);
    h = hash_double(mesh_position_m, h);
    h = hash_double(domain_radius_m, h);
    h = fnv1a(&radial_boundary, sizeof radial_boundary, h);
    for (const auto& e : electrodes) {
        h = fnv1a(e.name.data(), e.name.size(), h);
        h = hash_double(e.z_min_m, h);
        h = hash_double(e.z_max_m, h);
        h = hash_double(e.r_inner_m, h);
        h = hash_double(e.r_outer_m, h);
        h = hash_double(e.voltage_V, h);
    }
    return h;
}

double PotentialProfile::value_at(double z) const {
    if (z < z_m.front() - 1e-12 || z > z_m.back() + 1e-12)
        throw std::domain_error("profile: position outside domain");
    const double h = grid_spacing_m;
    const double s = (z - z_m.front()) / h;
    const auto n = static_cast<long>(z_m.size());
    long i = std::clamp(static_cast<long>(std::floor(s)), 0L, n - 2);
    const double f = s - static_cast<double>(i);
    return potential_V[i] * (1.0 - f) + potential_V[i + 1] * f;
}

double PotentialProfile::gradient_at(double z) const {
    if (z < z_m.front() - 1e-12 || z > z_m.back() + 1e-12)
        throw std::domain_error("profile: position outside domain");
    const double h = grid_spacing_m;
    const auto n = static_cast<long>(z_m.size());
    auto node_grad = [&](long i) {
        if (i <= 0) return (potential_V[1] - potential_V[0]) / h;
        if (i >= n - 1) return (potential_V[n - 1] - potential_V[n - 2]) / h;
        return (potential_V[i + 1] - potential_V[i - 1]) / (2.0 * h);
    };
    const double s = (z - z_m.front()) / h;
    long i = std::clamp(static_cast<long>(std::floor(s)), 0L, n - 2);
    const double f = s - static_cast<double>(i);
    return node_grad(i) * (1.0 - f) + node_grad(i + 1) * f;
}

namespace {

struct Grid {
    long nz = 0, nr = 0;
    double z0 = 0.0, h = 0.0;
    std::vector<double> v;      // nz * nr, z-major
    std::vector<char> fixed;    // same layout
};

Grid build_grid(const ApparatusGeometry& geom, double h) {
    double z_lo = 1e300, z_hi = -1e300;
    for (const auto& e : geom.electrodes) {
        z_lo = std::min(z_lo, e.z_min_m);
        z_hi = std::max(z_hi, e.z_max_m);
    }
    Grid g;
    g.h = h;
    g.z0 = z_lo;
    g.nz = static_cast<long>(std::llround((z_hi - z_lo) / h)) + 1;
    g.nr = static_cast<long>(std::llround(geom.domain_radius_m / h)) + 1;
    g.v.assign(g.nz * g.nr, 0.0);
    g.fixed.assign(g.nz * g.nr, 0);
    const double eps = 1e-9 * h + 1e-15;
    for (long i = 0; i < g.nz; ++i) {
        const double z = g.z0 + i * h;
        for (long j = 0; j < g.nr; ++j) {
            const double r = j * h;
            for (const auto& e : geom.electrodes) {
                if (z >= e.z_min_m - eps && z <= e.z_max_m + eps &&
                    r >= e.r_inner_m - eps && r <= e.r_outer_m + eps) {
                    g.v[i * g.nr + j] = e.voltage_V;
                    g.fixed[i * g.nr + j] = 1;
                    break;
                }
            }
        }
    }
    if (geom.radial_boundary == RadialBoundary::GroundedCylinder) {
        for (long i = 0; i < g.nz; ++i) {
            long idx = i * g.nr + (g.nr - 1);
            if (!g.fixed[idx]) {
                g.v[idx] = 0.0;
                g.fixed[idx] = 1;
            }
        }
    }
    return g;
}

// One SOR sweep; returns the max absolute update.
double sor_sweep(Grid& g, double omega) {
    const long nz = g.nz, nr = g.nr;
    double max_update = 0.0;
    for (long i = 0; i < nz; ++i) {
        const long im = (i == 0) ? 1 : i - 1;         // Neumann z caps (mirror)
        const long ip = (i == nz - 1) ? nz - 2 : i + 1;
        double* row = g.v.data() + i * nr;
        const double* row_m = g.v.data() + im * nr;
        const double* row_p = g.v.data() + ip * nr;
        const char* fix = g.fixed.data() + i * nr;
        for (long j = 0; j < nr; ++j) {
            if (fix[j]) continue;
            double target;
            if (j == 0) {
                target = (row_p[0] + row_m[0] + 4.0 * row[1]) / 6.0;
            } else {
                const double r = static_cast<double>(j);
                const double up = (j == nr - 1) ? row[j - 1] : row[j + 1];  // Neumann outer
                const double cp = 1.0 + 0.5 / r;
                const double cm = 1.0 - 0.5 / r;
                target = (row_p[j] + row_m[j] + cp * up + cm * row[j - 1]) / 4.0;
            }
            const double update = omega * (target - row[j]);
            row[j] += update;
            max_update = std::max(max_update, std::abs(update));
        }
    }
    return max_update;
}

void prolong(const Grid& coarse, Grid& fine) {
    for (long i = 0; i < fine.nz; ++i) {
        const double zc = 0.5 * static_cast<double>(i);
        long ic = std::min(static_cast<long>(zc), coarse.nz - 2);
        const double fz = zc - static_cast<double>(ic);
        for (long j = 0; j < fine.nr; ++j) {
            if (fine.fixed[i * fine.nr + j]) continue;
            const double rc = 0.5 * static_cast<double>(j);
            long jc = std::min(static_cast<long>(rc), coarse.nr - 2);
            const double fr = rc - static_cast<double>(jc);
            const double v00 = coarse.v[ic * coarse.nr + jc];
            const double v01 = coarse.v[ic * coarse.nr + jc + 1];
            const double v10 = coarse.v[(ic + 1) * coarse.nr + jc];
            const double v11 = coarse.v[(ic + 1) * coarse.nr + jc + 1];
            fine.v[i * fine.nr + j] = (1 - fz) * ((1 - fr) * v00 + fr * v01) +
                                      fz * ((1 - fr) * v10 + fr * v11);
        }
    }
}

double relax(const ApparatusGeometry& geom, const SolverOptions& opt, double h, Grid& g) {
    g = build_grid(geom, h);
    if (opt.coarse_seed && g.nz > 65 && g.nr > 17) {
        SolverOptions coarse_opt = opt;
        coarse_opt.tolerance = std::max(opt.tolerance, 1e-6);
        Grid cg;
        relax(geom, coarse_opt, 2.0 * h, cg);
        prolong(cg, g);
    }
    double span = 0.0;
    {
        double lo = 1e300, hi = -1e300;
        for (const auto& e : geom.electrodes) {
            lo = std::min(lo, e.voltage_V);
            hi = std::max(hi, e.voltage_V);
        }
        span = hi - lo;
    }
    if (span == 0.0) {
        // all electrodes at the same voltage: the solution is constant
        std::fill(g.v.begin(), g.v.end(), geom.electrodes.front().voltage_V);
        return 0.0;
    }
    const double abs_tol = opt.tolerance * span;
    double max_update = 0.0;
    for (long it = 0; it < opt.max_iterations; ++it) {
        max_update = sor_sweep(g, opt.over_relaxation);
        if (max_update < abs_tol) return max_update / span;
    }
    throw std::runtime_error("solve_potential: no convergence after max iterations");
}

}  // namespace

PotentialProfile solve_potential(const ApparatusGeometry& geometry, const SolverOptions& opt) {
    geometry.validate(opt.grid_spacing_m);
    if (!(opt.tolerance > 0.0))
        throw std::invalid_argument("solve_potential: tolerance must be > 0");
    Grid g;
    const double residual = relax(geometry, opt, opt.grid_spacing_m, g);

    PotentialProfile p;
    p.grid_spacing_m = g.h;
    p.residual = residual;
    p.geometry_hash = geometry.hash();
    p.z_m.resize(g.nz);
    p.potential_V.resize(g.nz);
    for (long i = 0; i < g.nz; ++i) {
        p.z_m[i] = g.z0 + i * g.h;
        p.potential_V[i] = g.v[i * g.nr];  // r = 0 slice
    }
    for (const auto& e : geometry.electrodes)
        p.source_voltages.emplace_back(e.name, e.voltage_V);
    return p;
}

namespace {

// Piecewise-quadratic antiderivative of the linearly interpolated gradient,
// consistent with the force the integrator sees. Used for energy accounting.
struct GradientPotential {
    const PotentialProfile* p;
    std::vector<double> node_grad;
    std::vector<double> cum;  // integral of interpolated gradient up to node i

    explicit GradientPotential(const PotentialProfile& profile) : p(&profile) {
        const auto n = static_cast<long>(profile.z_m.size());
        const double h = profile.grid_spacing_m;
        node_grad.resize(n);
        for (long i = 0; i < n; ++i) {
            if (i == 0)
                node_grad[i] = (profile.potential_V[1] - profile.potential_V[0]) / h;
            else if (i == n - 1)
                node_grad[i] = (profile.potential_V[n - 1] - profile.potential_V[n - 2]) / h;
            else
                node_grad[i] =
                    (profile.potential_V[i + 1] - profile.potential_V[i - 1]) / (2.0 * h);
        }
        cum.resize(n);
        cum[0] = 0.0;
        for (long i = 1; i < n; ++i)
            cum[i] = cum[i - 1] + 0.5 * (node_grad[i - 1] + node_grad[i]) * h;
    }

    double value(double z) const {
        const double h = p->grid_spacing_m;
        const auto n = static_cast<long>(p->z_m.size());
        double s = (z - p->z_m.front()) / h;
        long i = std::clamp(static_cast<long>(std::floor(s)), 0L, n - 2);
        const double f = s - static_cast<double>(i);
        const double g0 = node_grad[i], g1 = node_grad[i + 1];
        return cum[i] + h * (g0 * f + 0.5 * (g1 - g0) * f * f);
    }

    double grad(double z) const {
        const double h = p->grid_spacing_m;
        const auto n = static_cast<long>(p->z_m.size());
        double s = (z - p->z_m.front()) / h;
        long i = std::clamp(static_cast<long>(std::floor(s)), 0L, n - 2);
        const double f = s - static_cast<double>(i);
        return node_grad[i] * (1.0 - f) + node_grad[i + 1] * f;
    }
};

}  // namespace

FlightResult integrate_flight(double x0_m, double u0_extra_J,
                              const PotentialProfile& profile,
                              double step_control, bool keep_trace) {
    if (x0_m < profile.z_min() || x0_m > profile.z_max())
        throw std::domain_error("integrate_flight: start outside profile domain");
    if (u0_extra_J < 0.0)
        throw std::invalid_argument("integrate_flight: negative extra energy");

    const double qm = k::elementary_charge_C / k::electron_mass_kg;
    GradientPotential pot(profile);
    const double z_det = profile.z_max();

    FlightResult res;
    double z = x0_m;
    double v = std::sqrt(2.0 * u0_extra_J / k::electron_mass_kg);
    double t = 0.0;

    // total energy per unit mass, conserved by construction: v^2/2 - qm*Phi
    const double e0 = 0.5 * v * v - qm * pot.value(z);
    double ke_max = std::max(0.5 * v * v, qm * 1e-3);  // floor at ~1 meV

    if (v == 0.0 && pot.grad(z) <= 0.0) {
        res.outcome = FlightOutcome::TurnedBack;
        res.turning_point_m = z;
        return res;
    }

    auto accel = [&](double zz) { return qm * pot.grad(std::clamp(zz, profile.z_min(), z_det)); };

    auto rk4 = [&](double& zz, double& vv, double dt) {
        const double k1z = vv, k1v = accel(zz);
        const double k2z = vv + 0.5 * dt * k1v, k2v = accel(zz + 0.5 * dt * k1z);
        const double k3z = vv + 0.5 * dt * k2v, k3v = accel(zz + 0.5 * dt * k2z);
        const double k4z = vv + dt * k3v, k4v = accel(zz + dt * k3z);
        zz += dt / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
        vv += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    };

    double dt = 1e-11;
    const double tol = std::max(step_control, 1e-14);
    const double t_max = 1.0;  // 1 s hard cap, far beyond any physical flight
    long steps = 0;
    if (keep_trace) res.trace.emplace_back(t, z);

    while (t < t_max) {
        if (++steps > 100000000L)
            throw std::runtime_error("integrate_flight: step limit exceeded");
        // step doubling error estimate
        double z1 = z, v1 = v;
        rk4(z1, v1, dt);
        double z2 = z, v2 = v;
        rk4(z2, v2, 0.5 * dt);
        rk4(z2, v2, 0.5 * dt);
        const double v_scale = std::max({std::abs(v), std::abs(v2), 1.0});
        const double err = std::abs(z2 - z1) / std::max(std::abs(z_det - profile.z_min()), 1e-6) +
                           std::abs(v2 - v1) / v_scale;
        if (err > tol && dt > 1e-16) {
            dt *= 0.5;
            continue;
        }
        // accept the half-step pair (higher order)
        const double z_prev = z, v_prev = v;
        z = z2;
        v = v2;
        t += dt;
        if (err < tol / 32.0) dt *= 2.0;

        ke_max = std::max(ke_max, 0.5 * v * v);
        const double drift = std::abs(0.5 * v * v - qm * pot.value(std::clamp(z, profile.z_min(), z_det)) - e0) / ke_max;
        res.energy_drift_rel = std::max(res.energy_drift_rel, drift);
        if (keep_trace) res.trace.emplace_back(t, z);

        if (z >= z_det) {
            // quadratic interpolation of the crossing time inside the last step
            const double a = accel(z_prev);
            double dt_c = dt;
            if (v_prev > 0.0) {
                const double disc = v_prev * v_prev + 2.0 * a * (z_det - z_prev);
                if (disc > 0.0)
                    dt_c = (std::sqrt(disc) - v_prev) / (a != 0.0 ? a : 1e-300);
                if (!(dt_c > 0.0) || dt_c > dt) dt_c = (z_det - z_prev) / v_prev;
            }
            res.outcome = FlightOutcome::Detected;
            res.arrival_time_s = t - dt + std::min(dt_c, dt);
            return res;
        }
        if (v < 0.0) {
            res.outcome = FlightOutcome::TurnedBack;
            // turning point where v crossed zero
            res.turning_point_m = z_prev + (v_prev > 0.0 ? v_prev * v_prev /
                (2.0 * std::max(-accel(z_prev), 1e-300)) : 0.0);
            return res;
        }
        if (v == 0.0 && accel(z) <= 0.0) {
            res.outcome = FlightOutcome::TurnedBack;
            res.turning_point_m = z;
            return res;
        }
    }
    throw std::runtime_error("integrate_flight: flight time exceeded 1 s");
}

namespace {

const Electrode& find_electrode(const ApparatusGeometry& geom, const std::string& name) {
    for (const auto& e : geom.electrodes)
        if (e.name == name) return e;
    throw std::invalid_argument("geometry: electrode '" + name + "' not found");
}

}  // namespace

double release_position_for_energy(const PotentialProfile& profile,
                                   const ApparatusGeometry& geometry, double u_eV) {
    if (!(u_eV > 0.0))
        throw std::invalid_argument("release_position_for_energy: energy must be > 0");
    const auto& tube = find_electrode(geometry, "tube");
    const double z_mid = 0.5 * (tube.z_min_m + tube.z_max_m);
    const double target = profile.value_at(z_mid) - u_eV;  // volts

    // scan the gap region for a bracketing interval, then bisect
    const double z_lo = 0.0 + 2.0 * profile.grid_spacing_m;
    const double z_hi = geometry.plate_gap_m;
    const int n_scan = 400;
    double a = z_lo, fa = profile.value_at(a) - target;
    for (int i = 1; i <= n_scan; ++i) {
        const double b = z_lo + (z_hi - z_lo) * i / n_scan;
        const double fb = profile.value_at(b) - target;
        if (fa == 0.0) return a;
        if (fa * fb < 0.0) {
            double lo = a, hi = b, flo = fa;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                const double fm = profile.value_at(mid) - target;
                if (fm == 0.0) return mid;
                if (flo * fm < 0.0) hi = mid;
                else { lo = mid; flo = fm; }
            }
            return 0.5 * (lo + hi);
        }
        a = b;
        fa = fb;
    }
    throw std::domain_error("release_position_for_energy: energy not reachable in the gap");
}

OffsetFit fit_offset(const PotentialProfile& profile, const ApparatusGeometry& geometry,
                     const FlightCalibration& cal, const std::vector<double>& energies_eV) {
    if (energies_eV.size() < 3)
        throw std::invalid_argument("fit_offset: need at least 3 energies");
    FlightCalibration zero_offset = cal;
    zero_offset.time_offset_s = 0.0;

    std::vector<double> deltas;
    deltas.reserve(energies_eV.size());
    for (double u : energies_eV) {
        const double x0 = release_position_for_energy(profile, geometry, u);
        const FlightResult fr = integrate_flight(x0, 0.0, profile, 1e-11);
        if (fr.outcome != FlightOutcome::Detected)
            throw std::runtime_error("fit_offset: electron turned back");
        deltas.push_back(fr.arrival_time_s - analytic_tof_s(x0, zero_offset));
    }
    OffsetFit fit;
    double mean = 0.0;
    for (double d : deltas) mean += d;
    mean /= static_cast<double>(deltas.size());
    fit.t_offset_s = mean;
    double lo = 1e300, hi = -1e300;
    for (double d : deltas) {
        fit.residuals_s.push_back(d - mean);
        lo = std::min(lo, d - mean);
        hi = std::max(hi, d - mean);
    }
    fit.residual_spread_s = hi - lo;
    return fit;
}

FlightCalibration fit_effective_calibration(const PotentialProfile& profile,
                                            const ApparatusGeometry& geometry,
                                            const std::vector<double>& energies_eV,
                                            double* fitted_offset_s) {
    if (energies_eV.size() < 3)
        throw std::invalid_argument("fit_effective_calibration: need at least 3 energies");
    const size_t n = energies_eV.size();
    std::vector<double> x(n), t_num(n);
    for (size_t i = 0; i < n; ++i) {
        x[i] = release_position_for_energy(profile, geometry, energies_eV[i]);
        const FlightResult fr = integrate_flight(x[i], 0.0, profile, 1e-11);
        if (fr.outcome != FlightOutcome::Detected)
            throw std::runtime_error("fit_effective_calibration: electron turned back");
        t_num[i] = fr.arrival_time_s;
    }

    // initial guess from the linear regression u = E x + V0
    double sx = 0, su = 0, sxx = 0, sxu = 0;
    for (size_t i = 0; i < n; ++i) {
        sx += x[i];
        su += energies_eV[i];
        sxx += x[i] * x[i];
        sxu += x[i] * energies_eV[i];
    }
    const double dn = static_cast<double>(n);
    const double e_init = (dn * sxu - sx * su) / (dn * sxx - sx * sx);
    const double v0_init = (su - e_init * sx) / dn;

    const double L = geometry.tube_length_m;
    const double pref = L * std::sqrt(k::electron_mass_kg / (2.0 * k::elementary_charge_C));

    auto fn = [&](const std::vector<double>& p, std::vector<double>& r,
                  std::vector<double>* jac) {
        const double E = p[0], V0 = p[1], t0 = p[2];
        for (size_t i = 0; i < n; ++i) {
            const double u = E * x[i] + V0;
            if (!(u > 0.0)) {
                r[i] = 1.0;  // push the solver away from the invalid region
                if (jac) {
                    (*jac)[i * 3 + 0] = -x[i];
                    (*jac)[i * 3 + 1] = -1.0;
                    (*jac)[i * 3 + 2] = 0.0;
                }
                continue;
            }
            const double s = pref / std::sqrt(u);
            r[i] = s + t0 - t_num[i];
            if (jac) {
                const double d = -0.5 * s / u;
                (*jac)[i * 3 + 0] = d * x[i];
                (*jac)[i * 3 + 1] = d;
                (*jac)[i * 3 + 2] = 1.0;
            }
        }
    };
    LeastSquaresOptions opt;
    opt.max_iterations = 500;
    const auto res = levenberg_marquardt(fn, {e_init, v0_init, 0.0},
                                         static_cast<int>(n), opt);
    FlightCalibration cal;
    cal.tube_length_m = L;
    cal.field_V_per_m = res.params[0];
    cal.offset_V = res.params[1];
    cal.time_offset_s = 0.0;
    if (fitted_offset_s) *fitted_offset_s = res.params[2];
    return cal;
}

void write_profile_csv(const PotentialProfile& profile, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    char buf[512];
    std::snprintf(buf, sizeof buf, "# geometry_hash = %016llx, residual = %.17g, grid_spacing_m = %.17g\n",
                  static_cast<unsigned long long>(profile.geometry_hash), profile.residual,
                  profile.grid_spacing_m);
    out << buf;
    for (const auto& [name, v] : profile.source_voltages) {
        std::snprintf(buf, sizeof buf, "# voltage %s = %.17g\n", name.c_str(), v);
        out << buf;
    }
    out << "z_m,V_volts\n";
    for (size_t i = 0; i < profile.z_m.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", profile.z_m[i], profile.potential_V[i]);
        out << buf;
    }
}

PotentialProfile read_profile_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    PotentialProfile p;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            unsigned long long hash = 0;
            double res = 0, h = 0;
            if (std::sscanf(line.c_str(),
                            "# geometry_hash = %llx, residual = %lg, grid_spacing_m = %lg",
                            &hash, &res, &h) == 3) {
                p.geometry_hash = hash;
                p.residual = res;
                p.grid_spacing_m = h;
            } else {
                char name[128];
                double v;
                if (std::sscanf(line.c_str(), "# voltage %127s = %lg", name, &v) == 2)
                    p.source_voltages.emplace_back(name, v);
            }
            continue;
        }
        if (line.rfind("z_m", 0) == 0) continue;
        double z, v;
        if (std::sscanf(line.c_str(), "%lg,%lg", &z, &v) != 2)
            throw std::runtime_error("profile csv: bad row: " + line);
        p.z_m.push_back(z);
        p.potential_V.push_back(v);
    }
    if (p.z_m.size() < 2) throw std::runtime_error("profile csv: too few rows");
    if (p.grid_spacing_m == 0.0) p.grid_spacing_m = p.z_m[1] - p.z_m[0];
    return p;
}

}  // namespace rytof
