#include "rytof/least_squares.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rytof {

std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b, int n) {
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int row = col + 1; row < n; ++row)
            if (std::abs(a[row * n + col]) > std::abs(a[pivot * n + col])) pivot = row;
        if (a[pivot * n + col] == 0.0)
            throw std::runtime_error("solve_dense: singular matrix");
        if (pivot != col) {
            for (int j = 0; j < n; ++j) std::swap(a[col * n + j], a[pivot * n + j]);
            std::swap(b[col], b[pivot]);
        }
        const double inv = 1.0 / a[col * n + col];
        for (int row = col + 1; row < n; ++row) {
            const double f = a[row * n + col] * inv;
            if (f == 0.0) continue;
            for (int j = col; j < n; ++j) a[row * n + j] -= f * a[col * n + j];
            b[row] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (int row = n - 1; row >= 0; --row) {
        double s = b[row];
        for (int j = row + 1; j < n; ++j) s -= a[row * n + j] * x[j];
        x[row] = s / a[row * n + row];
    }
    return x;
}

std::vector<double> invert_dense(std::vector<double> a, int n) {
    std::vector<double> inv(n * n, 0.0);
    for (int col = 0; col < n; ++col) {
        std::vector<double> e(n, 0.0);
        e[col] = 1.0;
        std::vector<double> x = solve_dense(a, std::move(e), n);
        for (int row = 0; row < n; ++row) inv[row * n + col] = x[row];
    }
    return inv;
}

namespace {

double chi2_of(const std::vector<double>& r) {
    double s = 0.0;
    for (double v : r) s += v * v;
    return s;
}

}  // namespace

LeastSquaresResult levenberg_marquardt(const ResidualFn& fn,
                                       std::vector<double> initial,
                                       int n_residuals,
                                       const LeastSquaresOptions& opt) {
    const int np = static_cast<int>(initial.size());
    LeastSquaresResult result;
    result.params = std::move(initial);

    std::vector<double> r(n_residuals), jac(n_residuals * np);
    fn(result.params, r, &jac);
    result.chi2 = chi2_of(r);

    double lambda = opt.initial_lambda;
    std::vector<double> jtj(np * np), jtr(np), trial_r(n_residuals);

    for (result.iterations = 0; result.iterations < opt.max_iterations; ++result.iterations) {
        std::fill(jtj.begin(), jtj.end(), 0.0);
        std::fill(jtr.begin(), jtr.end(), 0.0);
        for (int i = 0; i < n_residuals; ++i) {
            for (int a = 0; a < np; ++a) {
                const double ja = jac[i * np + a];
                jtr[a] += ja * r[i];
                for (int b = a; b < np; ++b) jtj[a * np + b] += ja * jac[i * np + b];
            }
        }
        for (int a = 0; a < np; ++a)
            for (int b = 0; b < a; ++b) jtj[a * np + b] = jtj[b * np + a];

        bool stepped = false;
        for (int attempt = 0; attempt < 25 && !stepped; ++attempt) {
            std::vector<double> damped = jtj;
            for (int a = 0; a < np; ++a) {
                const double d = jtj[a * np + a];
                damped[a * np + a] = d + lambda * (d > 0.0 ? d : 1.0);
            }
            std::vector<double> rhs(np);
            for (int a = 0; a < np; ++a) rhs[a] = -jtr[a];
            std::vector<double> step;
            try {
                step = solve_dense(std::move(damped), std::move(rhs), np);
            } catch (const std::runtime_error&) {
                lambda *= 10.0;
                continue;
            }

            std::vector<double> trial = result.params;
            for (int a = 0; a < np; ++a) trial[a] += step[a];
            fn(trial, trial_r, nullptr);
            const double trial_chi2 = chi2_of(trial_r);
            if (trial_chi2 <= result.chi2) {
                double rel_step = 0.0;
                for (int a = 0; a < np; ++a) {
                    const double scale = std::max(std::abs(result.params[a]), 1e-300);
                    rel_step = std::max(rel_step, std::abs(step[a]) / scale);
                }
                result.params = std::move(trial);
                result.chi2 = trial_chi2;
                fn(result.params, r, &jac);
                lambda = std::max(lambda * 0.3, 1e-12);
                stepped = true;
                if (rel_step < opt.step_tolerance) {
                    result.converged = true;
                }
            } else {
                lambda *= 10.0;
            }
        }
        if (!stepped) {
            // damping exhausted; treat current point as stationary
            result.converged = result.chi2 < 1e-300 || result.iterations > 0;
            break;
        }
        if (result.converged) break;
    }

    // Covariance estimate: chi2/dof * (J^T J)^-1 at the solution.
    std::fill(jtj.begin(), jtj.end(), 0.0);
    for (int i = 0; i < n_residuals; ++i)
        for (int a = 0; a < np; ++a)
            for (int b = 0; b < np; ++b)
                jtj[a * np + b] += jac[i * np + a] * jac[i * np + b];
    try {
        result.covariance = invert_dense(jtj, np);
        const int dof = std::max(n_residuals - np, 1);
        const double scale = result.chi2 / dof;
        for (double& v : result.covariance) v *= scale;
    } catch (const std::runtime_error&) {
        result.covariance.assign(np * np, 0.0);
    }
    return result;
}

std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                std::vector<double> initial,
                                double initial_scale,
                                int max_iterations) {
    const int n = static_cast<int>(initial.size());
    std::vector<std::vector<double>> simplex(n + 1, initial);
    for (int i = 0; i < n; ++i) {
        const double h = initial[i] != 0.0 ? std::abs(initial[i]) * initial_scale
                                           : initial_scale;
        simplex[i + 1][i] += h;
    }
    std::vector<double> fv(n + 1);
    for (int i = 0; i <= n; ++i) fv[i] = f(simplex[i]);

    for (int iter = 0; iter < max_iterations; ++iter) {
        std::vector<int> order(n + 1);
        for (int i = 0; i <= n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](int a, int b) { return fv[a] < fv[b]; });
        const int best = order[0], worst = order[n], second = order[n - 1];
        if (std::abs(fv[worst] - fv[best]) <=
            1e-12 * (std::abs(fv[best]) + std::abs(fv[worst])) + 1e-300)
            break;

        std::vector<double> centroid(n, 0.0);
        for (int i = 0; i <= n; ++i)
            if (i != worst)
                for (int j = 0; j < n; ++j) centroid[j] += simplex[i][j] / n;

        auto blend = [&](double t) {
            std::vector<double> p(n);
            for (int j = 0; j < n; ++j)
                p[j] = centroid[j] + t * (simplex[worst][j] - centroid[j]);
            return p;
        };

        std::vector<double> refl = blend(-1.0);
        const double f_refl = f(refl);
        if (f_refl < fv[best]) {
            std::vector<double> exp_p = blend(-2.0);
            const double f_exp = f(exp_p);
            if (f_exp < f_refl) {
                simplex[worst] = std::move(exp_p);
                fv[worst] = f_exp;
            } else {
                simplex[worst] = std::move(refl);
                fv[worst] = f_refl;
            }
        } else if (f_refl < fv[second]) {
            simplex[worst] = std::move(refl);
            fv[worst] = f_refl;
        } else {
            std::vector<double> contr = blend(0.5);
            const double f_contr = f(contr);
            if (f_contr < fv[worst]) {
                simplex[worst] = std::move(contr);
                fv[worst] = f_contr;
            } else {
                for (int i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    for (int j = 0; j < n; ++j)
                        simplex[i][j] = 0.5 * (simplex[i][j] + simplex[best][j]);
                    fv[i] = f(simplex[i]);
                }
            }
        }
    }
    int best = 0;
    for (int i = 1; i <= n; ++i)
        if (fv[i] < fv[best]) best = i;
    return simplex[best];
}

}  // namespace rytof
