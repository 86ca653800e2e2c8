#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "rytof/least_squares.hpp"

using namespace rytof;

TEST_CASE("dense solve and invert") {
    std::vector<double> a = {4, 1, 2, 3};
    std::vector<double> b = {1, 2};
    const auto x = solve_dense(a, b, 2);
    CHECK(4 * x[0] + 1 * x[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(2 * x[0] + 3 * x[1] == doctest::Approx(2.0).epsilon(1e-12));

    const auto inv = invert_dense({4, 1, 2, 3}, 2);
    // A * A^-1 = I
    CHECK(4 * inv[0] + 1 * inv[2] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(4 * inv[1] + 1 * inv[3] == doctest::Approx(0.0).scale(1));
    CHECK_THROWS_AS(invert_dense({1, 2, 2, 4}, 2), std::runtime_error);
}

TEST_CASE("LM recovers an exponential decay exactly without noise") {
    // y = A exp(-k t), A = 3, k = 2
    std::vector<double> ts, ys;
    for (int i = 0; i < 20; ++i) {
        ts.push_back(0.1 * i);
        ys.push_back(3.0 * std::exp(-2.0 * 0.1 * i));
    }
    ResidualFn fn = [&](const std::vector<double>& p, std::vector<double>& r,
                        std::vector<double>* jac) {
        for (size_t i = 0; i < ts.size(); ++i) {
            const double m = p[0] * std::exp(-p[1] * ts[i]);
            r[i] = m - ys[i];
            if (jac) {
                (*jac)[i * 2 + 0] = std::exp(-p[1] * ts[i]);
                (*jac)[i * 2 + 1] = -ts[i] * m;
            }
        }
    };
    const auto res = levenberg_marquardt(fn, {1.0, 1.0}, 20);
    CHECK(res.converged);
    CHECK(res.params[0] == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(res.params[1] == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(res.chi2 < 1e-16);
}

TEST_CASE("LM covariance matches analytic linear-regression errors") {
    // straight line with unit-variance noise: cov = sigma^2 (X^T X)^-1
    std::mt19937_64 rng(7);
    std::normal_distribution<double> noise(0.0, 1.0);
    const int n = 200;
    std::vector<double> ts(n), ys(n);
    for (int i = 0; i < n; ++i) {
        ts[i] = i * 0.05;
        ys[i] = 1.5 + 0.7 * ts[i] + noise(rng);
    }
    ResidualFn fn = [&](const std::vector<double>& p, std::vector<double>& r,
                        std::vector<double>* jac) {
        for (int i = 0; i < n; ++i) {
            r[i] = p[0] + p[1] * ts[i] - ys[i];
            if (jac) {
                (*jac)[i * 2 + 0] = 1.0;
                (*jac)[i * 2 + 1] = ts[i];
            }
        }
    };
    const auto res = levenberg_marquardt(fn, {0.0, 0.0}, n);
    CHECK(res.converged);
    // analytic normal equations
    double s = n, sx = 0, sxx = 0;
    for (int i = 0; i < n; ++i) { sx += ts[i]; sxx += ts[i] * ts[i]; }
    const double det = s * sxx - sx * sx;
    const double sigma2 = res.chi2 / (n - 2);
    CHECK(res.covariance[0] == doctest::Approx(sigma2 * sxx / det).epsilon(1e-6));
    CHECK(res.covariance[3] == doctest::Approx(sigma2 * s / det).epsilon(1e-6));
}

TEST_CASE("Nelder-Mead minimizes the Rosenbrock function") {
    auto f = [](const std::vector<double>& p) {
        const double a = 1.0 - p[0];
        const double b = p[1] - p[0] * p[0];
        return a * a + 100.0 * b * b;
    };
    const auto best = nelder_mead(f, {-1.2, 1.0}, 0.5, 5000);
    CHECK(best[0] == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(best[1] == doctest::Approx(1.0).epsilon(1e-3));
}
