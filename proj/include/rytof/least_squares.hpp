#pragma once

#include <functional>
#include <vector>

namespace rytof {

/// Evaluate residuals r(p) (size fixed by the problem) and, when jac is
/// non-null, the row-major Jacobian dr_i/dp_j.
using ResidualFn = std::function<void(const std::vector<double>& params,
                                      std::vector<double>& residuals,
                                      std::vector<double>* jac)>;

struct LeastSquaresOptions {
    int max_iterations = 200;
    double step_tolerance = 1e-8;   // relative parameter step
    double initial_lambda = 1e-3;
};

struct LeastSquaresResult {
    std::vector<double> params;
    std::vector<double> covariance;  // p x p, row-major; chi2/dof scaled
    double chi2 = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Damped Gauss-Newton (Levenberg-Marquardt with Marquardt diagonal
/// scaling). n_residuals is the size the ResidualFn fills in.
LeastSquaresResult levenberg_marquardt(const ResidualFn& fn,
                                       std::vector<double> initial,
                                       int n_residuals,
                                       const LeastSquaresOptions& opt = {});

/// Nelder-Mead simplex on a scalar objective; fallback for fits where the
/// damped solver stalls. Returns the best vertex.
std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                std::vector<double> initial,
                                double initial_scale,
                                int max_iterations = 2000);

/// Solve A x = b for small dense systems (Gaussian elimination, partial
/// pivoting). A is n x n row-major and is destroyed.
std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b, int n);

/// Invert a small dense matrix in place; throws std::runtime_error when
/// singular.
std::vector<double> invert_dense(std::vector<double> a, int n);

}  // namespace rytof
