#pragma once

#include <functional>

#include <Eigen/Dense>

namespace volenc {

struct LbfgsOptions {
    int memory = 10;
    int max_iterations = 200;
    double gradient_tolerance = 1e-8;  // on the infinity norm
    double function_tolerance = 1e-15; // relative decrease treated as stalled
    double armijo_c1 = 1e-4;
    double backtrack = 0.5;
    int max_line_search = 50;
};

struct LbfgsResult {
    Eigen::VectorXd x;
    double value = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Objective returning f(x) and writing its gradient into `grad`.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

/// Limited-memory BFGS with a backtracking Armijo line search. Every accepted
/// step decreases f, so the returned value never exceeds f(x0). Converged
/// means the gradient norm or the relative decrease fell below tolerance.
LbfgsResult lbfgs_minimize(const Objective& f, const Eigen::VectorXd& x0, const LbfgsOptions& opts = {});

}  // namespace volenc
