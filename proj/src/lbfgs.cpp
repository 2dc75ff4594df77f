#include "volenc/lbfgs.hpp"

#include <cmath>
#include <deque>

#include "volenc/error.hpp"

namespace volenc {

LbfgsResult lbfgs_minimize(const Objective& f, const Eigen::VectorXd& x0, const LbfgsOptions& opts) {
    if (opts.memory < 1 || opts.max_iterations < 0) throw ValidationError("lbfgs: bad options");
    LbfgsResult res;
    res.x = x0;
    Eigen::VectorXd g(x0.size());
    res.value = f(res.x, g);
    if (!std::isfinite(res.value)) throw ValidationError("lbfgs: objective is not finite at the start point");
    res.gradient_norm = g.lpNorm<Eigen::Infinity>();

    std::deque<Eigen::VectorXd> s_hist, y_hist;
    std::deque<double> rho_hist;
    Eigen::VectorXd x_new(x0.size()), g_new(x0.size());
    std::vector<double> alpha(static_cast<std::size_t>(opts.memory));

    while (res.iterations < opts.max_iterations) {
        if (res.gradient_norm <= opts.gradient_tolerance) {
            res.converged = true;
            return res;
        }
        // Two-loop recursion for d = -H g.
        Eigen::VectorXd q = g;
        const std::size_t m = s_hist.size();
        for (std::size_t i = m; i-- > 0;) {
            alpha[i] = rho_hist[i] * s_hist[i].dot(q);
            q -= alpha[i] * y_hist[i];
        }
        if (m > 0) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        for (std::size_t i = 0; i < m; ++i) {
            const double beta = rho_hist[i] * y_hist[i].dot(q);
            q += (alpha[i] - beta) * s_hist[i];
        }
        Eigen::VectorXd d = -q;
        double slope = g.dot(d);
        if (!(slope < 0.0)) {
            // Curvature memory went bad; restart from steepest descent.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = -g;
            slope = -g.squaredNorm();
        }
        double step = m == 0 ? std::min(1.0, 1.0 / std::max(g.lpNorm<Eigen::Infinity>(), 1e-300)) : 1.0;
        double f_new = 0.0;
        bool accepted = false;
        for (int ls = 0; ls < opts.max_line_search; ++ls) {
            x_new = res.x + step * d;
            f_new = f(x_new, g_new);
            if (std::isfinite(f_new) && f_new <= res.value + opts.armijo_c1 * step * slope) {
                accepted = true;
                break;
            }
            step *= opts.backtrack;
        }
        ++res.iterations;
        if (!accepted) return res;

        const double decrease = res.value - f_new;
        Eigen::VectorXd s = x_new - res.x;
        Eigen::VectorXd y = g_new - g;
        res.x = x_new;
        g = g_new;
        res.value = f_new;
        res.gradient_norm = g.lpNorm<Eigen::Infinity>();
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (static_cast<int>(s_hist.size()) == opts.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
        }
        if (decrease <= opts.function_tolerance * std::max(1.0, std::abs(res.value))) {
            res.converged = true;
            return res;
        }
    }
    res.converged = res.gradient_norm <= opts.gradient_tolerance;
    return res;
}

}  // namespace volenc
