#include "drbsde/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "drbsde/random.hpp"

namespace drbsde {

void MarketScalars::inverse(double inv[2][2]) const {
    const double det = sigma[0] * beta[1] - sigma[1] * beta[0];
    if (std::abs(det) < 1e-14) throw std::invalid_argument("volatility matrix is singular");
    inv[0][0] = beta[1] / det;
    inv[0][1] = -beta[0] / det;
    inv[1][0] = -sigma[1] / det;
    inv[1][1] = sigma[0] / det;
}

void MarketScalars::risk_premium(double theta[2]) const {
    double inv[2][2];
    inverse(inv);
    const double e0 = mu[0] - r, e1 = mu[1] - r;
    theta[0] = inv[0][0] * e0 + inv[0][1] * e1;
    theta[1] = inv[1][0] * e0 + inv[1][1] * e1;
}

void MarketScalars::weights(double z, double k, double phi[2]) const {
    double inv[2][2];
    inverse(inv);
    // phi' = (z, k) Sigma^{-1}, a row vector.
    phi[0] = z * inv[0][0] + k * inv[1][0];
    phi[1] = z * inv[0][1] + k * inv[1][1];
}

Driver make_zero_driver() {
    Driver f;
    f.name = "zero";
    f.eval = [](double, double, double, double) { return 0.0; };
    f.lipschitz = 0.0;
    f.royer_gamma = [](double, double, double, double, double) { return 0.0; };
    f.royer_bound = 0.0;
    return f;
}

Driver make_constant_driver(double value) {
    Driver f;
    f.name = "constant";
    f.eval = [value](double, double, double, double) { return value; };
    f.lipschitz = 0.0;
    f.royer_gamma = [](double, double, double, double, double) { return 0.0; };
    f.royer_bound = 0.0;
    return f;
}

Driver make_discount_driver(double rate) {
    Driver f;
    f.name = "discount";
    f.eval = [rate](double, double y, double, double) { return -rate * y; };
    f.lipschitz = std::abs(rate);
    f.royer_gamma = [](double, double, double, double, double) { return 0.0; };
    f.royer_bound = 0.0;
    return f;
}

Driver make_linear_driver(double a, double b, double c, double d, double lambda) {
    Driver f;
    f.name = "linear";
    // No jump component when lambda = 0: the k slot is dead, so it is
    // restricted away and the declared constant stays exact.
    if (lambda <= 0.0) d = 0.0;
    f.eval = [a, b, c, d](double, double y, double z, double k) {
        return a + b * y + c * z + d * k;
    };
    const double k_scale = lambda > 0.0 ? std::abs(d) / std::sqrt(lambda) : 0.0;
    f.lipschitz = std::max({std::abs(b), std::abs(c), k_scale});
    if (lambda > 0.0) {
        const double gamma = d / lambda;
        if (gamma > -1.0) {
            f.royer_gamma = [gamma](double, double, double, double, double) { return gamma; };
            f.royer_bound = std::sqrt(lambda) * std::abs(gamma);
        }
    } else {
        f.royer_gamma = [](double, double, double, double, double) { return 0.0; };
        f.royer_bound = 0.0;
    }
    return f;
}

namespace {

// Difference-quotient Royer certificate for drivers piecewise linear in k,
// clipped away from the boundary gamma = -1.
std::function<double(double, double, double, double, double)> make_quotient_gamma(
    std::function<double(double, double, double, double)> eval, double lambda) {
    return [eval, lambda](double t, double y, double z, double k1, double k2) {
        if (k1 == k2 || lambda <= 0.0) return 0.0;
        const double q = (eval(t, y, z, k1) - eval(t, y, z, k2)) / (lambda * (k1 - k2));
        return std::max(q, -1.0 + 1e-9);
    };
}

}  // namespace

Driver make_perfect_driver(const MarketScalars& m, double lambda) {
    double theta[2];
    m.risk_premium(theta);
    Driver f;
    f.name = "perfect";
    const double r = m.r, t0 = theta[0], t1 = lambda > 0.0 ? theta[1] : 0.0;
    f.eval = [r, t0, t1](double, double y, double z, double k) {
        return -r * y - t0 * z - t1 * k;
    };
    const double k_scale = lambda > 0.0 ? std::abs(t1) / std::sqrt(lambda) : 0.0;
    f.lipschitz = std::max({std::abs(r), std::abs(t0), k_scale});
    if (lambda > 0.0) {
        const double gamma = -t1 / lambda;
        if (gamma > -1.0) {
            f.royer_gamma = [gamma](double, double, double, double, double) { return gamma; };
            f.royer_bound = std::sqrt(lambda) * std::abs(gamma);
        }
    } else {
        f.royer_gamma = [](double, double, double, double, double) { return 0.0; };
    }
    return f;
}

Driver make_two_rates_driver(const MarketScalars& m, double lambda) {
    if (!(m.big_r >= m.r)) throw std::invalid_argument("two-rates driver needs R >= r");
    double theta[2], inv[2][2];
    m.risk_premium(theta);
    m.inverse(inv);
    // phi^1 + phi^2 = a*z + b*k for the row vector phi' = (z,k) Sigma^{-1}.
    const double a = inv[0][0] + inv[0][1];
    const double b = lambda > 0.0 ? inv[1][0] + inv[1][1] : 0.0;
    const double r = m.r, spread = m.big_r - m.r, t0 = theta[0], t1 = lambda > 0.0 ? theta[1] : 0.0;
    Driver f;
    f.name = "two_rates";
    f.eval = [r, spread, t0, t1, a, b](double, double y, double z, double k) {
        return -r * y - t0 * z - t1 * k + spread * std::max(0.0, -(y - a * z - b * k));
    };
    const double ky = std::abs(r) + spread;
    const double kz = std::abs(t0) + spread * std::abs(a);
    const double kk = std::abs(t1) + spread * std::abs(b);
    f.lipschitz = std::max({ky, kz, lambda > 0.0 ? kk / std::sqrt(lambda) : 0.0});
    if (lambda > 0.0) {
        f.royer_gamma = make_quotient_gamma(f.eval, lambda);
        f.royer_bound = std::sqrt(lambda) * (lambda > 0.0 ? kk / lambda : 0.0);
    } else {
        f.royer_gamma = [](double, double, double, double, double) { return 0.0; };
    }
    return f;
}

Driver make_repo_driver(const MarketScalars& m, double lambda) {
    double theta[2], inv[2][2];
    m.risk_premium(theta);
    m.inverse(inv);
    const double r = m.r, t0 = theta[0], t1 = lambda > 0.0 ? theta[1] : 0.0;
    const double l0 = m.lend[0], l1 = m.lend[1], b0 = m.borrow[0], b1 = m.borrow[1];
    const double i00 = inv[0][0], i01 = inv[0][1];
    const double i10 = lambda > 0.0 ? inv[1][0] : 0.0, i11 = lambda > 0.0 ? inv[1][1] : 0.0;
    Driver f;
    f.name = "repo";
    f.eval = [=](double, double y, double z, double k) {
        const double phi0 = z * i00 + k * i10;
        const double phi1 = z * i01 + k * i11;
        return -r * y - t0 * z - t1 * k - l0 * std::max(0.0, -phi0) + b0 * std::max(0.0, phi0) -
               l1 * std::max(0.0, -phi1) + b1 * std::max(0.0, phi1);
    };
    const double repo0 = std::max(std::abs(l0), std::abs(b0));
    const double repo1 = std::max(std::abs(l1), std::abs(b1));
    const double kz = std::abs(t0) + repo0 * std::abs(i00) + repo1 * std::abs(i01);
    const double kk = std::abs(t1) + repo0 * std::abs(i10) + repo1 * std::abs(i11);
    f.lipschitz = std::max({std::abs(r), kz, lambda > 0.0 ? kk / std::sqrt(lambda) : 0.0});
    if (lambda > 0.0) {
        f.royer_gamma = make_quotient_gamma(f.eval, lambda);
        f.royer_bound = std::sqrt(lambda) * (kk / lambda);
    } else {
        f.royer_gamma = [](double, double, double, double, double) { return 0.0; };
    }
    return f;
}

bool validate_driver(const Driver& f, double lambda, int probes, std::uint64_t seed) {
    Rng rng(seed);
    const double sl = std::sqrt(std::max(lambda, 0.0));
    for (int i = 0; i < probes; ++i) {
        const double t = rng.uniform(0.0, 2.0);
        const double y1 = rng.uniform(-10.0, 10.0), y2 = rng.uniform(-10.0, 10.0);
        const double z1 = rng.uniform(-10.0, 10.0), z2 = rng.uniform(-10.0, 10.0);
        const double k1 = rng.uniform(-10.0, 10.0), k2 = rng.uniform(-10.0, 10.0);
        const double gap = std::abs(f(t, y1, z1, k1) - f(t, y2, z2, k2));
        const double bound =
            f.lipschitz * (std::abs(y1 - y2) + std::abs(z1 - z2) + sl * std::abs(k1 - k2));
        if (gap > bound * (1.0 + 1e-9) + 1e-12) return false;
        if (f.royer_gamma && lambda > 0.0 && k1 != k2) {
            const double g = (*f.royer_gamma)(t, y1, z1, k1, k2);
            if (!(g >= -1.0)) return false;
            if (f.royer_bound > 0.0 && sl * std::abs(g) > f.royer_bound * (1.0 + 1e-9))
                return false;
            const double lhs = f(t, y1, z1, k1) - f(t, y1, z1, k2);
            const double rhs = lambda * g * (k1 - k2);
            if (lhs < rhs - 1e-9 * (1.0 + std::abs(rhs))) return false;
        }
    }
    return true;
}

namespace {

StepResult finish_step(const ScenarioTree& tree, NodeId n, const std::vector<double>& next,
                       double y) {
    auto d = martingale_decompose(tree, n, next);
    StepResult r;
    r.y = y;
    r.z = d.z;
    r.k = d.k;
    r.h = std::move(d.h);
    r.jump_degenerate = d.jump_degenerate;
    return r;
}

}  // namespace

StepResult bsde_step(const ScenarioTree& tree, NodeId n, const std::vector<double>& next,
                     const Driver& f) {
    const double dt = tree.dt_after(n);
    if (!(f.lipschitz * dt < 1.0))
        throw std::invalid_argument("driver Lipschitz constant times dt must be < 1");

    double mean = 0.0;
    for (int j = 0; j < tree.n_children(n); ++j)
        mean += tree.cond_prob(tree.child(n, j)) * next[j];
    auto d = martingale_decompose(tree, n, next);

    const double t = tree.time_of(n);
    double y = mean;
    bool converged = false;
    double residual = 0.0;
    for (int it = 0; it < 200; ++it) {
        const double y_new = mean + f(t, y, d.z, d.k) * dt;
        residual = std::abs(y_new - y);
        y = y_new;
        if (residual <= 1e-14 * std::max(1.0, std::abs(y))) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        // One more residual check against the fixed-point equation itself.
        residual = std::abs(y - mean - f(t, y, d.z, d.k) * dt);
        if (residual > 1e-13 * std::max(1.0, std::abs(y)))
            throw std::runtime_error("implicit step did not converge; residual " +
                                     std::to_string(residual));
    }
    StepResult r;
    r.y = y;
    r.z = d.z;
    r.k = d.k;
    r.h = std::move(d.h);
    r.jump_degenerate = d.jump_degenerate;
    return r;
}

StepResult bsde_step_frozen(const ScenarioTree& tree, NodeId n, const std::vector<double>& next,
                            double f_value) {
    double mean = 0.0;
    for (int j = 0; j < tree.n_children(n); ++j)
        mean += tree.cond_prob(tree.child(n, j)) * next[j];
    return finish_step(tree, n, next, mean + f_value * tree.dt_after(n));
}

namespace {

template <typename StepFn>
BSDESolution backward_sweep(const ScenarioTree& tree, const AdaptedProcess& terminal,
                            StepFn&& step) {
    if (terminal.size() != tree.n_nodes())
        throw std::invalid_argument("terminal condition has wrong length for this tree");
    BSDESolution sol;
    sol.x = LadlagProcess(tree);
    sol.z.assign(tree.n_nodes(), 0.0);
    sol.k.assign(tree.n_nodes(), 0.0);
    sol.h_inc.assign(tree.n_nodes(), 0.0);
    for (NodeId leaf : tree.terminal_nodes()) sol.x.at[leaf] = terminal[leaf];
    for (int lev = tree.levels() - 2; lev >= 0; --lev) {
        for (NodeId n = tree.level_begin[lev]; n < tree.level_begin[lev + 1]; ++n) {
            auto next = child_values(tree, n, sol.x.at);
            auto r = step(n, next);
            sol.x.at[n] = r.y;
            sol.x.right[n] = r.y;
            sol.z[n] = r.z;
            sol.k[n] = r.k;
            for (int j = 0; j < tree.n_children(n); ++j) sol.h_inc[tree.child(n, j)] = r.h[j];
        }
    }
    return sol;
}

}  // namespace

BSDESolution bsde_solve(const ScenarioTree& tree, const AdaptedProcess& terminal,
                        const Driver& f) {
    return backward_sweep(tree, terminal, [&](NodeId n, const std::vector<double>& next) {
        return bsde_step(tree, n, next, f);
    });
}

BSDESolution bsde_solve(const ScenarioTree& tree, const AdaptedProcess& terminal,
                        const AdaptedProcess& driver_process) {
    if (driver_process.size() != tree.n_nodes())
        throw std::invalid_argument("driver process has wrong length for this tree");
    return backward_sweep(tree, terminal, [&](NodeId n, const std::vector<double>& next) {
        return bsde_step_frozen(tree, n, next, driver_process[n]);
    });
}

AdaptedProcess f_expectation(const ScenarioTree& tree, const StoppingTime& theta,
                             const StoppingTime& tau, const AdaptedProcess& payoff,
                             const Driver& f) {
    validate_stopping(tree, theta);
    validate_stopping(tree, tau);
    if (!pathwise_leq(tree, theta, tau))
        throw std::invalid_argument("conditional f-expectation needs theta <= tau pathwise");
    if (payoff.size() != tree.n_nodes())
        throw std::invalid_argument("payoff has wrong length for this tree");

    // Mark the effective tau frontier, then the region between the frontiers.
    std::vector<std::uint8_t> is_tau(tree.n_nodes(), 0);
    for (NodeId leaf : tree.terminal_nodes()) is_tau[stop_node_on_path(tree, tau, leaf)] = 1;

    AdaptedProcess value(tree.n_nodes(), std::nan(""));
    for (int lev = tree.levels() - 1; lev >= 0; --lev) {
        for (NodeId n = tree.level_begin[lev]; n < tree.level_begin[lev + 1]; ++n) {
            if (is_tau[n]) {
                if (std::isnan(payoff[n]))
                    throw std::invalid_argument("payoff missing on the tau frontier");
                value[n] = payoff[n];
            } else if (!tree.is_terminal(n) && !std::isnan(value[tree.child(n, 0)])) {
                auto next = child_values(tree, n, value);
                bool complete = true;
                for (double v : next)
                    if (std::isnan(v)) complete = false;
                if (complete) value[n] = bsde_step(tree, n, next, f).y;
            }
        }
    }
    // Blank out anything strictly above the theta frontier.
    std::vector<std::uint8_t> below(tree.n_nodes(), 0);
    for (NodeId leaf : tree.terminal_nodes()) {
        bool reached = false;
        for (NodeId n : tree.path_to(leaf)) {
            if (theta.stop[n]) reached = true;
            if (reached) below[n] = 1;
            if (is_tau[n]) break;
        }
    }
    for (NodeId n = 0; n < tree.n_nodes(); ++n)
        if (!below[n]) value[n] = std::nan("");
    return value;
}

}  // namespace drbsde
