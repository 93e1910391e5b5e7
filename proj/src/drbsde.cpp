#include "drbsde/drbsde.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace drbsde {

namespace {

double pos(double v) { return v > 0.0 ? v : 0.0; }

double clamp_between(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

// Max change over the at slot everywhere and the right slot off-terminal.
double sup_change(const ScenarioTree& tree, const LadlagProcess& a, const LadlagProcess& b) {
    double sup = 0.0;
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        sup = std::max(sup, std::fabs(a.at[n] - b.at[n]));
        if (!tree.is_terminal(n)) sup = std::max(sup, std::fabs(a.right[n] - b.right[n]));
    }
    return sup;
}

// Continuation value before interval reflection, reconstructed from the
// stored forces (the increments are shared by all siblings).
double continuation_of(const ScenarioTree& tree, const DRBSDESolution& sol, NodeId n) {
    const NodeId c0 = tree.child(n, 0);
    return sol.y.right[n] - sol.a_inc[c0] + sol.ap_inc[c0];
}

template <typename StepFn>
DRBSDESolution direct_sweep(const ScenarioTree& tree, const AdmissiblePair& pair, StepFn step) {
    validate_admissible(tree, pair);
    const NodeId n_nodes = tree.n_nodes();
    DRBSDESolution sol;
    sol.y = LadlagProcess(tree);
    sol.z.assign(n_nodes, 0.0);
    sol.k.assign(n_nodes, 0.0);
    sol.h_inc.assign(n_nodes, 0.0);
    sol.a_inc.assign(n_nodes, 0.0);
    sol.ap_inc.assign(n_nodes, 0.0);
    sol.c_jump.assign(n_nodes, 0.0);
    sol.cp_jump.assign(n_nodes, 0.0);

    for (NodeId n : tree.terminal_nodes()) sol.y.at[n] = pair.xi.at[n];

    for (int lvl = tree.levels() - 2; lvl >= 0; --lvl) {
        for (NodeId n = tree.level_begin[lvl]; n < tree.level_begin[lvl + 1]; ++n) {
            std::vector<double> next = child_values(tree, n, sol.y.at);
            StepResult st = step(n, next);
            sol.z[n] = st.z;
            sol.k[n] = st.k;
            sol.jump_degenerate = sol.jump_degenerate || st.jump_degenerate;
            for (int j = 0; j < tree.n_children(n); ++j) sol.h_inc[tree.child(n, j)] = st.h[j];

            // Interval reflection: clamp the continuation into the right-slot
            // corridor; the shortfall is charged to A (below) or A' (above),
            // never both, and goes to the children level.
            const double da = pos(pair.xi.right[n] - st.y);
            const double dap = pos(st.y - pair.zeta.right[n]);
            const double yr = clamp_between(st.y, pair.xi.right[n], pair.zeta.right[n]);
            sol.y.right[n] = yr;
            for (int j = 0; j < tree.n_children(n); ++j) {
                sol.a_inc[tree.child(n, j)] = da;
                sol.ap_inc[tree.child(n, j)] = dap;
            }
            // Instant reflection: clamp again into the at-slot corridor; the
            // difference is the right jump, split by sign into C and C'.
            const double ya = clamp_between(yr, pair.xi.at[n], pair.zeta.at[n]);
            sol.y.at[n] = ya;
            sol.c_jump[n] = pos(ya - yr);
            sol.cp_jump[n] = pos(yr - ya);
        }
    }
    return sol;
}

}  // namespace

DRBSDESolution solve_direct(const ScenarioTree& tree, const AdmissiblePair& pair, const Driver& f) {
    return direct_sweep(tree, pair, [&](NodeId n, const std::vector<double>& next) {
        return bsde_step(tree, n, next, f);
    });
}

DRBSDESolution solve_direct(const ScenarioTree& tree, const AdmissiblePair& pair,
                            const AdaptedProcess& driver_process) {
    if (driver_process.size() != tree.n_nodes())
        throw std::invalid_argument("solve_direct: driver process size mismatch");
    return direct_sweep(tree, pair, [&](NodeId n, const std::vector<double>& next) {
        return bsde_step_frozen(tree, n, next, driver_process[n]);
    });
}

DRBSDESolution solve_picard_driver_process(const ScenarioTree& tree, const AdmissiblePair& pair,
                                           const AdaptedProcess& driver_process,
                                           PicardTrace* trace, double tol, int max_iterations) {
    validate_admissible(tree, pair);
    if (driver_process.size() != tree.n_nodes())
        throw std::invalid_argument("solve_picard_driver_process: driver process size mismatch");
    const NodeId n_nodes = tree.n_nodes();

    // m_t = E[xi_T + remaining driver mass | t]; its right limit at an
    // instant equals its value there.
    LadlagProcess m(tree);
    for (NodeId n : tree.terminal_nodes()) m.at[n] = pair.xi.at[n];
    for (int lvl = tree.levels() - 2; lvl >= 0; --lvl)
        for (NodeId n = tree.level_begin[lvl]; n < tree.level_begin[lvl + 1]; ++n) {
            m.at[n] = conditional_expectation(tree, n, m.at) + driver_process[n] * tree.dt_after(n);
            m.right[n] = m.at[n];
        }

    // Centered barriers, zero at the terminal time (the coupled reflections
    // see only the pre-terminal shape of the obstacles).
    LadlagProcess xi_c(tree), zeta_c(tree);
    for (NodeId n = 0; n < n_nodes; ++n) {
        if (tree.is_terminal(n)) continue;
        xi_c.at[n] = pair.xi.at[n] - m.at[n];
        xi_c.right[n] = pair.xi.right[n] - m.right[n];
        zeta_c.at[n] = pair.zeta.at[n] - m.at[n];
        zeta_c.right[n] = pair.zeta.right[n] - m.right[n];
    }

    LadlagProcess x(tree, 0.0), xp(tree, 0.0);
    if (trace) {
        trace->x_iterates = {x};
        trace->xp_iterates = {xp};
    }
    int it = 0;
    double change = std::numeric_limits<double>::infinity();
    while (true) {
        ++it;
        LadlagProcess ob(tree), obp(tree);
        for (NodeId n = 0; n < n_nodes; ++n) {
            if (tree.is_terminal(n)) continue;  // obstacles vanish at the end
            ob.at[n] = xp.at[n] + xi_c.at[n];
            ob.right[n] = xp.right[n] + xi_c.right[n];
            obp.at[n] = x.at[n] - zeta_c.at[n];
            obp.right[n] = x.right[n] - zeta_c.right[n];
        }
        RefSolution nrx = ref_operator(tree, ob);
        RefSolution nrxp = ref_operator(tree, obp);
        change = std::max(sup_change(tree, nrx.x, x), sup_change(tree, nrxp.x, xp));
        x = std::move(nrx.x);
        xp = std::move(nrxp.x);
        if (trace) {
            trace->x_iterates.push_back(x);
            trace->xp_iterates.push_back(xp);
        }
        if (change <= tol) break;
        if (it >= max_iterations)
            throw std::runtime_error("solve_picard_driver_process: no convergence, residual " +
                                     std::to_string(change));
    }
    if (trace) {
        trace->iterations = it;
        trace->final_change = change;
    }

    DRBSDESolution sol;
    sol.y = LadlagProcess(tree);
    sol.z.assign(n_nodes, 0.0);
    sol.k.assign(n_nodes, 0.0);
    sol.h_inc.assign(n_nodes, 0.0);
    sol.a_inc.assign(n_nodes, 0.0);
    sol.ap_inc.assign(n_nodes, 0.0);
    sol.c_jump.assign(n_nodes, 0.0);
    sol.cp_jump.assign(n_nodes, 0.0);
    for (NodeId n = 0; n < n_nodes; ++n) {
        sol.y.at[n] = x.at[n] - xp.at[n] + m.at[n];
        if (!tree.is_terminal(n)) sol.y.right[n] = x.right[n] - xp.right[n] + m.right[n];
    }
    // Read the minimal forces off the limit itself: the interval force is the
    // gap between the reflected right slot and the raw continuation value, the
    // instant force is the right jump.  Each nets out by sign into the
    // mutually singular pair.
    for (NodeId n = 0; n < n_nodes; ++n) {
        if (tree.is_terminal(n)) continue;
        const double y_cont = conditional_expectation(tree, n, sol.y.at) +
                              driver_process[n] * tree.dt_after(n);
        const double net_a = sol.y.right[n] - y_cont;
        for (int j = 0; j < tree.n_children(n); ++j) {
            const NodeId c = tree.child(n, j);
            sol.a_inc[c] = pos(net_a);
            sol.ap_inc[c] = pos(-net_a);
        }
        const double net_c = sol.y.at[n] - sol.y.right[n];
        sol.c_jump[n] = pos(net_c);
        sol.cp_jump[n] = pos(-net_c);
        StepDecomposition d = martingale_decompose(tree, n, child_values(tree, n, sol.y.at));
        sol.z[n] = d.z;
        sol.k[n] = d.k;
        sol.jump_degenerate = sol.jump_degenerate || d.jump_degenerate;
        for (int j = 0; j < tree.n_children(n); ++j) sol.h_inc[tree.child(n, j)] = d.h[j];
    }
    return sol;
}

DRBSDESolution solve_fixed_point(const ScenarioTree& tree, const AdmissiblePair& pair,
                                 const Driver& f, FixedPointInit init, double tol,
                                 int max_iterations, int* outer_iterations) {
    validate_admissible(tree, pair);
    const NodeId n_nodes = tree.n_nodes();

    AdaptedProcess p(n_nodes, 0.0);
    if (init == FixedPointInit::Zero) {
        for (NodeId n = 0; n < n_nodes; ++n)
            if (!tree.is_terminal(n)) p[n] = f(tree.time_of(n), 0.0, 0.0, 0.0);
    } else {
        AdaptedProcess e(n_nodes, 0.0);
        for (NodeId n : tree.terminal_nodes()) e[n] = pair.xi.at[n];
        for (int lvl = tree.levels() - 2; lvl >= 0; --lvl)
            for (NodeId n = tree.level_begin[lvl]; n < tree.level_begin[lvl + 1]; ++n)
                e[n] = conditional_expectation(tree, n, e);
        for (NodeId n = 0; n < n_nodes; ++n)
            if (!tree.is_terminal(n)) p[n] = f(tree.time_of(n), e[n], 0.0, 0.0);
    }

    DRBSDESolution sol;
    for (int it = 1; it <= max_iterations; ++it) {
        sol = solve_picard_driver_process(tree, pair, p);
        AdaptedProcess pn(n_nodes, 0.0);
        double dp = 0.0;
        for (NodeId n = 0; n < n_nodes; ++n) {
            if (tree.is_terminal(n)) continue;
            pn[n] = f(tree.time_of(n), continuation_of(tree, sol, n), sol.z[n], sol.k[n]);
            dp = std::max(dp, std::fabs(pn[n] - p[n]));
        }
        // The frozen process is the contraction variable: the value can stall
        // exactly while the process is still moving, so the process change is
        // what decides convergence.
        if (dp <= tol) {
            if (outer_iterations) *outer_iterations = it;
            // Reflections can pin the value while the frozen driver is still
            // drifting, so the forces are re-read from the settled value with
            // the implicit step applied to the true driver.
            for (NodeId n = 0; n < n_nodes; ++n) {
                if (tree.is_terminal(n)) continue;
                const StepResult st = bsde_step(tree, n, child_values(tree, n, sol.y.at), f);
                sol.z[n] = st.z;
                sol.k[n] = st.k;
                const double net_a = sol.y.right[n] - st.y;
                for (int j = 0; j < tree.n_children(n); ++j) {
                    const NodeId c = tree.child(n, j);
                    sol.a_inc[c] = pos(net_a);
                    sol.ap_inc[c] = pos(-net_a);
                    sol.h_inc[c] = st.h[j];
                }
            }
            return sol;
        }
        p = std::move(pn);
    }
    throw std::runtime_error("solve_fixed_point: outer iteration cap exceeded");
}

namespace {

VerifyReport verify_impl(const ScenarioTree& tree, const DRBSDESolution& sol,
                         const AdmissiblePair& pair,
                         const std::function<double(NodeId, double)>& f_eval) {
    const NodeId n_nodes = tree.n_nodes();
    for (const auto* v : {&sol.z, &sol.k, &sol.h_inc, &sol.a_inc, &sol.ap_inc, &sol.c_jump,
                          &sol.cp_jump})
        if (v->size() != n_nodes) throw std::invalid_argument("verify_solution: field size mismatch");
    if (sol.y.size() != n_nodes) throw std::invalid_argument("verify_solution: Y size mismatch");

    constexpr double kIncrementThreshold = 1e-12;
    VerifyReport r;
    for (NodeId n = 0; n < n_nodes; ++n) {
        r.sandwich = std::max({r.sandwich, pos(pair.xi.at[n] - sol.y.at[n]),
                               pos(sol.y.at[n] - pair.zeta.at[n])});
        if (tree.is_terminal(n)) {
            r.terminal = std::max(r.terminal, std::fabs(sol.y.at[n] - pair.xi.at[n]));
            continue;
        }
        r.sandwich = std::max({r.sandwich, pos(pair.xi.right[n] - sol.y.right[n]),
                               pos(sol.y.right[n] - pair.zeta.right[n])});
        r.nonneg = std::max({r.nonneg, pos(-sol.c_jump[n]), pos(-sol.cp_jump[n])});
        r.singular_c = std::max(r.singular_c, std::min(pos(sol.c_jump[n]), pos(sol.cp_jump[n])));
        r.right_jump = std::max(
            {r.right_jump, std::fabs(sol.c_jump[n] - pos(sol.y.at[n] - sol.y.right[n])),
             std::fabs(sol.cp_jump[n] - pos(sol.y.right[n] - sol.y.at[n]))});
        r.clamp = std::max(r.clamp, std::fabs(sol.y.at[n] - clamp_between(sol.y.right[n],
                                                                          pair.xi.at[n],
                                                                          pair.zeta.at[n])));
        if (sol.c_jump[n] > kIncrementThreshold)
            r.skorokhod_c = std::max(r.skorokhod_c, std::fabs(sol.y.at[n] - pair.xi.at[n]));
        if (sol.cp_jump[n] > kIncrementThreshold)
            r.skorokhod_cp = std::max(r.skorokhod_cp, std::fabs(sol.y.at[n] - pair.zeta.at[n]));

        const double y_cont = continuation_of(tree, sol, n);
        const double fv = f_eval(n, y_cont);
        const double dt = tree.dt_after(n);
        for (int j = 0; j < tree.n_children(n); ++j) {
            const NodeId c = tree.child(n, j);
            r.nonneg = std::max({r.nonneg, pos(-sol.a_inc[c]), pos(-sol.ap_inc[c])});
            r.singular_a = std::max(r.singular_a, std::min(pos(sol.a_inc[c]), pos(sol.ap_inc[c])));
            if (sol.a_inc[c] > kIncrementThreshold)
                r.skorokhod_a =
                    std::max(r.skorokhod_a, std::fabs(sol.y.right[n] - pair.xi.right[n]));
            if (sol.ap_inc[c] > kIncrementThreshold)
                r.skorokhod_ap =
                    std::max(r.skorokhod_ap, std::fabs(sol.y.right[n] - pair.zeta.right[n]));
            const double predicted = sol.y.at[c] + fv * dt - sol.z[n] * tree.dw(c) -
                                     sol.k[n] * tree.compensated_jump(c) - sol.h_inc[c] +
                                     sol.a_inc[c] - sol.ap_inc[c] + sol.c_jump[n] - sol.cp_jump[n];
            r.dynamics = std::max(r.dynamics, std::fabs(sol.y.at[n] - predicted));
        }
    }
    return r;
}

}  // namespace

double VerifyReport::max_violation() const {
    return std::max({terminal, sandwich, dynamics, skorokhod_a, skorokhod_ap, skorokhod_c,
                     skorokhod_cp, singular_a, singular_c, right_jump, clamp, nonneg});
}

VerifyReport verify_solution(const ScenarioTree& tree, const DRBSDESolution& sol,
                             const AdmissiblePair& pair, const Driver& f) {
    return verify_impl(tree, sol, pair, [&](NodeId n, double y) {
        return f(tree.time_of(n), y, sol.z[n], sol.k[n]);
    });
}

VerifyReport verify_solution(const ScenarioTree& tree, const DRBSDESolution& sol,
                             const AdmissiblePair& pair, const AdaptedProcess& driver_process) {
    if (driver_process.size() != tree.n_nodes())
        throw std::invalid_argument("verify_solution: driver process size mismatch");
    return verify_impl(tree, sol, pair,
                       [&](NodeId n, double) { return driver_process[n]; });
}

bool compare(const ScenarioTree& tree, const DRBSDESolution& sol1, const AdmissiblePair& pair1,
             const Driver& f1, const DRBSDESolution& sol2, const AdmissiblePair& pair2,
             const Driver& f2, double tol) {
    if (!f1.royer_gamma || !f2.royer_gamma)
        throw std::invalid_argument("compare: both drivers need a jump comparison certificate");
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        if (pair2.xi.at[n] > pair1.xi.at[n] || pair2.zeta.at[n] > pair1.zeta.at[n])
            throw std::invalid_argument("compare: barriers not ordered at instants");
        if (!tree.is_terminal(n) &&
            (pair2.xi.right[n] > pair1.xi.right[n] || pair2.zeta.right[n] > pair1.zeta.right[n]))
            throw std::invalid_argument("compare: barriers not ordered on intervals");
    }
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        if (tree.is_terminal(n)) continue;
        const double t = tree.time_of(n);
        const double y2 = continuation_of(tree, sol2, n);
        if (f2(t, y2, sol2.z[n], sol2.k[n]) > f1(t, y2, sol2.z[n], sol2.k[n]) + 1e-12)
            throw std::invalid_argument("compare: drivers not ordered along the second solution");
    }
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        if (sol2.y.at[n] > sol1.y.at[n] + tol) return false;
        if (!tree.is_terminal(n) && sol2.y.right[n] > sol1.y.right[n] + tol) return false;
    }
    return true;
}

double apriori_constant(const Driver& f1, const Driver& f2) {
    return std::max({f1.lipschitz, f2.lipschitz, f1.royer_bound, f2.royer_bound, 1.0});
}

AprioriReport apriori_check(const ScenarioTree& tree, const DRBSDESolution& sol1,
                            const AdmissiblePair& pair1, const Driver& f1,
                            const DRBSDESolution& sol2, const AdmissiblePair& pair2,
                            const Driver& f2, double beta, double eta, double c) {
    if (!(c > 0.0) || !(eta > 0.0) || !(beta > 0.0))
        throw std::invalid_argument("apriori_check: parameters must be positive");
    if (eta > 1.0 / (c * c) * (1.0 + 1e-12) || beta < (3.0 / eta + 2.0 * c) * (1.0 - 1e-12))
        throw std::invalid_argument("apriori_check: parameters violate the required constraints");

    const NodeId n_nodes = tree.n_nodes();
    const double horizon = tree.grid.horizon();
    const auto sq = [](double v) { return v * v; };

    // Driver gap along the second solution, squared, per non-terminal node.
    std::vector<double> df2(n_nodes, 0.0);
    for (NodeId n = 0; n < n_nodes; ++n) {
        if (tree.is_terminal(n)) continue;
        const double t = tree.time_of(n);
        const double y2 = continuation_of(tree, sol2, n);
        df2[n] = sq(f2(t, y2, sol2.z[n], sol2.k[n]) - f1(t, y2, sol2.z[n], sol2.k[n]));
    }

    // kint(n) = E[ sum over subtree intervals of df2 * int e^{beta s} ds | n ].
    std::vector<double> kint(n_nodes, 0.0);
    for (int lvl = tree.levels() - 2; lvl >= 0; --lvl)
        for (NodeId n = tree.level_begin[lvl]; n < tree.level_begin[lvl + 1]; ++n) {
            const double t0 = tree.grid.instants[lvl];
            const double t1 = tree.grid.instants[lvl + 1];
            double acc = df2[n] * (std::exp(beta * t1) - std::exp(beta * t0)) / beta;
            for (int j = 0; j < tree.n_children(n); ++j) {
                const NodeId ch = tree.child(n, j);
                acc += tree.cond_prob(ch) * kint[ch];
            }
            kint[n] = acc;
        }

    // E[ sup over stop opportunities (both slots) of the squared barrier gaps | n ].
    std::function<double(NodeId, double, double)> path_sup =
        [&](NodeId m, double run_xi, double run_zeta) -> double {
        run_xi = std::max(run_xi, sq(pair1.xi.at[m] - pair2.xi.at[m]));
        run_zeta = std::max(run_zeta, sq(pair1.zeta.at[m] - pair2.zeta.at[m]));
        if (tree.is_terminal(m)) return run_xi + run_zeta;
        run_xi = std::max(run_xi, sq(pair1.xi.right[m] - pair2.xi.right[m]));
        run_zeta = std::max(run_zeta, sq(pair1.zeta.right[m] - pair2.zeta.right[m]));
        double acc = 0.0;
        for (int j = 0; j < tree.n_children(m); ++j) {
            const NodeId ch = tree.child(m, j);
            acc += tree.cond_prob(ch) * path_sup(ch, run_xi, run_zeta);
        }
        return acc;
    };

    AprioriReport rep;
    rep.c = c;
    rep.eta = eta;
    rep.beta = beta;
    for (NodeId n = 0; n < n_nodes; ++n) {
        const double t = tree.time_of(n);
        const double lhs = sq(sol1.y.at[n] - sol2.y.at[n]);
        const double rhs = std::exp(beta * (horizon - t)) * path_sup(n, 0.0, 0.0) +
                           eta * std::exp(-beta * t) * kint[n];
        rep.max_relative_violation =
            std::max(rep.max_relative_violation, (lhs - rhs) / std::max(1.0, rhs));
    }
    return rep;
}

AprioriReport apriori_check(const ScenarioTree& tree, const DRBSDESolution& sol1,
                            const AdmissiblePair& pair1, const Driver& f1,
                            const DRBSDESolution& sol2, const AdmissiblePair& pair2,
                            const Driver& f2, double c) {
    const double eta = 1.0 / (c * c);
    return apriori_check(tree, sol1, pair1, f1, sol2, pair2, f2, 3.0 / eta + 2.0 * c, eta, c);
}

}  // namespace drbsde
