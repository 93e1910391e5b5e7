#include "drbsde/dynkin.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>

namespace drbsde {
namespace {

constexpr double kSaddleTol = 1e-9;

void check_enumerable(const ScenarioTree& tree) {
    if (tree.n_nodes() > kEnumerationNodeCap)
        throw std::invalid_argument("strategy enumeration is limited to trees with at most " +
                                    std::to_string(kEnumerationNodeCap) + " nodes");
}

// first marked node on the path from the root to n, kNoNode if none yet
std::vector<NodeId> first_stop_map(const ScenarioTree& tree, const StoppingTime& tau) {
    std::vector<NodeId> first(tree.n_nodes(), kNoNode);
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        const NodeId inherited = n == tree.root() ? kNoNode : first[tree.parent(n)];
        if (inherited != kNoNode)
            first[n] = inherited;
        else if (tau.stop[n])
            first[n] = n;
    }
    return first;
}

// nodes lying at or after the theta frontier on their path
std::vector<std::uint8_t> at_or_after(const ScenarioTree& tree, const StoppingTime& theta) {
    std::vector<std::uint8_t> reached(tree.n_nodes(), 0);
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        const bool inherit = n != tree.root() && reached[tree.parent(n)] != 0;
        reached[n] = (inherit || theta.stop[n]) ? 1 : 0;
    }
    return reached;
}

void mark_terminals(const ScenarioTree& tree, StoppingTime& tau) {
    for (NodeId t : tree.terminal_nodes()) tau.stop[t] = 1;
}

}  // namespace

std::size_t count_stopping_times(const ScenarioTree& tree, NodeId from) {
    if (tree.is_terminal(from)) return 1;
    std::size_t prod = 1;
    for (int j = 0; j < tree.n_children(from); ++j)
        prod *= count_stopping_times(tree, tree.child(from, j));
    return 1 + prod;
}

std::size_t count_stopping_systems(const ScenarioTree& tree, NodeId from) {
    if (tree.is_terminal(from)) return 1;
    std::size_t prod = 1;
    for (int j = 0; j < tree.n_children(from); ++j)
        prod *= count_stopping_systems(tree, tree.child(from, j));
    return 2 + prod;
}

std::vector<StoppingTime> enumerate_stopping_times(const ScenarioTree& tree) {
    check_enumerable(tree);
    const std::size_t n = tree.n_nodes();
    // markings on the subtree of a node: stop there, or recurse into every child
    std::function<std::vector<std::vector<std::uint8_t>>(NodeId)> rec =
        [&](NodeId node) -> std::vector<std::vector<std::uint8_t>> {
        std::vector<std::vector<std::uint8_t>> out;
        std::vector<std::uint8_t> here(n, 0);
        here[node] = 1;
        out.push_back(std::move(here));
        if (!tree.is_terminal(node)) {
            std::vector<std::vector<std::uint8_t>> acc(1, std::vector<std::uint8_t>(n, 0));
            for (int j = 0; j < tree.n_children(node); ++j) {
                auto part = rec(tree.child(node, j));
                std::vector<std::vector<std::uint8_t>> merged;
                merged.reserve(acc.size() * part.size());
                for (const auto& a : acc)
                    for (const auto& b : part) {
                        auto m = a;
                        for (std::size_t i = 0; i < n; ++i) m[i] |= b[i];
                        merged.push_back(std::move(m));
                    }
                acc = std::move(merged);
            }
            for (auto& m : acc) out.push_back(std::move(m));
        }
        return out;
    };
    auto markings = rec(tree.root());
    std::vector<StoppingTime> out;
    out.reserve(markings.size());
    for (auto& m : markings) {
        StoppingTime tau{std::move(m)};
        mark_terminals(tree, tau);
        out.push_back(std::move(tau));
    }
    return out;
}

std::vector<StoppingSystem> enumerate_stopping_systems(const ScenarioTree& tree) {
    check_enumerable(tree);
    const std::size_t n = tree.n_nodes();
    using Marking = std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>>;
    std::function<std::vector<Marking>(NodeId)> rec = [&](NodeId node) -> std::vector<Marking> {
        std::vector<Marking> out;
        Marking here{std::vector<std::uint8_t>(n, 0), std::vector<std::uint8_t>(n, 1)};
        here.first[node] = 1;
        out.push_back(here);
        if (!tree.is_terminal(node)) {
            here.second[node] = 0;  // stop just after the instant
            out.push_back(std::move(here));
            std::vector<Marking> acc(
                1, Marking{std::vector<std::uint8_t>(n, 0), std::vector<std::uint8_t>(n, 1)});
            for (int j = 0; j < tree.n_children(node); ++j) {
                auto part = rec(tree.child(node, j));
                std::vector<Marking> merged;
                merged.reserve(acc.size() * part.size());
                for (const auto& a : acc)
                    for (const auto& b : part) {
                        Marking m = a;
                        for (std::size_t i = 0; i < n; ++i) {
                            m.first[i] |= b.first[i];
                            m.second[i] &= b.second[i];
                        }
                        merged.push_back(std::move(m));
                    }
                acc = std::move(merged);
            }
            for (auto& m : acc) out.push_back(std::move(m));
        }
        return out;
    };
    auto markings = rec(tree.root());
    std::vector<StoppingSystem> out;
    out.reserve(markings.size());
    for (auto& m : markings) {
        StoppingSystem sys{StoppingTime{std::move(m.first)}, std::move(m.second)};
        mark_terminals(tree, sys.tau);
        out.push_back(std::move(sys));
    }
    return out;
}

AdaptedProcess payoff_I(const ScenarioTree& tree, const AdmissiblePair& pair,
                        const StoppingTime& tau, const StoppingTime& sigma) {
    validate_stopping(tree, tau);
    validate_stopping(tree, sigma);
    const auto ft = first_stop_map(tree, tau);
    const auto fs = first_stop_map(tree, sigma);
    AdaptedProcess out(tree.n_nodes(), std::nan(""));
    for (NodeId leaf : tree.terminal_nodes()) {
        const NodeId tn = ft[leaf], sn = fs[leaf];
        if (tree.level(tn) <= tree.level(sn))
            out[tn] = pair.xi.at[tn];
        else
            out[sn] = pair.zeta.at[sn];
    }
    return out;
}

AdaptedProcess payoff_I_systems(const ScenarioTree& tree, const AdmissiblePair& pair,
                                const StoppingSystem& rho, const StoppingSystem& delta) {
    validate_system(tree, rho);
    validate_system(tree, delta);
    const auto ft = first_stop_map(tree, rho.tau);
    const auto fs = first_stop_map(tree, delta.tau);
    AdaptedProcess out(tree.n_nodes(), std::nan(""));
    for (NodeId leaf : tree.terminal_nodes()) {
        const NodeId tn = ft[leaf], sn = fs[leaf];
        // Stops are ordered by (node, slot) with "at the instant" before "just
        // after it".  When both sides pick the same node, a deferred maximizer
        // is preempted by an at-instant minimizer; plain level comparison would
        // hand that tie to the maximizer and overshoot the game value wherever
        // the state jumps up right after the node.
        const bool max_first = tree.level(tn) < tree.level(sn) ||
                               (tn == sn && (rho.at_instant[tn] || !delta.at_instant[sn]));
        if (max_first)
            out[tn] = rho.at_instant[tn] ? pair.xi.at[tn] : pair.xi.right[tn];
        else
            out[sn] = delta.at_instant[sn] ? pair.zeta.at[sn] : pair.zeta.right[sn];
    }
    return out;
}

double perturbation_gain(const Driver& f, double horizon) {
    const double kf = f.lipschitz;
    return std::exp((1.0 + 2.0 * kf + kf * kf) * horizon);
}

GameReport game_values(const ScenarioTree& tree, const AdmissiblePair& pair, const Driver& f,
                       const StoppingTime& theta, bool systems) {
    validate_admissible(tree, pair);
    validate_stopping(tree, theta);
    check_enumerable(tree);

    std::vector<StoppingSystem> maxs, mins;
    if (systems) {
        for (auto& s : enumerate_stopping_systems(tree))
            if (pathwise_leq(tree, theta, s.tau)) maxs.push_back(std::move(s));
    } else {
        for (auto& t : enumerate_stopping_times(tree))
            if (pathwise_leq(tree, theta, t)) maxs.push_back(StoppingSystem::plain(tree, t));
    }
    mins = maxs;

    GameReport rep;
    rep.theta_nodes = frontier(tree, theta);
    const std::size_t ni = maxs.size(), nj = mins.size(), nt = rep.theta_nodes.size();
    rep.n_max_strategies = ni;
    rep.n_min_strategies = nj;
    rep.criterion.assign(ni, std::vector<std::vector<double>>(nj, std::vector<double>(nt, 0.0)));

    for (std::size_t i = 0; i < ni; ++i)
        for (std::size_t j = 0; j < nj; ++j) {
            const StoppingTime nu = pathwise_min(tree, maxs[i].tau, mins[j].tau);
            const AdaptedProcess payoff = systems
                                              ? payoff_I_systems(tree, pair, maxs[i], mins[j])
                                              : payoff_I(tree, pair, maxs[i].tau, mins[j].tau);
            const AdaptedProcess vals = f_expectation(tree, theta, nu, payoff, f);
            for (std::size_t t = 0; t < nt; ++t)
                rep.criterion[i][j][t] = vals[rep.theta_nodes[t]];
        }

    rep.upper.assign(nt, 0.0);
    rep.lower.assign(nt, 0.0);
    rep.best_max.assign(nt, 0);
    rep.best_min.assign(nt, 0);
    double worst_gap = 0.0;
    for (std::size_t t = 0; t < nt; ++t) {
        double upper = std::numeric_limits<double>::infinity();
        double lower = -std::numeric_limits<double>::infinity();
        std::size_t arg_up = 0, arg_lo = 0;
        for (std::size_t j = 0; j < nj; ++j) {
            double sup = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < ni; ++i) sup = std::max(sup, rep.criterion[i][j][t]);
            if (sup < upper) {
                upper = sup;
                arg_up = j;
            }
        }
        for (std::size_t i = 0; i < ni; ++i) {
            double inf = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < nj; ++j) inf = std::min(inf, rep.criterion[i][j][t]);
            if (inf > lower) {
                lower = inf;
                arg_lo = i;
            }
        }
        rep.upper[t] = upper;
        rep.lower[t] = lower;
        rep.best_min[t] = arg_up;
        rep.best_max[t] = arg_lo;
        worst_gap = std::max(worst_gap, std::abs(upper - lower));
    }
    rep.has_value = worst_gap <= 1e-10;
    return rep;
}

namespace {

struct HitStops {
    StoppingTime tau, sigma;
};

// the two-sided inequality check shared by every saddle construction:
//   for all opponents sigma_op:  Y_theta <= E^f[payoff(tau, sigma_op)] + gain
//   for all opponents tau_op:    E^f[payoff(tau_op, sigma)] - gain <= Y_theta
template <typename Value>
void check_saddle(const ScenarioTree& tree, const LadlagProcess& y, const StoppingTime& theta,
                  const std::vector<NodeId>& thetas, const std::vector<StoppingTime>& opponents,
                  Value&& value_of_pair, const StoppingTime& tau, const StoppingTime& sigma,
                  double gain, double& upper_violation, double& lower_violation) {
    for (const StoppingTime& op : opponents) {
        const AdaptedProcess up = value_of_pair(tau, op);
        const AdaptedProcess lo = value_of_pair(op, sigma);
        for (NodeId t : thetas) {
            upper_violation = std::max(upper_violation, y.at[t] - up[t] - gain);
            lower_violation = std::max(lower_violation, lo[t] - gain - y.at[t]);
        }
    }
    (void)tree;
    (void)theta;
}

std::vector<StoppingTime> opponents_after(const ScenarioTree& tree, const StoppingTime& theta) {
    std::vector<StoppingTime> out;
    for (auto& t : enumerate_stopping_times(tree))
        if (pathwise_leq(tree, theta, t)) out.push_back(std::move(t));
    return out;
}

}  // namespace

SaddleReport epsilon_saddle(const ScenarioTree& tree, const AdmissiblePair& pair, const Driver& f,
                            const StoppingTime& theta, double epsilon) {
    validate_admissible(tree, pair);
    validate_stopping(tree, theta);
    check_enumerable(tree);
    if (epsilon < 0.0) throw std::invalid_argument("epsilon must be nonnegative");
    const RegularityFlags lo = regularity(tree, pair.xi);
    const RegularityFlags hi = regularity(tree, pair.zeta);
    if (!lo.right_usc || !hi.right_lsc)
        throw std::invalid_argument(
            "instant-stop saddles need a right-u.s.c. lower barrier and a right-l.s.c. upper "
            "barrier; use system_epsilon_saddle for irregular barriers");

    const DRBSDESolution sol = solve_direct(tree, pair, f);
    const auto reached = at_or_after(tree, theta);

    SaddleReport rep;
    rep.tau.stop.assign(tree.n_nodes(), 0);
    rep.sigma.stop.assign(tree.n_nodes(), 0);
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        if (!reached[n]) continue;
        if (sol.y.at[n] <= pair.xi.at[n] + epsilon) rep.tau.stop[n] = 1;
        if (sol.y.at[n] >= pair.zeta.at[n] - epsilon) rep.sigma.stop[n] = 1;
    }
    mark_terminals(tree, rep.tau);
    mark_terminals(tree, rep.sigma);
    validate_stopping(tree, rep.tau);
    validate_stopping(tree, rep.sigma);

    rep.gain = perturbation_gain(f, tree.grid.horizon()) * epsilon;
    const auto thetas = frontier(tree, theta);
    const auto opponents = opponents_after(tree, theta);
    auto value_of_pair = [&](const StoppingTime& tau, const StoppingTime& sigma) {
        const StoppingTime nu = pathwise_min(tree, tau, sigma);
        return f_expectation(tree, theta, nu, payoff_I(tree, pair, tau, sigma), f);
    };
    check_saddle(tree, sol.y, theta, thetas, opponents, value_of_pair, rep.tau, rep.sigma,
                 rep.gain, rep.max_upper_violation, rep.max_lower_violation);
    rep.verified =
        std::max(rep.max_upper_violation, rep.max_lower_violation) <= kSaddleTol;
    return rep;
}

SaddlePointsReport saddle_points(const ScenarioTree& tree, const AdmissiblePair& pair,
                                 const Driver& f, const StoppingTime& theta) {
    validate_admissible(tree, pair);
    validate_stopping(tree, theta);
    check_enumerable(tree);
    const RegularityFlags lo = regularity(tree, pair.xi);
    const RegularityFlags hi = regularity(tree, pair.zeta);
    if (!lo.right_usc || !lo.left_usc_along_st || !hi.right_lsc || !hi.left_lsc_along_st)
        throw std::invalid_argument(
            "exact saddle points need the lower barrier u.s.c. from the right and along stopping "
            "times, and the upper barrier l.s.c. likewise");

    const DRBSDESolution sol = solve_direct(tree, pair, f);
    const auto reached = at_or_after(tree, theta);

    SaddlePointsReport rep;
    rep.tau_star.stop.assign(tree.n_nodes(), 0);
    rep.sigma_star.stop.assign(tree.n_nodes(), 0);
    rep.tau_bar.stop.assign(tree.n_nodes(), 0);
    rep.sigma_bar.stop.assign(tree.n_nodes(), 0);
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        if (!reached[n]) continue;
        if (sol.y.at[n] == pair.xi.at[n]) rep.tau_star.stop[n] = 1;
        if (sol.y.at[n] == pair.zeta.at[n]) rep.sigma_star.stop[n] = 1;
        bool a_active = sol.c_jump[n] > 0.0;
        bool ap_active = sol.cp_jump[n] > 0.0;
        for (int j = 0; j < tree.n_children(n); ++j) {
            const NodeId c = tree.child(n, j);
            a_active = a_active || sol.a_inc[c] > 0.0;
            ap_active = ap_active || sol.ap_inc[c] > 0.0;
        }
        if (a_active) rep.tau_bar.stop[n] = 1;
        if (ap_active) rep.sigma_bar.stop[n] = 1;
    }
    mark_terminals(tree, rep.tau_star);
    mark_terminals(tree, rep.sigma_star);
    mark_terminals(tree, rep.tau_bar);
    mark_terminals(tree, rep.sigma_bar);

    rep.order_ok = pathwise_leq(tree, rep.tau_star, rep.tau_bar) &&
                   pathwise_leq(tree, rep.sigma_star, rep.sigma_bar);
    for (NodeId n : frontier(tree, rep.tau_star))
        rep.contact_gap = std::max(rep.contact_gap, std::abs(sol.y.at[n] - pair.xi.at[n]));
    for (NodeId n : frontier(tree, rep.tau_bar))
        rep.contact_gap = std::max(rep.contact_gap, std::abs(sol.y.at[n] - pair.xi.at[n]));
    for (NodeId n : frontier(tree, rep.sigma_star))
        rep.contact_gap = std::max(rep.contact_gap, std::abs(sol.y.at[n] - pair.zeta.at[n]));
    for (NodeId n : frontier(tree, rep.sigma_bar))
        rep.contact_gap = std::max(rep.contact_gap, std::abs(sol.y.at[n] - pair.zeta.at[n]));

    const auto thetas = frontier(tree, theta);
    const auto opponents = opponents_after(tree, theta);
    auto value_of_pair = [&](const StoppingTime& tau, const StoppingTime& sigma) {
        const StoppingTime nu = pathwise_min(tree, tau, sigma);
        return f_expectation(tree, theta, nu, payoff_I(tree, pair, tau, sigma), f);
    };
    double star_up = 0.0, star_lo = 0.0, bar_up = 0.0, bar_lo = 0.0;
    check_saddle(tree, sol.y, theta, thetas, opponents, value_of_pair, rep.tau_star,
                 rep.sigma_star, 0.0, star_up, star_lo);
    check_saddle(tree, sol.y, theta, thetas, opponents, value_of_pair, rep.tau_bar, rep.sigma_bar,
                 0.0, bar_up, bar_lo);
    rep.star_verified = std::max(star_up, star_lo) <= kSaddleTol;
    rep.bar_verified = std::max(bar_up, bar_lo) <= kSaddleTol;
    rep.max_violation = std::max({star_up, star_lo, bar_up, bar_lo});
    return rep;
}

SystemSaddleReport system_epsilon_saddle(const ScenarioTree& tree, const AdmissiblePair& pair,
                                         const Driver& f, const StoppingTime& theta,
                                         double epsilon) {
    validate_admissible(tree, pair);
    validate_stopping(tree, theta);
    check_enumerable(tree);
    if (epsilon < 0.0) throw std::invalid_argument("epsilon must be nonnegative");

    const DRBSDESolution sol = solve_direct(tree, pair, f);
    const auto reached = at_or_after(tree, theta);

    SystemSaddleReport rep;
    rep.rho.tau.stop.assign(tree.n_nodes(), 0);
    rep.rho.at_instant.assign(tree.n_nodes(), 1);
    rep.delta.tau.stop.assign(tree.n_nodes(), 0);
    rep.delta.at_instant.assign(tree.n_nodes(), 1);
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        if (!reached[n]) continue;
        const bool term = tree.is_terminal(n);
        const bool lo_at = sol.y.at[n] <= pair.xi.at[n] + epsilon;
        const bool lo_right = !term && sol.y.right[n] <= pair.xi.right[n] + epsilon;
        if (lo_at || lo_right) {
            rep.rho.tau.stop[n] = 1;
            rep.rho.at_instant[n] = lo_at ? 1 : 0;
        }
        const bool hi_at = sol.y.at[n] >= pair.zeta.at[n] - epsilon;
        const bool hi_right = !term && sol.y.right[n] >= pair.zeta.right[n] - epsilon;
        if (hi_at || hi_right) {
            rep.delta.tau.stop[n] = 1;
            rep.delta.at_instant[n] = hi_at ? 1 : 0;
        }
    }
    mark_terminals(tree, rep.rho.tau);
    mark_terminals(tree, rep.delta.tau);
    validate_system(tree, rep.rho);
    validate_system(tree, rep.delta);

    // the hit lands on the shrunk corridor by construction; report the slack
    const auto fr = first_stop_map(tree, rep.rho.tau);
    const auto fd = first_stop_map(tree, rep.delta.tau);
    for (NodeId leaf : tree.terminal_nodes()) {
        const NodeId rn = fr[leaf], dn = fd[leaf];
        const double rv = rep.rho.at_instant[rn] ? sol.y.at[rn] - pair.xi.at[rn]
                                                 : sol.y.right[rn] - pair.xi.right[rn];
        const double dv = rep.delta.at_instant[dn] ? pair.zeta.at[dn] - sol.y.at[dn]
                                                   : pair.zeta.right[dn] - sol.y.right[dn];
        rep.barrier_bound_gap = std::max(rep.barrier_bound_gap, rv - epsilon);
        rep.barrier_bound_gap = std::max(rep.barrier_bound_gap, dv - epsilon);
    }

    rep.gain = perturbation_gain(f, tree.grid.horizon()) * epsilon;
    const auto thetas = frontier(tree, theta);
    std::vector<StoppingSystem> opponents;
    for (auto& s : enumerate_stopping_systems(tree))
        if (pathwise_leq(tree, theta, s.tau)) opponents.push_back(std::move(s));

    auto value_of_pair = [&](const StoppingSystem& rho, const StoppingSystem& delta) {
        const StoppingTime nu = pathwise_min(tree, rho.tau, delta.tau);
        return f_expectation(tree, theta, nu, payoff_I_systems(tree, pair, rho, delta), f);
    };
    for (const StoppingSystem& op : opponents) {
        const AdaptedProcess up = value_of_pair(rep.rho, op);
        const AdaptedProcess lo = value_of_pair(op, rep.delta);
        for (NodeId t : thetas) {
            rep.max_upper_violation =
                std::max(rep.max_upper_violation, sol.y.at[t] - up[t] - rep.gain);
            rep.max_lower_violation =
                std::max(rep.max_lower_violation, lo[t] - rep.gain - sol.y.at[t]);
        }
    }
    rep.verified =
        std::max(rep.max_upper_violation, rep.max_lower_violation) <= kSaddleTol &&
        rep.barrier_bound_gap <= kSaddleTol;
    return rep;
}

}  // namespace drbsde
