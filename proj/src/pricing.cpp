#include "drbsde/pricing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace drbsde {
namespace {

void mark_terminals(const ScenarioTree& tree, StoppingTime& tau) {
    for (NodeId t : tree.terminal_nodes()) tau.stop[t] = 1;
}

double positive_part(double v) { return v > 0.0 ? v : 0.0; }

}  // namespace

MarketModel build_market(const ScenarioTree& tree, const MarketScalars& params, double bond0,
                         double s1_0, double s2_0) {
    if (params.beta[0] <= -1.0 || params.beta[1] <= -1.0)
        throw std::invalid_argument("jump loadings must be > -1");
    if (bond0 <= 0.0 || s1_0 <= 0.0 || s2_0 <= 0.0)
        throw std::invalid_argument("initial prices must be positive");
    double inv[2][2];
    params.inverse(inv);  // rejects a singular volatility matrix

    MarketModel model;
    model.params = params;
    model.lambda = tree.lambda;
    model.bond.assign(tree.n_nodes(), 0.0);
    model.s1.assign(tree.n_nodes(), 0.0);
    model.s2.assign(tree.n_nodes(), 0.0);
    model.bond[tree.root()] = bond0;
    model.s1[tree.root()] = s1_0;
    model.s2[tree.root()] = s2_0;
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        if (n == tree.root()) continue;
        const NodeId p = tree.parent(n);
        const double dt = tree.dt_before(n);
        const double dw = tree.dw(n), dnt = tree.compensated_jump(n);
        model.bond[n] = model.bond[p] * (1.0 + params.r * dt);
        model.s1[n] = model.s1[p] * (1.0 + params.mu[0] * dt + params.sigma[0] * dw +
                                     params.beta[0] * dnt);
        model.s2[n] = model.s2[p] * (1.0 + params.mu[1] * dt + params.sigma[1] * dw +
                                     params.beta[1] * dnt);
        if (model.bond[n] <= 0.0 || model.s1[n] <= 0.0 || model.s2[n] <= 0.0)
            throw std::invalid_argument("market parameters drive a price nonpositive");
    }
    return model;
}

ScenarioTree risk_neutral_retilt(const ScenarioTree& tree, const MarketScalars& params) {
    double theta[2];
    params.risk_premium(theta);
    ScenarioTree tilted = tree;
    for (NodeId n = 0; n < tilted.n_nodes(); ++n) {
        if (n == tilted.root()) continue;
        const double dt = tree.dt_before(n);
        double factor = 1.0 - theta[0] * tree.dw(n);
        if (tree.has_jump_branch())
            factor -= theta[1] * tree.compensated_jump(n) /
                      (tree.lambda * (1.0 - tree.lambda * dt));
        const double q = tree.cond_prob(n) * factor;
        if (!(q > 0.0) || !(q < 1.0))
            throw std::invalid_argument("risk premium too large: tilted probability leaves (0,1)");
        tilted.nodes[n].cond_prob = q;
        tilted.nodes[n].path_prob = tilted.nodes[tree.parent(n)].path_prob * q;
    }
    return tilted;
}

AdaptedProcess wealth_forward(const ScenarioTree& tree, double x, const std::vector<double>& z,
                              const std::vector<double>& k, const Driver& f) {
    AdaptedProcess wealth(tree.n_nodes(), 0.0);
    wealth[tree.root()] = x;
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        if (tree.is_terminal(n)) continue;
        const double t = tree.time_of(n), dt = tree.dt_after(n);
        const double drift = f(t, wealth[n], z[n], k[n]) * dt;
        for (int j = 0; j < tree.n_children(n); ++j) {
            const NodeId c = tree.child(n, j);
            wealth[c] = wealth[n] - drift + z[n] * tree.dw(c) + k[n] * tree.compensated_jump(c);
        }
    }
    return wealth;
}

GameOptionPrice price_game_option(const ScenarioTree& tree, const AdmissiblePair& pair,
                                  const MarketModel& model, const Driver& f) {
    validate_admissible(tree, pair);
    GameOptionPrice out;
    out.solution = solve_direct(tree, pair, f);
    out.u0 = out.solution.y.at[tree.root()];

    const RegularityFlags lo = regularity(tree, pair.xi);
    const RegularityFlags hi = regularity(tree, pair.zeta);
    if (tree.scheme != Branching::Three)
        out.hedge_note =
            "four-branch trees carry an orthogonal residual the two assets cannot span";
    else if (!lo.right_usc)
        out.hedge_note = "exercise payoff is not right-u.s.c.";
    else if (!hi.right_lsc)
        out.hedge_note = "cancellation payoff is not right-l.s.c.";
    else if (!hi.left_lsc_along_st)
        out.hedge_note = "cancellation payoff is not left-l.s.c. along stopping times";
    if (!out.hedge_note.empty()) return out;

    out.hedge_available = true;
    const DRBSDESolution& sol = out.solution;
    StoppingTime contact{std::vector<std::uint8_t>(tree.n_nodes(), 0)};
    StoppingTime force{std::vector<std::uint8_t>(tree.n_nodes(), 0)};
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        if (sol.y.at[n] == pair.zeta.at[n]) contact.stop[n] = 1;
        bool active = sol.cp_jump[n] > 0.0;
        for (int j = 0; j < tree.n_children(n); ++j)
            active = active || sol.ap_inc[tree.child(n, j)] > 0.0;
        if (active) force.stop[n] = 1;
    }
    mark_terminals(tree, contact);
    mark_terminals(tree, force);

    HedgePlan base;
    base.x = out.u0;
    base.phi1.assign(tree.n_nodes(), 0.0);
    base.phi2.assign(tree.n_nodes(), 0.0);
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        if (tree.is_terminal(n)) continue;
        double phi[2];
        model.params.weights(sol.z[n], sol.k[n], phi);
        base.phi1[n] = phi[0];
        base.phi2[n] = phi[1];
    }
    out.plan_first_contact = base;
    out.plan_first_contact.cancel = contact;
    out.plan_first_force = base;
    out.plan_first_force.cancel = force;
    return out;
}

SuperhedgeReport superhedge_verify(const ScenarioTree& tree, const AdmissiblePair& pair, double x,
                                   const std::vector<double>& z, const std::vector<double>& k,
                                   const StoppingTime& cancel, const Driver& f, double tol) {
    validate_stopping(tree, cancel);
    const AdaptedProcess wealth = wealth_forward(tree, x, z, k, f);

    // first marked node on the path to n; kNoNode while strictly before it
    std::vector<NodeId> first(tree.n_nodes(), kNoNode);
    SuperhedgeReport rep;
    rep.passed = true;
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        const NodeId inherited = n == tree.root() ? kNoNode : first[tree.parent(n)];
        first[n] = inherited != kNoNode ? inherited : (cancel.stop[n] ? n : kNoNode);
        if (inherited != kNoNode) continue;  // strictly after the cancel
        const double floor_gap = pair.xi.at[n] - wealth[n];
        rep.worst_floor_gap = std::max(rep.worst_floor_gap, floor_gap);
        bool bad = floor_gap > tol;
        if (first[n] == n) {
            const double cancel_gap = pair.zeta.at[n] - wealth[n];
            rep.worst_cancel_gap = std::max(rep.worst_cancel_gap, cancel_gap);
            bad = bad || cancel_gap > tol;
        }
        if (bad) {
            rep.passed = false;
            if (rep.first_failure == kNoNode) rep.first_failure = n;
        }
    }
    return rep;
}

AdmissiblePair build_payoff(const std::string& name, const BuilderParams& params,
                            const ScenarioTree& tree, const MarketModel& model) {
    AdmissiblePair pair{LadlagProcess(tree), LadlagProcess(tree)};
    if (name == "basket") {
        if (params.penalty < 0.0 || params.h_low < 0.0 || params.h_high < 0.0)
            throw std::invalid_argument("basket builder needs nonnegative penalty and h values");
        auto h = [&](double s, bool strict) {
            const bool up = strict ? s > params.threshold : s >= params.threshold;
            const double v = params.h_low + (params.h_high - params.h_low) * (up ? 1.0 : 0.0);
            return std::min(std::max(v, 0.0), params.penalty);
        };
        for (NodeId n = 0; n < tree.n_nodes(); ++n) {
            const double g = positive_part(model.s1[n] - params.strike);
            pair.xi.at[n] = g * h(model.s2[n], false);
            if (tree.is_terminal(n)) {
                pair.zeta.at[n] = pair.xi.at[n];
            } else {
                pair.xi.right[n] = g * h(model.s2[n], true);
                pair.zeta.at[n] = params.penalty * g;
                pair.zeta.right[n] = params.penalty * g;
            }
        }
    } else if (name == "barrier_call") {
        if (!(params.strike > params.barrier) || params.barrier < 0.0)
            throw std::invalid_argument("barrier call needs strike > barrier >= 0");
        if (params.fee < 0.0) throw std::invalid_argument("cancellation fee must be nonnegative");
        AdaptedProcess running_min(tree.n_nodes(), 0.0);
        for (NodeId n = 0; n < tree.n_nodes(); ++n)
            running_min[n] = n == tree.root()
                                 ? model.s1[n]
                                 : std::min(running_min[tree.parent(n)], model.s1[n]);
        for (NodeId n = 0; n < tree.n_nodes(); ++n) {
            const double g = positive_part(model.s1[n] - params.strike);
            pair.xi.at[n] = running_min[n] >= params.barrier ? g : 0.0;
            if (tree.is_terminal(n)) {
                pair.zeta.at[n] = pair.xi.at[n];
            } else {
                // a minimum sitting exactly on the barrier is knocked out just
                // after the instant
                pair.xi.right[n] = running_min[n] > params.barrier ? g : 0.0;
                pair.zeta.at[n] = g + params.fee;
                pair.zeta.right[n] = g + params.fee;
            }
        }
    } else {
        throw std::invalid_argument("unknown payoff builder: " + name);
    }
    validate_admissible(tree, pair);
    return pair;
}

}  // namespace drbsde
