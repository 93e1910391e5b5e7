#include "drbsde/tree.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace drbsde {

std::string to_string(Branching b) {
    return b == Branching::Three ? "three" : "four";
}

Branching branching_from_string(const std::string& s) {
    if (s == "three") return Branching::Three;
    if (s == "four") return Branching::Four;
    throw std::invalid_argument("unknown branching scheme: " + s);
}

TimeGrid::TimeGrid(std::vector<double> ts) : instants(std::move(ts)) {
    if (instants.size() < 2) throw std::invalid_argument("time grid needs at least two instants");
    if (instants.front() != 0.0) throw std::invalid_argument("time grid must start at 0");
    for (std::size_t i = 1; i < instants.size(); ++i)
        if (!(instants[i] > instants[i - 1]))
            throw std::invalid_argument("time grid must be strictly increasing");
}

TimeGrid TimeGrid::uniform(double horizon, int steps) {
    if (steps < 1 || !(horizon > 0.0)) throw std::invalid_argument("bad uniform grid parameters");
    std::vector<double> ts(steps + 1);
    for (int i = 0; i <= steps; ++i) ts[i] = horizon * i / steps;
    ts[steps] = horizon;
    return TimeGrid(ts);
}

double TimeGrid::max_dt() const {
    double m = 0.0;
    for (int i = 0; i < steps(); ++i) m = std::max(m, dt(i));
    return m;
}

std::vector<NodeId> ScenarioTree::terminal_nodes() const {
    std::vector<NodeId> out;
    for (NodeId n = level_begin[levels() - 1]; n < n_nodes(); ++n) out.push_back(n);
    return out;
}

std::vector<NodeId> ScenarioTree::path_to(NodeId n) const {
    std::vector<NodeId> path;
    for (NodeId m = n; m != kNoNode; m = nodes[m].parent) path.push_back(m);
    std::reverse(path.begin(), path.end());
    return path;
}

namespace {

struct ChildSpec {
    double dw, jump, prob;
};

// Child increments for one step.  The Brownian magnitude on diffusion
// branches is sqrt(dt / (1 - lambda*dt)) so the variance matching
// E[dW^2] = dt is exact even when the jump branch carries probability mass.
std::vector<ChildSpec> step_children(Branching scheme, double lambda, double dt) {
    const double q = lambda * dt;
    std::vector<ChildSpec> cs;
    if (scheme == Branching::Three) {
        const double a = std::sqrt(dt / (1.0 - q));
        cs.push_back({+a, 0.0, (1.0 - q) / 2.0});
        cs.push_back({-a, 0.0, (1.0 - q) / 2.0});
        if (q > 0.0) cs.push_back({0.0, 1.0, q});
    } else {
        const double a = std::sqrt(dt);
        cs.push_back({+a, 0.0, (1.0 - q) / 2.0});
        cs.push_back({-a, 0.0, (1.0 - q) / 2.0});
        if (q > 0.0) {
            cs.push_back({+a, 1.0, q / 2.0});
            cs.push_back({-a, 1.0, q / 2.0});
        }
    }
    return cs;
}

}  // namespace

ScenarioTree build_tree(const TimeGrid& grid, double lambda, Branching scheme) {
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be nonnegative");
    for (int i = 0; i < grid.steps(); ++i)
        if (!(lambda * grid.dt(i) < 1.0))
            throw std::invalid_argument("lambda * dt must be < 1 on every step");

    ScenarioTree tree;
    tree.grid = grid;
    tree.lambda = lambda;
    tree.scheme = scheme;

    tree.nodes.push_back(Node{});
    tree.level_begin.push_back(0);
    NodeId lo = 0, hi = 1;
    for (int lev = 0; lev < grid.steps(); ++lev) {
        const auto cs = step_children(scheme, lambda, grid.dt(lev));
        for (NodeId n = lo; n < hi; ++n) {
            tree.nodes[n].first_child = static_cast<NodeId>(tree.nodes.size());
            tree.nodes[n].n_children = static_cast<std::uint16_t>(cs.size());
            for (const auto& c : cs) {
                Node child;
                child.parent = n;
                child.level = static_cast<std::uint16_t>(lev + 1);
                child.dw = c.dw;
                child.jump = c.jump;
                child.cond_prob = c.prob;
                child.path_prob = tree.nodes[n].path_prob * c.prob;
                tree.nodes.push_back(child);
            }
        }
        lo = hi;
        hi = static_cast<NodeId>(tree.nodes.size());
        tree.level_begin.push_back(lo);
        if (tree.nodes.size() > 4u << 20)
            throw std::invalid_argument("scenario tree too large");
    }
    tree.level_begin.push_back(hi);
    return tree;
}

std::vector<double> child_values(const ScenarioTree& tree, NodeId n, const AdaptedProcess& values) {
    if (values.size() != tree.n_nodes())
        throw std::invalid_argument("process has wrong length for this tree");
    std::vector<double> out(tree.n_children(n));
    for (int j = 0; j < tree.n_children(n); ++j) out[j] = values[tree.child(n, j)];
    return out;
}

double conditional_expectation(const ScenarioTree& tree, NodeId n, const AdaptedProcess& values) {
    if (tree.is_terminal(n)) throw std::invalid_argument("terminal node has no children");
    if (values.size() != tree.n_nodes())
        throw std::invalid_argument("process has wrong length for this tree");
    double s = 0.0;
    for (int j = 0; j < tree.n_children(n); ++j) {
        NodeId c = tree.child(n, j);
        if (std::isnan(values[c])) throw std::invalid_argument("missing child value");
        s += tree.cond_prob(c) * values[c];
    }
    return s;
}

StepDecomposition martingale_decompose(const ScenarioTree& tree, NodeId n,
                                       const std::vector<double>& next) {
    if (tree.is_terminal(n)) throw std::invalid_argument("terminal node has no children");
    const int nc = tree.n_children(n);
    if (static_cast<int>(next.size()) != nc)
        throw std::invalid_argument("need one value per child");
    for (double v : next)
        if (std::isnan(v)) throw std::invalid_argument("missing child value");

    const double dt = tree.dt_after(n);
    double mean = 0.0;
    for (int j = 0; j < nc; ++j) mean += tree.cond_prob(tree.child(n, j)) * next[j];

    // The Gram matrix of (dW, compensated jump) is diagonal by construction:
    // E[dW^2] = dt, E[dW * Nt] = 0, E[Nt^2] = lambda*dt*(1 - lambda*dt).
    StepDecomposition d;
    const double q = tree.lambda * dt;
    const double var_jump = q * (1.0 - q);
    double cov_w = 0.0, cov_j = 0.0;
    for (int j = 0; j < nc; ++j) {
        NodeId c = tree.child(n, j);
        const double dm = next[j] - mean;
        const double nt = tree.nodes[c].jump - q;
        cov_w += tree.cond_prob(c) * dm * tree.nodes[c].dw;
        cov_j += tree.cond_prob(c) * dm * nt;
    }
    d.z = cov_w / dt;
    if (var_jump > 0.0) {
        d.k = cov_j / var_jump;
    } else {
        d.k = 0.0;
        d.jump_degenerate = true;
    }
    d.h.resize(nc);
    for (int j = 0; j < nc; ++j) {
        NodeId c = tree.child(n, j);
        const double nt = tree.nodes[c].jump - q;
        d.h[j] = (next[j] - mean) - d.z * tree.nodes[c].dw - d.k * nt;
    }
    return d;
}

}  // namespace drbsde
