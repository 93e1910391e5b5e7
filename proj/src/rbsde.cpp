#include "drbsde/rbsde.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace drbsde {

RefSolution ref_operator(const ScenarioTree& tree, const LadlagProcess& xi) {
    const NodeId n_nodes = tree.n_nodes();
    if (xi.at.size() != n_nodes || xi.right.size() != n_nodes)
        throw std::invalid_argument("ref_operator: barrier size mismatch");

    RefSolution sol;
    sol.x = LadlagProcess(tree);
    sol.a_inc.assign(n_nodes, 0.0);
    sol.c_jump.assign(n_nodes, 0.0);
    sol.z.assign(n_nodes, 0.0);
    sol.k.assign(n_nodes, 0.0);
    sol.h_inc.assign(n_nodes, 0.0);

    for (NodeId n : tree.terminal_nodes()) sol.x.at[n] = xi.at[n];

    for (int lvl = tree.levels() - 2; lvl >= 0; --lvl) {
        for (NodeId n = tree.level_begin[lvl]; n < tree.level_begin[lvl + 1]; ++n) {
            std::vector<double> next = child_values(tree, n, sol.x.at);
            const double c = conditional_expectation(tree, n, sol.x.at);
            const double xr = std::max(xi.right[n], c);
            sol.x.right[n] = xr;
            sol.x.at[n] = std::max(xi.at[n], xr);
            sol.c_jump[n] = sol.x.at[n] - xr;
            const double a = xr - c;
            for (int j = 0; j < tree.n_children(n); ++j) sol.a_inc[tree.child(n, j)] = a;

            StepDecomposition d = martingale_decompose(tree, n, next);
            sol.z[n] = d.z;
            sol.k[n] = d.k;
            sol.jump_degenerate = sol.jump_degenerate || d.jump_degenerate;
            for (int j = 0; j < tree.n_children(n); ++j) sol.h_inc[tree.child(n, j)] = d.h[j];
        }
    }
    return sol;
}

namespace {

// lhs <= rhs on the at slot everywhere and the right slot off-terminal.
bool dominated(const ScenarioTree& tree, const LadlagProcess& lhs, const LadlagProcess& rhs,
               double slack) {
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        if (lhs.at[n] > rhs.at[n] + slack) return false;
        if (!tree.is_terminal(n) && lhs.right[n] > rhs.right[n] + slack) return false;
    }
    return true;
}

double sup_distance(const ScenarioTree& tree, const LadlagProcess& a, const LadlagProcess& b) {
    double sup = 0.0;
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        sup = std::max(sup, std::fabs(a.at[n] - b.at[n]));
        if (!tree.is_terminal(n)) sup = std::max(sup, std::fabs(a.right[n] - b.right[n]));
    }
    return sup;
}

}  // namespace

bool ref_monotone_check(const ScenarioTree& tree, const LadlagProcess& lo,
                        const LadlagProcess& hi) {
    if (!dominated(tree, lo, hi, 0.0))
        throw std::invalid_argument("ref_monotone_check: inputs not ordered");
    return dominated(tree, ref_operator(tree, lo).x, ref_operator(tree, hi).x, 0.0);
}

bool ref_monotone_limit_check(const ScenarioTree& tree, const std::vector<LadlagProcess>& seq,
                              const LadlagProcess& limit, double tol) {
    if (seq.empty()) throw std::invalid_argument("ref_monotone_limit_check: empty sequence");
    const LadlagProcess x_lim = ref_operator(tree, limit).x;
    LadlagProcess prev;
    bool have_prev = false;
    for (const LadlagProcess& xi : seq) {
        LadlagProcess x = ref_operator(tree, xi).x;
        if (have_prev && !dominated(tree, prev, x, 0.0)) return false;
        if (!dominated(tree, x, x_lim, 0.0)) return false;
        prev = std::move(x);
        have_prev = true;
    }
    return sup_distance(tree, prev, x_lim) <= tol;
}

}  // namespace drbsde
