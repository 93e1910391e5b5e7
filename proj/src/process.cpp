#include "drbsde/process.hpp"

#include <algorithm>
#include <stdexcept>

namespace drbsde {

double left_limit(const ScenarioTree& tree, const LadlagProcess& phi, NodeId n) {
    if (n == tree.root()) throw std::invalid_argument("root has no left limit");
    return phi.right[tree.parent(n)];
}

double right_envelope(const ScenarioTree& tree, const LadlagProcess& phi, NodeId n) {
    if (tree.is_terminal(n)) throw std::invalid_argument("terminal node has no right limit");
    return phi.right[n];
}

RegularityFlags regularity(const ScenarioTree& tree, const LadlagProcess& phi) {
    RegularityFlags f;
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        if (!tree.is_terminal(n)) {
            if (!(phi.at[n] >= phi.right[n])) f.right_usc = false;
            if (!(phi.at[n] <= phi.right[n])) f.right_lsc = false;
        }
        if (n != tree.root()) {
            const double ll = phi.right[tree.parent(n)];
            if (!(phi.at[n] >= ll)) f.left_usc_along_st = false;
            if (!(phi.at[n] <= ll)) f.left_lsc_along_st = false;
        }
    }
    f.right_continuous = f.right_usc && f.right_lsc;
    return f;
}

bool is_strong_supermartingale(const ScenarioTree& tree, const LadlagProcess& phi, double tol) {
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        if (tree.is_terminal(n)) continue;
        if (phi.at[n] < phi.right[n] - tol) return false;
        if (phi.right[n] < conditional_expectation(tree, n, phi.at) - tol) return false;
    }
    return true;
}

MertensDecomposition mertens_decompose(const ScenarioTree& tree, const LadlagProcess& x,
                                       double tol) {
    if (!is_strong_supermartingale(tree, x, tol))
        throw std::invalid_argument("process is not a strong supermartingale");

    MertensDecomposition d;
    d.a_inc.assign(tree.n_nodes(), 0.0);
    d.c_jump.assign(tree.n_nodes(), 0.0);
    d.martingale.assign(tree.n_nodes(), 0.0);

    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        if (tree.is_terminal(n)) continue;
        d.c_jump[n] = std::max(0.0, x.at[n] - x.right[n]);
        const double cont = conditional_expectation(tree, n, x.at);
        const double a = std::max(0.0, x.right[n] - cont);
        for (int j = 0; j < tree.n_children(n); ++j) d.a_inc[tree.child(n, j)] = a;
    }
    // M_t = X_t + A_t + C_{t-}; accumulate drains along each path.
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        double drained = 0.0;
        if (n != tree.root()) {
            NodeId p = tree.parent(n);
            drained = (d.martingale[p] - x.at[p]) + d.a_inc[n] + d.c_jump[p];
        }
        d.martingale[n] = x.at[n] + drained;
    }
    return d;
}

void validate_admissible(const ScenarioTree& tree, const AdmissiblePair& pair) {
    const auto check_size = [&](const LadlagProcess& p) {
        if (p.at.size() != tree.n_nodes() || p.right.size() != tree.n_nodes())
            throw std::invalid_argument("barrier has wrong length for this tree");
    };
    check_size(pair.xi);
    check_size(pair.zeta);
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        if (std::isnan(pair.xi.at[n]) || std::isnan(pair.zeta.at[n]))
            throw std::invalid_argument("barrier value missing");
        if (tree.is_terminal(n)) {
            if (pair.xi.at[n] != pair.zeta.at[n])
                throw std::invalid_argument("barriers must coincide at terminal nodes");
            continue;
        }
        if (std::isnan(pair.xi.right[n]) || std::isnan(pair.zeta.right[n]))
            throw std::invalid_argument("barrier value missing");
        if (!(pair.xi.at[n] <= pair.zeta.at[n]) || !(pair.xi.right[n] <= pair.zeta.right[n]))
            throw std::invalid_argument("lower barrier exceeds upper barrier");
    }
}

SupermartingalePair mokobodzki_construct(const ScenarioTree& tree, const AdmissiblePair& pair) {
    validate_admissible(tree, pair);
    const LadlagProcess& xi = pair.xi;

    // Decompose xi: right jump at each instant goes into gamma (split into
    // C'/C), the predictable mean drift over each interval into alpha (split
    // into A'/A); what is left is a martingale.  H compensates (A, C) around
    // xi_T^+, Hp compensates (A', C') around xi_T^-, giving H - Hp = xi.
    std::vector<double> dA(tree.n_nodes(), 0.0), dAp(tree.n_nodes(), 0.0);
    std::vector<double> dC(tree.n_nodes(), 0.0), dCp(tree.n_nodes(), 0.0);
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        if (tree.is_terminal(n)) continue;
        const double dgamma = xi.right[n] - xi.at[n];
        dCp[n] = std::max(0.0, dgamma);
        dC[n] = std::max(0.0, -dgamma);
        const double dalpha = conditional_expectation(tree, n, xi.at) - xi.right[n];
        const double ap = std::max(0.0, dalpha), a = std::max(0.0, -dalpha);
        for (int j = 0; j < tree.n_children(n); ++j) {
            dAp[tree.child(n, j)] = ap;
            dA[tree.child(n, j)] = a;
        }
    }

    SupermartingalePair out{LadlagProcess(tree), LadlagProcess(tree)};
    const auto backfill = [&](LadlagProcess& H, const std::vector<double>& a,
                              const std::vector<double>& c, bool positive_part) {
        for (NodeId leaf : tree.terminal_nodes())
            H.at[leaf] = positive_part ? std::max(0.0, xi.at[leaf]) : std::max(0.0, -xi.at[leaf]);
        for (int lev = tree.levels() - 2; lev >= 0; --lev) {
            for (NodeId n = tree.level_begin[lev]; n < tree.level_begin[lev + 1]; ++n) {
                H.right[n] = conditional_expectation(tree, n, H.at) + a[tree.child(n, 0)];
                H.at[n] = H.right[n] + c[n];
            }
        }
    };
    backfill(out.h, dA, dC, true);
    backfill(out.hp, dAp, dCp, false);
    return out;
}

}  // namespace drbsde
