#pragma once
// Shared helpers for the unit tests: deterministic RNG plus small utilities
// that several test binaries want.

#include <cmath>
#include <vector>

#include "drbsde/process.hpp"
#include "drbsde/random.hpp"
#include "drbsde/stopping.hpp"
#include "drbsde/tree.hpp"

namespace test_support {

using drbsde::Rng;

inline drbsde::LadlagProcess random_ladlag(Rng& rng, const drbsde::ScenarioTree& tree,
                                           double lo = -2.0, double hi = 2.0) {
    drbsde::LadlagProcess p(tree);
    for (drbsde::NodeId n = 0; n < tree.n_nodes(); ++n) {
        p.at[n] = rng.uniform(lo, hi);
        if (!tree.is_terminal(n)) p.right[n] = rng.uniform(lo, hi);
    }
    return p;
}

// Admissible pair with both slots free inside the sandwich (fully irregular).
inline drbsde::AdmissiblePair random_pair(Rng& rng, const drbsde::ScenarioTree& tree,
                                          double span = 2.0) {
    drbsde::AdmissiblePair pair{drbsde::LadlagProcess(tree), drbsde::LadlagProcess(tree)};
    for (drbsde::NodeId n = 0; n < tree.n_nodes(); ++n) {
        if (tree.is_terminal(n)) {
            pair.xi.at[n] = pair.zeta.at[n] = rng.uniform(-span, span);
            continue;
        }
        const double x = rng.uniform(-span, span);
        pair.xi.at[n] = x;
        pair.zeta.at[n] = x + rng.uniform(0.0, span);
        const double xr = rng.uniform(-span, span);
        pair.xi.right[n] = xr;
        pair.zeta.right[n] = xr + rng.uniform(0.0, span);
    }
    return pair;
}

// E[phi_tau] with the stop read at the instant (the plain convention).
inline double expected_at_stop(const drbsde::ScenarioTree& tree, const drbsde::LadlagProcess& phi,
                               const drbsde::StoppingTime& tau) {
    double e = 0.0;
    for (drbsde::NodeId n : drbsde::frontier(tree, tau)) e += tree.path_prob(n) * phi.at[n];
    return e;
}

// Systems read the open-interval value when the stop is "just after".
inline double expected_at_system(const drbsde::ScenarioTree& tree,
                                 const drbsde::LadlagProcess& phi,
                                 const drbsde::StoppingSystem& rho) {
    double e = 0.0;
    for (drbsde::NodeId n : drbsde::frontier(tree, rho.tau))
        e += tree.path_prob(n) * (rho.at_instant[n] ? phi.at[n] : phi.right[n]);
    return e;
}

}  // namespace test_support
