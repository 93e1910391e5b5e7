#pragma once
// Ladlag (limits from the left and right, neither continuity assumed)
// processes on a scenario tree.  A process holds two slots per node: `at` is
// the value at the grid instant, `right` the constant value on the open
// interval up to the next instant.  Terminal nodes carry only `at`; their
// `right` slot is NaN and must not be read.
//
// All irregularity of the continuous-time objects is carried by at/right
// disagreement; between instants nothing moves and no information arrives.

#include <cmath>
#include <vector>

#include "drbsde/tree.hpp"

namespace drbsde {

struct LadlagProcess {
    std::vector<double> at;
    std::vector<double> right;

    LadlagProcess() = default;
    explicit LadlagProcess(const ScenarioTree& tree, double fill = 0.0)
        : at(tree.n_nodes(), fill), right(tree.n_nodes(), fill) {
        for (NodeId n : tree.terminal_nodes()) right[n] = std::nan("");
    }

    std::size_t size() const { return at.size(); }
};

// Left limit at the instant of node n: the value held on the interval ending
// at n, i.e. the parent's right slot.  Throws at the root (no left limit).
double left_limit(const ScenarioTree& tree, const LadlagProcess& phi, NodeId n);

// Right limit at the instant of node n: the interval value right(n).  Throws
// at terminal nodes.
double right_envelope(const ScenarioTree& tree, const LadlagProcess& phi, NodeId n);

struct RegularityFlags {
    bool right_usc = true;            // at >= right everywhere
    bool right_lsc = true;            // at <= right everywhere
    bool right_continuous = true;     // at == right everywhere
    bool left_usc_along_st = true;    // at >= left limit at every non-root node
    bool left_lsc_along_st = true;    // at <= left limit at every non-root node
};

RegularityFlags regularity(const ScenarioTree& tree, const LadlagProcess& phi);

// Strong supermartingale on the grid: at every non-terminal node
//   at(n) >= right(n) and right(n) >= E[at(children) | n].
bool is_strong_supermartingale(const ScenarioTree& tree, const LadlagProcess& phi,
                               double tol = 0.0);

// Mertens decomposition of a strong supermartingale X:
//   X_t = M_t - A_t - C_{t-}
// with M a martingale, A nondecreasing predictable (increment attributed to
// the instant closing each interval, stored per non-root node) and C
// nondecreasing, charging the right jumps at instants (stored per
// non-terminal node).  Throws if X is not a strong supermartingale.
struct MertensDecomposition {
    AdaptedProcess martingale;    // M at instants
    std::vector<double> a_inc;    // per node: increment of A over the interval ending here
    std::vector<double> c_jump;   // per node: jump of C at this instant
};

MertensDecomposition mertens_decompose(const ScenarioTree& tree, const LadlagProcess& x,
                                       double tol = 1e-12);

// Barriers for reflected equations: xi <= zeta on both slots and xi_T = zeta_T.
struct AdmissiblePair {
    LadlagProcess xi;
    LadlagProcess zeta;
};

// Throws with a description if the pair is not admissible.
void validate_admissible(const ScenarioTree& tree, const AdmissiblePair& pair);

// Two nonnegative strong supermartingales H, Hp with xi <= H - Hp <= zeta.
// The construction decomposes xi into a martingale plus predictable interval
// drift plus right jumps, splits each increment into mutually singular
// nondecreasing parts, and compensates them so that H - Hp = xi exactly.
struct SupermartingalePair {
    LadlagProcess h;
    LadlagProcess hp;
};

SupermartingalePair mokobodzki_construct(const ScenarioTree& tree, const AdmissiblePair& pair);

}  // namespace drbsde
