#pragma once
// Reflection above a single ladlag barrier with driver 0: the smallest strong
// supermartingale dominating the barrier, together with the bookkeeping that
// makes it the driver-0 reflected equation.  The interval force A is
// predictable (its increment over (t_i, t_{i+1}] is known at t_i and stored on
// the nodes at t_{i+1}); the instant force C collects the right jumps.

#include "drbsde/process.hpp"

namespace drbsde {

struct RefSolution {
    LadlagProcess x;
    std::vector<double> a_inc;   // per node: increment over the interval ending here (0 at root)
    std::vector<double> c_jump;  // per node: right jump at this instant (0 at terminal)
    std::vector<double> z, k;    // per non-terminal node
    std::vector<double> h_inc;   // per non-root node
    bool jump_degenerate = false;
};

// Backward recursion: X(T) = xi(T); at a non-terminal node with continuation
// c = E[X.at(children)]:  X.right = max(xi.right, c), with A picking up the
// shortfall X.right - c;  X.at = max(xi.at, X.right), with C picking up the
// jump X.at - X.right.  A acts only on strict shortfall, so the Skorokhod
// minimality conditions hold by construction.
RefSolution ref_operator(const ScenarioTree& tree, const LadlagProcess& xi);

// Monotonicity: lo <= hi pointwise (checked, throws otherwise) implies
// ref(lo) <= ref(hi) pointwise.  The recursion composes max and nonnegative
// weighted sums, so the comparison is exact even in floating point.
bool ref_monotone_check(const ScenarioTree& tree, const LadlagProcess& lo,
                        const LadlagProcess& hi);

// For a pointwise nondecreasing sequence with the given pointwise limit:
// checks that ref(seq[i]) is nondecreasing in i, dominated by ref(limit), and
// that the last term is within tol of ref(limit) in sup norm.
bool ref_monotone_limit_check(const ScenarioTree& tree,
                              const std::vector<LadlagProcess>& seq,
                              const LadlagProcess& limit, double tol = 1e-10);

}  // namespace drbsde
