#pragma once
// The doubly reflected equation: Y squeezed between a lower barrier xi and an
// upper barrier zeta, with four reflection forces.  A / A' act on intervals
// (predictable, mutually singular), C / C' act on instants (right jumps,
// mutually singular).  Three independent solvers are provided and must agree:
//
//   solve_direct               one backward sweep with clamping,
//   solve_picard_driver_process  the coupled pair of single-barrier
//                              reflections iterated from zero (driver a
//                              process, no (y,z,k) feedback),
//   solve_fixed_point          outer freezing of a Lipschitz driver into a
//                              process, inner Picard solve.

#include "drbsde/bsde.hpp"
#include "drbsde/process.hpp"
#include "drbsde/rbsde.hpp"

namespace drbsde {

struct DRBSDESolution {
    LadlagProcess y;
    std::vector<double> z, k;                // per non-terminal node
    std::vector<double> h_inc;               // per non-root node
    std::vector<double> a_inc, ap_inc;       // per node: interval force ending here (0 at root)
    std::vector<double> c_jump, cp_jump;     // per node: right jump here (0 at terminal)
    bool jump_degenerate = false;
};

DRBSDESolution solve_direct(const ScenarioTree& tree, const AdmissiblePair& pair, const Driver& f);
DRBSDESolution solve_direct(const ScenarioTree& tree, const AdmissiblePair& pair,
                            const AdaptedProcess& driver_process);

// Introspection of the Picard iteration (the iterates are exposed because
// their monotonicity is a checkable property, not an implementation detail).
struct PicardTrace {
    std::vector<LadlagProcess> x_iterates;   // lower-reflection iterates, from X^0 = 0
    std::vector<LadlagProcess> xp_iterates;  // upper-reflection iterates
    int iterations = 0;
    double final_change = 0.0;
};

DRBSDESolution solve_picard_driver_process(const ScenarioTree& tree, const AdmissiblePair& pair,
                                           const AdaptedProcess& driver_process,
                                           PicardTrace* trace = nullptr, double tol = 1e-12,
                                           int max_iterations = 100000);

enum class FixedPointInit { Zero, TerminalPropagated };

// Outer iteration: freeze f along the current iterate's (continuation, Z, k)
// into a driver process, solve, refreeze.  Stops when the frozen process
// stops moving (sup change <= tol); the value alone can stall earlier while
// reflections are pinning it, so the process is what is watched.
// `outer_iterations`, when non-null, receives the number of inner solves.
DRBSDESolution solve_fixed_point(const ScenarioTree& tree, const AdmissiblePair& pair,
                                 const Driver& f, FixedPointInit init = FixedPointInit::Zero,
                                 double tol = 1e-11, int max_iterations = 10000,
                                 int* outer_iterations = nullptr);

// Max violation of each defining condition; a solution produced by any of the
// solvers reports all entries <= 1e-10 (most are exactly 0).
struct VerifyReport {
    double terminal = 0.0;      // Y(T) = xi(T)
    double sandwich = 0.0;      // xi <= Y <= zeta on both slots
    double dynamics = 0.0;      // per-edge budget identity
    double skorokhod_a = 0.0;   // A charges only when Y_- sits on xi_-
    double skorokhod_ap = 0.0;  // A' charges only when Y_- sits on zeta_-
    double skorokhod_c = 0.0;   // C charges only when Y.at = xi.at
    double skorokhod_cp = 0.0;  // C' charges only when Y.at = zeta.at
    double singular_a = 0.0;    // min(dA, dA') = 0 per node
    double singular_c = 0.0;    // min(dC, dC') = 0 per node
    double right_jump = 0.0;    // dC = (Y.right - Y.at)^-, dC' = (Y.right - Y.at)^+
    double clamp = 0.0;         // Y.at = (Y.right v xi.at) ^ zeta.at
    double nonneg = 0.0;        // all four forces >= 0

    double max_violation() const;
    bool pass(double tol = 1e-10) const { return max_violation() <= tol; }
};

VerifyReport verify_solution(const ScenarioTree& tree, const DRBSDESolution& sol,
                             const AdmissiblePair& pair, const Driver& f);
VerifyReport verify_solution(const ScenarioTree& tree, const DRBSDESolution& sol,
                             const AdmissiblePair& pair, const AdaptedProcess& driver_process);

// Comparison: requires pair2 <= pair1 on both slots of both barriers and
// f2 <= f1 along (Y^2, Z^2, k^2), both drivers carrying a one-jump comparison
// certificate.  Returns whether Y^2 <= Y^1 + tol pointwise.
bool compare(const ScenarioTree& tree, const DRBSDESolution& sol1, const AdmissiblePair& pair1,
             const Driver& f1, const DRBSDESolution& sol2, const AdmissiblePair& pair2,
             const Driver& f2, double tol = 1e-12);

// Spread estimate between two solutions: at every node theta,
//   (Y1 - Y2)^2(theta) <= e^{beta (T-theta)} E[ sup-along-path (xi1-xi2)^2
//                         + sup-along-path (zeta1-zeta2)^2 | theta ]
//                         + eta E[ int_theta^T e^{beta (s-theta)} df_s^2 ds | theta ]
// with df the driver gap evaluated along the second solution's arguments,
// beta = 3/eta + 2c and eta = 1/c^2.  The path sups include both slots (a
// continuous-time stop may land inside an interval).
struct AprioriReport {
    double c = 0.0, eta = 0.0, beta = 0.0;
    double max_relative_violation = 0.0;  // max over nodes of (lhs-rhs)/max(1, rhs)
    bool pass(double tol = 1e-8) const { return max_relative_violation <= tol; }
};

// Constant c for the estimate: max of both drivers' Lipschitz and jump
// comparison bounds, floored at 1.
double apriori_constant(const Driver& f1, const Driver& f2);

// General form; throws unless beta >= 3/eta + 2c and eta <= 1/c^2.
AprioriReport apriori_check(const ScenarioTree& tree, const DRBSDESolution& sol1,
                            const AdmissiblePair& pair1, const Driver& f1,
                            const DRBSDESolution& sol2, const AdmissiblePair& pair2,
                            const Driver& f2, double beta, double eta, double c);

// Tight parameter choice eta = 1/c^2, beta = 3/eta + 2c.
AprioriReport apriori_check(const ScenarioTree& tree, const DRBSDESolution& sol1,
                            const AdmissiblePair& pair1, const Driver& f1,
                            const DRBSDESolution& sol2, const AdmissiblePair& pair2,
                            const Driver& f2, double c);

}  // namespace drbsde
