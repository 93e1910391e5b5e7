#pragma once
// Zero-sum stopping games under a nonlinear expectation, solved by brute
// force on small trees.  The first player stops at tau collecting the lower
// barrier, the second at sigma paying the upper one; ties go to the first.
// Stopping systems enlarge the strategy space with "stop just after the
// instant", which is what restores a game value under fully irregular
// barriers.

#include <cstddef>
#include <vector>

#include "drbsde/drbsde.hpp"
#include "drbsde/process.hpp"
#include "drbsde/stopping.hpp"

namespace drbsde {

inline constexpr NodeId kEnumerationNodeCap = 20;

// Exhaustive strategy enumeration (throws above the node cap).  All returned
// objects are canonical: every terminal node marked, terminal stops at the
// instant.
std::vector<StoppingTime> enumerate_stopping_times(const ScenarioTree& tree);
std::vector<StoppingSystem> enumerate_stopping_systems(const ScenarioTree& tree);

// Counting recursions matching the enumerations (no materialization):
// a subtree admits 1 ("stop here") + product over children ("continue")
// stopping times, terminal 1; systems get 2 choices at a non-terminal stop.
std::size_t count_stopping_times(const ScenarioTree& tree, NodeId from);
std::size_t count_stopping_systems(const ScenarioTree& tree, NodeId from);

// Terminal payoff xi_tau on {tau <= sigma}, zeta_sigma on {sigma < tau},
// written at the effective first-stop node of each path; NaN elsewhere.
AdaptedProcess payoff_I(const ScenarioTree& tree, const AdmissiblePair& pair,
                        const StoppingTime& tau, const StoppingTime& sigma);

// Systems variant: at an H^c stop the barrier is read on the open interval
// (the right slot) instead of at the instant.
AdaptedProcess payoff_I_systems(const ScenarioTree& tree, const AdmissiblePair& pair,
                                const StoppingSystem& rho, const StoppingSystem& delta);

// Growth of an f-expectation under a uniform terminal perturbation: an
// epsilon shift of the payoff moves the value by at most this factor times
// epsilon, for K = f.lipschitz over horizon T.
double perturbation_gain(const Driver& f, double horizon);

struct GameReport {
    std::vector<NodeId> theta_nodes;       // evaluation frontier
    std::vector<double> upper, lower;      // per frontier node
    bool has_value = false;                // max |upper - lower| <= 1e-10
    std::size_t n_max_strategies = 0, n_min_strategies = 0;
    std::vector<std::size_t> best_max, best_min;  // optimal strategy index per frontier node
    // criterion[i][j][t]: value at theta_nodes[t] when the maximizer plays
    // strategy i and the minimizer plays strategy j.
    std::vector<std::vector<std::vector<double>>> criterion;
};

// Upper value inf-sup and lower value sup-inf over all enumerated strategies
// at or after theta, evaluated nodewise on the theta frontier.
GameReport game_values(const ScenarioTree& tree, const AdmissiblePair& pair, const Driver& f,
                       const StoppingTime& theta, bool systems);

struct SaddleReport {
    StoppingTime tau, sigma;
    double gain = 0.0;   // slack allowed in the inequalities (L * epsilon)
    bool verified = false;
    double max_upper_violation = 0.0;  // Y_theta - (value when opponent varies) - gain
    double max_lower_violation = 0.0;
};

// First hitting times of Y onto the barrier corridors shrunk by epsilon;
// requires xi right-u.s.c. and zeta right-l.s.c. (else use the systems
// variant).  Verifies the two-sided near-saddle inequalities against every
// enumerated opponent.
SaddleReport epsilon_saddle(const ScenarioTree& tree, const AdmissiblePair& pair, const Driver& f,
                            const StoppingTime& theta, double epsilon);

struct SaddlePointsReport {
    StoppingTime tau_star, sigma_star;  // first barrier contact of Y
    StoppingTime tau_bar, sigma_bar;    // first activity of the reflection forces
    bool order_ok = false;              // tau_star <= tau_bar, sigma_star <= sigma_bar
    double contact_gap = 0.0;           // |Y - zeta| at sigma_star and sigma_bar stops
    bool star_verified = false, bar_verified = false;
    double max_violation = 0.0;         // worst exact-saddle inequality breach
};

// Exact saddle points; requires xi left-u.s.c. along stopping times and
// right-u.s.c., zeta left-l.s.c. along stopping times and right-l.s.c.
SaddlePointsReport saddle_points(const ScenarioTree& tree, const AdmissiblePair& pair,
                                 const Driver& f, const StoppingTime& theta);

struct SystemSaddleReport {
    StoppingSystem rho, delta;
    double gain = 0.0;
    bool verified = false;
    double max_upper_violation = 0.0;
    double max_lower_violation = 0.0;
    double barrier_bound_gap = 0.0;  // violation of Y_rho <= xi^u_rho + eps (and dual)
};

// Fully irregular barriers: the hit may occur on an open interval, in which
// case the stop is "just after" the instant (H^c).
SystemSaddleReport system_epsilon_saddle(const ScenarioTree& tree, const AdmissiblePair& pair,
                                         const Driver& f, const StoppingTime& theta,
                                         double epsilon);

}  // namespace drbsde
