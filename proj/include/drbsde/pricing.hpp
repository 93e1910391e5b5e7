#pragma once
// Game options on the tree: a riskless account, two risky assets driven by
// the common Brownian and jump increments, a nonlinear wealth equation, and
// the seller's price with its superhedge.  The buyer exercises at tau
// collecting xi, the seller cancels at sigma paying zeta.

#include <string>
#include <vector>

#include "drbsde/drbsde.hpp"
#include "drbsde/dynkin.hpp"

namespace drbsde {

struct MarketModel {
    MarketScalars params;
    double lambda = 0.0;
    AdaptedProcess bond;    // riskless account, compounded once per step
    AdaptedProcess s1, s2;  // risky assets, exact multiplicative updates
};

// Forward-simulates the three assets.  Throws on a singular volatility
// matrix, a jump loading <= -1, or a nonpositive price on any path.
MarketModel build_market(const ScenarioTree& tree, const MarketScalars& params,
                         double bond0 = 1.0, double s1_0 = 1.0, double s2_0 = 1.0);

// Same tree with child probabilities tilted by the market price of risk, so
// that discounting at r prices both assets linearly.  Under the tilt the
// frictionless nonlinear price reduces to a classical expected value; used as
// an independent oracle.  Throws if a tilted probability leaves (0, 1).
ScenarioTree risk_neutral_retilt(const ScenarioTree& tree, const MarketScalars& params);

// Wealth with strategy given through its projection pair (Z, k):
//   X(child) = X(n) - f(t_n, X(n), Z_n, k_n) dt + Z_n dW + k_n dN~.
AdaptedProcess wealth_forward(const ScenarioTree& tree, double x, const std::vector<double>& z,
                              const std::vector<double>& k, const Driver& f);

struct HedgePlan {
    double x = 0.0;                  // initial wealth
    std::vector<double> phi1, phi2;  // risky positions per non-terminal node
    StoppingTime cancel;
};

struct GameOptionPrice {
    double u0 = 0.0;
    DRBSDESolution solution;
    bool hedge_available = false;
    std::string hedge_note;          // reason when no plan is produced
    HedgePlan plan_first_contact;    // cancels when Y first sits on zeta
    HedgePlan plan_first_force;      // cancels when the upper forces first act
};

// Seller's price u0 = Y_0 of the reflected equation; always returned.  The
// hedge plans additionally need xi right-u.s.c., zeta right-l.s.c. and
// l.s.c. from the left along stopping times, and the Three branching (the
// orthogonal residual must vanish for the wealth equation to replicate).
GameOptionPrice price_game_option(const ScenarioTree& tree, const AdmissiblePair& pair,
                                  const MarketModel& model, const Driver& f);

struct SuperhedgeReport {
    bool passed = false;
    double worst_floor_gap = 0.0;   // max of xi.at - X over nodes up to the cancel
    double worst_cancel_gap = 0.0;  // max of zeta.at - X on the cancel frontier
    NodeId first_failure = kNoNode;
};

// Forward-simulates wealth from x and checks the seller's two obligations
// pathwise: X >= xi.at on every node up to the cancel time, X >= zeta.at on
// the cancel frontier.
SuperhedgeReport superhedge_verify(const ScenarioTree& tree, const AdmissiblePair& pair, double x,
                                   const std::vector<double>& z, const std::vector<double>& k,
                                   const StoppingTime& cancel, const Driver& f, double tol = 1e-9);

// Payoff builders on top of a simulated market.
//   "basket":       xi = (S1 - strike)^+ * h(S2), zeta = penalty * (S1 - strike)^+
//                   before T, with h a step function of height h_low / h_high
//                   at `threshold` valued in [0, penalty];
//   "barrier_call": xi = (S1 - strike)^+ while the running minimum of S1
//                   stays >= `barrier`, zeta = (S1 - strike)^+ + `fee` before
//                   T.  The knocked-out right slot uses the strict comparison
//                   (a minimum sitting exactly on the barrier is lost just
//                   after the instant), which makes xi right-u.s.c.
// Both force zeta_T = xi_T.
struct BuilderParams {
    double strike = 1.0;
    double penalty = 1.0;   // basket: zeta multiplier bound; also caps h
    double h_low = 0.0, h_high = 1.0, threshold = 1.0;
    double barrier = 0.0;   // barrier_call: knock-out level, strike > barrier >= 0
    double fee = 0.1;       // barrier_call: cancellation fee
};

AdmissiblePair build_payoff(const std::string& name, const BuilderParams& params,
                            const ScenarioTree& tree, const MarketModel& model);

}  // namespace drbsde
