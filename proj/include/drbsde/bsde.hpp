#pragma once
// Backward stochastic difference equations on a scenario tree.  One step is
// implicit in y:  y = E[y_next] + f(t, y, z, k) * dt  with (z, k) the
// projection coefficients of the increment onto (dW, compensated jump); the
// fixed point is found by iteration, which contracts because K * dt < 1 is
// enforced.

#include <functional>
#include <optional>
#include <string>

#include "drbsde/process.hpp"
#include "drbsde/stopping.hpp"
#include "drbsde/tree.hpp"

namespace drbsde {

// Lipschitz driver f(t, y, z, k).  `lipschitz` bounds the sensitivity in
// (y, z) and in k measured against the jump norm sqrt(lambda)*|k|.
// `royer_gamma`, when present, certifies the comparison-theorem inequality
//   f(t,y,z,k1) - f(t,y,z,k2) >= lambda * gamma(t,y,z,k1,k2) * (k1 - k2)
// with gamma > -1; `royer_bound` bounds sqrt(lambda)*|gamma|.
struct Driver {
    std::string name = "custom";
    std::function<double(double, double, double, double)> eval;
    double lipschitz = 0.0;
    std::optional<std::function<double(double, double, double, double, double)>> royer_gamma;
    double royer_bound = 0.0;

    double operator()(double t, double y, double z, double k) const { return eval(t, y, z, k); }
};

struct MarketScalars {
    double r = 0.0, big_r = 0.0;
    double mu[2] = {0.0, 0.0};
    double sigma[2] = {0.0, 0.0};
    double beta[2] = {0.0, 0.0};
    double borrow[2] = {0.0, 0.0};  // repo charge b^i on long positions
    double lend[2] = {0.0, 0.0};    // repo charge l^i on short positions

    // Volatility loading matrix (sigma | beta), row per asset, and derived
    // quantities.  Throws if the matrix is singular.
    void inverse(double inv[2][2]) const;
    // Market price of risk theta = Sigma^{-1} (mu - r 1).
    void risk_premium(double theta[2]) const;
    // Portfolio weights phi' = (z, k) Sigma^{-1}.
    void weights(double z, double k, double phi[2]) const;
};

// Named drivers.  "zero"; "constant" (value); "discount" (f = -rate*y);
// "linear" (a + b*y + c*z + d*k); and the market drivers "perfect",
// "two_rates", "repo" built from MarketScalars.  Lipschitz constants are
// derived symbolically; Royer certificates are supplied where the formula
// admits one (difference quotient clipped at -1 + 1e-9 for the piecewise
// linear market drivers).
Driver make_zero_driver();
Driver make_constant_driver(double value);
Driver make_discount_driver(double rate);
Driver make_linear_driver(double a, double b, double c, double d, double lambda);
Driver make_perfect_driver(const MarketScalars& m, double lambda);
Driver make_two_rates_driver(const MarketScalars& m, double lambda);
Driver make_repo_driver(const MarketScalars& m, double lambda);

// Probe validation: checks the declared Lipschitz bound and, if present, the
// Royer inequality on `probes` random argument pairs.  Returns true when no
// probe violates the declared constants.
bool validate_driver(const Driver& f, double lambda, int probes = 10000,
                     std::uint64_t seed = 0x5eed);

struct StepResult {
    double y = 0.0;
    double z = 0.0;
    double k = 0.0;
    std::vector<double> h;  // residual per child
    bool jump_degenerate = false;
};

// Implicit backward step at node n given one value per child.
StepResult bsde_step(const ScenarioTree& tree, NodeId n, const std::vector<double>& next,
                     const Driver& f);
// Same with a frozen driver value (driver-process case); the step is then
// explicit and exact.
StepResult bsde_step_frozen(const ScenarioTree& tree, NodeId n, const std::vector<double>& next,
                            double f_value);

// Solution of the plain (unreflected) equation.  X has equal slots (no right
// jumps); h_inc holds the orthogonal residual on the edge into each non-root
// node.
struct BSDESolution {
    LadlagProcess x;
    std::vector<double> z, k;    // per non-terminal node
    std::vector<double> h_inc;   // per non-root node
};

BSDESolution bsde_solve(const ScenarioTree& tree, const AdaptedProcess& terminal, const Driver& f);
BSDESolution bsde_solve(const ScenarioTree& tree, const AdaptedProcess& terminal,
                        const AdaptedProcess& driver_process);

// Conditional f-expectation between stopping times theta <= tau: solves the
// equation backward from the tau-frontier (terminal values `payoff`, read at
// the effective stopping nodes) and reports values on every node between the
// frontiers, NaN elsewhere.  Values at the theta-frontier are the
// conditional f-expectations.
AdaptedProcess f_expectation(const ScenarioTree& tree, const StoppingTime& theta,
                             const StoppingTime& tau, const AdaptedProcess& payoff,
                             const Driver& f);

}  // namespace drbsde
