#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "drbsde/bsde.hpp"
#include "support/testgen.hpp"

using namespace drbsde;

namespace {

AdaptedProcess random_terminal(test_support::Rng& rng, const ScenarioTree& tree, double lo,
                               double hi) {
    AdaptedProcess t(tree.n_nodes(), 0.0);
    for (NodeId leaf : tree.terminal_nodes()) t[leaf] = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("one implicit step") {
    auto tree = build_tree(TimeGrid::uniform(0.5, 1), 0.0, Branching::Three);

    std::vector<double> next(tree.n_children(0), 4.0);
    auto st = bsde_step(tree, 0, next, make_zero_driver());
    CHECK(st.y == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(st.z == doctest::Approx(0.0));
    CHECK(st.k == 0.0);

    // f = -y, dt = 1/2, next deterministic 1:  y = 1 - y/2, so y = 2/3.
    std::fill(next.begin(), next.end(), 1.0);
    st = bsde_step(tree, 0, next, make_linear_driver(0.0, -1.0, 0.0, 0.0, 0.0));
    CHECK(st.y == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("contraction precondition") {
    auto tree = build_tree(TimeGrid::uniform(0.5, 1), 0.0, Branching::Three);
    std::vector<double> next(tree.n_children(0), 1.0);
    auto too_stiff = make_linear_driver(0.0, -3.0, 0.0, 0.0, 0.0);  // K*dt = 1.5
    CHECK_THROWS_AS(bsde_step(tree, 0, next, too_stiff), std::invalid_argument);
}

TEST_CASE("constant terminal, zero driver: martingale of a constant") {
    auto tree = build_tree(TimeGrid::uniform(1.0, 3), 0.7, Branching::Four);
    AdaptedProcess terminal(tree.n_nodes(), 0.0);
    for (NodeId leaf : tree.terminal_nodes()) terminal[leaf] = -2.5;
    auto sol = bsde_solve(tree, terminal, make_zero_driver());
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        CHECK(sol.x.at[n] == doctest::Approx(-2.5).epsilon(1e-14));
        if (!tree.is_terminal(n)) CHECK(sol.z[n] == doctest::Approx(0.0));
    }
}

TEST_CASE("discount driver reproduces the closed-form compound factor") {
    // f = -r y over 4 uniform steps: the implicit scheme discounts by
    // exactly (1 + r dt)^(-4).
    const double r = 0.1, T = 1.0;
    auto tree = build_tree(TimeGrid::uniform(T, 4), 0.0, Branching::Three);
    AdaptedProcess terminal(tree.n_nodes(), 0.0);
    for (NodeId leaf : tree.terminal_nodes()) terminal[leaf] = 1.0;
    auto sol = bsde_solve(tree, terminal, make_discount_driver(r));
    const double expect = std::pow(1.0 + r * 0.25, -4);
    CHECK(sol.x.at[0] == doctest::Approx(expect).epsilon(1e-12));

    // Random terminal: discounting commutes with the expectation.
    test_support::Rng rng(61);
    terminal = random_terminal(rng, tree, -2.0, 5.0);
    sol = bsde_solve(tree, terminal, make_discount_driver(r));
    double e = 0.0;
    for (NodeId leaf : tree.terminal_nodes()) e += tree.path_prob(leaf) * terminal[leaf];
    CHECK(sol.x.at[0] == doctest::Approx(e * expect).epsilon(1e-12));
}

TEST_CASE("flat driver adds the deterministic integral") {
    auto tree = build_tree(TimeGrid({0.0, 0.3, 0.45, 1.0}), 0.9, Branching::Three);
    test_support::Rng rng(62);
    AdaptedProcess terminal = random_terminal(rng, tree, -1.0, 1.0);
    const double c = 0.37;
    auto sol = bsde_solve(tree, terminal, make_constant_driver(c));
    double e = 0.0;
    for (NodeId leaf : tree.terminal_nodes()) e += tree.path_prob(leaf) * terminal[leaf];
    CHECK(sol.x.at[0] == doctest::Approx(e + c * 1.0).epsilon(1e-12));
}

TEST_CASE("per-edge dynamics identity") {
    auto tree = build_tree(TimeGrid::uniform(0.8, 3), 1.1, Branching::Four);
    test_support::Rng rng(63);
    AdaptedProcess terminal = random_terminal(rng, tree, -3.0, 3.0);
    auto f = make_linear_driver(0.2, -0.4, 0.3, 0.25, 1.1);
    auto sol = bsde_solve(tree, terminal, f);
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        if (tree.is_terminal(n)) continue;
        const double dt = tree.dt_after(n);
        const double fv = f(tree.time_of(n), sol.x.at[n], sol.z[n], sol.k[n]);
        for (int j = 0; j < tree.n_children(n); ++j) {
            NodeId ch = tree.child(n, j);
            const double res = sol.x.at[n] -
                               (sol.x.at[ch] + fv * dt - sol.z[n] * tree.dw(ch) -
                                sol.k[n] * tree.compensated_jump(ch) - sol.h_inc[ch]);
            CHECK(std::abs(res) < 1e-11);
        }
    }
}

TEST_CASE("linear z-driver equals the expectation under tilted branch probabilities") {
    // Oracle: the implicit step with f = -r y - theta1 z - theta2 k equals a
    // plain discounted expectation after tilting each child weight by
    //   1 - theta1 dW - theta2 Nt / (lambda (1 - lambda dt)).
    MarketScalars m;
    m.r = 0.03;
    m.mu[0] = 0.05;
    m.mu[1] = 0.04;
    m.sigma[0] = 0.3;
    m.sigma[1] = 0.0;
    m.beta[0] = 0.1;
    m.beta[1] = 0.5;
    double theta[2];
    m.risk_premium(theta);

    for (double lambda : {0.0, 0.8}) {
        auto tree = build_tree(TimeGrid::uniform(1.0, 3), lambda, Branching::Three);
        test_support::Rng rng(64);
        AdaptedProcess terminal = random_terminal(rng, tree, 0.5, 2.0);
        auto sol = bsde_solve(tree, terminal, make_perfect_driver(m, lambda));

        AdaptedProcess v = terminal;
        for (int lvl = tree.levels() - 2; lvl >= 0; --lvl)
            for (NodeId n = tree.level_begin[lvl]; n < tree.level_begin[lvl + 1]; ++n) {
                const double dt = tree.dt_after(n);
                double e = 0.0;
                for (int j = 0; j < tree.n_children(n); ++j) {
                    NodeId c = tree.child(n, j);
                    double tilt = 1.0 - theta[0] * tree.dw(c);
                    if (lambda > 0.0)
                        tilt -= theta[1] * tree.compensated_jump(c) /
                                (lambda * (1.0 - lambda * dt));
                    REQUIRE(tilt > 0.0);
                    e += tree.cond_prob(c) * tilt * v[c];
                }
                v[n] = e / (1.0 + m.r * dt);
            }
        CHECK(sol.x.at[0] == doctest::Approx(v[0]).epsilon(1e-12));
    }
}

TEST_CASE("driver library degenerations") {
    MarketScalars flat;
    flat.r = 0.0;
    flat.mu[0] = 0.0;
    flat.mu[1] = 0.0;
    flat.sigma[0] = 0.2;
    flat.sigma[1] = 0.1;
    flat.beta[0] = 0.0;
    flat.beta[1] = 0.4;
    auto perfect = make_perfect_driver(flat, 0.5);
    test_support::Rng rng(65);
    for (int i = 0; i < 200; ++i) {
        const double y = rng.uniform(-5, 5), z = rng.uniform(-5, 5), k = rng.uniform(-5, 5);
        CHECK(perfect(0.0, y, z, k) == doctest::Approx(0.0));
    }

    MarketScalars m = flat;
    m.r = 0.04;
    m.big_r = 0.04;
    m.mu[0] = 0.06;
    m.mu[1] = 0.05;
    auto p = make_perfect_driver(m, 0.5);
    auto tr = make_two_rates_driver(m, 0.5);
    for (int i = 0; i < 200; ++i) {
        const double y = rng.uniform(-5, 5), z = rng.uniform(-5, 5), k = rng.uniform(-5, 5);
        CHECK(tr(0.1, y, z, k) == doctest::Approx(p(0.1, y, z, k)).epsilon(1e-13));
    }

    m.big_r = 0.03;  // R < r
    CHECK_THROWS_AS(make_two_rates_driver(m, 0.5), std::invalid_argument);

    MarketScalars singular = m;
    singular.sigma[1] = 0.2;
    singular.beta[1] = 0.0;  // second row proportional to the first
    singular.sigma[0] = 0.2;
    singular.beta[0] = 0.0;
    CHECK_THROWS_AS(make_perfect_driver(singular, 0.5), std::invalid_argument);
}

TEST_CASE("declared constants hold on probes") {
    MarketScalars m;
    m.r = 0.05;
    m.big_r = 0.09;
    m.mu[0] = 0.08;
    m.mu[1] = 0.03;
    m.sigma[0] = 0.25;
    m.sigma[1] = -0.1;
    m.beta[0] = 0.15;
    m.beta[1] = 0.45;
    m.borrow[0] = 0.01;
    m.borrow[1] = 0.02;
    m.lend[0] = 0.015;
    m.lend[1] = 0.005;
    for (double lambda : {0.0, 0.6}) {
        CHECK(validate_driver(make_zero_driver(), lambda, 2000));
        CHECK(validate_driver(make_constant_driver(1.7), lambda, 2000));
        CHECK(validate_driver(make_discount_driver(0.08), lambda, 2000));
        CHECK(validate_driver(make_linear_driver(0.3, -0.5, 0.4, 0.2 * lambda, lambda), lambda,
                              2000));
        CHECK(validate_driver(make_perfect_driver(m, lambda), lambda, 2000));
        CHECK(validate_driver(make_two_rates_driver(m, lambda), lambda, 2000));
        CHECK(validate_driver(make_repo_driver(m, lambda), lambda, 2000));
    }

    auto lying = make_linear_driver(0.0, -2.0, 0.0, 0.0, 0.0);
    lying.lipschitz = 0.5;  // understated on purpose
    CHECK_FALSE(validate_driver(lying, 0.0, 2000));
}

TEST_CASE("solution comparison under ordered terminals and drivers") {
    auto tree = build_tree(TimeGrid::uniform(0.7, 3), 1.2, Branching::Three);
    test_support::Rng rng(66);
    auto f_hi = make_linear_driver(0.2, -0.3, 0.25, 0.3, 1.2);   // gamma = 0.25 > -1
    auto f_lo = make_linear_driver(-0.1, -0.3, 0.25, 0.3, 1.2);  // same slopes, lower constant
    for (int rep = 0; rep < 25; ++rep) {
        AdaptedProcess hi = random_terminal(rng, tree, -2.0, 2.0);
        AdaptedProcess lo = hi;
        for (NodeId leaf : tree.terminal_nodes()) lo[leaf] -= rng.uniform(0.0, 1.5);
        auto sol_hi = bsde_solve(tree, hi, f_hi);
        auto sol_lo = bsde_solve(tree, lo, f_lo);
        for (NodeId n = 0; n < tree.n_nodes(); ++n)
            CHECK(sol_lo.x.at[n] <= sol_hi.x.at[n] + 1e-12);
    }
}

TEST_CASE("uniform payoff shift moves the value by at most the stability gain") {
    auto tree = build_tree(TimeGrid::uniform(1.0, 4), 0.9, Branching::Three);
    test_support::Rng rng(67);
    for (int rep = 0; rep < 20; ++rep) {
        auto f = make_linear_driver(rng.uniform(-0.5, 0.5), rng.uniform(-0.45, 0.45),
                                    rng.uniform(-0.45, 0.45), rng.uniform(-0.4, 0.4), 0.9);
        const double K = f.lipschitz;
        const double gain = std::exp((1.0 + 2.0 * K + K * K) * 1.0);
        AdaptedProcess base = random_terminal(rng, tree, -2.0, 2.0);
        const double eps = rng.uniform(0.01, 0.5);
        AdaptedProcess bumped = base;
        for (NodeId leaf : tree.terminal_nodes()) bumped[leaf] += eps;
        const double v0 = bsde_solve(tree, base, f).x.at[0];
        const double v1 = bsde_solve(tree, bumped, f).x.at[0];
        CHECK(std::abs(v1 - v0) <= gain * eps * (1.0 + 1e-12));
    }
}

TEST_CASE("conditional f-expectation between stopping times") {
    auto tree = build_tree(TimeGrid::uniform(0.9, 3), 0.0, Branching::Three);
    test_support::Rng rng(68);

    // theta = tau: identity on the frontier.
    auto tau = StoppingTime::at_level(tree, 1);
    AdaptedProcess payoff(tree.n_nodes(), std::nan(""));
    for (NodeId n : frontier(tree, tau)) payoff[n] = rng.uniform(-1.0, 1.0);
    auto same = f_expectation(tree, tau, tau, payoff, make_zero_driver());
    for (NodeId n : frontier(tree, tau)) CHECK(same[n] == doctest::Approx(payoff[n]));

    // f = 0, theta = 0, tau = T: plain expectation.
    auto root = StoppingTime::at_root(tree);
    auto top = StoppingTime::at_terminal(tree);
    AdaptedProcess terminal = random_terminal(rng, tree, -2.0, 2.0);
    auto vals = f_expectation(tree, root, top, terminal, make_zero_driver());
    double e = 0.0;
    for (NodeId leaf : tree.terminal_nodes()) e += tree.path_prob(leaf) * terminal[leaf];
    CHECK(vals[0] == doctest::Approx(e).epsilon(1e-13));

    CHECK_THROWS_AS(f_expectation(tree, top, root, terminal, make_zero_driver()),
                    std::invalid_argument);
}

TEST_CASE("two-rates value sits between the pure-rate discountings") {
    // mu = r 1 kills the risk premium; with a deterministic claim the
    // borrowing term never activates, so the value equals the r-discounted
    // expectation and in particular lies in the [R, r] discounting bracket.
    MarketScalars m;
    m.r = 0.02;
    m.big_r = 0.08;
    m.mu[0] = 0.02;
    m.mu[1] = 0.02;
    m.sigma[0] = 0.2;
    m.sigma[1] = 0.0;
    m.beta[0] = 0.0;
    m.beta[1] = 0.3;
    auto tree = build_tree(TimeGrid::uniform(1.0, 4), 0.0, Branching::Three);
    AdaptedProcess terminal(tree.n_nodes(), 0.0);
    for (NodeId leaf : tree.terminal_nodes()) terminal[leaf] = 1.5;

    const double v = bsde_solve(tree, terminal, make_two_rates_driver(m, 0.0)).x.at[0];
    const double v_r = bsde_solve(tree, terminal, make_discount_driver(m.r)).x.at[0];
    const double v_R = bsde_solve(tree, terminal, make_discount_driver(m.big_r)).x.at[0];
    CHECK(v_R <= v + 1e-12);
    CHECK(v <= v_r + 1e-12);
    CHECK(v == doctest::Approx(v_r).epsilon(1e-12));

    // A genuinely random claim can force borrowing, which only raises the
    // seller's value above the cheap-rate discounting.
    test_support::Rng rng(69);
    AdaptedProcess wild = random_terminal(rng, tree, -2.0, 2.0);
    const double w = bsde_solve(tree, wild, make_two_rates_driver(m, 0.0)).x.at[0];
    const double w_r = bsde_solve(tree, wild, make_discount_driver(m.r)).x.at[0];
    CHECK(w >= w_r - 1e-12);
}
