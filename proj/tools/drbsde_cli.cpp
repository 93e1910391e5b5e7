// Command-line front end: scenario in, deterministic artifacts out.
// Exit codes: 0 all checks pass, 2 an invariant check failed, 1 usage or
// configuration error.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "drbsde/dynkin.hpp"
#include "drbsde/scenario.hpp"

namespace fs = std::filesystem;
using namespace drbsde;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitViolation = 2;

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const ordered_json& j) {
    write_text(path, j.dump(2) + "\n");
}

ordered_json verify_to_json(const VerifyReport& v) {
    ordered_json j;
    j["terminal"] = v.terminal;
    j["sandwich"] = v.sandwich;
    j["dynamics"] = v.dynamics;
    j["skorokhod_a"] = v.skorokhod_a;
    j["skorokhod_ap"] = v.skorokhod_ap;
    j["skorokhod_c"] = v.skorokhod_c;
    j["skorokhod_cp"] = v.skorokhod_cp;
    j["singular_a"] = v.singular_a;
    j["singular_c"] = v.singular_c;
    j["right_jump"] = v.right_jump;
    j["clamp"] = v.clamp;
    j["nonneg"] = v.nonneg;
    j["max_violation"] = v.max_violation();
    j["pass"] = v.pass();
    return j;
}

DRBSDESolution solve_scenario(const Scenario& s) {
    return s.driver_is_process ? solve_direct(s.tree, s.pair, s.driver_process)
                               : solve_direct(s.tree, s.pair, s.driver);
}

VerifyReport verify_scenario(const Scenario& s, const DRBSDESolution& sol) {
    return s.driver_is_process ? verify_solution(s.tree, sol, s.pair, s.driver_process)
                               : verify_solution(s.tree, sol, s.pair, s.driver);
}

int cmd_solve(const std::string& scenario_path, const std::string& out_dir) {
    const Scenario s = load_scenario(scenario_path);
    const DRBSDESolution sol = solve_scenario(s);
    const VerifyReport verify = verify_scenario(s, sol);
    fs::create_directories(out_dir);
    write_solution_csv((fs::path(out_dir) / "solution.csv").string(), s.tree, sol);
    ordered_json j;
    j["command"] = "solve";
    j["y0"] = sol.y.at[s.tree.root()];
    j["nodes"] = s.tree.n_nodes();
    j["jump_degenerate"] = sol.jump_degenerate;
    j["verify"] = verify_to_json(verify);
    write_json(fs::path(out_dir) / "report.json", j);
    return verify.pass() ? kExitOk : kExitViolation;
}

int cmd_ref(const std::string& scenario_path, const std::string& out_dir) {
    const Scenario s = load_scenario(scenario_path);
    const RefSolution ref = ref_operator(s.tree, s.pair.xi);
    fs::create_directories(out_dir);
    std::string csv = "node,x_at,x_right,a_inc,c_jump,z,k\n";
    for (NodeId n = 0; n < s.tree.n_nodes(); ++n) {
        csv += std::to_string(n) + ',' + format_double(ref.x.at[n]) + ',' +
               format_double(ref.x.right[n]) + ',' + format_double(ref.a_inc[n]) + ',' +
               format_double(ref.c_jump[n]) + ',' + format_double(ref.z[n]) + ',' +
               format_double(ref.k[n]) + '\n';
    }
    write_text(fs::path(out_dir) / "ref.csv", csv);
    ordered_json j;
    j["command"] = "ref";
    j["x0"] = ref.x.at[s.tree.root()];
    j["jump_degenerate"] = ref.jump_degenerate;
    write_json(fs::path(out_dir) / "report.json", j);
    return kExitOk;
}

int cmd_verify(const std::string& scenario_path, const std::string& out_dir) {
    const Scenario s = load_scenario(scenario_path);
    const DRBSDESolution sol =
        read_solution_csv((fs::path(out_dir) / "solution.csv").string(), s.tree);
    const VerifyReport verify = verify_scenario(s, sol);
    ordered_json j;
    j["command"] = "verify";
    j["verify"] = verify_to_json(verify);
    write_json(fs::path(out_dir) / "verify.json", j);
    return verify.pass() ? kExitOk : kExitViolation;
}

int cmd_game(const Scenario& s, const std::string& out_dir, bool systems, double epsilon,
             const std::string& theta_spec) {
    if (s.driver_is_process)
        throw std::runtime_error("the game commands need a driver, not a driver process");
    const StoppingTime theta = parse_theta(s.tree, theta_spec);
    const GameReport game = game_values(s.tree, s.pair, s.driver, theta, systems);
    const DRBSDESolution sol = solve_direct(s.tree, s.pair, s.driver);

    fs::create_directories(out_dir);
    ordered_json j;
    j["command"] = "game";
    j["systems"] = systems;
    j["theta"] = theta_spec;
    j["theta_nodes"] = game.theta_nodes;
    j["upper"] = game.upper;
    j["lower"] = game.lower;
    j["has_value"] = game.has_value;
    ordered_json y_theta = ordered_json::array();
    double value_gap = 0.0, order_gap = 0.0;
    for (std::size_t t = 0; t < game.theta_nodes.size(); ++t) {
        const double y = sol.y.at[game.theta_nodes[t]];
        y_theta.push_back(y);
        value_gap = std::max({value_gap, std::abs(game.upper[t] - y),
                              std::abs(game.lower[t] - y)});
        order_gap = std::max(order_gap, game.lower[t] - game.upper[t]);
    }
    j["y_at_theta"] = y_theta;
    j["value_matches_y"] = value_gap <= 1e-10;
    j["value_gap"] = value_gap;
    j["n_strategies"] = game.n_max_strategies;

    if (epsilon > 0.0) {
        try {
            if (systems) {
                const SystemSaddleReport sad =
                    system_epsilon_saddle(s.tree, s.pair, s.driver, theta, epsilon);
                j["saddle"] = {{"kind", "system"},
                               {"epsilon", epsilon},
                               {"gain", sad.gain},
                               {"verified", sad.verified},
                               {"max_upper_violation", sad.max_upper_violation},
                               {"max_lower_violation", sad.max_lower_violation}};
                if (!sad.verified) order_gap = std::max(order_gap, 1.0);
            } else {
                const SaddleReport sad = epsilon_saddle(s.tree, s.pair, s.driver, theta, epsilon);
                j["saddle"] = {{"kind", "plain"},
                               {"epsilon", epsilon},
                               {"gain", sad.gain},
                               {"verified", sad.verified},
                               {"max_upper_violation", sad.max_upper_violation},
                               {"max_lower_violation", sad.max_lower_violation}};
                if (!sad.verified) order_gap = std::max(order_gap, 1.0);
            }
        } catch (const std::invalid_argument& e) {
            j["saddle"] = {{"skipped", e.what()}};
        }
    }
    write_json(fs::path(out_dir) / "game.json", j);

    std::string csv = "max_strategy,min_strategy,theta_node,value\n";
    for (std::size_t i = 0; i < game.criterion.size(); ++i)
        for (std::size_t jj = 0; jj < game.criterion[i].size(); ++jj)
            for (std::size_t t = 0; t < game.criterion[i][jj].size(); ++t)
                csv += std::to_string(i) + ',' + std::to_string(jj) + ',' +
                       std::to_string(game.theta_nodes[t]) + ',' +
                       format_double(game.criterion[i][jj][t]) + '\n';
    write_text(fs::path(out_dir) / "criterion.csv", csv);

    return order_gap <= 1e-12 ? kExitOk : kExitViolation;
}

int cmd_price(const Scenario& s, const std::string& out_dir) {
    if (!s.has_market) throw std::runtime_error("price needs a market section");
    if (s.driver_is_process)
        throw std::runtime_error("price needs a driver, not a driver process");
    const MarketModel model = build_market(s.tree, s.market, s.bond0, s.s1_0, s.s2_0);
    const GameOptionPrice price = price_game_option(s.tree, s.pair, model, s.driver);

    fs::create_directories(out_dir);
    ordered_json j;
    j["command"] = "price";
    j["u0"] = price.u0;
    j["hedge_available"] = price.hedge_available;
    if (!price.hedge_note.empty()) j["hedge_note"] = price.hedge_note;

    bool violation = false;
    if (price.hedge_available) {
        const DRBSDESolution& sol = price.solution;
        const SuperhedgeReport at_contact =
            superhedge_verify(s.tree, s.pair, price.u0, sol.z, sol.k,
                              price.plan_first_contact.cancel, s.driver);
        const SuperhedgeReport at_force = superhedge_verify(
            s.tree, s.pair, price.u0, sol.z, sol.k, price.plan_first_force.cancel, s.driver);
        const SuperhedgeReport below = superhedge_verify(
            s.tree, s.pair, price.u0 - 0.01, sol.z, sol.k, price.plan_first_force.cancel,
            s.driver);
        j["superhedge_first_contact"] = at_contact.passed;
        j["superhedge_first_force"] = at_force.passed;
        j["underfunded_fails"] = !below.passed;
        violation = !at_contact.passed || !at_force.passed || below.passed;

        std::string csv = "node,phi1,phi2,z,k,cancel_first_contact,cancel_first_force\n";
        for (NodeId n = 0; n < s.tree.n_nodes(); ++n)
            csv += std::to_string(n) + ',' + format_double(price.plan_first_contact.phi1[n]) +
                   ',' + format_double(price.plan_first_contact.phi2[n]) + ',' +
                   format_double(sol.z[n]) + ',' + format_double(sol.k[n]) + ',' +
                   std::to_string(static_cast<int>(price.plan_first_contact.cancel.stop[n])) +
                   ',' +
                   std::to_string(static_cast<int>(price.plan_first_force.cancel.stop[n])) +
                   '\n';
        write_text(fs::path(out_dir) / "hedge.csv", csv);
    }
    write_json(fs::path(out_dir) / "price.json", j);
    return violation ? kExitViolation : kExitOk;
}

int cmd_fuzz(std::uint64_t seed, int n, const std::string& out_dir) {
    std::vector<FuzzInstance> instances(static_cast<std::size_t>(n));
    std::vector<FuzzReport> reports(static_cast<std::size_t>(n));
    const FuzzOptions opt;
    std::atomic<int> next{0};
    const unsigned workers =
        std::max(1u, std::min(std::thread::hardware_concurrency(), 8u));
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                const auto idx = static_cast<std::size_t>(i);
                instances[idx] = make_instance(seed + static_cast<std::uint64_t>(i),
                                               style_for_index(idx), opt);
                reports[idx] = run_invariant_suite(instances[idx]);
            }
        });
    for (auto& t : pool) t.join();

    int first_failure = -1;
    for (int i = 0; i < n; ++i)
        if (!reports[static_cast<std::size_t>(i)].ok()) {
            first_failure = i;
            break;
        }

    fs::create_directories(out_dir);
    ordered_json j;
    j["command"] = "fuzz";
    j["seed"] = seed;
    j["n"] = n;
    j["failures"] = 0;
    ordered_json rows = ordered_json::array();
    int failures = 0;
    for (int i = 0; i < n; ++i) {
        const FuzzReport& r = reports[static_cast<std::size_t>(i)];
        ordered_json row;
        row["index"] = i;
        row["seed"] = r.seed;
        row["style"] = to_string(r.style);
        row["ok"] = r.ok();
        if (!r.ok()) {
            ++failures;
            ordered_json v = ordered_json::array();
            for (const Violation& viol : r.violations)
                v.push_back({{"check", viol.check}, {"magnitude", viol.magnitude}});
            row["violations"] = v;
        }
        rows.push_back(row);
    }
    j["failures"] = failures;
    j["reports"] = rows;
    write_json(fs::path(out_dir) / "fuzz_report.json", j);

    if (first_failure >= 0) {
        const auto idx = static_cast<std::size_t>(first_failure);
        const FuzzInstance shrunk = shrink_failure(instances[idx], opt);
        write_json(fs::path(out_dir) / "repro.json",
                   scenario_to_json(scenario_from_instance(shrunk)));
        std::cerr << "fuzz: instance " << first_failure << " (seed "
                  << reports[idx].seed << ") failed: " << reports[idx].violations[0].check
                  << "; minimized repro written to "
                  << (fs::path(out_dir) / "repro.json").string() << "\n";
        return kExitViolation;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"doubly reflected BSDE solver and game checker"};
    app.require_subcommand(1);

    std::string scenario_path, out_dir = "artifacts", theta_spec;
    bool systems = false;
    double epsilon = -1.0;
    std::uint64_t seed = 0;
    int n = 100;

    auto add_common = [&](CLI::App* cmd, bool needs_scenario) {
        if (needs_scenario)
            cmd->add_option("--scenario", scenario_path, "scenario JSON file")->required();
        cmd->add_option("--out", out_dir, "artifact directory");
    };

    CLI::App* solve = app.add_subcommand("solve", "solve and verify the reflected equation");
    add_common(solve, true);
    CLI::App* ref = app.add_subcommand("ref", "single lower reflection with driver zero");
    add_common(ref, true);
    CLI::App* verify = app.add_subcommand("verify", "re-verify an emitted solution table");
    add_common(verify, true);
    CLI::App* game = app.add_subcommand("game", "brute-force the stopping game");
    add_common(game, true);
    game->add_flag("--systems", systems, "enumerate stopping systems");
    game->add_option("--epsilon", epsilon, "near-saddle slack");
    game->add_option("--theta", theta_spec, "evaluation time: root, terminal, or a level");
    CLI::App* price = app.add_subcommand("price", "game-option price and superhedge");
    add_common(price, true);
    CLI::App* fuzz = app.add_subcommand("fuzz", "seeded random instances, full invariant suite");
    add_common(fuzz, false);
    fuzz->add_option("--seed", seed, "base seed");
    fuzz->add_option("--n", n, "number of instances");

    CLI11_PARSE(app, argc, argv);

    try {
        if (solve->parsed()) return cmd_solve(scenario_path, out_dir);
        if (ref->parsed()) return cmd_ref(scenario_path, out_dir);
        if (verify->parsed()) return cmd_verify(scenario_path, out_dir);
        if (game->parsed()) {
            const Scenario s = load_scenario(scenario_path);
            const bool use_systems = systems || s.systems;
            const double eps = epsilon >= 0.0 ? epsilon : s.epsilon;
            const std::string theta = !theta_spec.empty() ? theta_spec : s.theta_spec;
            return cmd_game(s, out_dir, use_systems, eps, theta);
        }
        if (price->parsed()) {
            const Scenario s = load_scenario(scenario_path);
            return cmd_price(s, out_dir);
        }
        if (fuzz->parsed()) return cmd_fuzz(seed, n, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
