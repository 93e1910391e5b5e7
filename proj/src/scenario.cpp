#include "drbsde/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace drbsde {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw std::runtime_error("scenario: " + where + ": " + what);
}

double need_number(const json& j, const std::string& key) {
    if (!j.contains(key) || !j[key].is_number()) fail(key, "expected a number");
    return j[key].get<double>();
}

double number_or(const json& j, const std::string& key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) fail(key, "expected a number");
    return j[key].get<double>();
}

std::string need_string(const json& j, const std::string& key) {
    if (!j.contains(key) || !j[key].is_string()) fail(key, "expected a string");
    return j[key].get<std::string>();
}

// barrier tables accept null for the unused terminal right slots
std::vector<double> node_table(const json& j, const std::string& key, std::size_t n) {
    if (!j.contains(key) || !j[key].is_array()) fail(key, "expected an array");
    const auto& arr = j[key];
    if (arr.size() != n)
        fail(key, "expected " + std::to_string(n) + " entries, got " +
                      std::to_string(arr.size()));
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (arr[i].is_null())
            out[i] = std::nan("");
        else if (arr[i].is_number())
            out[i] = arr[i].get<double>();
        else
            fail(key, "entry " + std::to_string(i) + " is neither a number nor null");
    }
    return out;
}

void read_pair2(const json& j, const std::string& key, double out[2]) {
    if (!j.contains(key) || !j[key].is_array() || j[key].size() != 2)
        fail(key, "expected an array of two numbers");
    out[0] = j[key][0].get<double>();
    out[1] = j[key][1].get<double>();
}

MarketScalars parse_market(const json& j, Scenario& s) {
    MarketScalars m;
    m.r = number_or(j, "r", 0.0);
    m.big_r = number_or(j, "R", m.r);
    read_pair2(j, "mu", m.mu);
    read_pair2(j, "sigma", m.sigma);
    read_pair2(j, "beta", m.beta);
    if (j.contains("borrow")) read_pair2(j, "borrow", m.borrow);
    if (j.contains("lend")) read_pair2(j, "lend", m.lend);
    s.bond0 = number_or(j, "bond0", 1.0);
    s.s1_0 = number_or(j, "s1_0", 1.0);
    s.s2_0 = number_or(j, "s2_0", 1.0);
    return m;
}

Driver resolve_named(const std::string& name, const std::vector<double>& p, double lambda) {
    auto want = [&](std::size_t k) {
        if (p.size() != k)
            fail("driver.params", name + " takes " + std::to_string(k) + " parameter(s)");
    };
    if (name == "zero") {
        want(0);
        return make_zero_driver();
    }
    if (name == "constant") {
        want(1);
        return make_constant_driver(p[0]);
    }
    if (name == "discount") {
        want(1);
        return make_discount_driver(p[0]);
    }
    if (name == "linear") {
        want(4);
        return make_linear_driver(p[0], p[1], p[2], p[3], lambda);
    }
    fail("driver.name", "unknown named driver: " + name);
}

Driver resolve_market_driver(const std::string& name, const MarketScalars& m, double lambda) {
    if (name == "perfect") return make_perfect_driver(m, lambda);
    if (name == "two_rates") return make_two_rates_driver(m, lambda);
    if (name == "repo") return make_repo_driver(m, lambda);
    fail("driver.name", "unknown market driver: " + name);
}

BuilderParams parse_builder_params(const json& j) {
    BuilderParams p;
    p.strike = number_or(j, "strike", p.strike);
    p.penalty = number_or(j, "penalty", p.penalty);
    p.h_low = number_or(j, "h_low", p.h_low);
    p.h_high = number_or(j, "h_high", p.h_high);
    p.threshold = number_or(j, "threshold", p.threshold);
    p.barrier = number_or(j, "barrier", p.barrier);
    p.fee = number_or(j, "fee", p.fee);
    return p;
}

ordered_json barrier_tables(const ScenarioTree& tree, const AdmissiblePair& pair) {
    ordered_json b;
    b["kind"] = "tables";
    auto dump = [&](const std::vector<double>& v, bool right_slot) {
        ordered_json arr = ordered_json::array();
        for (NodeId n = 0; n < tree.n_nodes(); ++n) {
            if (right_slot && tree.is_terminal(n))
                arr.push_back(nullptr);
            else
                arr.push_back(v[n]);
        }
        return arr;
    };
    b["xi_at"] = dump(pair.xi.at, false);
    b["xi_right"] = dump(pair.xi.right, true);
    b["zeta_at"] = dump(pair.zeta.at, false);
    b["zeta_right"] = dump(pair.zeta.right, true);
    return b;
}

}  // namespace

Scenario scenario_from_json(const json& j) {
    Scenario s;
    if (!j.contains("tree") || !j["tree"].is_object()) fail("tree", "missing section");
    const json& jt = j["tree"];
    TimeGrid grid;
    if (jt.contains("instants")) {
        if (!jt["instants"].is_array() || jt["instants"].size() < 2)
            fail("tree.instants", "expected an array of at least two instants");
        grid = TimeGrid(jt["instants"].get<std::vector<double>>());
    } else {
        const double horizon = need_number(jt, "horizon");
        const int steps = static_cast<int>(need_number(jt, "steps"));
        if (steps < 1) fail("tree.steps", "need at least one step");
        grid = TimeGrid::uniform(horizon, steps);
    }
    const double lambda = number_or(jt, "lambda", 0.0);
    Branching scheme = Branching::Three;
    if (jt.contains("scheme")) scheme = branching_from_string(need_string(jt, "scheme"));
    try {
        s.tree = build_tree(grid, lambda, scheme);
    } catch (const std::exception& e) {
        fail("tree", e.what());
    }

    if (j.contains("market")) {
        if (!j["market"].is_object()) fail("market", "expected an object");
        s.market = parse_market(j["market"], s);
        s.has_market = true;
    }

    if (!j.contains("barriers") || !j["barriers"].is_object()) fail("barriers", "missing section");
    const json& jb = j["barriers"];
    const std::string bkind = need_string(jb, "kind");
    if (bkind == "tables") {
        const std::size_t n = s.tree.n_nodes();
        s.pair.xi.at = node_table(jb, "xi_at", n);
        s.pair.xi.right = node_table(jb, "xi_right", n);
        s.pair.zeta.at = node_table(jb, "zeta_at", n);
        s.pair.zeta.right = node_table(jb, "zeta_right", n);
        for (NodeId t : s.tree.terminal_nodes()) {
            s.pair.xi.right[t] = std::nan("");
            s.pair.zeta.right[t] = std::nan("");
        }
    } else if (bkind == "builder") {
        if (!s.has_market) fail("barriers", "builder barriers need a market section");
        s.barriers_from_builder = true;
        s.builder_name = need_string(jb, "name");
        s.builder_params = parse_builder_params(jb);
        const MarketModel model =
            build_market(s.tree, s.market, s.bond0, s.s1_0, s.s2_0);
        s.pair = build_payoff(s.builder_name, s.builder_params, s.tree, model);
    } else {
        fail("barriers.kind", "expected \"tables\" or \"builder\"");
    }
    try {
        validate_admissible(s.tree, s.pair);
    } catch (const std::exception& e) {
        fail("barriers", e.what());
    }

    if (!j.contains("driver") || !j["driver"].is_object()) fail("driver", "missing section");
    const json& jd = j["driver"];
    s.driver_kind = need_string(jd, "kind");
    if (s.driver_kind == "named") {
        s.driver_name = need_string(jd, "name");
        if (jd.contains("params")) {
            if (!jd["params"].is_array()) fail("driver.params", "expected an array");
            s.driver_params = jd["params"].get<std::vector<double>>();
        }
        s.driver = resolve_named(s.driver_name, s.driver_params, s.tree.lambda);
    } else if (s.driver_kind == "market") {
        if (!s.has_market) fail("driver", "market drivers need a market section");
        s.driver_name = need_string(jd, "name");
        s.driver = resolve_market_driver(s.driver_name, s.market, s.tree.lambda);
    } else if (s.driver_kind == "process") {
        s.driver_is_process = true;
        s.driver_name = "process";
        s.driver_process = node_table(jd, "values", s.tree.n_nodes());
        for (double v : s.driver_process)
            if (std::isnan(v)) fail("driver.values", "null entries are not allowed");
    } else {
        fail("driver.kind", "expected \"named\", \"market\" or \"process\"");
    }

    if (j.contains("game")) {
        const json& jg = j["game"];
        if (!jg.is_object()) fail("game", "expected an object");
        if (jg.contains("systems")) {
            if (!jg["systems"].is_boolean()) fail("game.systems", "expected a boolean");
            s.systems = jg["systems"].get<bool>();
        }
        s.epsilon = number_or(jg, "epsilon", s.epsilon);
        if (jg.contains("theta")) s.theta_spec = need_string(jg, "theta");
    }
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scenario file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("scenario: " + path + ": " + e.what());
    }
    return scenario_from_json(j);
}

nlohmann::ordered_json scenario_to_json(const Scenario& s) {
    ordered_json j;
    ordered_json jt;
    ordered_json instants = ordered_json::array();
    for (double t : s.tree.grid.instants) instants.push_back(t);
    jt["instants"] = instants;
    jt["lambda"] = s.tree.lambda;
    jt["scheme"] = to_string(s.tree.scheme);
    j["tree"] = jt;

    if (s.has_market) {
        ordered_json jm;
        jm["r"] = s.market.r;
        jm["R"] = s.market.big_r;
        jm["mu"] = {s.market.mu[0], s.market.mu[1]};
        jm["sigma"] = {s.market.sigma[0], s.market.sigma[1]};
        jm["beta"] = {s.market.beta[0], s.market.beta[1]};
        jm["borrow"] = {s.market.borrow[0], s.market.borrow[1]};
        jm["lend"] = {s.market.lend[0], s.market.lend[1]};
        jm["bond0"] = s.bond0;
        jm["s1_0"] = s.s1_0;
        jm["s2_0"] = s.s2_0;
        j["market"] = jm;
    }

    if (s.barriers_from_builder) {
        ordered_json jb;
        jb["kind"] = "builder";
        jb["name"] = s.builder_name;
        jb["strike"] = s.builder_params.strike;
        jb["penalty"] = s.builder_params.penalty;
        jb["h_low"] = s.builder_params.h_low;
        jb["h_high"] = s.builder_params.h_high;
        jb["threshold"] = s.builder_params.threshold;
        jb["barrier"] = s.builder_params.barrier;
        jb["fee"] = s.builder_params.fee;
        j["barriers"] = jb;
    } else {
        j["barriers"] = barrier_tables(s.tree, s.pair);
    }

    ordered_json jd;
    jd["kind"] = s.driver_kind;
    if (s.driver_kind == "process") {
        ordered_json vals = ordered_json::array();
        for (double v : s.driver_process) vals.push_back(v);
        jd["values"] = vals;
    } else {
        jd["name"] = s.driver_name;
        if (s.driver_kind == "named") jd["params"] = s.driver_params;
    }
    j["driver"] = jd;

    ordered_json jg;
    jg["systems"] = s.systems;
    jg["epsilon"] = s.epsilon;
    jg["theta"] = s.theta_spec;
    j["game"] = jg;
    return j;
}

Scenario scenario_from_instance(const FuzzInstance& inst) {
    Scenario s;
    s.tree = inst.tree;
    s.pair = inst.pair;
    if (inst.driver_is_process) {
        s.driver_is_process = true;
        s.driver_kind = "process";
        s.driver_name = "process";
        s.driver_process = inst.driver_process;
    } else {
        s.driver_kind = "named";
        s.driver_name = inst.driver.name;
        s.driver = inst.driver;
        if (inst.driver.name == "constant" || inst.driver.name == "discount")
            s.driver_params = {inst.lin_a};
        else if (inst.driver.name == "linear")
            s.driver_params = {inst.lin_a, inst.lin_b, inst.lin_c, inst.lin_d};
    }
    return s;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    // prefer the shortest representation that still round-trips
    for (int prec = 1; prec <= 16; ++prec) {
        char shorter[40];
        std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
        double back = 0.0;
        std::sscanf(shorter, "%lf", &back);
        if (back == v || (std::isnan(back) && std::isnan(v))) return shorter;
    }
    return buf;
}

void write_solution_csv(const std::string& path, const ScenarioTree& tree,
                        const DRBSDESolution& sol) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "node,level,time,parent,dw,jump,cond_prob,y_at,y_right,z,k,h_inc,a_inc,ap_inc,c_"
           "jump,cp_jump\n";
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        const bool root = n == tree.root();
        out << n << ',' << tree.level(n) << ',' << format_double(tree.time_of(n)) << ','
            << (root ? std::string("-") : std::to_string(tree.parent(n))) << ','
            << format_double(root ? 0.0 : tree.dw(n)) << ','
            << format_double(root ? 0.0 : tree.jump(n)) << ','
            << format_double(root ? 1.0 : tree.cond_prob(n)) << ','
            << format_double(sol.y.at[n]) << ',' << format_double(sol.y.right[n]) << ','
            << format_double(sol.z[n]) << ',' << format_double(sol.k[n]) << ','
            << format_double(sol.h_inc[n]) << ',' << format_double(sol.a_inc[n]) << ','
            << format_double(sol.ap_inc[n]) << ',' << format_double(sol.c_jump[n]) << ','
            << format_double(sol.cp_jump[n]) << '\n';
    }
}

DRBSDESolution read_solution_csv(const std::string& path, const ScenarioTree& tree) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    const NodeId n_nodes = tree.n_nodes();
    DRBSDESolution sol;
    sol.y = LadlagProcess(tree);
    sol.z.assign(n_nodes, 0.0);
    sol.k.assign(n_nodes, 0.0);
    sol.h_inc.assign(n_nodes, 0.0);
    sol.a_inc.assign(n_nodes, 0.0);
    sol.ap_inc.assign(n_nodes, 0.0);
    sol.c_jump.assign(n_nodes, 0.0);
    sol.cp_jump.assign(n_nodes, 0.0);
    NodeId rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 16) throw std::runtime_error(path + ": malformed row: " + line);
        const NodeId n = static_cast<NodeId>(std::stoul(cells[0]));
        if (n >= n_nodes) throw std::runtime_error(path + ": node id out of range");
        sol.y.at[n] = std::stod(cells[7]);
        sol.y.right[n] = std::stod(cells[8]);
        sol.z[n] = std::stod(cells[9]);
        sol.k[n] = std::stod(cells[10]);
        sol.h_inc[n] = std::stod(cells[11]);
        sol.a_inc[n] = std::stod(cells[12]);
        sol.ap_inc[n] = std::stod(cells[13]);
        sol.c_jump[n] = std::stod(cells[14]);
        sol.cp_jump[n] = std::stod(cells[15]);
        ++rows;
    }
    if (rows != n_nodes) throw std::runtime_error(path + ": row count does not match the tree");
    sol.jump_degenerate = !tree.has_jump_branch();
    return sol;
}

StoppingTime parse_theta(const ScenarioTree& tree, const std::string& spec) {
    if (spec == "root") return StoppingTime::at_root(tree);
    if (spec == "terminal") return StoppingTime::at_terminal(tree);
    try {
        const int level = std::stoi(spec);
        if (level < 0 || level >= tree.levels())
            throw std::runtime_error("theta level out of range: " + spec);
        return StoppingTime::at_level(tree, level);
    } catch (const std::invalid_argument&) {
        throw std::runtime_error("theta must be \"root\", \"terminal\" or a level number");
    }
}

}  // namespace drbsde
