#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "drbsde/scenario.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace drbsde;

namespace {

fs::path work_root() {
    static const fs::path root = [] {
        fs::path p = fs::temp_directory_path() / "drbsde_cli_test";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

int run_cli(const std::string& args) {
    const std::string cmd =
        std::string("\"") + DRBSDE_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    REQUIRE(WIFEXITED(rc));
    return WEXITSTATUS(rc);
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    REQUIRE(out.good());
    out << text;
}

// One period, no jumps: the lower barrier pays 1 only on the open interval,
// so the plain game misses it while the solution and the systems game reach
// it.  Solved value y0 = 1 exactly.
fs::path gap_scenario() {
    static const fs::path p = [] {
        fs::path path = work_root() / "gap.json";
        write_file(path, R"({
  "tree": {"horizon": 1.0, "steps": 1, "lambda": 0.0, "scheme": "three"},
  "barriers": {"kind": "tables",
    "xi_at": [0, 0, 0], "xi_right": [1, null, null],
    "zeta_at": [5, 0, 0], "zeta_right": [5, null, null]},
  "driver": {"kind": "named", "name": "zero", "params": []}
})");
        return path;
    }();
    return p;
}

std::string quoted(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("solve emits a verified solution table and report") {
    const fs::path out = work_root() / "solve";
    const int rc = run_cli("solve --scenario " + quoted(gap_scenario()) + " --out " + quoted(out));
    CHECK(rc == 0);

    const json rep = json::parse(read_file(out / "report.json"));
    CHECK(rep["command"] == "solve");
    CHECK(rep["y0"].get<double>() == 1.0);
    CHECK(rep["nodes"] == 3);
    CHECK(rep["verify"]["pass"] == true);
    CHECK(rep["verify"]["max_violation"].get<double>() == 0.0);
    CHECK(fs::exists(out / "solution.csv"));

    // The emitted table re-verifies clean through the separate subcommand.
    CHECK(run_cli("verify --scenario " + quoted(gap_scenario()) + " --out " + quoted(out)) == 0);
    const json ver = json::parse(read_file(out / "verify.json"));
    CHECK(ver["command"] == "verify");
    CHECK(ver["verify"]["pass"] == true);
}

TEST_CASE("a corrupted solution table is rejected with the violation code") {
    const fs::path out = work_root() / "corrupt";
    REQUIRE(run_cli("solve --scenario " + quoted(gap_scenario()) + " --out " + quoted(out)) == 0);

    const Scenario s = load_scenario(gap_scenario().string());
    DRBSDESolution sol = read_solution_csv((out / "solution.csv").string(), s.tree);
    sol.y.at[s.tree.root()] += 0.5;
    write_solution_csv((out / "solution.csv").string(), s.tree, sol);

    CHECK(run_cli("verify --scenario " + quoted(gap_scenario()) + " --out " + quoted(out)) == 2);
    const json ver = json::parse(read_file(out / "verify.json"));
    CHECK(ver["verify"]["pass"] == false);
    CHECK(ver["verify"]["max_violation"].get<double>() > 0.1);
}

TEST_CASE("configuration problems exit with code 1") {
    const fs::path out = work_root() / "bad";
    const fs::path broken = work_root() / "broken.json";
    write_file(broken, "{ this is not json");
    CHECK(run_cli("solve --scenario " + quoted(broken) + " --out " + quoted(out)) == 1);

    const fs::path missing = work_root() / "missing.json";
    write_file(missing, R"({"tree": {"horizon": 1.0, "steps": 1}})");  // no barriers
    CHECK(run_cli("solve --scenario " + quoted(missing) + " --out " + quoted(out)) == 1);

    const fs::path unknown = work_root() / "unknown.json";
    write_file(unknown, R"({
  "tree": {"horizon": 1.0, "steps": 1},
  "barriers": {"kind": "tables",
    "xi_at": [0, 0, 0], "xi_right": [0, null, null],
    "zeta_at": [1, 0, 0], "zeta_right": [1, null, null]},
  "driver": {"kind": "named", "name": "wat", "params": []}
})");
    CHECK(run_cli("solve --scenario " + quoted(unknown) + " --out " + quoted(out)) == 1);

    CHECK(run_cli("solve --scenario " + quoted(work_root() / "nowhere.json") + " --out " +
                  quoted(out)) == 1);

    CHECK(run_cli("game --scenario " + quoted(gap_scenario()) + " --theta sideways --out " +
                  quoted(out)) == 1);

    // price needs a market section
    CHECK(run_cli("price --scenario " + quoted(gap_scenario()) + " --out " + quoted(out)) == 1);
}

TEST_CASE("identical seeds give byte-identical artifacts") {
    const fs::path d1 = work_root() / "fuzz1";
    const fs::path d2 = work_root() / "fuzz2";
    CHECK(run_cli("fuzz --seed 7 --n 12 --out " + quoted(d1)) == 0);
    CHECK(run_cli("fuzz --seed 7 --n 12 --out " + quoted(d2)) == 0);
    const std::string r1 = read_file(d1 / "fuzz_report.json");
    CHECK(r1 == read_file(d2 / "fuzz_report.json"));
    const json jr = json::parse(r1);
    CHECK(jr["failures"] == 0);
    CHECK(jr["reports"].size() == 12);

    const fs::path s1 = work_root() / "rerun1";
    const fs::path s2 = work_root() / "rerun2";
    REQUIRE(run_cli("solve --scenario " + quoted(gap_scenario()) + " --out " + quoted(s1)) == 0);
    REQUIRE(run_cli("solve --scenario " + quoted(gap_scenario()) + " --out " + quoted(s2)) == 0);
    CHECK(read_file(s1 / "solution.csv") == read_file(s2 / "solution.csv"));
    CHECK(read_file(s1 / "report.json") == read_file(s2 / "report.json"));
}

TEST_CASE("the game command separates the two stopping conventions") {
    const fs::path plain_dir = work_root() / "game_plain";
    CHECK(run_cli("game --scenario " + quoted(gap_scenario()) + " --theta root --out " +
                  quoted(plain_dir)) == 0);
    const json plain = json::parse(read_file(plain_dir / "game.json"));
    CHECK(plain["systems"] == false);
    CHECK(plain["upper"][0].get<double>() == 0.0);
    CHECK(plain["lower"][0].get<double>() == 0.0);
    CHECK(plain["has_value"] == true);
    CHECK(plain["y_at_theta"][0].get<double>() == 1.0);
    CHECK(plain["value_matches_y"] == false);
    {
        // header plus one row per strategy pair (2 stopping times)
        std::istringstream csv(read_file(plain_dir / "criterion.csv"));
        std::string line;
        int rows = 0;
        while (std::getline(csv, line))
            if (!line.empty()) ++rows;
        CHECK(rows == 1 + 2 * 2);
    }

    const fs::path sys_dir = work_root() / "game_systems";
    CHECK(run_cli("game --scenario " + quoted(gap_scenario()) +
                  " --systems --epsilon 0.5 --theta root --out " + quoted(sys_dir)) == 0);
    const json sys = json::parse(read_file(sys_dir / "game.json"));
    CHECK(sys["systems"] == true);
    CHECK(sys["upper"][0].get<double>() == 1.0);
    CHECK(sys["lower"][0].get<double>() == 1.0);
    CHECK(sys["value_matches_y"] == true);
    CHECK(sys["saddle"]["kind"] == "system");
    CHECK(sys["saddle"]["verified"] == true);
    {
        std::istringstream csv(read_file(sys_dir / "criterion.csv"));
        std::string line;
        int rows = 0;
        while (std::getline(csv, line))
            if (!line.empty()) ++rows;
        CHECK(rows == 1 + 3 * 3);  // three stopping systems on this tree
    }

    // The plain near-saddle needs right-regular barriers; on this scenario it
    // reports why it was skipped instead of failing the run.
    const fs::path eps_dir = work_root() / "game_eps";
    CHECK(run_cli("game --scenario " + quoted(gap_scenario()) +
                  " --epsilon 0.5 --theta root --out " + quoted(eps_dir)) == 0);
    const json eps = json::parse(read_file(eps_dir / "game.json"));
    CHECK(eps["saddle"].contains("skipped"));
}

TEST_CASE("ref emits the single-reflection table") {
    const fs::path out = work_root() / "ref";
    CHECK(run_cli("ref --scenario " + quoted(gap_scenario()) + " --out " + quoted(out)) == 0);
    const json rep = json::parse(read_file(out / "report.json"));
    CHECK(rep["command"] == "ref");
    // Smallest strong supermartingale above the lower barrier: the right
    // slot must clear xi.right = 1, and the instant value inherits it.
    CHECK(rep["x0"].get<double>() == 1.0);
    std::istringstream csv(read_file(out / "ref.csv"));
    std::string line;
    int rows = 0;
    while (std::getline(csv, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 1 + 3);
}

TEST_CASE("price quotes and, when possible, verifies the hedge") {
    // Builder payoff on a jump market: priceable, not hedgeable (the
    // cancellation payoff rises along up moves).
    const fs::path basket = work_root() / "basket.json";
    write_file(basket, R"({
  "tree": {"horizon": 0.75, "steps": 3, "lambda": 0.6, "scheme": "three"},
  "market": {"r": 0.03, "mu": [0.08, 0.02], "sigma": [0.25, -0.15], "beta": [-0.2, 0.35]},
  "barriers": {"kind": "builder", "name": "basket",
    "strike": 1.0, "penalty": 1.5, "h_low": 0.4, "h_high": 1.0, "threshold": 1.0},
  "driver": {"kind": "market", "name": "perfect"}
})");
    const fs::path out1 = work_root() / "price_basket";
    CHECK(run_cli("price --scenario " + quoted(basket) + " --out " + quoted(out1)) == 0);
    const json p1 = json::parse(read_file(out1 / "price.json"));
    CHECK(p1["command"] == "price");
    CHECK(p1["u0"].is_number());
    CHECK(p1["hedge_available"] == false);
    CHECK(p1["hedge_note"].is_string());
    CHECK(!fs::exists(out1 / "hedge.csv"));

    // Flat exercise payoff under a shrinking cancellation penalty: the full
    // superhedge cycle runs and the underfunded start is caught.
    const fs::path hedged = work_root() / "hedged.json";
    write_file(hedged, R"({
  "tree": {"horizon": 1.0, "steps": 2, "lambda": 0.0, "scheme": "three"},
  "market": {"r": 0.03, "mu": [0.07, 0.05], "sigma": [0.2, 0.1], "beta": [-0.15, 0.25]},
  "barriers": {"kind": "tables",
    "xi_at":    [0, 0, 0, 0, 0, 0, 0],
    "xi_right": [0, 0, 0, null, null, null, null],
    "zeta_at":    [3, 2.5, 2.5, 0, 0, 0, 0],
    "zeta_right": [3, 2.5, 2.5, null, null, null, null]},
  "driver": {"kind": "market", "name": "perfect"}
})");
    const fs::path out2 = work_root() / "price_hedged";
    CHECK(run_cli("price --scenario " + quoted(hedged) + " --out " + quoted(out2)) == 0);
    const json p2 = json::parse(read_file(out2 / "price.json"));
    CHECK(p2["u0"].get<double>() == 0.0);
    CHECK(p2["hedge_available"] == true);
    CHECK(p2["superhedge_first_contact"] == true);
    CHECK(p2["superhedge_first_force"] == true);
    CHECK(p2["underfunded_fails"] == true);
    std::istringstream csv(read_file(out2 / "hedge.csv"));
    std::string line;
    int rows = 0;
    while (std::getline(csv, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 1 + 7);
}
