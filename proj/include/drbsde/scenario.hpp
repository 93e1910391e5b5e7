#pragma once
// JSON scenario files and CSV node tables.  A scenario fixes everything a run
// needs: the tree, the barriers (explicit tables in node order, or a payoff
// builder on a simulated market), the driver, and game options.  Emission is
// deterministic: fixed key order, fixed column order, shortest round-trip
// double formatting.

#include <string>
#include <vector>

#include "json.hpp"

#include "drbsde/drbsde.hpp"
#include "drbsde/fuzzing.hpp"
#include "drbsde/pricing.hpp"

namespace drbsde {

struct Scenario {
    ScenarioTree tree;
    AdmissiblePair pair;

    bool driver_is_process = false;
    Driver driver;
    AdaptedProcess driver_process;
    std::string driver_kind = "named";  // named | process | market
    std::string driver_name = "zero";
    std::vector<double> driver_params;

    bool has_market = false;
    MarketScalars market;
    double bond0 = 1.0, s1_0 = 1.0, s2_0 = 1.0;

    bool barriers_from_builder = false;
    std::string builder_name;
    BuilderParams builder_params;

    bool systems = false;
    double epsilon = 0.1;
    std::string theta_spec = "root";
};

// Parsing throws std::runtime_error with the offending field in the message.
Scenario scenario_from_json(const nlohmann::json& j);
Scenario load_scenario(const std::string& path);
nlohmann::ordered_json scenario_to_json(const Scenario& s);

// Wraps a fuzz instance as a self-contained scenario (barriers as tables).
Scenario scenario_from_instance(const FuzzInstance& inst);

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

void write_solution_csv(const std::string& path, const ScenarioTree& tree,
                        const DRBSDESolution& sol);
DRBSDESolution read_solution_csv(const std::string& path, const ScenarioTree& tree);

// "root", "terminal", or a level number.
StoppingTime parse_theta(const ScenarioTree& tree, const std::string& spec);

}  // namespace drbsde
