#pragma once
// Stopping times and stopping systems on a scenario tree.  A stopping time is
// a node marking whose first marked node along each root-to-leaf path is the
// stop; canonical form keeps every terminal node marked so tau <= T always.
// A stopping system additionally decides, per stopping node, whether to stop
// at the instant itself (H) or immediately after it (H^c); terminal stops
// must choose the instant.

#include <vector>

#include "drbsde/tree.hpp"

namespace drbsde {

struct StoppingTime {
    std::vector<std::uint8_t> stop;  // per node

    static StoppingTime at_level(const ScenarioTree& tree, int level);
    static StoppingTime at_root(const ScenarioTree& tree) { return at_level(tree, 0); }
    static StoppingTime at_terminal(const ScenarioTree& tree) {
        return at_level(tree, tree.levels() - 1);
    }
};

// First marked node on the path through leaf (the effective stop).
NodeId stop_node_on_path(const ScenarioTree& tree, const StoppingTime& tau, NodeId leaf);

// The antichain of effective stopping nodes, in id order.
std::vector<NodeId> frontier(const ScenarioTree& tree, const StoppingTime& tau);

// Throws if some path carries no mark or the marking vector has wrong size.
void validate_stopping(const ScenarioTree& tree, const StoppingTime& tau);

// theta <= tau on every path.
bool pathwise_leq(const ScenarioTree& tree, const StoppingTime& theta, const StoppingTime& tau);

// Pathwise minimum of two stopping times.
StoppingTime pathwise_min(const ScenarioTree& tree, const StoppingTime& a, const StoppingTime& b);

struct StoppingSystem {
    StoppingTime tau;
    std::vector<std::uint8_t> at_instant;  // H membership, read at effective stopping nodes

    static StoppingSystem plain(const ScenarioTree& tree, const StoppingTime& tau);
};

// Throws if tau is invalid or some terminal effective stop has H false.
void validate_system(const ScenarioTree& tree, const StoppingSystem& rho);

}  // namespace drbsde
