#include "drbsde/stopping.hpp"

#include <stdexcept>

namespace drbsde {

StoppingTime StoppingTime::at_level(const ScenarioTree& tree, int level) {
    if (level < 0 || level >= tree.levels())
        throw std::invalid_argument("stopping level out of range");
    StoppingTime tau;
    tau.stop.assign(tree.n_nodes(), 0);
    for (NodeId n = 0; n < tree.n_nodes(); ++n)
        if (tree.level(n) == level || tree.is_terminal(n)) tau.stop[n] = 1;
    return tau;
}

NodeId stop_node_on_path(const ScenarioTree& tree, const StoppingTime& tau, NodeId leaf) {
    for (NodeId n : tree.path_to(leaf))
        if (tau.stop[n]) return n;
    throw std::invalid_argument("path carries no stopping mark");
}

std::vector<NodeId> frontier(const ScenarioTree& tree, const StoppingTime& tau) {
    std::vector<std::uint8_t> hit(tree.n_nodes(), 0);
    for (NodeId leaf : tree.terminal_nodes()) hit[stop_node_on_path(tree, tau, leaf)] = 1;
    std::vector<NodeId> out;
    for (NodeId n = 0; n < tree.n_nodes(); ++n)
        if (hit[n]) out.push_back(n);
    return out;
}

void validate_stopping(const ScenarioTree& tree, const StoppingTime& tau) {
    if (tau.stop.size() != tree.n_nodes())
        throw std::invalid_argument("stopping time has wrong length for this tree");
    for (NodeId leaf : tree.terminal_nodes()) stop_node_on_path(tree, tau, leaf);
}

bool pathwise_leq(const ScenarioTree& tree, const StoppingTime& theta, const StoppingTime& tau) {
    for (NodeId leaf : tree.terminal_nodes()) {
        NodeId a = stop_node_on_path(tree, theta, leaf);
        NodeId b = stop_node_on_path(tree, tau, leaf);
        if (tree.level(a) > tree.level(b)) return false;
    }
    return true;
}

StoppingTime pathwise_min(const ScenarioTree& tree, const StoppingTime& a, const StoppingTime& b) {
    StoppingTime m;
    m.stop.assign(tree.n_nodes(), 0);
    for (NodeId n = 0; n < tree.n_nodes(); ++n)
        m.stop[n] = static_cast<std::uint8_t>(a.stop[n] || b.stop[n]);
    return m;
}

StoppingSystem StoppingSystem::plain(const ScenarioTree& tree, const StoppingTime& tau) {
    StoppingSystem rho;
    rho.tau = tau;
    rho.at_instant.assign(tree.n_nodes(), 1);
    return rho;
}

void validate_system(const ScenarioTree& tree, const StoppingSystem& rho) {
    validate_stopping(tree, rho.tau);
    if (rho.at_instant.size() != tree.n_nodes())
        throw std::invalid_argument("stopping system has wrong length for this tree");
    for (NodeId n : frontier(tree, rho.tau))
        if (tree.is_terminal(n) && !rho.at_instant[n])
            throw std::invalid_argument("terminal stop cannot defer past the horizon");
}

}  // namespace drbsde
