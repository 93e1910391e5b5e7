#pragma once
// Finite scenario trees driven by one Brownian increment and one unit-mark
// Poisson increment per step.  Nodes are stored level by level; children of a
// node occupy a contiguous id range, which keeps backward sweeps cache
// friendly and the construction fully deterministic.

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace drbsde {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

enum class Branching { Three, Four };

std::string to_string(Branching b);
Branching branching_from_string(const std::string& s);

struct TimeGrid {
    std::vector<double> instants;  // t_0 = 0 < t_1 < ... < t_N = T

    TimeGrid() = default;
    explicit TimeGrid(std::vector<double> ts);
    static TimeGrid uniform(double horizon, int steps);

    int steps() const { return static_cast<int>(instants.size()) - 1; }
    double horizon() const { return instants.back(); }
    double dt(int i) const { return instants[i + 1] - instants[i]; }
    double max_dt() const;
};

struct Node {
    NodeId parent = kNoNode;
    NodeId first_child = kNoNode;
    std::uint16_t n_children = 0;
    std::uint16_t level = 0;
    // Edge data from the parent (meaningless at the root).
    double dw = 0.0;        // Brownian increment
    double jump = 0.0;      // Poisson increment (0 or 1)
    double cond_prob = 1.0; // P(this child | parent)
    double path_prob = 1.0; // P(path from root)
};

class ScenarioTree {
  public:
    TimeGrid grid;
    double lambda = 0.0;
    Branching scheme = Branching::Three;
    std::vector<Node> nodes;
    std::vector<NodeId> level_begin;  // size levels()+1, sentinel at end

    int levels() const { return grid.steps() + 1; }
    NodeId n_nodes() const { return static_cast<NodeId>(nodes.size()); }
    NodeId root() const { return 0; }
    bool is_terminal(NodeId n) const { return nodes[n].n_children == 0; }
    int level(NodeId n) const { return nodes[n].level; }
    NodeId parent(NodeId n) const { return nodes[n].parent; }
    NodeId child(NodeId n, int j) const { return nodes[n].first_child + static_cast<NodeId>(j); }
    int n_children(NodeId n) const { return nodes[n].n_children; }
    double time_of(NodeId n) const { return grid.instants[nodes[n].level]; }
    // Step length of the interval starting at node n.
    double dt_after(NodeId n) const { return grid.dt(nodes[n].level); }
    // Step length of the interval ending at node n (n non-root).
    double dt_before(NodeId n) const { return grid.dt(nodes[n].level - 1); }
    double cond_prob(NodeId n) const { return nodes[n].cond_prob; }
    double path_prob(NodeId n) const { return nodes[n].path_prob; }
    double dw(NodeId n) const { return nodes[n].dw; }
    double jump(NodeId n) const { return nodes[n].jump; }
    // Compensated jump increment on the edge into n.
    double compensated_jump(NodeId n) const {
        return nodes[n].jump - lambda * dt_before(n);
    }
    bool has_jump_branch() const { return lambda > 0.0; }

    std::vector<NodeId> terminal_nodes() const;
    // Path from root to n, inclusive.
    std::vector<NodeId> path_to(NodeId n) const;
};

// Builds the tree for the given grid, jump intensity and branching scheme.
// Requires lambda >= 0 and lambda * dt < 1 on every step.  The Brownian
// increments on non-jump branches are scaled so that E[dW] = 0 and
// E[dW^2] = dt hold exactly under the child probabilities; branches with
// probability zero (lambda = 0) are pruned.
ScenarioTree build_tree(const TimeGrid& grid, double lambda, Branching scheme);

// One value per node, indexed by NodeId.
using AdaptedProcess = std::vector<double>;

// E[values at children of n | n].  Throws if any child value is NaN.
double conditional_expectation(const ScenarioTree& tree, NodeId n, const AdaptedProcess& values);

// Orthogonal decomposition of a one-step martingale increment at node n:
//   dM_c = z * dW_c + k * compensated_jump_c + dh_c
// with dh orthogonal to both dW and the compensated jump under the child
// probabilities.  With no jump branch (lambda = 0) the jump coordinate is
// degenerate; k is reported as 0 and the flag is set.
struct StepDecomposition {
    double z = 0.0;
    double k = 0.0;
    std::vector<double> h;  // residual per child, in child order
    bool jump_degenerate = false;
};

// `next` holds one value per child of n (child order).  The decomposition is
// applied to the centered increment next - E[next | n].
StepDecomposition martingale_decompose(const ScenarioTree& tree, NodeId n,
                                       const std::vector<double>& next);

// Convenience: gathers child values of n from a node-indexed vector.
std::vector<double> child_values(const ScenarioTree& tree, NodeId n, const AdaptedProcess& values);

}  // namespace drbsde
