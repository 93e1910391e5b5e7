#pragma once
// Seeded random instance generation and the cross-solver invariant suite.
// Generators keep every instance inside the regimes where the theory applies:
// K * dt <= 0.5, lambda * dt <= 0.5, one-jump comparison weights bounded away
// from zero, and admissible barrier pairs by construction.

#include <cstdint>
#include <string>
#include <vector>

#include "drbsde/drbsde.hpp"
#include "drbsde/pricing.hpp"

namespace drbsde {

enum class BarrierStyle {
    GeneralIrregular,  // both slots free inside the sandwich
    RightRegular,      // xi right-u.s.c., zeta right-l.s.c.
    RightContinuous,   // at == right on both barriers
    SaddleRegular,     // additionally left-regular along stopping times
    Touching,          // barriers may coincide off the terminal
    Hedgeable,         // right-regular, zeta right-continuous and
                       // nonincreasing along paths (left-l.s.c.)
};

std::string to_string(BarrierStyle s);
BarrierStyle style_for_index(std::size_t i);

struct FuzzOptions {
    int max_depth = 5;
    double max_horizon = 1.0;
    double max_dt = 0.0;             // > 0 caps the largest step
    bool enumerable = false;         // keep under the strategy-enumeration node cap
    bool three_only = true;
    bool allow_process_driver = true;
    bool allow_jumps = true;
};

struct FuzzInstance {
    ScenarioTree tree;
    AdmissiblePair pair;
    BarrierStyle style = BarrierStyle::GeneralIrregular;
    bool driver_is_process = false;
    Driver driver;
    AdaptedProcess driver_process;
    // linear coefficients, recorded so a repro scenario can rebuild the driver
    double lin_a = 0.0, lin_b = 0.0, lin_c = 0.0, lin_d = 0.0;
    std::uint64_t seed = 0;
};

FuzzInstance make_instance(std::uint64_t seed, BarrierStyle style, const FuzzOptions& opt = {});

// Ordered pair on a shared tree: pair_lo <= pair_hi slotwise on both barriers
// and f_lo <= f_hi pointwise, both drivers carrying comparison certificates.
struct ComparisonInstance {
    ScenarioTree tree;
    AdmissiblePair pair_hi, pair_lo;
    Driver f_hi, f_lo;
    std::uint64_t seed = 0;
};

ComparisonInstance make_comparison_instance(std::uint64_t seed, const FuzzOptions& opt = {});

// Unordered pair on a shared tree for the spread estimate.
struct SpreadInstance {
    ScenarioTree tree;
    AdmissiblePair pair_a, pair_b;
    Driver f_a, f_b;
    std::uint64_t seed = 0;
};

SpreadInstance make_spread_instance(std::uint64_t seed, const FuzzOptions& opt = {});

struct Violation {
    std::string check;
    double magnitude = 0.0;
};

struct FuzzReport {
    std::uint64_t seed = 0;
    BarrierStyle style = BarrierStyle::GeneralIrregular;
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
};

// Solves the instance with every applicable solver and checks: the verifier
// on the direct solution, pointwise cross-solver agreement (1e-9), exact
// monotonicity of the Picard iterates, the two-supermartingale envelope, and
// the exact vanishing of the instant forces on right-continuous barriers.
FuzzReport run_invariant_suite(const FuzzInstance& inst);

// Smallest still-failing variant: lower depths first (regenerating from the
// same seed), then right slots snapped to the instant values node by node,
// then the driver zeroed.
FuzzInstance shrink_failure(const FuzzInstance& failing, const FuzzOptions& opt);

}  // namespace drbsde
