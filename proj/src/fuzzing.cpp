#include "drbsde/fuzzing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "drbsde/random.hpp"

namespace drbsde {

std::string to_string(BarrierStyle s) {
    switch (s) {
        case BarrierStyle::GeneralIrregular: return "general_irregular";
        case BarrierStyle::RightRegular: return "right_regular";
        case BarrierStyle::RightContinuous: return "right_continuous";
        case BarrierStyle::SaddleRegular: return "saddle_regular";
        case BarrierStyle::Touching: return "touching";
        case BarrierStyle::Hedgeable: return "hedgeable";
    }
    return "unknown";
}

BarrierStyle style_for_index(std::size_t i) {
    static const BarrierStyle order[] = {
        BarrierStyle::GeneralIrregular, BarrierStyle::RightRegular,
        BarrierStyle::RightContinuous,  BarrierStyle::SaddleRegular,
        BarrierStyle::Touching,         BarrierStyle::Hedgeable,
    };
    return order[i % 6];
}

namespace {

constexpr double kWeightMargin = 0.05;

ScenarioTree draw_tree(Rng& rng, const FuzzOptions& opt) {
    int depth = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(
                        std::max(1, opt.max_depth))));
    bool jumps = opt.allow_jumps && !rng.chance(0.25);
    Branching scheme = Branching::Three;
    if (!opt.three_only && rng.chance(0.4)) scheme = Branching::Four;
    if (opt.enumerable) {
        scheme = Branching::Three;
        depth = std::min(depth, jumps ? 2 : 3);
    }

    double horizon = rng.uniform(0.2, opt.max_horizon);
    std::vector<double> instants(static_cast<std::size_t>(depth) + 1, 0.0);
    if (rng.chance(0.3)) {
        double acc = 0.0;
        for (int i = 1; i <= depth; ++i) {
            acc += rng.uniform(0.5, 1.5);
            instants[static_cast<std::size_t>(i)] = acc;
        }
        for (int i = 1; i <= depth; ++i)
            instants[static_cast<std::size_t>(i)] *= horizon / acc;
    } else {
        for (int i = 1; i <= depth; ++i)
            instants[static_cast<std::size_t>(i)] = horizon * i / depth;
    }
    TimeGrid grid(std::move(instants));
    if (opt.max_dt > 0.0 && grid.max_dt() > opt.max_dt) {
        const double scale = opt.max_dt / grid.max_dt();
        for (double& t : grid.instants) t *= scale;
    }

    double lambda = 0.0;
    if (jumps) {
        const double cap = std::min(2.0, 0.5 / grid.max_dt());
        lambda = cap > 0.1 ? rng.uniform(0.1, cap) : 0.5 * cap;
    }
    return build_tree(grid, lambda, scheme);
}

AdmissiblePair draw_barriers(Rng& rng, const ScenarioTree& tree, BarrierStyle style) {
    const double s = rng.uniform(0.5, 2.0);
    AdmissiblePair pair{LadlagProcess(tree), LadlagProcess(tree)};

    if (style == BarrierStyle::Hedgeable) {
        // upper barrier right-continuous and nonincreasing along every path,
        // so cancellation never pays more than the left limit promised
        const double step = 0.3 * s / tree.levels();
        for (NodeId n = 0; n < tree.n_nodes(); ++n) {
            if (n == tree.root())
                pair.zeta.at[n] = rng.uniform(s, 2.0 * s);
            else
                pair.zeta.at[n] = pair.zeta.right[tree.parent(n)] -
                                  (rng.chance(0.5) ? 0.0 : rng.uniform(0.0, step));
            if (!tree.is_terminal(n)) pair.zeta.right[n] = pair.zeta.at[n];
        }
        for (NodeId n = 0; n < tree.n_nodes(); ++n) {
            if (tree.is_terminal(n)) {
                pair.xi.at[n] = pair.zeta.at[n];
            } else {
                pair.xi.at[n] = pair.zeta.at[n] - rng.uniform(0.0, s);
                pair.xi.right[n] =
                    pair.xi.at[n] - (rng.chance(0.3) ? 0.0 : rng.uniform(0.0, 0.5 * s));
            }
        }
        validate_admissible(tree, pair);
        return pair;
    }

    if (style == BarrierStyle::SaddleRegular) {
        for (NodeId n = 0; n < tree.n_nodes(); ++n) {
            if (tree.is_terminal(n)) {
                const double v = rng.uniform(-s, s);
                pair.xi.at[n] = v;
                pair.zeta.at[n] = v;
            } else {
                pair.xi.at[n] = rng.uniform(-s, s);
                pair.zeta.at[n] =
                    pair.xi.at[n] + (rng.chance(0.2) ? 0.0 : rng.uniform(0.0, s));
            }
        }
        for (NodeId n = 0; n < tree.n_nodes(); ++n) {
            if (tree.is_terminal(n)) continue;
            double lo = pair.xi.at[n], hi = pair.zeta.at[n];
            for (int j = 0; j < tree.n_children(n); ++j) {
                const NodeId c = tree.child(n, j);
                lo = std::min(lo, pair.xi.at[c]);
                hi = std::max(hi, pair.zeta.at[c]);
            }
            pair.xi.right[n] = lo - (rng.chance(0.3) ? 0.0 : rng.uniform(0.0, 0.3 * s));
            pair.zeta.right[n] = hi + (rng.chance(0.3) ? 0.0 : rng.uniform(0.0, 0.3 * s));
        }
        validate_admissible(tree, pair);
        return pair;
    }

    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        if (tree.is_terminal(n)) {
            const double v = rng.uniform(-s, s);
            pair.xi.at[n] = v;
            pair.zeta.at[n] = v;
            continue;
        }
        switch (style) {
            case BarrierStyle::GeneralIrregular:
            case BarrierStyle::Touching: {
                auto gap = [&] {
                    return style == BarrierStyle::Touching && rng.chance(0.4)
                               ? 0.0
                               : rng.uniform(0.0, s);
                };
                pair.xi.at[n] = rng.uniform(-s, s);
                pair.xi.right[n] = rng.uniform(-s, s);
                pair.zeta.at[n] = pair.xi.at[n] + gap();
                pair.zeta.right[n] = pair.xi.right[n] + gap();
                break;
            }
            case BarrierStyle::RightRegular: {
                pair.xi.at[n] = rng.uniform(-s, s);
                pair.xi.right[n] =
                    rng.chance(0.3) ? pair.xi.at[n]
                                    : pair.xi.at[n] - rng.uniform(0.0, 0.7 * s);
                pair.zeta.at[n] =
                    pair.xi.at[n] + (rng.chance(0.2) ? 0.0 : rng.uniform(0.0, s));
                pair.zeta.right[n] =
                    rng.chance(0.3) ? pair.zeta.at[n]
                                    : pair.zeta.at[n] + rng.uniform(0.0, 0.7 * s);
                break;
            }
            case BarrierStyle::RightContinuous: {
                pair.xi.at[n] = rng.uniform(-s, s);
                pair.xi.right[n] = pair.xi.at[n];
                pair.zeta.at[n] =
                    pair.xi.at[n] + (rng.chance(0.2) ? 0.0 : rng.uniform(0.0, s));
                pair.zeta.right[n] = pair.zeta.at[n];
                break;
            }
            default: break;
        }
    }
    validate_admissible(tree, pair);
    return pair;
}

// worst one-jump comparison weight of the linear driver a + by + cz + dk over
// all levels and branches
double worst_weight(const ScenarioTree& tree, double c, double d) {
    double w = 1.0;
    for (int level = 0; level + 1 < tree.levels(); ++level) {
        const double dt = tree.grid.dt(level);
        const double ldt = tree.lambda * dt;
        const double amp = tree.scheme == Branching::Three
                               ? std::sqrt(dt / (1.0 - (tree.lambda > 0.0 ? ldt : 0.0)))
                               : std::sqrt(dt);
        const double jump_drag = tree.lambda > 0.0 ? std::abs(d) * dt / (1.0 - ldt) : 0.0;
        w = std::min(w, 1.0 - std::abs(c) * amp - jump_drag);
        if (tree.lambda > 0.0) {
            if (tree.scheme == Branching::Three)
                w = std::min(w, 1.0 + d / tree.lambda);
            else
                w = std::min(w, 1.0 - std::abs(c) * amp + d / tree.lambda);
        }
    }
    return w;
}

struct LinearCoeffs {
    double a = 0.0, b = 0.0, c = 0.0, d = 0.0;
};

LinearCoeffs draw_linear(Rng& rng, const ScenarioTree& tree) {
    const double dt = tree.grid.max_dt();
    LinearCoeffs lc;
    lc.a = rng.uniform(-1.0, 1.0);
    const double by_cap = std::min(1.0, 0.5 / dt);
    const double bz_cap = std::min(1.0, 0.5 / std::sqrt(dt));
    lc.b = rng.uniform(-by_cap, by_cap);
    lc.c = rng.uniform(-bz_cap, bz_cap);
    lc.d = tree.lambda > 0.0 ? tree.lambda * rng.uniform(-0.85, 1.0) : 0.0;
    const double w = worst_weight(tree, lc.c, lc.d);
    if (w < kWeightMargin) {
        const double t = (1.0 - kWeightMargin) / (1.0 - w);
        lc.c *= t;
        lc.d *= t;
    }
    return lc;
}

void draw_driver(Rng& rng, const ScenarioTree& tree, FuzzInstance& inst,
                 const FuzzOptions& opt) {
    if (opt.allow_process_driver && rng.chance(0.3)) {
        inst.driver_is_process = true;
        inst.driver_process.assign(tree.n_nodes(), 0.0);
        for (double& v : inst.driver_process) v = rng.uniform(-1.0, 1.0);
        return;
    }
    const double roll = rng.uniform();
    if (roll < 0.1) {
        inst.driver = make_zero_driver();
    } else if (roll < 0.2) {
        inst.lin_a = rng.uniform(-1.0, 1.0);
        inst.driver = make_constant_driver(inst.lin_a);
    } else if (roll < 0.4) {
        inst.lin_a = rng.uniform(0.0, 1.0);
        inst.driver = make_discount_driver(inst.lin_a);
    } else {
        const LinearCoeffs lc = draw_linear(rng, tree);
        inst.lin_a = lc.a;
        inst.lin_b = lc.b;
        inst.lin_c = lc.c;
        inst.lin_d = lc.d;
        inst.driver = make_linear_driver(lc.a, lc.b, lc.c, lc.d, tree.lambda);
    }
}

}  // namespace

FuzzInstance make_instance(std::uint64_t seed, BarrierStyle style, const FuzzOptions& opt) {
    Rng rng(seed);
    FuzzInstance inst;
    inst.seed = seed;
    inst.style = style;
    inst.tree = draw_tree(rng, opt);
    inst.pair = draw_barriers(rng, inst.tree, style);
    draw_driver(rng, inst.tree, inst, opt);
    return inst;
}

ComparisonInstance make_comparison_instance(std::uint64_t seed, const FuzzOptions& opt) {
    Rng rng(seed);
    ComparisonInstance inst;
    inst.seed = seed;
    inst.tree = draw_tree(rng, opt);
    inst.pair_lo = draw_barriers(rng, inst.tree, BarrierStyle::GeneralIrregular);
    inst.pair_hi = inst.pair_lo;
    for (NodeId n = 0; n < inst.tree.n_nodes(); ++n) {
        if (inst.tree.is_terminal(n)) {
            const double lift = rng.uniform(0.0, 1.0);
            inst.pair_hi.xi.at[n] += lift;
            inst.pair_hi.zeta.at[n] += lift;
            continue;
        }
        const double dxa = rng.uniform(0.0, 1.0), dxr = rng.uniform(0.0, 1.0);
        inst.pair_hi.xi.at[n] += dxa;
        inst.pair_hi.xi.right[n] += dxr;
        inst.pair_hi.zeta.at[n] += dxa + rng.uniform(0.0, 1.0);
        inst.pair_hi.zeta.right[n] += dxr + rng.uniform(0.0, 1.0);
    }
    validate_admissible(inst.tree, inst.pair_hi);

    const LinearCoeffs lc = draw_linear(rng, inst.tree);
    const double gap = rng.uniform(0.0, 1.0);
    inst.f_hi = make_linear_driver(lc.a, lc.b, lc.c, lc.d, inst.tree.lambda);
    inst.f_lo = make_linear_driver(lc.a - gap, lc.b, lc.c, lc.d, inst.tree.lambda);
    return inst;
}

SpreadInstance make_spread_instance(std::uint64_t seed, const FuzzOptions& opt) {
    Rng rng(seed);
    SpreadInstance inst;
    inst.seed = seed;
    inst.tree = draw_tree(rng, opt);
    inst.pair_a = draw_barriers(rng, inst.tree, BarrierStyle::GeneralIrregular);
    inst.pair_b = draw_barriers(rng, inst.tree, BarrierStyle::GeneralIrregular);
    const LinearCoeffs la = draw_linear(rng, inst.tree);
    const LinearCoeffs lb = draw_linear(rng, inst.tree);
    inst.f_a = make_linear_driver(la.a, la.b, la.c, la.d, inst.tree.lambda);
    inst.f_b = make_linear_driver(lb.a, lb.b, lb.c, lb.d, inst.tree.lambda);
    return inst;
}

namespace {

double solution_distance(const ScenarioTree& tree, const DRBSDESolution& a,
                         const DRBSDESolution& b) {
    double d = 0.0;
    for (NodeId n = 0; n < tree.n_nodes(); ++n) {
        d = std::max(d, std::abs(a.y.at[n] - b.y.at[n]));
        if (!tree.is_terminal(n)) {
            d = std::max(d, std::abs(a.y.right[n] - b.y.right[n]));
            d = std::max(d, std::abs(a.z[n] - b.z[n]));
            d = std::max(d, std::abs(a.k[n] - b.k[n]));
            d = std::max(d, std::abs(a.c_jump[n] - b.c_jump[n]));
            d = std::max(d, std::abs(a.cp_jump[n] - b.cp_jump[n]));
        }
        if (n != tree.root()) {
            d = std::max(d, std::abs(a.a_inc[n] - b.a_inc[n]));
            d = std::max(d, std::abs(a.ap_inc[n] - b.ap_inc[n]));
        }
    }
    return d;
}

double monotone_defect(const ScenarioTree& tree, const std::vector<LadlagProcess>& iterates) {
    double defect = 0.0;
    for (std::size_t i = 1; i < iterates.size(); ++i)
        for (NodeId n = 0; n < tree.n_nodes(); ++n) {
            defect = std::max(defect, iterates[i - 1].at[n] - iterates[i].at[n]);
            if (!tree.is_terminal(n))
                defect = std::max(defect, iterates[i - 1].right[n] - iterates[i].right[n]);
        }
    return defect;
}

}  // namespace

FuzzReport run_invariant_suite(const FuzzInstance& inst) {
    FuzzReport rep;
    rep.seed = inst.seed;
    rep.style = inst.style;
    auto flag = [&](const std::string& check, double magnitude) {
        rep.violations.push_back({check, magnitude});
    };

    try {
        validate_admissible(inst.tree, inst.pair);
    } catch (const std::exception&) {
        flag("generator_admissibility", 0.0);
        return rep;
    }

    DRBSDESolution direct;
    try {
        direct = inst.driver_is_process
                     ? solve_direct(inst.tree, inst.pair, inst.driver_process)
                     : solve_direct(inst.tree, inst.pair, inst.driver);
    } catch (const std::exception&) {
        flag("solve_direct_threw", 0.0);
        return rep;
    }

    const VerifyReport verify =
        inst.driver_is_process
            ? verify_solution(inst.tree, direct, inst.pair, inst.driver_process)
            : verify_solution(inst.tree, direct, inst.pair, inst.driver);
    if (!verify.pass(1e-10)) flag("verify", verify.max_violation());

    try {
        if (inst.driver_is_process) {
            PicardTrace trace;
            const DRBSDESolution alt = solve_picard_driver_process(
                inst.tree, inst.pair, inst.driver_process, &trace);
            const double dist = solution_distance(inst.tree, direct, alt);
            if (dist > 1e-9) flag("solver_agreement_picard", dist);
            const double defect = std::max(monotone_defect(inst.tree, trace.x_iterates),
                                           monotone_defect(inst.tree, trace.xp_iterates));
            if (defect > 0.0) flag("picard_monotone", defect);
        } else {
            const DRBSDESolution alt =
                solve_fixed_point(inst.tree, inst.pair, inst.driver);
            const double dist = solution_distance(inst.tree, direct, alt);
            if (dist > 1e-9) flag("solver_agreement_fixed_point", dist);
            if (inst.driver.name == "zero" || inst.driver.name == "constant") {
                // the same instance expressed as a driver process closes the
                // triangle between all three solvers
                const double value = inst.driver(0.0, 0.0, 0.0, 0.0);
                const AdaptedProcess proc(inst.tree.n_nodes(), value);
                const DRBSDESolution third =
                    solve_picard_driver_process(inst.tree, inst.pair, proc);
                const double d3 = solution_distance(inst.tree, direct, third);
                if (d3 > 1e-9) flag("solver_agreement_triangle", d3);
            }
        }
    } catch (const std::exception&) {
        flag("alternative_solver_threw", 0.0);
    }

    try {
        const SupermartingalePair env = mokobodzki_construct(inst.tree, inst.pair);
        if (!is_strong_supermartingale(inst.tree, env.h, 1e-10))
            flag("envelope_h_supermartingale", 0.0);
        if (!is_strong_supermartingale(inst.tree, env.hp, 1e-10))
            flag("envelope_hp_supermartingale", 0.0);
        double defect = 0.0;
        for (NodeId n = 0; n < inst.tree.n_nodes(); ++n) {
            defect = std::max(defect, std::abs(env.h.at[n] - env.hp.at[n] -
                                               inst.pair.xi.at[n]));
            defect = std::max(defect, -env.h.at[n]);
            defect = std::max(defect, -env.hp.at[n]);
            if (!inst.tree.is_terminal(n)) {
                defect = std::max(defect, std::abs(env.h.right[n] - env.hp.right[n] -
                                                   inst.pair.xi.right[n]));
                defect = std::max(defect, -env.h.right[n]);
                defect = std::max(defect, -env.hp.right[n]);
            }
        }
        if (defect > 1e-10) flag("envelope_sandwich", defect);
    } catch (const std::exception&) {
        flag("envelope_threw", 0.0);
    }

    if (inst.style == BarrierStyle::RightContinuous) {
        double jumps = 0.0;
        for (NodeId n = 0; n < inst.tree.n_nodes(); ++n)
            jumps = std::max({jumps, std::abs(direct.c_jump[n]), std::abs(direct.cp_jump[n])});
        if (jumps != 0.0) flag("right_continuous_instant_forces", jumps);
    }

    return rep;
}

FuzzInstance shrink_failure(const FuzzInstance& failing, const FuzzOptions& opt) {
    FuzzInstance best = failing;
    const int depth = failing.tree.levels() - 1;
    for (int d = 1; d < depth; ++d) {
        FuzzOptions o = opt;
        o.max_depth = d;
        FuzzInstance candidate = make_instance(failing.seed, failing.style, o);
        if (!run_invariant_suite(candidate).ok()) {
            best = candidate;
            break;
        }
    }
    for (NodeId n = 0; n < best.tree.n_nodes(); ++n) {
        if (best.tree.is_terminal(n)) continue;
        FuzzInstance candidate = best;
        candidate.pair.xi.right[n] = candidate.pair.xi.at[n];
        candidate.pair.zeta.right[n] = candidate.pair.zeta.at[n];
        if (!run_invariant_suite(candidate).ok()) best = candidate;
    }
    {
        FuzzInstance candidate = best;
        if (candidate.driver_is_process)
            candidate.driver_process.assign(candidate.tree.n_nodes(), 0.0);
        else
            candidate.driver = make_zero_driver();
        candidate.lin_a = candidate.lin_b = candidate.lin_c = candidate.lin_d = 0.0;
        if (!run_invariant_suite(candidate).ok()) best = candidate;
    }
    return best;
}

}  // namespace drbsde
