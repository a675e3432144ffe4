#include <gtest/gtest.h>

#include "mqb/bound_constants.hpp"
#include "mqb/rng.hpp"
#include "mqb/verification.hpp"

using namespace mqb;

namespace {

void expect_rel(double got, double want, double tol = 1e-12) { EXPECT_LE(std::abs(got - want), tol * std::abs(want)); }

}  // namespace

TEST(BoundConstants, AllOnesMatchesIndependentEvaluation) {
    // Oracle: tests/oracles/compute_golden.py (mpmath, 40 digits).
    const BoundParams p = bound_constants(all_ones_bound_params());
    expect_rel(p.c_s, 2.0);
    expect_rel(p.c_xi, 4.2946940834673756);
    expect_rel(p.c_1, 8.7640532693477632);
    expect_rel(p.c_bad, 114.10647949372853);
    expect_rel(p.M, 12983.022857510238);
    expect_rel(p.k1, 143.50376268611095);
    expect_rel(p.c_w, 100.0);
    expect_rel(p.k2, 227106.83882169896);
    expect_rel(p.N0, 1229930299.3730491);
}

TEST(BoundConstants, EventScalesAtSecondInstance) {
    const BoundParams p = all_ones_bound_params();
    const EventScales ev = meta_event_scales(p, 2.0);
    expect_rel(ev.f_m, 24.476649250079016);
    expect_rel(ev.f_s, 566355.32333438687);
    EXPECT_EQ(ev.delta, 1.0);
    EXPECT_THROW(meta_event_scales(p, 1.0), InvalidInput);
}

TEST(BoundConstants, TheoryWideningAtReferenceGeometry) {
    expect_rel(theory_widening_constant(1.0, 0.0625 / 7.0, 5.0, 4.2), 2450.0);
}

TEST(BoundConstants, DeltaOutOfRange) {
    BoundParams p = all_ones_bound_params();
    p.delta = 0.5;
    EXPECT_THROW(bound_constants(p), InvalidInput);
    p.delta = 0.0;
    EXPECT_THROW(bound_constants(p), InvalidInput);
    p = all_ones_bound_params();
    p.sigma = 0.0;
    EXPECT_THROW(bound_constants(p), InvalidInput);
}

TEST(BoundConstants, SigmaHomogeneity) {
    BoundParams p = all_ones_bound_params();
    const BoundParams a = bound_constants(p);
    p.sigma = 2.0;
    const BoundParams b = bound_constants(p);
    expect_rel(b.c_s, 4.0 * a.c_s);
    expect_rel(b.c_xi, 2.0 * a.c_xi);
}

TEST(BoundConstants, MonotoneInEventScales) {
    RngStream rng(12);
    for (int i = 0; i < 100; ++i) {
        BoundParams p = all_ones_bound_params();
        p.f_m = 0.1 + 10 * rng.uniform();
        p.f_s = 0.1 + 10 * rng.uniform();
        p.tau = 1 + 20 * rng.uniform();
        BoundParams q = p;
        q.f_m += 5 * rng.uniform();
        q.f_s += 5 * rng.uniform();
        const auto a = bound_constants(p);
        const auto b = bound_constants(q);
        EXPECT_GE(b.M, a.M);
        EXPECT_GE(b.k1, a.k1);
    }
}

TEST(BoundConstants, N0IsMAtInverseNDelta) {
    for (double n : {3.0, 10.0, 1000.0}) {
        BoundParams p = all_ones_bound_params();
        p.N = n;
        p.delta = 1.0 / n;
        const EventScales ev = meta_event_scales(p, n + 1.0);
        p.f_m = ev.f_m;
        p.f_s = ev.f_s;
        const auto out = bound_constants(p);
        expect_rel(out.N0, out.M);
        EXPECT_TRUE(std::isfinite(out.k2) && out.k2 > 0);
    }
}
