#include <gtest/gtest.h>

#include "subtune/costmodel.hpp"
#include "subtune/rng.hpp"

namespace subtune {
namespace {

const CostProfile kHand{{2, 3, 1, 4}, {1, 2, 2, 1}};

TEST(ClosedForm, HandProfile) {
    EXPECT_DOUBLE_EQ(total_time(kHand, {2, 3}), 20.0);
    EXPECT_DOUBLE_EQ(baseline_time(kHand), 11.0);
    EXPECT_DOUBLE_EQ(added_cost(kHand, {2, 3}), 9.0);
    EXPECT_DOUBLE_EQ(total_time(kHand, {1, 1}), 22.0);
    EXPECT_DOUBLE_EQ(total_time(kHand, {4, 4}), 18.0);
}

TEST(ClosedForm, SingleLayer) {
    const CostProfile p{{5}, {3}};
    EXPECT_DOUBLE_EQ(baseline_time(p), 8.0);
    EXPECT_DOUBLE_EQ(total_time(p, {1, 1}), 2 * 3 + 2 * 5 + 2 * 5);
}

TEST(ClosedForm, AllZeros) {
    const CostProfile p{{0, 0, 0}, {0, 0, 0}};
    EXPECT_EQ(baseline_time(p), 0.0);
    EXPECT_EQ(total_time(p, {1, 3}), 0.0);
}

TEST(ClosedForm, AddedCostCanBeNegative) {
    const CostProfile p{{10, 1}, {10, 0}};
    EXPECT_LT(added_cost(p, {2, 2}), 0.0);
}

TEST(ClosedForm, InvalidInputs) {
    EXPECT_THROW(total_time(kHand, {0, 1}), std::invalid_argument);
    EXPECT_THROW(total_time(kHand, {3, 2}), std::invalid_argument);
    EXPECT_THROW(total_time(kHand, {1, 5}), std::invalid_argument);
    EXPECT_THROW(baseline_time(CostProfile{{1}, {1, 2}}), std::invalid_argument);
    EXPECT_THROW(baseline_time(CostProfile{{-1}, {1}}), std::invalid_argument);
    EXPECT_THROW(baseline_time(CostProfile{}), std::invalid_argument);
}

TEST(Simulator, MatchesClosedFormOnRandomProfiles) {
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        Rng rng(seed);
        const std::size_t n = 1 + rng.below(10);
        CostProfile p;
        for (std::size_t i = 0; i < n; ++i) {
            p.c.push_back(static_cast<double>(rng.below(20)));
            p.s.push_back(static_cast<double>(rng.below(20)));
        }
        EXPECT_DOUBLE_EQ(simulate_pipeline(p, {1, 1}, false), baseline_time(p)) << "seed " << seed;
        const std::size_t a = 1 + rng.below(n);
        const std::size_t b = a + rng.below(n - a + 1);
        EXPECT_DOUBLE_EQ(simulate_pipeline(p, {a, b}, true), total_time(p, {a, b}))
            << "seed " << seed << " range " << a << ".." << b;
    }
}

TEST(Sweep, RowCountsAndArgmin) {
    EXPECT_EQ(sweep_ranges(kHand, 4).rows.size(), 1u);
    const RangeSweep w1 = sweep_ranges(kHand, 1);
    ASSERT_EQ(w1.rows.size(), 4u);
    for (const SweepRow& r : w1.rows) {
        EXPECT_EQ(r.baseline, 11.0);
        EXPECT_DOUBLE_EQ(r.added, r.total - r.baseline);
        EXPECT_GE(r.added, w1.rows[w1.argmin].added);
    }
    EXPECT_THROW(sweep_ranges(kHand, 0), std::invalid_argument);
    EXPECT_THROW(sweep_ranges(kHand, 5), std::invalid_argument);
}

TEST(Sweep, InteriorMinimumExists) {
    // Starts: 1 -> 30, 2 -> 25, 3 -> 40.
    const CostProfile p{{5, 0, 10}, {0, 0, 0}};
    const RangeSweep sw = sweep_ranges(p, 1);
    EXPECT_EQ(sw.rows[sw.argmin].total, 25.0);
    EXPECT_GT(sw.argmin, 0u);
    EXPECT_LT(sw.argmin + 1, sw.rows.size());
}

TEST(Profile, FromNetwork) {
    const BlockNetwork net = BlockNetwork::build(4, 3, 2, 1);
    const CostProfile p = profile_from_network(net, {0.5, 0.25});
    ASSERT_EQ(p.layers(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_DOUBLE_EQ(p.c[i], 32.0 * 0.5);
        EXPECT_DOUBLE_EQ(p.s[i], 320.0 * 0.25);
    }
    EXPECT_THROW(profile_from_network(net, {0.0, 1.0}), std::invalid_argument);
}

TEST(Profile, JsonRoundTrip) {
    const CostProfile back = cost_profile_from_json(to_json(kHand));
    EXPECT_EQ(back.c, kHand.c);
    EXPECT_EQ(back.s, kHand.s);
}

}  // namespace
}  // namespace subtune
