#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "subtune/rng.hpp"
#include "subtune/stats.hpp"

namespace subtune {
namespace {

TEST(Stats, MeanAndStddev) {
    const std::vector<double> xs{1, 2, 3, 4};
    EXPECT_DOUBLE_EQ(mean(xs), 2.5);
    EXPECT_NEAR(sample_stddev(xs), std::sqrt(5.0 / 3.0), 1e-15);
    EXPECT_EQ(sample_stddev(std::vector<double>{7}), 0.0);
}

TEST(Stats, AverageRanksShareTies) {
    EXPECT_EQ(average_ranks(std::vector<double>{10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
}

TEST(Stats, SpearmanExtremesAndConstant) {
    const std::vector<double> x{1, 2, 3, 4};
    EXPECT_NEAR(spearman(x, std::vector<double>{1, 4, 9, 16}), 1.0, 1e-15);
    EXPECT_NEAR(spearman(x, std::vector<double>{4, 3, 2, 1}), -1.0, 1e-15);
    EXPECT_TRUE(std::isnan(spearman(x, std::vector<double>{2, 2, 2, 2})));
}

TEST(Rng, SameSeedSameStream) {
    Rng a(5), b(5);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, BelowStaysInRange) {
    Rng r(9);
    for (int i = 0; i < 1000; ++i) EXPECT_LT(r.below(7), 7u);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
    }
}

TEST(Rng, ShuffleIsPermutation) {
    Rng r(2);
    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
    r.shuffle(std::span<int>(v));
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(sorted, (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7}));
}

}  // namespace
}  // namespace subtune
