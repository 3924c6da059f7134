#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "subtune/datakit.hpp"
#include "subtune/model.hpp"
#include "subtune/rng.hpp"
#include "subtune/train.hpp"

namespace subtune {
namespace {

Dataset blobs(std::size_t n, std::size_t dim, std::uint64_t seed, double sep = 4.0) {
    Rng rng(seed);
    Dataset ds;
    ds.x = Tensor2(n, dim);
    ds.classes = 2;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = static_cast<int>(i % 2);
        ds.y.push_back(y);
        for (std::size_t j = 0; j < dim; ++j) ds.x(i, j) = 0.5 * rng.normal();
        ds.x(i, 0) += y == 0 ? -sep / 2 : sep / 2;
    }
    return ds;
}

Dataset random_labels(std::size_t n, std::size_t dim, std::size_t classes, std::uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    ds.x = Tensor2(n, dim);
    ds.classes = classes;
    for (double& v : ds.x.values()) v = rng.normal();
    for (std::size_t i = 0; i < n; ++i) ds.y.push_back(static_cast<int>(rng.below(classes)));
    return ds;
}

BlockNetwork tuned_copy(const BlockNetwork& pretrained, const SubsetSpec& subset) {
    return prepare_for_tuning(pretrained, subset, HeadKind::subtune, 17);
}

TEST(Train, OneStepPerEpochWhenBatchExceedsData) {
    BlockNetwork net = BlockNetwork::build(4, 2, 2, 1);
    net.set_trainable(SubsetSpec{});
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 256;
    std::size_t steps = 0;
    TrainHooks hooks;
    hooks.after_step = [&](BlockNetwork&) { ++steps; };
    train(net, blobs(10, 4, 1), cfg, hooks);
    EXPECT_EQ(steps, 3u);
    EXPECT_EQ(steps_per_epoch(10, 256), 1u);
    EXPECT_EQ(steps_per_epoch(10, 3), 4u);
}

TEST(Train, ZeroEpochsRejected) {
    BlockNetwork net = BlockNetwork::build(4, 2, 2, 1);
    TrainConfig cfg;
    cfg.epochs = 0;
    EXPECT_THROW(train(net, blobs(10, 4, 1), cfg), std::invalid_argument);
}

TEST(Train, ZeroLearningRateLeavesNetworkUnchanged) {
    BlockNetwork net = BlockNetwork::build(4, 2, 2, 1);
    net.set_trainable(all_blocks(net));
    const Dataset data = blobs(20, 4, 2);
    const auto before = net.parameter_hash();
    const EvalRecord pre = evaluate(net, data);
    TrainConfig cfg;
    cfg.lr = 0.0;
    cfg.weight_decay = 0.0;
    cfg.epochs = 2;
    const EvalRecord post = train(net, data, cfg);
    EXPECT_EQ(net.parameter_hash(), before);
    EXPECT_EQ(post, pre);
}

TEST(Train, HeadOnlySeparatesLinearBlobs) {
    BlockNetwork net = BlockNetwork::build(4, 2, 2, 3);
    net.set_trainable(SubsetSpec{});
    TrainConfig cfg;
    cfg.lr = 1e-2;
    cfg.epochs = 50;
    EXPECT_GE(train(net, blobs(200, 4, 4), cfg).accuracy, 0.99);
}

TEST(Train, ClassCountMismatchThrows) {
    BlockNetwork net = BlockNetwork::build(4, 2, 3, 1);
    EXPECT_THROW(train(net, blobs(10, 4, 1), TrainConfig{}), std::invalid_argument);
}

TEST(Train, FrozenParametersStayBitwiseEqual) {
    const BlockNetwork pretrained = BlockNetwork::build(5, 4, 3, 2);
    const Dataset data = random_labels(40, 5, 3, 3);
    for (const auto& ids : std::vector<std::vector<BlockId>>{{}, {BlockId{2}}, {BlockId{1}, BlockId{4}}}) {
        const SubsetSpec subset = make_subset(pretrained, ids);
        BlockNetwork net = tuned_copy(pretrained, subset);
        TrainConfig cfg;
        cfg.lr = 1e-2;
        cfg.epochs = 3;
        train(net, data, cfg);
        for (std::size_t b = 1; b <= 4; ++b) {
            const bool tuned = std::find(ids.begin(), ids.end(), BlockId{b}) != ids.end();
            for (Slot s : {Slot::lin1_weight, Slot::lin1_bias, Slot::lin2_weight, Slot::lin2_bias}) {
                const bool same = bitwise_equal(net.param({b, s}), pretrained.param({b, s}));
                EXPECT_EQ(same, !tuned) << "block " << b;
            }
        }
    }
}

TEST(Train, DeterministicForFixedSeed) {
    const BlockNetwork pretrained = BlockNetwork::build(5, 3, 3, 2);
    const SubsetSpec subset = make_subset(pretrained, {BlockId{2}});
    const Dataset data = random_labels(30, 5, 3, 4);
    TrainConfig cfg;
    cfg.seed = 9;
    BlockNetwork a = tuned_copy(pretrained, subset);
    BlockNetwork b = tuned_copy(pretrained, subset);
    EXPECT_EQ(train(a, data, cfg), train(b, data, cfg));
    EXPECT_EQ(a.parameter_hash(), b.parameter_hash());
}

TEST(CosineSchedule, EndpointsAndMonotone) {
    const double base = 0.1;
    const std::size_t total = 37;
    EXPECT_EQ(cosine_lr(base, 0, total), base);
    double prev = base;
    for (std::size_t t = 1; t < total; ++t) {
        const double lr = cosine_lr(base, t, total);
        EXPECT_LE(lr, prev);
        EXPECT_GT(lr, 0.0);
        prev = lr;
    }
    const double last = 0.5 * base * (1.0 + std::cos(std::numbers::pi * (total - 1) / total));
    EXPECT_NEAR(cosine_lr(base, total - 1, total), last, 1e-15);
}

TEST(Evaluate, ChanceLevelOnRandomLabels) {
    const std::size_t n = 3000, classes = 5;
    const BlockNetwork net = BlockNetwork::build(6, 2, classes, 1);
    const double acc = evaluate(net, random_labels(n, 6, classes, 7)).accuracy;
    const double p = 1.0 / classes;
    EXPECT_NEAR(acc, p, 3.0 * std::sqrt(p * (1 - p) / n) + 0.02);
}

TEST(Evaluate, SingleCorrectSample) {
    const BlockNetwork net = BlockNetwork::build(3, 1, 3, 1);
    Dataset one;
    one.x = Tensor2(1, 3, {0.3, -0.2, 0.9});
    one.classes = 3;
    one.y = {static_cast<int>(argmax(net.forward(one.x).logits.row(0)))};
    EXPECT_EQ(evaluate(net, one).accuracy, 1.0);
    EXPECT_EQ(evaluate(net, one), evaluate(net, one));
}

TEST(KFold, EvenSizes) {
    const std::vector<int> y(10, 0);
    const FoldSplit s = kfold_split(10, 5, y, 1);
    ASSERT_EQ(s.folds.size(), 5u);
    for (const auto& f : s.folds) EXPECT_EQ(f.size(), 2u);
}

TEST(KFold, StratifiedOnePerClassPerFold) {
    std::vector<int> y;
    for (int i = 0; i < 10; ++i) y.push_back(i % 2);
    const FoldSplit s = kfold_split(10, 5, y, 3);
    EXPECT_TRUE(s.stratified);
    for (const auto& f : s.folds) {
        ASSERT_EQ(f.size(), 2u);
        EXPECT_NE(y[f[0]], y[f[1]]);
    }
}

TEST(KFold, SameSeedSameFoldsAndDisjointCover) {
    std::vector<int> y;
    Rng rng(5);
    for (int i = 0; i < 53; ++i) y.push_back(static_cast<int>(rng.below(4)));
    const FoldSplit a = kfold_split(53, 5, y, 8);
    EXPECT_EQ(a.folds, kfold_split(53, 5, y, 8).folds);
    std::set<std::size_t> seen;
    for (const auto& f : a.folds) {
        for (std::size_t i : f) EXPECT_TRUE(seen.insert(i).second);
    }
    EXPECT_EQ(seen.size(), 53u);
    for (int c = 0; c < 4; ++c) {
        std::size_t lo = 1000, hi = 0;
        for (const auto& f : a.folds) {
            const auto cnt = static_cast<std::size_t>(std::count_if(f.begin(), f.end(), [&](std::size_t i) { return y[i] == c; }));
            lo = std::min(lo, cnt);
            hi = std::max(hi, cnt);
        }
        EXPECT_LE(hi - lo, 1u) << "class " << c;
    }
}

TEST(KFold, NegativeLabelsFallBackToUnstratified) {
    const std::vector<int> y{0, 1, -1, 0, 1, 0};
    const FoldSplit s = kfold_split(6, 2, y, 1);
    EXPECT_FALSE(s.stratified);
    EXPECT_EQ(s.folds[0].size() + s.folds[1].size(), 6u);
}

TEST(KFold, TwoFoldsOfTwo) {
    const std::vector<int> y{0, 1, 0, 1};
    const FoldSplit s = kfold_split(4, 2, y, 1);
    EXPECT_EQ(s.folds[0].size(), 2u);
    EXPECT_EQ(s.folds[1].size(), 2u);
}

TEST(CvScore, DeterministicAndMeanOfFolds) {
    const BlockNetwork pretrained = BlockNetwork::build(5, 3, 3, 2);
    const Dataset data = random_labels(30, 5, 3, 4);
    TrainConfig cfg;
    cfg.epochs = 3;
    const CvResult a = cv_score(pretrained, SubsetSpec{}, data, cfg);
    const CvResult b = cv_score(pretrained, SubsetSpec{}, data, cfg);
    EXPECT_EQ(a.mean_accuracy, b.mean_accuracy);
    double sum = 0.0;
    for (const auto& r : a.held_out) sum += r.accuracy;
    EXPECT_EQ(a.mean_accuracy, sum / static_cast<double>(a.held_out.size()));
}

TEST(CvScore, MemorizationGapAllowed) {
    const BlockNetwork pretrained = BlockNetwork::build(8, 3, 3, 2);
    const Dataset data = random_labels(20, 8, 3, 6);
    TrainConfig cfg;
    cfg.lr = 3e-2;
    cfg.epochs = 200;
    cfg.batch_size = 20;
    const CvResult r = cv_score(pretrained, all_blocks(pretrained), data, cfg, {2});
    for (const auto& t : r.train) EXPECT_EQ(t.accuracy, 1.0);
    EXPECT_LT(r.mean_accuracy, 1.0);
}

TEST(CvScore, PretrainedIsNeverModified) {
    const BlockNetwork pretrained = BlockNetwork::build(5, 3, 3, 2);
    const auto hash = pretrained.parameter_hash();
    TrainConfig cfg;
    cfg.epochs = 2;
    cv_score(pretrained, all_blocks(pretrained), random_labels(20, 5, 3, 1), cfg);
    EXPECT_EQ(pretrained.parameter_hash(), hash);
}

TEST(LrSweep, SingleValueAndTieRule) {
    const BlockNetwork pretrained = BlockNetwork::build(4, 2, 2, 2);
    const Dataset data = blobs(20, 4, 3);
    TrainConfig cfg;
    cfg.epochs = 2;
    const std::vector<double> one{3e-3};
    EXPECT_EQ(lr_sweep(pretrained, SubsetSpec{}, data, one, cfg).best_lr, 3e-3);
    // At lr 0 nothing trains, so every candidate ties.
    const std::vector<double> zeros{0.0, 0.0};
    EXPECT_EQ(lr_sweep(pretrained, SubsetSpec{}, data, zeros, cfg).scores.size(), 2u);
    EXPECT_EQ(std::size(kShiftLearningRates), 5u);
}

TEST(LrSweep, TiesGoToLargerRate) {
    const BlockNetwork pretrained = BlockNetwork::build(4, 2, 2, 2);
    const Dataset data = blobs(20, 4, 3, 40.0);
    TrainConfig cfg;
    cfg.epochs = 1;
    const std::vector<double> lrs{1e-9, 2e-9};
    const SweepResult r = lr_sweep(pretrained, SubsetSpec{}, data, lrs, cfg);
    ASSERT_EQ(r.scores[0].second, r.scores[1].second);
    EXPECT_EQ(r.best_lr, 2e-9);
}

}  // namespace
}  // namespace subtune
