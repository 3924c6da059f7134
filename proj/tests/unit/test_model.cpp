#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "subtune/model.hpp"
#include "subtune/rng.hpp"

namespace subtune {
namespace {

namespace fs = std::filesystem;

Tensor2 random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    Tensor2 x(rows, cols);
    for (double& v : x.values()) v = rng.normal();
    return x;
}

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / ("subtune_model_" + name);
}

TEST(Build, ParamCountMatchesShapes) {
    const BlockNetwork net = BlockNetwork::build(4, 2, 3, 1);
    EXPECT_EQ(net.param_count(), 2u * (2u * (16u + 4u)) + (4u * 3u + 3u));
    EXPECT_EQ(net.param_count(), 95u);
}

TEST(Build, SameSeedIsBitIdentical) {
    EXPECT_EQ(BlockNetwork::build(6, 3, 4, 7), BlockNetwork::build(6, 3, 4, 7));
    EXPECT_EQ(BlockNetwork::build(6, 3, 4, 7).parameter_hash(),
              BlockNetwork::build(6, 3, 4, 7).parameter_hash());
}

TEST(Build, DifferentSeedDiffers) {
    EXPECT_NE(BlockNetwork::build(6, 3, 4, 7).parameter_hash(),
              BlockNetwork::build(6, 3, 4, 8).parameter_hash());
}

TEST(Build, SnapshotStartsEqualToLive) {
    const BlockNetwork net = BlockNetwork::build(4, 3, 2, 1);
    for (const ParamId id : net.param_ids()) {
        if (!id.is_head()) EXPECT_TRUE(bitwise_equal(net.param(id), net.snapshot_param(id)));
    }
}

TEST(SetTrainable, EmptySubsetIsLinearProbing) {
    BlockNetwork net = BlockNetwork::build(4, 3, 2, 1);
    net.set_trainable(SubsetSpec{});
    for (std::size_t b = 1; b <= 3; ++b) EXPECT_TRUE(net.is_frozen(BlockId{b}));
    EXPECT_FALSE(net.head().frozen);
    EXPECT_EQ(net.trainable_params().size(), 2u);
}

TEST(SetTrainable, AllBlocksIsFullFinetuning) {
    BlockNetwork net = BlockNetwork::build(4, 3, 2, 1);
    net.set_trainable(all_blocks(net));
    for (std::size_t b = 1; b <= 3; ++b) EXPECT_FALSE(net.is_frozen(BlockId{b}));
}

TEST(SetTrainable, NonAdjacentSubset) {
    BlockNetwork net = BlockNetwork::build(4, 16, 2, 1);
    net.set_trainable(make_subset(net, {BlockId{2}, BlockId{14}}));
    for (std::size_t b = 1; b <= 16; ++b) EXPECT_EQ(net.is_frozen(BlockId{b}), b != 2 && b != 14) << b;
}

TEST(SetTrainable, InvalidIdsThrow) {
    const BlockNetwork net = BlockNetwork::build(4, 3, 2, 1);
    EXPECT_THROW(make_subset(net, {BlockId{4}}), std::out_of_range);
    EXPECT_THROW(make_subset(net, {BlockId{0}}), std::out_of_range);
    EXPECT_THROW(make_subset(net, {BlockId{1}, BlockId{1}}), std::invalid_argument);
}

TEST(ParamCount, PerBlockAndSubsets) {
    const BlockNetwork net = BlockNetwork::build(4, 5, 3, 1);
    EXPECT_EQ(net.param_count(make_subset(net, {BlockId{3}})), 40u);
    EXPECT_EQ(net.param_count(SubsetSpec{}), 0u);
    EXPECT_EQ(net.param_count(all_blocks(net)), 5u * 40u);
    EXPECT_EQ(make_subset(net, {BlockId{1}, BlockId{4}}).param_count(), 80u);
}

TEST(Subset, WindowAndString) {
    const BlockNetwork net = BlockNetwork::build(4, 8, 3, 1);
    const SubsetSpec w = block_window(net, 3, 3);
    EXPECT_EQ(w.to_string(), "3,4,5");
    EXPECT_THROW(block_window(net, 7, 3), std::out_of_range);
}

TEST(Reinit, EmptySubsetLeavesNetworkUnchanged) {
    BlockNetwork net = BlockNetwork::build(4, 3, 2, 1);
    const auto before = net.parameter_hash();
    net.reinit_blocks(SubsetSpec{}, 99);
    EXPECT_EQ(net.parameter_hash(), before);
}

TEST(Reinit, RestoreFromSnapshotRoundTrips) {
    BlockNetwork net = BlockNetwork::build(4, 3, 2, 1);
    const BlockNetwork original = net;
    net.reinit_blocks(make_subset(net, {BlockId{1}, BlockId{3}}), 99);
    EXPECT_NE(net.parameter_hash(), original.parameter_hash());
    net.restore_from_snapshot();
    EXPECT_EQ(net.parameter_hash(), original.parameter_hash());
}

TEST(Reinit, DeterministicFromSameState) {
    BlockNetwork a = BlockNetwork::build(4, 3, 2, 1);
    BlockNetwork b = a;
    a.reinit_blocks(make_subset(a, {BlockId{1}}), 5);
    b.reinit_blocks(make_subset(b, {BlockId{1}}), 5);
    EXPECT_EQ(a.parameter_hash(), b.parameter_hash());
    EXPECT_EQ(a.snapshot_hash(), BlockNetwork::build(4, 3, 2, 1).snapshot_hash());
}

TEST(Checkpoint, RoundTripIsIdentity) {
    BlockNetwork net = BlockNetwork::build(5, 3, 4, 2);
    net.set_trainable(make_subset(net, {BlockId{2}}));
    net.attach_head(HeadSpec::for_network(net, HeadKind::siamese), 3);
    net.mutable_param({2, Slot::lin1_weight})[0] += 0.5;
    const fs::path path = temp_file("roundtrip.bin");
    save_checkpoint(net, path);
    const BlockNetwork back = load_checkpoint(path);
    EXPECT_EQ(back, net);
    EXPECT_EQ(back.parameter_hash(), net.parameter_hash());
    EXPECT_EQ(back.snapshot_hash(), net.snapshot_hash());
    EXPECT_EQ(back.head_spec(), net.head_spec());
    fs::remove(path);
}

TEST(Checkpoint, TruncatedFileIsRejected) {
    const auto bytes = encode_checkpoint(BlockNetwork::build(4, 2, 3, 1));
    for (std::size_t cut : {std::size_t{0}, std::size_t{3}, bytes.size() / 2, bytes.size() - 1}) {
        const std::span<const unsigned char> part(bytes.data(), cut);
        EXPECT_THROW(decode_checkpoint(part), CheckpointError) << "cut at " << cut;
    }
}

TEST(Checkpoint, BadMagicIsReported) {
    auto bytes = encode_checkpoint(BlockNetwork::build(4, 2, 3, 1));
    std::copy_n("XXXX", 4, bytes.begin());
    try {
        decode_checkpoint(bytes);
        FAIL() << "expected a magic error";
    } catch (const CheckpointError& e) {
        EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos) << e.what();
        EXPECT_EQ(e.offset(), 0u);
    }
}

TEST(Checkpoint, TrailingBytesAreRejected) {
    auto bytes = encode_checkpoint(BlockNetwork::build(4, 2, 3, 1));
    bytes.push_back(0);
    EXPECT_THROW(decode_checkpoint(bytes), CheckpointError);
}

TEST(Head, SiameseDoublesInputWidth) {
    BlockNetwork net = BlockNetwork::build(8, 2, 3, 1);
    net.attach_head(HeadSpec::for_network(net, HeadKind::siamese), 2);
    EXPECT_EQ(net.head().in(), 16u);
    EXPECT_THROW(net.attach_head(HeadSpec{HeadKind::siamese, 8, 3}, 2), DimensionError);
}

TEST(Head, SiameseWithZeroSnapshotHalfMatchesSubtuneHead) {
    BlockNetwork sub = BlockNetwork::build(6, 3, 4, 1);
    sub.set_trainable(make_subset(sub, {BlockId{2}}));
    sub.attach_head(HeadSpec::for_network(sub, HeadKind::subtune), 5);
    sub.mutable_param({2, Slot::lin2_weight})[3] += 0.3;

    BlockNetwork siam = sub;
    siam.attach_head(HeadSpec::for_network(siam, HeadKind::siamese), 6);
    auto w = siam.mutable_param(ParamId::head_weight());
    const auto w_sub = sub.param(ParamId::head_weight());
    for (std::size_t o = 0; o < 4; ++o) {
        for (std::size_t i = 0; i < 12; ++i) w[o * 12 + i] = i < 6 ? 0.0 : w_sub[o * 6 + i - 6];
    }
    const auto b_sub = sub.param(ParamId::head_bias());
    std::copy(b_sub.begin(), b_sub.end(), siam.mutable_param(ParamId::head_bias()).begin());

    const Tensor2 x = random_batch(5, 6, 9);
    const Tensor2 a = sub.forward(x).logits;
    const Tensor2 b = siam.forward(x).logits;
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.values()[i], b.values()[i], 1e-12);
}

TEST(Head, LinearProbeEqualsSubtuneWithEmptySubset) {
    BlockNetwork lp = BlockNetwork::build(5, 3, 3, 1);
    lp.set_trainable(all_blocks(lp));
    lp.attach_head(HeadSpec::for_network(lp, HeadKind::linear_probe), 4);
    BlockNetwork st = BlockNetwork::build(5, 3, 3, 1);
    st.set_trainable(SubsetSpec{});
    st.attach_head(HeadSpec::for_network(st, HeadKind::subtune), 4);
    EXPECT_EQ(lp.trainable_params(), st.trainable_params());
    const Tensor2 x = random_batch(4, 5, 2);
    EXPECT_EQ(lp.forward(x).logits, st.forward(x).logits);
}

TEST(Prepare, FrozenPrefixIsFoldedIntoInput) {
    BlockNetwork net = BlockNetwork::build(4, 4, 3, 1);
    net.set_trainable(make_subset(net, {BlockId{3}}));
    const Tensor2 x = random_batch(5, 4, 3);
    const PreparedInput p = net.prepare(x);
    EXPECT_EQ(p.first_block, 2u);
    EXPECT_EQ(net.forward(p).logits, net.forward(x).logits);
}

}  // namespace
}  // namespace subtune
