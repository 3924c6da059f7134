#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "subtune/netcore.hpp"
#include "subtune/tensor.hpp"

namespace subtune {

class BlockNetwork;

enum class HeadKind { linear_probe, subtune, siamese };

std::string to_string(HeadKind kind);
HeadKind head_kind_from_string(const std::string& s);

struct HeadSpec {
    HeadKind kind = HeadKind::subtune;
    std::size_t in_width = 0;
    std::size_t classes = 0;

    /// Head shape for `kind` on `net`.
    static HeadSpec for_network(const BlockNetwork& net, HeadKind kind);
    friend bool operator==(const HeadSpec&, const HeadSpec&) = default;
};

/// A set of blocks chosen for tuning, in selection order, with the parameter
/// count r' of the listed blocks. Built against a network so ids are checked.
class SubsetSpec {
public:
    SubsetSpec() = default;

    std::span<const BlockId> blocks() const noexcept { return blocks_; }
    std::size_t param_count() const noexcept { return param_count_; }
    std::size_t size() const noexcept { return blocks_.size(); }
    bool empty() const noexcept { return blocks_.empty(); }
    bool contains(BlockId id) const noexcept;

    /// Ids ascending, independent of selection order.
    std::vector<BlockId> sorted() const;
    /// Comma-joined ids in selection order, e.g. "2,1". Empty subset -> "".
    std::string to_string() const;

    friend bool operator==(const SubsetSpec&, const SubsetSpec&) = default;

private:
    friend SubsetSpec make_subset(const BlockNetwork&, std::vector<BlockId>);
    std::vector<BlockId> blocks_;
    std::size_t param_count_ = 0;
};

/// Validates ids (in range, no duplicates) and records r'.
SubsetSpec make_subset(const BlockNetwork& net, std::vector<BlockId> ids);
SubsetSpec all_blocks(const BlockNetwork& net);
/// Consecutive window [start, start + size - 1].
SubsetSpec block_window(const BlockNetwork& net, std::size_t start, std::size_t size);

/// Activations at the first trainable block, plus the frozen-branch features
/// for two-branch heads. Valid until the frozen part of the network changes.
struct PreparedInput {
    std::size_t first_block = 0;  // 0-based
    Tensor2 input;
    Tensor2 frozen_features;  // siamese only
    std::uint64_t structure_generation = 0;

    std::size_t rows() const noexcept { return input.rows(); }
    PreparedInput select_rows(std::span<const std::size_t> rows) const;
};

/// Residual block stack with a readout head, per-block freeze flags and a
/// pretrained snapshot of the block parameters. Every candidate evaluation
/// restarts from the snapshot.
class BlockNetwork {
public:
    BlockNetwork() = default;

    /// Uniform +-sqrt(1/fan_in) init for every layer; snapshot == live.
    static BlockNetwork build(std::size_t width, std::size_t n_blocks, std::size_t classes,
                              std::uint64_t seed);

    std::size_t input_width() const noexcept { return width_; }
    std::size_t feature_width() const noexcept { return width_; }
    std::size_t n_blocks() const noexcept { return net_.blocks.size(); }
    std::size_t classes() const noexcept { return head_spec_.classes; }

    const Network& live() const noexcept { return net_; }
    const std::vector<ResidualBlock>& snapshot() const noexcept { return snapshot_; }
    const ResidualBlock& block(BlockId id) const;
    const DenseLayer& head() const noexcept { return net_.head; }
    const HeadSpec& head_spec() const noexcept { return head_spec_; }

    /// Unfreezes exactly `subset` (plus the head); freezes everything else.
    void set_trainable(const SubsetSpec& subset);
    SubsetSpec trainable() const;
    bool is_frozen(BlockId id) const { return block(id).frozen(); }

    /// Replaces the readout with a fresh, unfrozen head. A linear-probe head
    /// also freezes every block.
    void attach_head(const HeadSpec& spec, std::uint64_t seed);

    /// Redraws the listed blocks; the snapshot is left alone.
    void reinit_blocks(const SubsetSpec& subset, std::uint64_t seed);
    void restore_from_snapshot();
    /// Adopts the live block parameters as the new pretrained snapshot.
    void commit_snapshot();

    std::size_t param_count() const noexcept;
    std::size_t param_count(const SubsetSpec& subset) const;

    PreparedInput prepare(const Tensor2& batch) const;
    ForwardResult forward(const Tensor2& batch) const;
    ForwardResult forward(const PreparedInput& prepared) const;
    Gradients backward(const ActivationTape& tape, const Tensor2& dlogits) const;

    std::span<const double> param(ParamId id) const { return net_.param(id); }
    /// Mutable access for optimizers; invalidates outstanding tapes.
    std::span<double> mutable_param(ParamId id);
    /// Unfrozen tensors in canonical order.
    std::vector<ParamId> trainable_params() const;
    std::vector<ParamId> param_ids() const { return net_.param_ids(); }
    std::span<const double> snapshot_param(ParamId id) const;

    std::uint64_t parameter_hash() const;
    std::uint64_t snapshot_hash() const;
    std::uint64_t generation() const noexcept { return generation_; }

    /// Swaps in a reshaped block (live and snapshot). Used by structured pruning.
    void replace_block(BlockId id, ResidualBlock live, ResidualBlock snap);

    friend bool operator==(const BlockNetwork& a, const BlockNetwork& b);

private:
    friend class CheckpointCodec;

    void touch_structure() noexcept {
        ++generation_;
        ++structure_generation_;
    }

    std::size_t width_ = 0;
    Network net_;
    std::vector<ResidualBlock> snapshot_;
    HeadSpec head_spec_;
    std::uint64_t generation_ = 1;
    std::uint64_t structure_generation_ = 1;
};

/// Central-difference check on a BlockNetwork, including two-branch heads.
GradCheckReport numerical_grad_check(BlockNetwork& net, const Tensor2& batch,
                                     std::span<const int> labels, const GradCheckOptions& opts);

/// Parse failure with the byte offset where decoding stopped.
class CheckpointError : public std::runtime_error {
public:
    CheckpointError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
          offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<unsigned char> encode_checkpoint(const BlockNetwork& net);
BlockNetwork decode_checkpoint(std::span<const unsigned char> bytes);
void save_checkpoint(const BlockNetwork& net, const std::filesystem::path& path);
BlockNetwork load_checkpoint(const std::filesystem::path& path);

}  // namespace subtune
