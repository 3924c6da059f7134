#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "subtune/tensor.hpp"

namespace subtune {

/// 1-based position of a residual block in the network.
struct BlockId {
    std::size_t index = 0;
    friend auto operator<=>(const BlockId&, const BlockId&) = default;
};

enum class Slot : std::uint8_t {
    head_weight,
    head_bias,
    lin1_weight,
    lin1_bias,
    lin2_weight,
    lin2_bias,
};

/// Names one parameter tensor. Block 0 is reserved for the readout head.
struct ParamId {
    std::size_t block = 0;
    Slot slot = Slot::head_weight;

    static ParamId head_weight() { return {0, Slot::head_weight}; }
    static ParamId head_bias() { return {0, Slot::head_bias}; }
    bool is_head() const noexcept { return block == 0; }
    bool is_bias() const noexcept {
        return slot == Slot::head_bias || slot == Slot::lin1_bias || slot == Slot::lin2_bias;
    }
    std::string name() const;

    friend auto operator<=>(const ParamId&, const ParamId&) = default;
};

struct DenseLayer {
    Tensor2 weight;  // out x in
    std::vector<double> bias;
    bool frozen = false;

    DenseLayer() = default;
    DenseLayer(std::size_t in, std::size_t out);

    std::size_t in() const noexcept { return weight.cols(); }
    std::size_t out() const noexcept { return weight.rows(); }
    std::size_t param_count() const noexcept { return weight.size() + bias.size(); }

    /// Overwrites weight and bias with uniform draws in +-sqrt(1/fan_in).
    void init_uniform(std::uint64_t seed);
};

/// x + lin2(relu(lin1(x))). lin1 maps width -> hidden, lin2 hidden -> width.
struct ResidualBlock {
    DenseLayer lin1;
    DenseLayer lin2;
    BlockId id;

    ResidualBlock() = default;
    ResidualBlock(std::size_t width, BlockId block_id);

    std::size_t width() const noexcept { return lin1.in(); }
    std::size_t hidden() const noexcept { return lin1.out(); }
    std::size_t param_count() const noexcept { return lin1.param_count() + lin2.param_count(); }
    bool frozen() const noexcept { return lin1.frozen && lin2.frozen; }
    void set_frozen(bool f) noexcept { lin1.frozen = lin2.frozen = f; }
    void init_uniform(std::uint64_t seed);

    std::span<double> param(Slot slot);
    std::span<const double> param(Slot slot) const;
};

/// Plain block stack plus readout head.
struct Network {
    std::vector<ResidualBlock> blocks;
    DenseLayer head;

    std::size_t input_width() const;
    std::span<double> param(ParamId id);
    std::span<const double> param(ParamId id) const;
    bool is_frozen(ParamId id) const;
    /// Every parameter tensor in canonical order: blocks ascending, then head.
    std::vector<ParamId> param_ids() const;
};

/// Quantities a block's backward pass needs.
struct BlockTrace {
    Tensor2 input;
    Tensor2 pre;  // lin1 output before the ReLU
};

/// Per-call record of a forward pass. `first_block` is the 0-based index of
/// the first block actually executed (earlier blocks were folded into the
/// input because they are frozen).
struct ActivationTape {
    std::size_t first_block = 0;
    std::vector<BlockTrace> traces;
    Tensor2 features;  // head input
    std::size_t rows = 0;
    std::uint64_t generation = 0;
};

struct ForwardResult {
    Tensor2 logits;
    ActivationTape tape;
};

struct LossResult {
    double loss = 0.0;
    Tensor2 dlogits;
};

/// Gradient tensors for unfrozen parameters only, ordered by ParamId.
class Gradients {
public:
    void set(ParamId id, std::vector<double> values) { entries_[id] = std::move(values); }
    bool contains(ParamId id) const { return entries_.count(id) != 0; }
    const std::vector<double>& at(ParamId id) const { return entries_.at(id); }
    std::size_t size() const noexcept { return entries_.size(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

private:
    std::map<ParamId, std::vector<double>> entries_;
};

void dense_forward(const DenseLayer& layer, const Tensor2& x, Tensor2& y);
Tensor2 block_forward(const ResidualBlock& block, const Tensor2& x, BlockTrace* trace);

/// Runs blocks[first, end) on x. Traces are appended when `traces` is non-null.
Tensor2 forward_blocks(std::span<const ResidualBlock> blocks, const Tensor2& x,
                       std::size_t first, std::vector<BlockTrace>* traces);

/// Full forward of a plain network.
ForwardResult forward(const Network& net, const Tensor2& batch);

/// Mean softmax cross-entropy and its gradient (softmax - onehot) / batch.
LossResult loss_and_grad(const Tensor2& logits, std::span<const int> labels);

/// Row-wise softmax.
Tensor2 softmax(const Tensor2& logits);

struct HeadGrad {
    std::vector<double> weight;
    std::vector<double> bias;
    Tensor2 dfeatures;
};
HeadGrad head_backward(const DenseLayer& head, const Tensor2& features, const Tensor2& dlogits);

/// Backprop from the stack output down to the earliest unfrozen block in the
/// tape. Only unfrozen tensors get entries.
void blocks_backward(std::span<const ResidualBlock> blocks, const ActivationTape& tape,
                     Tensor2 dfeatures, Gradients& out);

/// Head plus block stack. Throws if the tape does not match the network.
Gradients backward(const Network& net, const ActivationTape& tape, const Tensor2& dlogits);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_kinks = 0;
    ParamId worst;
    bool passed = true;
};

struct GradCheckOptions {
    double step = 1e-5;
    double tol = 1e-4;
    std::size_t samples = 100;
    std::uint64_t seed = 0;
    /// Relative error denominators are floored here so near-zero gradients
    /// are judged on absolute error.
    double denom_floor = 1e-6;
};

/// Loss at the current parameters plus a fingerprint of every ReLU sign.
struct Probe {
    double loss = 0.0;
    std::uint64_t relu_pattern = 0;
};

/// Central-difference check of `analytic` against `probe`. Perturbs a random
/// sample of entries of the listed tensors in place (restoring them). Entries
/// whose perturbation flips any ReLU are skipped: the loss is not
/// differentiable across the kink.
GradCheckReport finite_difference_check(
    const std::function<std::span<double>(ParamId)>& access, std::span<const ParamId> params,
    const Gradients& analytic, const std::function<Probe()>& probe,
    const GradCheckOptions& opts);

GradCheckReport numerical_grad_check(Network& net, const Tensor2& batch,
                                     std::span<const int> labels, const GradCheckOptions& opts);

/// Hash of ReLU signs over a set of traces, for kink detection.
std::uint64_t relu_pattern(std::span<const BlockTrace> traces, std::uint64_t basis);

}  // namespace subtune
