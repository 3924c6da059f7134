#include "subtune/model.hpp"

#include <algorithm>
#include <set>

#include "subtune/rng.hpp"

namespace subtune {

std::string to_string(HeadKind kind) {
    switch (kind) {
        case HeadKind::linear_probe: return "linear_probe";
        case HeadKind::subtune: return "subtune";
        case HeadKind::siamese: return "siamese";
    }
    return "?";
}

HeadKind head_kind_from_string(const std::string& s) {
    if (s == "linear_probe") return HeadKind::linear_probe;
    if (s == "subtune") return HeadKind::subtune;
    if (s == "siamese") return HeadKind::siamese;
    throw std::invalid_argument("unknown head kind '" + s + "'");
}

HeadSpec HeadSpec::for_network(const BlockNetwork& net, HeadKind kind) {
    const std::size_t w = net.feature_width();
    return {kind, kind == HeadKind::siamese ? 2 * w : w, net.classes()};
}

bool SubsetSpec::contains(BlockId id) const noexcept {
    return std::find(blocks_.begin(), blocks_.end(), id) != blocks_.end();
}

std::vector<BlockId> SubsetSpec::sorted() const {
    std::vector<BlockId> out = blocks_;
    std::sort(out.begin(), out.end());
    return out;
}

std::string SubsetSpec::to_string() const {
    std::string s;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(blocks_[i].index);
    }
    return s;
}

SubsetSpec make_subset(const BlockNetwork& net, std::vector<BlockId> ids) {
    std::set<std::size_t> seen;
    SubsetSpec s;
    for (BlockId id : ids) {
        if (id.index < 1 || id.index > net.n_blocks()) {
            throw std::out_of_range("block id " + std::to_string(id.index) + " outside [1, " +
                                    std::to_string(net.n_blocks()) + "]");
        }
        if (!seen.insert(id.index).second) {
            throw std::invalid_argument("duplicate block id " + std::to_string(id.index));
        }
        s.param_count_ += net.block(id).param_count();
    }
    s.blocks_ = std::move(ids);
    return s;
}

SubsetSpec all_blocks(const BlockNetwork& net) {
    return block_window(net, 1, net.n_blocks());
}

SubsetSpec block_window(const BlockNetwork& net, std::size_t start, std::size_t size) {
    std::vector<BlockId> ids;
    for (std::size_t i = 0; i < size; ++i) ids.push_back({start + i});
    return make_subset(net, std::move(ids));
}

PreparedInput PreparedInput::select_rows(std::span<const std::size_t> rows) const {
    PreparedInput out;
    out.first_block = first_block;
    out.structure_generation = structure_generation;
    out.input = input.gather_rows(rows);
    if (frozen_features.cols() != 0) {
        out.frozen_features = frozen_features.gather_rows(rows);
    }
    return out;
}

BlockNetwork BlockNetwork::build(std::size_t width, std::size_t n_blocks, std::size_t classes,
                                 std::uint64_t seed) {
    if (width < 1) throw std::invalid_argument("network width must be >= 1");
    if (n_blocks < 1) throw std::invalid_argument("network needs at least one block");
    if (classes < 1) throw std::invalid_argument("network needs at least one class");
    BlockNetwork net;
    net.width_ = width;
    for (std::size_t b = 1; b <= n_blocks; ++b) {
        ResidualBlock blk(width, BlockId{b});
        blk.init_uniform(derive_seed(seed, b));
        net.net_.blocks.push_back(std::move(blk));
    }
    net.head_spec_ = {HeadKind::subtune, width, classes};
    net.net_.head = DenseLayer(width, classes);
    net.net_.head.init_uniform(derive_seed(seed, 0));
    net.snapshot_ = net.net_.blocks;
    return net;
}

const ResidualBlock& BlockNetwork::block(BlockId id) const {
    if (id.index < 1 || id.index > n_blocks()) {
        throw std::out_of_range("block id " + std::to_string(id.index) + " outside [1, " +
                                std::to_string(n_blocks()) + "]");
    }
    return net_.blocks[id.index - 1];
}

void BlockNetwork::set_trainable(const SubsetSpec& subset) {
    for (BlockId id : subset.blocks()) (void)block(id);
    for (auto& blk : net_.blocks) blk.set_frozen(!subset.contains(blk.id));
    net_.head.frozen = false;
    touch_structure();
}

SubsetSpec BlockNetwork::trainable() const {
    std::vector<BlockId> ids;
    for (const auto& blk : net_.blocks) {
        if (!blk.frozen()) ids.push_back(blk.id);
    }
    return make_subset(*this, std::move(ids));
}

void BlockNetwork::attach_head(const HeadSpec& spec, std::uint64_t seed) {
    const HeadSpec expected = HeadSpec::for_network(*this, spec.kind);
    if (spec.in_width != expected.in_width) {
        throw DimensionError(to_string(spec.kind) + " head needs in_width " +
                             std::to_string(expected.in_width) + ", got " +
                             std::to_string(spec.in_width));
    }
    if (spec.classes < 1) throw std::invalid_argument("head needs at least one class");
    head_spec_ = spec;
    net_.head = DenseLayer(spec.in_width, spec.classes);
    net_.head.init_uniform(seed);
    net_.head.frozen = false;
    if (spec.kind == HeadKind::linear_probe) {
        for (auto& blk : net_.blocks) blk.set_frozen(true);
    }
    touch_structure();
}

void BlockNetwork::reinit_blocks(const SubsetSpec& subset, std::uint64_t seed) {
    for (BlockId id : subset.blocks()) {
        (void)block(id);
        net_.blocks[id.index - 1].lin1.init_uniform(derive_seed(seed, 2 * id.index));
        net_.blocks[id.index - 1].lin2.init_uniform(derive_seed(seed, 2 * id.index + 1));
    }
    if (!subset.empty()) touch_structure();
}

void BlockNetwork::restore_from_snapshot() {
    for (std::size_t b = 0; b < n_blocks(); ++b) {
        const bool f1 = net_.blocks[b].lin1.frozen;
        const bool f2 = net_.blocks[b].lin2.frozen;
        net_.blocks[b] = snapshot_[b];
        net_.blocks[b].lin1.frozen = f1;
        net_.blocks[b].lin2.frozen = f2;
    }
    touch_structure();
}

void BlockNetwork::commit_snapshot() {
    snapshot_ = net_.blocks;
    touch_structure();
}

std::size_t BlockNetwork::param_count() const noexcept {
    std::size_t n = net_.head.param_count();
    for (const auto& blk : net_.blocks) n += blk.param_count();
    return n;
}

std::size_t BlockNetwork::param_count(const SubsetSpec& subset) const {
    std::size_t n = 0;
    for (BlockId id : subset.blocks()) n += block(id).param_count();
    return n;
}

PreparedInput BlockNetwork::prepare(const Tensor2& batch) const {
    if (batch.cols() != width_) {
        throw DimensionError("batch width " + std::to_string(batch.cols()) +
                             " does not match network input width " + std::to_string(width_));
    }
    PreparedInput p;
    p.structure_generation = structure_generation_;
    p.first_block = n_blocks();
    for (std::size_t b = 0; b < n_blocks(); ++b) {
        if (!net_.blocks[b].frozen()) {
            p.first_block = b;
            break;
        }
    }
    p.input = forward_blocks(std::span(net_.blocks).first(p.first_block), batch, 0, nullptr);
    if (head_spec_.kind == HeadKind::siamese) {
        p.frozen_features = forward_blocks(snapshot_, batch, 0, nullptr);
    }
    return p;
}

ForwardResult BlockNetwork::forward(const Tensor2& batch) const {
    return forward(prepare(batch));
}

ForwardResult BlockNetwork::forward(const PreparedInput& prepared) const {
    if (prepared.structure_generation != structure_generation_) {
        throw std::logic_error("prepared input is stale: frozen structure changed");
    }
    ForwardResult out;
    out.tape.first_block = prepared.first_block;
    out.tape.rows = prepared.rows();
    out.tape.generation = generation_;
    Tensor2 features =
        forward_blocks(net_.blocks, prepared.input, prepared.first_block, &out.tape.traces);
    if (head_spec_.kind == HeadKind::siamese) {
        // frozen branch first, tuned branch second
        out.tape.features = concat_cols(prepared.frozen_features, features);
    } else {
        out.tape.features = std::move(features);
    }
    dense_forward(net_.head, out.tape.features, out.logits);
    return out;
}

Gradients BlockNetwork::backward(const ActivationTape& tape, const Tensor2& dlogits) const {
    if (tape.generation != generation_) {
        throw std::logic_error("stale tape: network parameters changed since forward");
    }
    if (dlogits.rows() != tape.rows) {
        throw DimensionError("dlogits rows " + std::to_string(dlogits.rows()) +
                             " do not match tape rows " + std::to_string(tape.rows));
    }
    Gradients grads;
    HeadGrad hg = head_backward(net_.head, tape.features, dlogits);
    grads.set(ParamId::head_weight(), std::move(hg.weight));
    grads.set(ParamId::head_bias(), std::move(hg.bias));
    Tensor2 dfeatures;
    if (head_spec_.kind == HeadKind::siamese) {
        dfeatures = Tensor2(dlogits.rows(), width_);
        for (std::size_t n = 0; n < dlogits.rows(); ++n) {
            auto src = hg.dfeatures.row(n);
            std::copy(src.begin() + static_cast<std::ptrdiff_t>(width_), src.end(),
                      dfeatures.row(n).begin());
        }
    } else {
        dfeatures = std::move(hg.dfeatures);
    }
    blocks_backward(net_.blocks, tape, std::move(dfeatures), grads);
    return grads;
}

std::span<double> BlockNetwork::mutable_param(ParamId id) {
    if (net_.is_frozen(id)) {
        touch_structure();
    } else {
        ++generation_;
    }
    return net_.param(id);
}

std::vector<ParamId> BlockNetwork::trainable_params() const {
    std::vector<ParamId> out;
    for (ParamId id : net_.param_ids()) {
        if (!net_.is_frozen(id)) out.push_back(id);
    }
    return out;
}

std::span<const double> BlockNetwork::snapshot_param(ParamId id) const {
    if (id.is_head()) throw std::invalid_argument("the snapshot holds block parameters only");
    return snapshot_.at(id.block - 1).param(id.slot);
}

std::uint64_t BlockNetwork::parameter_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (ParamId id : net_.param_ids()) h = fnv1a_doubles(net_.param(id), h);
    return h;
}

std::uint64_t BlockNetwork::snapshot_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& blk : snapshot_) {
        for (Slot s : {Slot::lin1_weight, Slot::lin1_bias, Slot::lin2_weight, Slot::lin2_bias}) {
            h = fnv1a_doubles(blk.param(s), h);
        }
    }
    return h;
}

void BlockNetwork::replace_block(BlockId id, ResidualBlock live, ResidualBlock snap) {
    (void)block(id);
    if (live.width() != width_ || snap.width() != width_ || live.hidden() != snap.hidden()) {
        throw DimensionError("replacement block " + std::to_string(id.index) +
                             " has inconsistent widths");
    }
    live.id = id;
    snap.id = id;
    net_.blocks[id.index - 1] = std::move(live);
    snapshot_[id.index - 1] = std::move(snap);
    touch_structure();
}

namespace {

bool same_layer(const DenseLayer& a, const DenseLayer& b) {
    return a.frozen == b.frozen && a.weight.rows() == b.weight.rows() &&
           a.weight.cols() == b.weight.cols() && bitwise_equal(a.weight.values(), b.weight.values()) &&
           bitwise_equal(a.bias, b.bias);
}

bool same_blocks(const std::vector<ResidualBlock>& a, const std::vector<ResidualBlock>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].id != b[i].id || !same_layer(a[i].lin1, b[i].lin1) ||
            !same_layer(a[i].lin2, b[i].lin2)) {
            return false;
        }
    }
    return true;
}

}  // namespace

bool operator==(const BlockNetwork& a, const BlockNetwork& b) {
    return a.width_ == b.width_ && a.head_spec_ == b.head_spec_ &&
           same_layer(a.net_.head, b.net_.head) && same_blocks(a.net_.blocks, b.net_.blocks) &&
           same_blocks(a.snapshot_, b.snapshot_);
}

GradCheckReport numerical_grad_check(BlockNetwork& net, const Tensor2& batch,
                                     std::span<const int> labels, const GradCheckOptions& opts) {
    ForwardResult fr = net.forward(batch);
    LossResult lr = loss_and_grad(fr.logits, labels);
    const Gradients grads = net.backward(fr.tape, lr.dlogits);
    const auto ids = net.trainable_params();
    auto access = [&net](ParamId id) { return net.mutable_param(id); };
    auto probe = [&]() {
        ForwardResult f = net.forward(batch);
        return Probe{loss_and_grad(f.logits, labels).loss, relu_pattern(f.tape.traces, 0)};
    };
    return finite_difference_check(access, ids, grads, probe, opts);
}

}  // namespace subtune
