#include "subtune/netcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "subtune/rng.hpp"

namespace subtune {

namespace {

const char* slot_name(Slot s) {
    switch (s) {
        case Slot::head_weight: return "weight";
        case Slot::head_bias: return "bias";
        case Slot::lin1_weight: return "lin1.weight";
        case Slot::lin1_bias: return "lin1.bias";
        case Slot::lin2_weight: return "lin2.weight";
        case Slot::lin2_bias: return "lin2.bias";
    }
    return "?";
}

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes) {
    if (labels.size() != rows) {
        throw DimensionError("label count " + std::to_string(labels.size()) +
                             " does not match batch rows " + std::to_string(rows));
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw std::out_of_range("label " + std::to_string(y) + " outside [0, " +
                                    std::to_string(classes) + ")");
        }
    }
}

// dW[o][i] = sum_n dy[n][o] * x[n][i]; db[o] = sum_n dy[n][o]
void dense_param_grads(const Tensor2& x, const Tensor2& dy, std::vector<double>& dw,
                       std::vector<double>& db) {
    const std::size_t in = x.cols();
    const std::size_t out = dy.cols();
    dw.assign(out * in, 0.0);
    db.assign(out, 0.0);
    for (std::size_t n = 0; n < x.rows(); ++n) {
        auto xr = x.row(n);
        auto dr = dy.row(n);
        for (std::size_t o = 0; o < out; ++o) {
            const double g = dr[o];
            db[o] += g;
            if (g == 0.0) continue;
            double* w = dw.data() + o * in;
            for (std::size_t i = 0; i < in; ++i) w[i] += g * xr[i];
        }
    }
}

// dx[n][i] = sum_o dy[n][o] * W[o][i]
Tensor2 dense_input_grad(const DenseLayer& layer, const Tensor2& dy) {
    Tensor2 dx(dy.rows(), layer.in());
    for (std::size_t n = 0; n < dy.rows(); ++n) {
        auto dr = dy.row(n);
        auto xr = dx.row(n);
        for (std::size_t o = 0; o < layer.out(); ++o) {
            const double g = dr[o];
            if (g == 0.0) continue;
            auto w = layer.weight.row(o);
            for (std::size_t i = 0; i < layer.in(); ++i) xr[i] += g * w[i];
        }
    }
    return dx;
}

}  // namespace

std::string ParamId::name() const {
    if (is_head()) return std::string("head.") + slot_name(slot);
    return "block" + std::to_string(block) + "." + slot_name(slot);
}

DenseLayer::DenseLayer(std::size_t in, std::size_t out) : weight(out, in), bias(out, 0.0) {}

void DenseLayer::init_uniform(std::uint64_t seed) {
    Rng rng(seed);
    const double bound = std::sqrt(1.0 / static_cast<double>(std::max<std::size_t>(in(), 1)));
    for (double& w : weight.values()) w = rng.uniform(-bound, bound);
    for (double& b : bias) b = rng.uniform(-bound, bound);
}

ResidualBlock::ResidualBlock(std::size_t width, BlockId block_id)
    : lin1(width, width), lin2(width, width), id(block_id) {}

void ResidualBlock::init_uniform(std::uint64_t seed) {
    lin1.init_uniform(derive_seed(seed, 1));
    lin2.init_uniform(derive_seed(seed, 2));
}

std::span<double> ResidualBlock::param(Slot slot) {
    switch (slot) {
        case Slot::lin1_weight: return lin1.weight.values();
        case Slot::lin1_bias: return lin1.bias;
        case Slot::lin2_weight: return lin2.weight.values();
        case Slot::lin2_bias: return lin2.bias;
        default: throw std::invalid_argument("head slot requested from a residual block");
    }
}

std::span<const double> ResidualBlock::param(Slot slot) const {
    return const_cast<ResidualBlock*>(this)->param(slot);
}

std::size_t Network::input_width() const {
    return blocks.empty() ? head.in() : blocks.front().width();
}

std::span<double> Network::param(ParamId id) {
    if (id.is_head()) {
        if (id.slot == Slot::head_weight) return head.weight.values();
        if (id.slot == Slot::head_bias) return head.bias;
        throw std::invalid_argument("block slot requested from the head");
    }
    if (id.block > blocks.size()) {
        throw std::out_of_range("no block " + std::to_string(id.block));
    }
    return blocks[id.block - 1].param(id.slot);
}

std::span<const double> Network::param(ParamId id) const {
    return const_cast<Network*>(this)->param(id);
}

bool Network::is_frozen(ParamId id) const {
    if (id.is_head()) return head.frozen;
    const auto& b = blocks.at(id.block - 1);
    return (id.slot == Slot::lin1_weight || id.slot == Slot::lin1_bias) ? b.lin1.frozen
                                                                          : b.lin2.frozen;
}

std::vector<ParamId> Network::param_ids() const {
    std::vector<ParamId> ids;
    for (std::size_t b = 1; b <= blocks.size(); ++b) {
        for (Slot s : {Slot::lin1_weight, Slot::lin1_bias, Slot::lin2_weight, Slot::lin2_bias}) {
            ids.push_back({b, s});
        }
    }
    ids.push_back(ParamId::head_weight());
    ids.push_back(ParamId::head_bias());
    return ids;
}

void dense_forward(const DenseLayer& layer, const Tensor2& x, Tensor2& y) {
    if (x.cols() != layer.in()) {
        throw DimensionError("dense layer expects width " + std::to_string(layer.in()) +
                             ", got " + shape_string(x));
    }
    y = Tensor2(x.rows(), layer.out());
    for (std::size_t n = 0; n < x.rows(); ++n) {
        auto xr = x.row(n);
        auto yr = y.row(n);
        for (std::size_t o = 0; o < layer.out(); ++o) {
            auto w = layer.weight.row(o);
            double acc = layer.bias[o];
            for (std::size_t i = 0; i < layer.in(); ++i) acc += w[i] * xr[i];
            yr[o] = acc;
        }
    }
}

Tensor2 block_forward(const ResidualBlock& block, const Tensor2& x, BlockTrace* trace) {
    Tensor2 pre;
    dense_forward(block.lin1, x, pre);
    Tensor2 act = pre;
    for (double& v : act.values()) v = v > 0.0 ? v : 0.0;
    Tensor2 y;
    dense_forward(block.lin2, act, y);
    auto yv = y.values();
    auto xv = x.values();
    for (std::size_t i = 0; i < yv.size(); ++i) yv[i] += xv[i];
    if (trace != nullptr) {
        trace->input = x;
        trace->pre = std::move(pre);
    }
    return y;
}

Tensor2 forward_blocks(std::span<const ResidualBlock> blocks, const Tensor2& x,
                       std::size_t first, std::vector<BlockTrace>* traces) {
    Tensor2 h = x;
    for (std::size_t b = first; b < blocks.size(); ++b) {
        if (traces != nullptr) {
            traces->emplace_back();
            h = block_forward(blocks[b], h, &traces->back());
        } else {
            h = block_forward(blocks[b], h, nullptr);
        }
    }
    return h;
}

ForwardResult forward(const Network& net, const Tensor2& batch) {
    if (batch.cols() != net.input_width()) {
        throw DimensionError("batch width " + std::to_string(batch.cols()) +
                             " does not match network input width " +
                             std::to_string(net.input_width()));
    }
    ForwardResult out;
    out.tape.rows = batch.rows();
    out.tape.features = forward_blocks(net.blocks, batch, 0, &out.tape.traces);
    dense_forward(net.head, out.tape.features, out.logits);
    return out;
}

Tensor2 softmax(const Tensor2& logits) {
    Tensor2 p(logits.rows(), logits.cols());
    for (std::size_t n = 0; n < logits.rows(); ++n) {
        auto z = logits.row(n);
        auto pr = p.row(n);
        const double m = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < z.size(); ++c) {
            pr[c] = std::exp(z[c] - m);
            sum += pr[c];
        }
        for (double& v : pr) v /= sum;
    }
    return p;
}

LossResult loss_and_grad(const Tensor2& logits, std::span<const int> labels) {
    check_labels(labels, logits.rows(), logits.cols());
    LossResult out;
    out.dlogits = Tensor2(logits.rows(), logits.cols());
    if (logits.rows() == 0) return out;
    const double inv_n = 1.0 / static_cast<double>(logits.rows());
    double total = 0.0;
    for (std::size_t n = 0; n < logits.rows(); ++n) {
        auto z = logits.row(n);
        const double m = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - m);
        const double log_sum = m + std::log(sum);
        const auto y = static_cast<std::size_t>(labels[n]);
        total += log_sum - z[y];
        auto d = out.dlogits.row(n);
        for (std::size_t c = 0; c < z.size(); ++c) {
            d[c] = (std::exp(z[c] - log_sum) - (c == y ? 1.0 : 0.0)) * inv_n;
        }
    }
    out.loss = total * inv_n;
    return out;
}

HeadGrad head_backward(const DenseLayer& head, const Tensor2& features, const Tensor2& dlogits) {
    if (features.rows() != dlogits.rows() || dlogits.cols() != head.out() ||
        features.cols() != head.in()) {
        throw DimensionError("head backward: features " + shape_string(features) +
                             ", dlogits " + shape_string(dlogits));
    }
    HeadGrad g;
    dense_param_grads(features, dlogits, g.weight, g.bias);
    g.dfeatures = dense_input_grad(head, dlogits);
    return g;
}

void blocks_backward(std::span<const ResidualBlock> blocks, const ActivationTape& tape,
                     Tensor2 dfeatures, Gradients& out) {
    if (tape.first_block + tape.traces.size() != blocks.size()) {
        throw std::logic_error("stale tape: recorded " + std::to_string(tape.traces.size()) +
                               " blocks from index " + std::to_string(tape.first_block) +
                               ", network has " + std::to_string(blocks.size()));
    }
    // Nothing below the earliest trainable block needs a gradient.
    std::size_t lowest = blocks.size();
    for (std::size_t b = tape.first_block; b < blocks.size(); ++b) {
        if (!blocks[b].frozen()) {
            lowest = b;
            break;
        }
    }
    Tensor2 dy = std::move(dfeatures);
    for (std::size_t b = blocks.size(); b-- > lowest;) {
        const ResidualBlock& blk = blocks[b];
        const BlockTrace& tr = tape.traces[b - tape.first_block];
        if (tr.input.rows() != dy.rows() || tr.input.cols() != blk.width() ||
            tr.pre.cols() != blk.hidden()) {
            throw std::logic_error("stale tape: block " + std::to_string(b + 1) +
                                   " shape changed since forward");
        }
        Tensor2 act = tr.pre;
        for (double& v : act.values()) v = v > 0.0 ? v : 0.0;
        if (!blk.lin2.frozen) {
            std::vector<double> dw, db;
            dense_param_grads(act, dy, dw, db);
            out.set({b + 1, Slot::lin2_weight}, std::move(dw));
            out.set({b + 1, Slot::lin2_bias}, std::move(db));
        }
        const bool need_dx = b > lowest;
        if (blk.lin1.frozen && !need_dx) break;
        Tensor2 dz = dense_input_grad(blk.lin2, dy);
        auto dzv = dz.values();
        auto prev = tr.pre.values();
        for (std::size_t i = 0; i < dzv.size(); ++i) {
            if (!(prev[i] > 0.0)) dzv[i] = 0.0;
        }
        if (!blk.lin1.frozen) {
            std::vector<double> dw, db;
            dense_param_grads(tr.input, dz, dw, db);
            out.set({b + 1, Slot::lin1_weight}, std::move(dw));
            out.set({b + 1, Slot::lin1_bias}, std::move(db));
        }
        if (need_dx) {
            Tensor2 dx = dense_input_grad(blk.lin1, dz);
            auto dxv = dx.values();
            auto dyv = dy.values();
            for (std::size_t i = 0; i < dxv.size(); ++i) dxv[i] += dyv[i];
            dy = std::move(dx);
        }
    }
}

Gradients backward(const Network& net, const ActivationTape& tape, const Tensor2& dlogits) {
    if (dlogits.rows() != tape.rows) {
        throw std::logic_error("stale tape: recorded " + std::to_string(tape.rows) +
                               " rows, gradient has " + std::to_string(dlogits.rows()));
    }
    Gradients grads;
    HeadGrad hg = head_backward(net.head, tape.features, dlogits);
    if (!net.head.frozen) {
        grads.set(ParamId::head_weight(), std::move(hg.weight));
        grads.set(ParamId::head_bias(), std::move(hg.bias));
    }
    blocks_backward(net.blocks, tape, std::move(hg.dfeatures), grads);
    return grads;
}

std::uint64_t relu_pattern(std::span<const BlockTrace> traces, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (const auto& tr : traces) {
        for (double v : tr.pre.values()) {
            const unsigned char bit = v > 0.0 ? 1 : 0;
            h = fnv1a({&bit, 1}, h);
        }
    }
    return h;
}

GradCheckReport finite_difference_check(
    const std::function<std::span<double>(ParamId)>& access, std::span<const ParamId> params,
    const Gradients& analytic, const std::function<Probe()>& probe,
    const GradCheckOptions& opts) {
    if (!(opts.step > 0.0)) throw std::invalid_argument("finite-difference step must be > 0");

    // Flatten (tensor, entry) pairs so sampling is uniform over entries.
    std::vector<std::pair<ParamId, std::size_t>> entries;
    for (ParamId id : params) {
        if (!analytic.contains(id)) continue;
        const std::size_t n = access(id).size();
        for (std::size_t i = 0; i < n; ++i) entries.emplace_back(id, i);
    }
    Rng rng(opts.seed);
    if (entries.size() > opts.samples) {
        // partial Fisher-Yates: first `samples` entries become the sample
        for (std::size_t i = 0; i < opts.samples; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(entries.size() - i));
            std::swap(entries[i], entries[j]);
        }
        entries.resize(opts.samples);
    }

    const std::uint64_t base_pattern = probe().relu_pattern;
    GradCheckReport report;
    for (const auto& [id, i] : entries) {
        auto values = access(id);
        const double orig = values[i];
        values[i] = orig + opts.step;
        const Probe plus = probe();
        values[i] = orig - opts.step;
        const Probe minus = probe();
        values[i] = orig;
        if (plus.relu_pattern != base_pattern || minus.relu_pattern != base_pattern) {
            ++report.skipped_kinks;
            continue;
        }
        const double numeric = (plus.loss - minus.loss) / (2.0 * opts.step);
        const double exact = analytic.at(id)[i];
        const double denom = std::max({std::abs(numeric), std::abs(exact), opts.denom_floor});
        const double rel = std::abs(numeric - exact) / denom;
        ++report.checked;
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst = id;
        }
    }
    report.passed = report.max_rel_error <= opts.tol;
    return report;
}

GradCheckReport numerical_grad_check(Network& net, const Tensor2& batch,
                                     std::span<const int> labels, const GradCheckOptions& opts) {
    ForwardResult fr = forward(net, batch);
    LossResult lr = loss_and_grad(fr.logits, labels);
    const Gradients grads = backward(net, fr.tape, lr.dlogits);
    const auto ids = net.param_ids();
    auto access = [&net](ParamId id) { return net.param(id); };
    auto probe = [&]() {
        ForwardResult f = forward(net, batch);
        return Probe{loss_and_grad(f.logits, labels).loss, relu_pattern(f.tape.traces, 0)};
    };
    return finite_difference_check(access, ids, grads, probe, opts);
}

}  // namespace subtune
