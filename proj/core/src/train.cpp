#include "subtune/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "subtune/parallel.hpp"
#include "subtune/rng.hpp"

namespace subtune {

void TrainConfig::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be >= 0");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
}

double cosine_lr(double base, std::size_t step, std::size_t total_steps) {
    if (total_steps == 0) return base;
    const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    return base * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

std::size_t steps_per_epoch(std::size_t n, std::size_t batch_size) {
    return (n + batch_size - 1) / batch_size;
}

void AdamW::step(BlockNetwork& net, const Gradients& grads, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(TrainConfig::beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(TrainConfig::beta2, static_cast<double>(t_));
    for (ParamId id : net.trainable_params()) {
        if (!grads.contains(id)) continue;
        const auto& g = grads.at(id);
        auto p = net.mutable_param(id);
        if (g.size() != p.size()) {
            throw DimensionError("gradient for " + id.name() + " has wrong length");
        }
        auto& mom = state_[id];
        if (mom.m.size() != p.size()) {
            mom.m.assign(p.size(), 0.0);
            mom.v.assign(p.size(), 0.0);
        }
        const double decay = id.is_bias() ? 1.0 : 1.0 - lr * weight_decay_;
        for (std::size_t i = 0; i < p.size(); ++i) {
            mom.m[i] = TrainConfig::beta1 * mom.m[i] + (1.0 - TrainConfig::beta1) * g[i];
            mom.v[i] = TrainConfig::beta2 * mom.v[i] + (1.0 - TrainConfig::beta2) * g[i] * g[i];
            const double m_hat = mom.m[i] / bc1;
            const double v_hat = mom.v[i] / bc2;
            p[i] = p[i] * decay - lr * m_hat / (std::sqrt(v_hat) + TrainConfig::eps);
        }
    }
}

EvalRecord train(BlockNetwork& net, const Dataset& data, const TrainConfig& cfg,
                 const TrainHooks& hooks) {
    cfg.validate();
    if (data.empty()) throw std::invalid_argument("cannot train on an empty dataset");
    if (data.classes != net.classes()) {
        throw std::invalid_argument("dataset has " + std::to_string(data.classes) +
                                    " classes, head has " + std::to_string(net.classes()));
    }
    data.validate();

    const PreparedInput all = net.prepare(data.x);
    const std::size_t n = data.size();
    const std::size_t per_epoch = steps_per_epoch(n, cfg.batch_size);
    const std::size_t total = per_epoch * cfg.epochs;

    AdamW opt(cfg.weight_decay);
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<int> labels;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            std::span<const std::size_t> idx(order.data() + start, stop - start);
            labels.clear();
            for (std::size_t i : idx) labels.push_back(data.y[i]);
            const ForwardResult fr = net.forward(all.select_rows(idx));
            const LossResult lr = loss_and_grad(fr.logits, labels);
            const Gradients grads = net.backward(fr.tape, lr.dlogits);
            opt.step(net, grads, cosine_lr(cfg.lr, step, total));
            if (hooks.after_step) hooks.after_step(net);
            ++step;
        }
    }
    return evaluate(net, data);
}

std::size_t argmax(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

EvalRecord evaluate(const BlockNetwork& net, const Dataset& data) {
    if (data.empty()) throw std::invalid_argument("cannot evaluate on an empty dataset");
    constexpr std::size_t kChunk = 2048;
    std::size_t correct = 0;
    double loss_sum = 0.0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += kChunk) {
        const std::size_t stop = std::min(data.size(), start + kChunk);
        idx.resize(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        const Tensor2 logits = net.forward(data.x.gather_rows(idx)).logits;
        std::span<const int> labels(data.y.data() + start, stop - start);
        const LossResult lr = loss_and_grad(logits, labels);
        loss_sum += lr.loss * static_cast<double>(stop - start);
        for (std::size_t r = 0; r < logits.rows(); ++r) {
            if (argmax(logits.row(r)) == static_cast<std::size_t>(labels[r])) ++correct;
        }
    }
    const auto n = static_cast<double>(data.size());
    return {static_cast<double>(correct) / n, loss_sum / n, data.size()};
}

FoldSplit kfold_split(std::size_t n, std::size_t k, std::span<const int> labels,
                      std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("k-fold needs k >= 2");
    if (n < k) {
        throw std::invalid_argument("cannot split " + std::to_string(n) + " samples into " +
                                    std::to_string(k) + " folds");
    }
    FoldSplit split;
    split.folds.resize(k);
    Rng rng(seed);
    bool usable = labels.size() == n;
    for (int y : labels) usable = usable && y >= 0;
    if (!usable) {
        split.stratified = false;
        auto perm = random_permutation(n, seed);
        for (std::size_t i = 0; i < n; ++i) split.folds[i % k].push_back(perm[i]);
        return split;
    }
    const int max_label = *std::max_element(labels.begin(), labels.end());
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(max_label) + 1);
    for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);
    // The dealing pointer carries over between classes so fold sizes stay
    // balanced as well as per-class counts.
    std::size_t next = 0;
    for (auto& members : by_class) {
        rng.shuffle(members);
        for (std::size_t i : members) {
            split.folds[next].push_back(i);
            next = (next + 1) % k;
        }
    }
    return split;
}

BlockNetwork prepare_for_tuning(const BlockNetwork& pretrained, const SubsetSpec& subset,
                                HeadKind kind, std::uint64_t head_seed) {
    BlockNetwork net = pretrained;
    net.restore_from_snapshot();
    net.attach_head(HeadSpec::for_network(net, kind), head_seed);
    if (kind != HeadKind::linear_probe) net.set_trainable(subset);
    return net;
}

CvResult cv_score(const BlockNetwork& pretrained, const SubsetSpec& subset, const Dataset& data,
                  const TrainConfig& cfg, const CvOptions& opts) {
    cfg.validate();
    const FoldSplit split = kfold_split(data.size(), opts.k, data.y, derive_seed(cfg.seed, 0xf01d));
    struct FoldOutcome {
        EvalRecord held;
        EvalRecord trained;
    };
    auto outcomes = parallel_map<FoldOutcome>(opts.k, [&](std::size_t f) {
        std::vector<std::size_t> train_idx;
        for (std::size_t g = 0; g < opts.k; ++g) {
            if (g != f) train_idx.insert(train_idx.end(), split.folds[g].begin(), split.folds[g].end());
        }
        const Dataset train_set = data.subset(train_idx);
        const Dataset held_set = data.subset(split.folds[f]);
        BlockNetwork net =
            prepare_for_tuning(pretrained, subset, opts.head, derive_seed(cfg.seed, 0x4ead + f));
        TrainConfig fold_cfg = cfg;
        fold_cfg.seed = derive_seed(cfg.seed, f);
        FoldOutcome o;
        o.trained = train(net, train_set, fold_cfg, opts.hooks);
        o.held = evaluate(net, held_set);
        return o;
    });
    CvResult result;
    double sum = 0.0;
    for (const auto& o : outcomes) {
        result.held_out.push_back(o.held);
        result.train.push_back(o.trained);
        sum += o.held.accuracy;
    }
    result.mean_accuracy = sum / static_cast<double>(opts.k);
    return result;
}

SweepResult lr_sweep(const BlockNetwork& pretrained, const SubsetSpec& subset,
                     const Dataset& data, std::span<const double> lrs, const TrainConfig& cfg,
                     const CvOptions& opts) {
    if (lrs.empty()) throw std::invalid_argument("learning-rate sweep needs at least one value");
    SweepResult out;
    for (std::size_t i = 0; i < lrs.size(); ++i) {
        TrainConfig c = cfg;
        c.lr = lrs[i];
        const double score = cv_score(pretrained, subset, data, c, opts).mean_accuracy;
        out.scores.emplace_back(lrs[i], score);
        if (i == 0 || score > out.best_score ||
            (score == out.best_score && lrs[i] > out.best_lr)) {
            out.best_lr = lrs[i];
            out.best_score = score;
        }
    }
    return out;
}

}  // namespace subtune
