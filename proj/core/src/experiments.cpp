#include "subtune/experiments.hpp"

#include <algorithm>
#include <stdexcept>

#include "subtune/rng.hpp"

namespace subtune {

void DeskConfig::validate() const {
    if (dim < 2 || classes < 2) throw std::invalid_argument("desk task needs dim >= 2, classes >= 2");
    if (blocks < 1) throw std::invalid_argument("desk network needs at least one block");
    if (source_n < classes) throw std::invalid_argument("source set smaller than class count");
    pretrain.validate();
}

DeskSource pretrain_source(const DeskConfig& cfg) {
    cfg.validate();
    TaskGenerator gen(cfg.dim, cfg.classes, cfg.warp_depth, cfg.task_seed, cfg.warp_gain);
    const Dataset source = gen.sample(cfg.source_n, derive_seed(cfg.task_seed, 1), "source");
    BlockNetwork net = BlockNetwork::build(cfg.dim, cfg.blocks, cfg.classes, cfg.init_seed);
    net.set_trainable(all_blocks(net));
    const EvalRecord fit = train(net, source, cfg.pretrain);
    net.commit_snapshot();
    net.set_trainable({});
    return {std::move(gen), std::move(net), fit};
}

DeskSource attach_source(const DeskConfig& cfg, BlockNetwork pretrained) {
    cfg.validate();
    if (pretrained.input_width() != cfg.dim || pretrained.classes() != cfg.classes) {
        throw std::invalid_argument("checkpoint shape does not match the desk config");
    }
    return {TaskGenerator(cfg.dim, cfg.classes, cfg.warp_depth, cfg.task_seed, cfg.warp_gain),
            std::move(pretrained), {}};
}

ShiftTask make_target(const DeskSource& source, const ShiftSpec& shift, std::size_t train_n,
                      std::size_t test_n) {
    if (train_n == 0 || test_n == 0) throw std::invalid_argument("target needs train and test data");
    const Dataset raw = source.generator.sample(train_n + test_n,
                                                derive_seed(shift.seed, 0x7a29e7), "target");
    return make_shift(raw, shift, ShiftSplit{train_n, 0.1});
}

TunedResult tune_and_test(const BlockNetwork& pretrained, const SubsetSpec& subset, HeadKind head,
                          const ShiftTask& task, const TrainConfig& cfg) {
    TunedResult r{prepare_for_tuning(pretrained, subset, head, derive_seed(cfg.seed, 0x4ead)), {},
                  {}};
    r.train = train(r.net, task.train, cfg);
    r.test = evaluate(r.net, task.test);
    return r;
}

MethodComparison compare_methods(const BlockNetwork& pretrained, const ShiftTask& task,
                                 const TrainConfig& cfg, const GreedyOptions& greedy,
                                 const EvalPlan& plan) {
    MethodComparison out;
    out.linear_probe =
        tune_and_test(pretrained, {}, HeadKind::linear_probe, task, cfg).test.accuracy;
    out.full_finetune =
        tune_and_test(pretrained, all_blocks(pretrained), HeadKind::subtune, task, cfg)
            .test.accuracy;
    out.trace = greedy_subtune(pretrained, task.train, greedy, cfg, plan);
    out.greedy = tune_and_test(pretrained, make_subset(pretrained, out.trace.selected),
                               HeadKind::subtune, task, cfg)
                     .test.accuracy;
    return out;
}

ReinitResult reinit_ablation(const BlockNetwork& pretrained, const SubsetSpec& subset,
                             const ShiftTask& task, const TrainConfig& cfg) {
    ReinitResult out;
    out.pretrained_init =
        tune_and_test(pretrained, subset, HeadKind::subtune, task, cfg).test.accuracy;
    BlockNetwork net =
        prepare_for_tuning(pretrained, subset, HeadKind::subtune, derive_seed(cfg.seed, 0x4ead));
    net.reinit_blocks(subset, derive_seed(cfg.seed, 0x2e1));
    train(net, task.train, cfg);
    out.random_init = evaluate(net, task.test).accuracy;
    return out;
}

PrunedResult pruned_subtune(const BlockNetwork& pretrained, const PruneSpec& spec,
                            const ShiftTask& task, const TrainConfig& cfg) {
    PrunedResult out;
    out.plan = prune_plan(pretrained, spec);
    const BlockNetwork pruned = apply_prune(pretrained, out.plan);
    out.kept_fraction = kept_param_fraction(pretrained, pruned, spec.target_blocks);
    out.accuracy =
        tune_and_test(pruned, spec.target_blocks, HeadKind::subtune, task, cfg).test.accuracy;
    return out;
}

HeadLossResult train_loss_trajectory(const BlockNetwork& pretrained, const SubsetSpec& subset,
                                     HeadKind kind, const Dataset& data, const TrainConfig& cfg) {
    BlockNetwork net = prepare_for_tuning(pretrained, subset, kind, derive_seed(cfg.seed, 0x4ead));
    HeadLossResult out;
    out.min_loss = evaluate(net, data).loss;
    TrainHooks hooks;
    hooks.after_step = [&](BlockNetwork& n) {
        out.min_loss = std::min(out.min_loss, evaluate(n, data).loss);
    };
    out.final_loss = train(net, data, cfg, hooks).loss;
    return out;
}

Dataset random_label_dataset(const DeskSource& source, std::size_t n, std::uint64_t seed) {
    Dataset ds = source.generator.sample(n, derive_seed(seed, 0x4a4d), "random_labels");
    Rng rng(derive_seed(seed, 0x1abe1));
    for (int& y : ds.y) y = static_cast<int>(rng.below(ds.classes));
    return ds;
}

}  // namespace subtune
