#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "subtune/datakit.hpp"
#include "subtune/model.hpp"
#include "subtune/prune.hpp"
#include "subtune/select.hpp"
#include "subtune/train.hpp"

namespace subtune {

/// Desk-scale transfer setup: a synthetic source task and the network
/// pretrained on it.
struct DeskConfig {
    std::size_t dim = 32;
    std::size_t blocks = 8;
    std::size_t classes = 10;
    std::size_t warp_depth = 4;
    double warp_gain = 0.75;
    std::size_t source_n = 20000;
    std::uint64_t task_seed = 7;
    std::uint64_t init_seed = 11;
    TrainConfig pretrain{3e-3, 0.01, 64, 30, 3};

    void validate() const;
};

struct DeskSource {
    TaskGenerator generator;
    BlockNetwork pretrained;  // snapshot committed, all blocks frozen
    EvalRecord source_train;
};

DeskSource pretrain_source(const DeskConfig& cfg);
/// Rebuilds the generator for `cfg` around an already pretrained network.
DeskSource attach_source(const DeskConfig& cfg, BlockNetwork pretrained);

/// Fresh samples from the source task, shifted by `shift`, split into
/// `train_n` training and `test_n` test examples. Deterministic in
/// (generator, shift.seed).
ShiftTask make_target(const DeskSource& source, const ShiftSpec& shift, std::size_t train_n,
                      std::size_t test_n);

struct TunedResult {
    BlockNetwork net;
    EvalRecord train;
    EvalRecord test;
};

/// prepare_for_tuning + train + evaluate on `test`.
TunedResult tune_and_test(const BlockNetwork& pretrained, const SubsetSpec& subset, HeadKind head,
                          const ShiftTask& task, const TrainConfig& cfg);

struct MethodComparison {
    double linear_probe = 0.0;
    double full_finetune = 0.0;
    double greedy = 0.0;
    GreedyTrace trace;
};

/// Linear probe, full finetuning and greedy SubTuning on one target task,
/// all trained with `cfg`.
MethodComparison compare_methods(const BlockNetwork& pretrained, const ShiftTask& task,
                                 const TrainConfig& cfg, const GreedyOptions& greedy,
                                 const EvalPlan& plan);

struct ReinitResult {
    double pretrained_init = 0.0;
    double random_init = 0.0;
};

/// Tunes `subset` from the pretrained weights and from a random redraw of
/// the same blocks, with identical schedules.
ReinitResult reinit_ablation(const BlockNetwork& pretrained, const SubsetSpec& subset,
                             const ShiftTask& task, const TrainConfig& cfg);

struct PrunedResult {
    double kept_fraction = 1.0;
    double accuracy = 0.0;
    PrunePlan plan;
};

/// Prunes the target blocks of a pretrained copy, then tunes them.
PrunedResult pruned_subtune(const BlockNetwork& pretrained, const PruneSpec& spec,
                            const ShiftTask& task, const TrainConfig& cfg);

struct HeadLossResult {
    double min_loss = 0.0;    // full-dataset loss, minimum over steps
    double final_loss = 0.0;
};

/// Trains a head of `kind` (with `subset` tunable unless linear probe) and
/// tracks the full training loss after every step, including step 0.
HeadLossResult train_loss_trajectory(const BlockNetwork& pretrained, const SubsetSpec& subset,
                                     HeadKind kind, const Dataset& data, const TrainConfig& cfg);

/// Inputs from the source distribution with uniformly random labels.
Dataset random_label_dataset(const DeskSource& source, std::size_t n, std::uint64_t seed);

}  // namespace subtune
