#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "subtune/datakit.hpp"
#include "subtune/model.hpp"

namespace subtune {

/// Epoch presets: the default short schedule, scarce-data runs, and
/// distribution-shift runs.
inline constexpr std::size_t kDefaultEpochs = 10;
inline constexpr std::size_t kScarceDataEpochs = 50;
inline constexpr std::size_t kShiftEpochs = 15;
/// Batch size of the reference protocol; desk-scale runs default to 32.
inline constexpr std::size_t kReferenceBatchSize = 256;
/// Learning-rate grid for shift experiments.
inline constexpr double kShiftLearningRates[] = {1e-3, 5e-4, 1e-4, 5e-5, 1e-5};

struct TrainConfig {
    double lr = 1e-3;
    double weight_decay = 0.01;
    std::size_t batch_size = 32;
    std::size_t epochs = kDefaultEpochs;
    std::uint64_t seed = 0;

    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double eps = 1e-8;

    void validate() const;
};

struct EvalRecord {
    double accuracy = 0.0;
    double loss = 0.0;
    std::size_t n = 0;

    friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

/// Cosine annealing from `base` at step 0 towards 0 at `total_steps`.
double cosine_lr(double base, std::size_t step, std::size_t total_steps);
std::size_t steps_per_epoch(std::size_t n, std::size_t batch_size);

/// AdamW over the network's unfrozen tensors. Weight decay is decoupled and
/// skips biases. Frozen tensors are never written.
class AdamW {
public:
    explicit AdamW(double weight_decay) : weight_decay_(weight_decay) {}
    void step(BlockNetwork& net, const Gradients& grads, double lr);
    std::size_t steps_taken() const noexcept { return t_; }

private:
    struct Moments {
        std::vector<double> m;
        std::vector<double> v;
    };
    double weight_decay_;
    std::size_t t_ = 0;
    std::map<ParamId, Moments> state_;
};

struct TrainHooks {
    /// Runs after every optimizer step (e.g. a projection).
    std::function<void(BlockNetwork&)> after_step;
};

/// Mini-batch AdamW with cosine annealing over epochs * ceil(n / batch) steps.
/// Batches follow a per-epoch shuffle seeded by cfg.seed; the last short batch
/// is kept. Returns metrics on the training set after the final step.
EvalRecord train(BlockNetwork& net, const Dataset& data, const TrainConfig& cfg,
                 const TrainHooks& hooks = {});

EvalRecord evaluate(const BlockNetwork& net, const Dataset& data);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

struct FoldSplit {
    std::vector<std::vector<std::size_t>> folds;
    /// False when labels were unusable and the split fell back to plain
    /// random folds.
    bool stratified = true;
};

/// k >= 2, n >= k. Class members are dealt round-robin across folds, so per-
/// class counts and fold sizes each differ by at most one.
FoldSplit kfold_split(std::size_t n, std::size_t k, std::span<const int> labels,
                      std::uint64_t seed);

/// A pretrained clone restored to its snapshot, with a fresh head of `kind`
/// and exactly `subset` trainable.
BlockNetwork prepare_for_tuning(const BlockNetwork& pretrained, const SubsetSpec& subset,
                                HeadKind kind, std::uint64_t head_seed);

struct CvOptions {
    std::size_t k = 5;
    HeadKind head = HeadKind::subtune;
    TrainHooks hooks;
};

struct CvResult {
    double mean_accuracy = 0.0;
    std::vector<EvalRecord> held_out;  // per fold, fold order
    std::vector<EvalRecord> train;     // per fold, after training
};

/// k-fold score of tuning `subset` from the pretrained snapshot. Every fold
/// gets a fresh head. `pretrained` is never modified.
CvResult cv_score(const BlockNetwork& pretrained, const SubsetSpec& subset, const Dataset& data,
                  const TrainConfig& cfg, const CvOptions& opts = {});

struct SweepResult {
    double best_lr = 0.0;
    double best_score = 0.0;
    std::vector<std::pair<double, double>> scores;  // (lr, cv score), input order
};

/// Argmax CV score over `lrs`; ties go to the larger learning rate.
SweepResult lr_sweep(const BlockNetwork& pretrained, const SubsetSpec& subset,
                     const Dataset& data, std::span<const double> lrs, const TrainConfig& cfg,
                     const CvOptions& opts = {});

}  // namespace subtune
