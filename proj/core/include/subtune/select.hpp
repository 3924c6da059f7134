#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "subtune/datakit.hpp"
#include "subtune/model.hpp"
#include "subtune/train.hpp"

namespace subtune {

enum class EvalMode { cv, holdout };

/// How a candidate subset is scored: k-fold CV on the training data, or
/// train on all of it and score a separate holdout set.
struct EvalPlan {
    EvalMode mode = EvalMode::cv;
    std::size_t k = 5;
    const Dataset* holdout = nullptr;
    HeadKind head = HeadKind::subtune;
    TrainHooks hooks;
};

double evaluate_subset(const BlockNetwork& pretrained, const SubsetSpec& subset,
                       const Dataset& data, const TrainConfig& cfg, const EvalPlan& plan);

struct ProfileEntry {
    SubsetSpec subset;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
    std::vector<double> per_seed;
};

struct ProfileResult {
    std::size_t group_size = 0;
    std::vector<ProfileEntry> entries;  // window start ascending
};

/// One entry per window [i, i + g - 1], each tuned from the pretrained
/// snapshot and averaged over `seeds` (each seed replaces cfg.seed).
ProfileResult finetune_profile(const BlockNetwork& pretrained, const Dataset& data,
                               std::size_t group_size, const EvalPlan& plan,
                               const TrainConfig& cfg, std::span<const std::uint64_t> seeds);

/// Symmetric N x N accuracy table over all unordered block pairs; the
/// diagonal holds single-block scores.
struct PairwiseProfile {
    std::size_t n_blocks = 0;
    std::vector<double> accuracy;  // row-major, 0-based indices

    double at(std::size_t i, std::size_t j) const { return accuracy[i * n_blocks + j]; }
    /// Best off-diagonal pair (1-based, i < j); ties go to the smallest pair.
    std::pair<BlockId, BlockId> best_pair() const;
};

PairwiseProfile pairwise_profile(const BlockNetwork& pretrained, const Dataset& data,
                                 const TrainConfig& cfg, const EvalPlan& plan);

inline constexpr double kDefaultGreedyEpsilon = 0.002;

enum class GreedyInit {
    linear_probe,  // A_best starts at the empty-subset score
    zero,          // A_best starts at 0
};

struct GreedyOptions {
    double epsilon = kDefaultGreedyEpsilon;
    std::optional<std::size_t> k_max;
    std::optional<std::size_t> budget_r;
    GreedyInit init = GreedyInit::linear_probe;
};

struct CandidateScore {
    BlockId block;
    double score = 0.0;
    std::size_t params = 0;
};

struct GreedyStep {
    std::vector<CandidateScore> candidates;  // block order
    BlockId chosen;
    double chosen_score = 0.0;
    bool accepted = false;
};

struct GreedyTrace {
    std::vector<GreedyStep> steps;
    std::vector<BlockId> selected;  // selection order
    std::size_t selected_params = 0;
    double empty_score = 0.0;    // score of tuning the head only
    double initial_best = 0.0;   // A_best before the first step
    double final_score = 0.0;
    std::size_t candidate_evaluations = 0;
    GreedyOptions options;

    std::string selected_string() const;
};

using SubsetEvaluator = std::function<double(std::span<const BlockId>)>;
using ParamCounter = std::function<std::size_t(std::span<const BlockId>)>;

/// Greedy forward selection over blocks 1..n. Each round scores S + {L} for
/// every L not in S and takes the best (ties to the smaller id); it is kept
/// only if it beats A_best by more than epsilon and fits the budget.
/// Candidate scoring within a round may run concurrently.
GreedyTrace greedy_select(std::size_t n_blocks, const SubsetEvaluator& evaluate,
                          const ParamCounter& params, const GreedyOptions& opts);

/// greedy_select with candidates scored by `evaluate_subset`.
GreedyTrace greedy_subtune(const BlockNetwork& pretrained, const Dataset& data,
                           const GreedyOptions& opts, const TrainConfig& cfg,
                           const EvalPlan& plan);

/// Score table keyed by block set. Text form, one entry per line:
///   {} = 0.5
///   2,1 = 0.72
/// Blank lines and '#' comments are ignored; order within a set is irrelevant.
class LookupEvaluator {
public:
    void set(std::vector<std::size_t> blocks, double score);
    double operator()(std::span<const BlockId> blocks) const;
    static LookupEvaluator parse(const std::string& text);
    static LookupEvaluator load(const std::string& path);
    /// Largest block id mentioned in the table (0 if only {} is listed).
    std::size_t max_block() const;

private:
    std::map<std::vector<std::size_t>, double> table_;
};

/// Sum of squared differences between live and snapshot parameters of
/// `subset`, square-rooted.
double subset_delta_norm(const BlockNetwork& net, const SubsetSpec& subset);
/// Scales the subset's displacement from the snapshot back onto the ball of
/// radius `delta` when it lies outside.
void project_to_ball(BlockNetwork& net, const SubsetSpec& subset, double delta);

struct LinearizedResult {
    double train_loss = 0.0;
    double heldout_loss = 0.0;
    double train_accuracy = 0.0;
    double heldout_accuracy = 0.0;
    double best_train_loss = 0.0;  // minimum over optimizer steps
    double delta_norm = 0.0;
};

/// Trains the subset and a fresh head with the subset's displacement held
/// inside an L2 ball of radius delta after every step. The head is not
/// constrained.
LinearizedResult linearized_evaluate(const BlockNetwork& pretrained, const SubsetSpec& subset,
                                     const Dataset& train_set, const Dataset& heldout,
                                     double delta, const TrainConfig& cfg);

enum class GapSelection { greedy, window };

struct GapExperimentConfig {
    std::vector<std::size_t> subset_sizes{0, 1, 2, 4, 8};  // blocks per subset
    double delta = 1.0;
    std::size_t m = 100;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    TrainConfig train;
    std::size_t cv_k = 5;
    GapSelection selection = GapSelection::greedy;

    void validate() const;
};

struct GapRecord {
    std::size_t subset_size = 0;
    std::size_t r_prime = 0;
    double delta = 0.0;
    std::size_t m = 0;
    std::uint64_t seed = 0;
    std::string blocks;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    double gap = 0.0;
};

/// For each seed: draw m training samples from `pool`, pick a subset of each
/// requested size (size-forced greedy or best window, scored by constrained
/// CV), retrain it under the norm ball and record train - test accuracy.
std::vector<GapRecord> gap_experiment(const BlockNetwork& pretrained, const Dataset& pool,
                                      const Dataset& test, const GapExperimentConfig& cfg);

struct GapSummaryRow {
    std::size_t subset_size = 0;
    double mean_r_prime = 0.0;
    double mean_gap = 0.0;
};

std::vector<GapSummaryRow> summarize_gap(std::span<const GapRecord> records);
/// Spearman correlation between sqrt(mean r') and mean gap across sizes.
double gap_trend(std::span<const GapSummaryRow> rows);

}  // namespace subtune
