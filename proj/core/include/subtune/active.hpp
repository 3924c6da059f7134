#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "subtune/datakit.hpp"
#include "subtune/model.hpp"
#include "subtune/train.hpp"

namespace subtune {

/// P(y1|x) - P(y2|x) for the two most probable classes. Needs >= 2 entries.
double classification_margin(std::span<const double> probs);

/// Softmax margins of every row of `data` under `net`.
std::vector<double> margins(const BlockNetwork& net, const Tensor2& x);

struct Acquisition {
    std::size_t round = 0;
    std::vector<std::size_t> indices;
};

class LabeledPool {
public:
    explicit LabeledPool(Dataset data);

    const Dataset& data() const noexcept { return data_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t labeled_count() const noexcept { return labeled_count_; }
    bool is_labeled(std::size_t i) const { return labeled_.at(i); }
    std::span<const Acquisition> history() const noexcept { return history_; }

    std::vector<std::size_t> labeled_indices() const;
    std::vector<std::size_t> unlabeled_indices() const;
    Dataset labeled_data() const;

    /// Marks `indices` labeled and records them. Re-acquiring throws.
    void acquire(std::size_t round, std::span<const std::size_t> indices);

private:
    Dataset data_;
    std::vector<bool> labeled_;
    std::size_t labeled_count_ = 0;
    std::vector<Acquisition> history_;
};

/// Bottom-n unlabeled indices by margin, ties to the lower index, in
/// selection order.
std::vector<std::size_t> select_by_margin(std::span<const double> margins,
                                          const LabeledPool& pool, std::size_t n);
std::vector<std::size_t> select_queries(const BlockNetwork& net, const LabeledPool& pool,
                                        std::size_t n);

enum class ALStrategy { margin, random };

std::string to_string(ALStrategy s);
ALStrategy al_strategy_from_string(const std::string& s);

struct ALConfig {
    std::size_t initial_random = 100;
    std::vector<std::size_t> budgets{500, 1000, 2500, 5000, 10000};
    ALStrategy strategy = ALStrategy::margin;
    std::uint64_t seed = 0;
    TrainConfig train;
    HeadKind head = HeadKind::subtune;

    void validate() const;
};

/// The reference schedule (100 initial, then 500 ... 10000 labels) scaled by
/// pool_size / 50000, at least 10 per step and strictly increasing.
void scale_default_budgets(ALConfig& cfg, std::size_t pool_size);

struct ALPoint {
    std::size_t round = 0;
    std::size_t budget = 0;  // labeled examples the model was trained on
    ALStrategy strategy = ALStrategy::margin;
    std::uint64_t seed = 0;
    double test_accuracy = 0.0;
};

struct ALResult {
    std::vector<ALPoint> curve;  // initial set, then one point per budget
    std::vector<Acquisition> history;
};

/// Round 0 labels `initial_random` random examples. Each round retrains the
/// subset from the pretrained snapshot on everything labeled so far, records
/// test accuracy, then acquires up to the next budget.
ALResult al_loop(const BlockNetwork& pretrained, const Dataset& pool, const Dataset& test,
                 const SubsetSpec& subset, const ALConfig& cfg);

}  // namespace subtune
