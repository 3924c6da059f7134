#include "subtune/active.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "subtune/rng.hpp"

namespace subtune {

double classification_margin(std::span<const double> probs) {
    if (probs.size() < 2) throw std::invalid_argument("margin needs at least two classes");
    double first = probs[0];
    double second = probs[1];
    if (second > first) std::swap(first, second);
    for (std::size_t i = 2; i < probs.size(); ++i) {
        if (probs[i] > first) {
            second = first;
            first = probs[i];
        } else if (probs[i] > second) {
            second = probs[i];
        }
    }
    return first - second;
}

std::vector<double> margins(const BlockNetwork& net, const Tensor2& x) {
    const Tensor2 probs = softmax(net.forward(x).logits);
    std::vector<double> out(probs.rows());
    for (std::size_t r = 0; r < probs.rows(); ++r) out[r] = classification_margin(probs.row(r));
    return out;
}

LabeledPool::LabeledPool(Dataset data)
    : data_(std::move(data)), labeled_(data_.size(), false) {}

std::vector<std::size_t> LabeledPool::labeled_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labeled_.size(); ++i) {
        if (labeled_[i]) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> LabeledPool::unlabeled_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labeled_.size(); ++i) {
        if (!labeled_[i]) out.push_back(i);
    }
    return out;
}

Dataset LabeledPool::labeled_data() const { return data_.subset(labeled_indices()); }

void LabeledPool::acquire(std::size_t round, std::span<const std::size_t> indices) {
    for (std::size_t i : indices) {
        if (i >= labeled_.size()) throw std::out_of_range("pool index out of range");
        if (labeled_[i]) {
            throw std::invalid_argument("pool index " + std::to_string(i) + " already labeled");
        }
        labeled_[i] = true;
        ++labeled_count_;
    }
    history_.push_back({round, std::vector<std::size_t>(indices.begin(), indices.end())});
}

std::vector<std::size_t> select_by_margin(std::span<const double> margins,
                                          const LabeledPool& pool, std::size_t n) {
    if (margins.size() != pool.size()) {
        throw std::invalid_argument("margin count does not match pool size");
    }
    std::vector<std::size_t> cands = pool.unlabeled_indices();
    if (cands.size() < n) {
        throw std::invalid_argument("pool has " + std::to_string(cands.size()) +
                                    " unlabeled examples, " + std::to_string(n) + " requested");
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [&](std::size_t a, std::size_t b) { return margins[a] < margins[b]; });
    cands.resize(n);
    return cands;
}

std::vector<std::size_t> select_queries(const BlockNetwork& net, const LabeledPool& pool,
                                        std::size_t n) {
    return select_by_margin(margins(net, pool.data().x), pool, n);
}

std::string to_string(ALStrategy s) { return s == ALStrategy::margin ? "margin" : "random"; }

ALStrategy al_strategy_from_string(const std::string& s) {
    if (s == "margin") return ALStrategy::margin;
    if (s == "random") return ALStrategy::random;
    throw std::invalid_argument("unknown AL strategy '" + s + "' (margin, random)");
}

void ALConfig::validate() const {
    if (budgets.empty()) throw std::invalid_argument("AL needs at least one budget");
    for (std::size_t i = 1; i < budgets.size(); ++i) {
        if (budgets[i] <= budgets[i - 1]) {
            throw std::invalid_argument("AL budgets must be strictly increasing");
        }
    }
    if (initial_random > budgets.front()) {
        throw std::invalid_argument("initial_random exceeds the first budget");
    }
    if (initial_random == 0) throw std::invalid_argument("initial_random must be >= 1");
    train.validate();
}

void scale_default_budgets(ALConfig& cfg, std::size_t pool_size) {
    constexpr double kReferencePool = 50000.0;
    constexpr std::size_t kSchedule[] = {100, 500, 1000, 2500, 5000, 10000};
    const double scale = static_cast<double>(pool_size) / kReferencePool;
    std::vector<std::size_t> scaled;
    for (std::size_t v : kSchedule) {
        auto s = std::max<std::size_t>(10, static_cast<std::size_t>(std::llround(v * scale)));
        if (!scaled.empty()) s = std::max(s, scaled.back() + 1);
        scaled.push_back(s);
    }
    cfg.initial_random = scaled.front();
    cfg.budgets.assign(scaled.begin() + 1, scaled.end());
}

ALResult al_loop(const BlockNetwork& pretrained, const Dataset& pool_data, const Dataset& test,
                 const SubsetSpec& subset, const ALConfig& cfg) {
    cfg.validate();
    if (cfg.budgets.back() > pool_data.size()) {
        throw std::invalid_argument("budget " + std::to_string(cfg.budgets.back()) +
                                    " exceeds pool size " + std::to_string(pool_data.size()));
    }
    LabeledPool pool(pool_data);
    // The initial draw depends only on the seed, so strategies share round 0.
    auto initial = random_permutation(pool.size(), derive_seed(cfg.seed, 0xa1));
    initial.resize(cfg.initial_random);
    std::sort(initial.begin(), initial.end());
    pool.acquire(0, initial);

    ALResult result;
    const std::size_t rounds = cfg.budgets.size() + 1;
    for (std::size_t round = 0; round < rounds; ++round) {
        TrainConfig tc = cfg.train;
        tc.seed = derive_seed(cfg.seed, round);
        BlockNetwork net =
            prepare_for_tuning(pretrained, subset, cfg.head, derive_seed(cfg.seed, 0x4ead + round));
        train(net, pool.labeled_data(), tc);
        result.curve.push_back({round, pool.labeled_count(), cfg.strategy, cfg.seed,
                                evaluate(net, test).accuracy});
        if (round + 1 == rounds) break;

        const std::size_t want = cfg.budgets[round] - pool.labeled_count();
        std::vector<std::size_t> picks;
        if (cfg.strategy == ALStrategy::margin) {
            picks = select_queries(net, pool, want);
        } else {
            picks = pool.unlabeled_indices();
            Rng rng(derive_seed(cfg.seed, 0x5eed + round));
            rng.shuffle(picks);
            picks.resize(want);
        }
        pool.acquire(round + 1, picks);
    }
    result.history.assign(pool.history().begin(), pool.history().end());
    return result;
}

}  // namespace subtune
