#include "subtune/prune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <tuple>

namespace subtune {

std::string to_string(PruneScope scope) {
    return scope == PruneScope::local ? "local" : "global";
}

std::string to_string(PruneNorm norm) { return norm == PruneNorm::l1 ? "l1" : "l2"; }

PruneScope prune_scope_from_string(const std::string& s) {
    if (s == "local") return PruneScope::local;
    if (s == "global") return PruneScope::global;
    throw std::invalid_argument("unknown prune scope '" + s + "' (local, global)");
}

PruneNorm prune_norm_from_string(const std::string& s) {
    if (s == "l1") return PruneNorm::l1;
    if (s == "l2") return PruneNorm::l2;
    throw std::invalid_argument("unknown prune norm '" + s + "' (l1, l2)");
}

void PruneSpec::validate() const {
    if (!(sparsity >= 0.0 && sparsity < 1.0)) {
        throw std::invalid_argument("sparsity must lie in [0, 1)");
    }
}

std::size_t PrunePlan::removed_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.removed.size();
    return n;
}

std::vector<double> channel_importance(const ResidualBlock& block, PruneNorm norm) {
    std::vector<double> scores(block.hidden());
    for (std::size_t j = 0; j < block.hidden(); ++j) {
        double acc = 0.0;
        auto add = [&](double v) { acc += norm == PruneNorm::l1 ? std::abs(v) : v * v; };
        for (double w : block.lin1.weight.row(j)) add(w);
        add(block.lin1.bias[j]);
        scores[j] = norm == PruneNorm::l1 ? acc : std::sqrt(acc);
    }
    return scores;
}

namespace {

struct Candidate {
    double score;
    std::size_t block;
    std::size_t channel;
};

bool lower(const Candidate& a, const Candidate& b) {
    return std::tie(a.score, a.block, a.channel) < std::tie(b.score, b.block, b.channel);
}

std::size_t floor_count(double sparsity, std::size_t n) {
    return static_cast<std::size_t>(std::floor(sparsity * static_cast<double>(n)));
}

}  // namespace

PrunePlan prune_plan(const BlockNetwork& net, const PruneSpec& spec) {
    spec.validate();
    std::vector<BlockId> targets = spec.target_blocks.sorted();
    for (BlockId id : targets) (void)net.block(id);

    std::map<std::size_t, BlockPrune> chosen;
    auto take = [&](const Candidate& c) {
        auto& bp = chosen[c.block];
        bp.block = BlockId{c.block};
        bp.removed.push_back(c.channel);
        bp.scores.push_back(c.score);
    };

    if (spec.scope == PruneScope::local) {
        for (BlockId id : targets) {
            const ResidualBlock& blk = net.block(id);
            const std::size_t k = floor_count(spec.sparsity, blk.hidden());
            if (k >= blk.hidden()) {
                throw std::invalid_argument("sparsity " + std::to_string(spec.sparsity) +
                                            " would remove every channel of block " +
                                            std::to_string(id.index));
            }
            const auto scores = channel_importance(blk, spec.norm);
            std::vector<Candidate> cands;
            for (std::size_t j = 0; j < scores.size(); ++j) cands.push_back({scores[j], id.index, j});
            std::sort(cands.begin(), cands.end(), lower);
            for (std::size_t i = 0; i < k; ++i) take(cands[i]);
        }
    } else {
        std::vector<Candidate> cands;
        std::map<std::size_t, std::size_t> remaining;
        for (BlockId id : targets) {
            const auto scores = channel_importance(net.block(id), spec.norm);
            remaining[id.index] = scores.size();
            for (std::size_t j = 0; j < scores.size(); ++j) cands.push_back({scores[j], id.index, j});
        }
        std::sort(cands.begin(), cands.end(), lower);
        const std::size_t k = floor_count(spec.sparsity, cands.size());
        std::size_t removed = 0;
        for (const Candidate& c : cands) {
            if (removed == k) break;
            if (remaining[c.block] <= 1) continue;
            --remaining[c.block];
            take(c);
            ++removed;
        }
    }

    PrunePlan plan;
    for (auto& [index, bp] : chosen) {
        std::vector<std::size_t> order(bp.removed.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return bp.removed[a] < bp.removed[b]; });
        BlockPrune sorted{bp.block, {}, {}};
        for (std::size_t i : order) {
            sorted.removed.push_back(bp.removed[i]);
            sorted.scores.push_back(bp.scores[i]);
        }
        plan.blocks.push_back(std::move(sorted));
    }
    return plan;
}

namespace {

ResidualBlock excise(const ResidualBlock& blk, const std::vector<bool>& keep) {
    const std::size_t d = blk.width();
    const std::size_t kept = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true));
    ResidualBlock out = blk;
    out.lin1.weight = Tensor2(kept, d);
    out.lin1.bias.assign(kept, 0.0);
    out.lin2.weight = Tensor2(d, kept);
    std::size_t r = 0;
    for (std::size_t j = 0; j < keep.size(); ++j) {
        if (!keep[j]) continue;
        std::copy(blk.lin1.weight.row(j).begin(), blk.lin1.weight.row(j).end(),
                  out.lin1.weight.row(r).begin());
        out.lin1.bias[r] = blk.lin1.bias[j];
        for (std::size_t o = 0; o < d; ++o) out.lin2.weight(o, r) = blk.lin2.weight(o, j);
        ++r;
    }
    return out;
}

}  // namespace

BlockNetwork apply_prune(const BlockNetwork& net, const PrunePlan& plan) {
    BlockNetwork out = net;
    std::vector<std::size_t> seen;
    for (const BlockPrune& bp : plan.blocks) {
        const std::string where = "prune plan for block " + std::to_string(bp.block.index);
        if (std::find(seen.begin(), seen.end(), bp.block.index) != seen.end()) {
            throw std::invalid_argument(where + " appears twice");
        }
        seen.push_back(bp.block.index);
        if (bp.block.index < 1 || bp.block.index > net.n_blocks()) {
            throw std::invalid_argument(where + ": no such block");
        }
        const ResidualBlock& live = net.block(bp.block);
        const std::size_t h = live.hidden();
        std::vector<bool> keep(h, true);
        for (std::size_t j : bp.removed) {
            if (j >= h) throw std::invalid_argument(where + ": channel " + std::to_string(j) +
                                                    " out of range");
            if (!keep[j]) throw std::invalid_argument(where + ": channel listed twice");
            keep[j] = false;
        }
        if (bp.removed.size() >= h) throw std::invalid_argument(where + " removes every channel");
        if (bp.removed.empty()) continue;
        out.replace_block(bp.block, excise(live, keep),
                          excise(net.snapshot()[bp.block.index - 1], keep));
    }
    return out;
}

double kept_param_fraction(const BlockNetwork& original, const BlockNetwork& pruned,
                           const SubsetSpec& subset) {
    std::size_t before = 0;
    std::size_t after = 0;
    for (BlockId id : subset.blocks()) {
        before += original.block(id).param_count();
        after += pruned.block(id).param_count();
    }
    return before == 0 ? 1.0 : static_cast<double>(after) / static_cast<double>(before);
}

nlohmann::json to_json(const PrunePlan& plan) {
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& bp : plan.blocks) {
        blocks.push_back({{"block", bp.block.index}, {"removed", bp.removed}, {"scores", bp.scores}});
    }
    return {{"blocks", blocks}};
}

PrunePlan prune_plan_from_json(const nlohmann::json& j) {
    PrunePlan plan;
    for (const auto& b : j.at("blocks")) {
        BlockPrune bp;
        bp.block = BlockId{b.at("block").get<std::size_t>()};
        bp.removed = b.at("removed").get<std::vector<std::size_t>>();
        bp.scores = b.at("scores").get<std::vector<double>>();
        if (bp.scores.size() != bp.removed.size()) {
            throw std::invalid_argument("prune plan block " + std::to_string(bp.block.index) +
                                        ": scores and removed differ in length");
        }
        plan.blocks.push_back(std::move(bp));
    }
    return plan;
}

}  // namespace subtune
