#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "subtune/model.hpp"

namespace subtune {

enum class PruneScope { local, global };
enum class PruneNorm { l1, l2 };

std::string to_string(PruneScope scope);
std::string to_string(PruneNorm norm);
PruneScope prune_scope_from_string(const std::string& s);
PruneNorm prune_norm_from_string(const std::string& s);

struct PruneSpec {
    PruneScope scope = PruneScope::local;
    PruneNorm norm = PruneNorm::l1;
    double sparsity = 0.0;  // fraction of channels removed, [0, 1)
    SubsetSpec target_blocks;

    void validate() const;
};

struct BlockPrune {
    BlockId block;
    std::vector<std::size_t> removed;  // ascending channel index
    std::vector<double> scores;        // importance of each removed channel
};

struct PrunePlan {
    std::vector<BlockPrune> blocks;  // ascending block id; blocks with nothing removed omitted

    std::size_t removed_count() const;
    bool empty() const { return removed_count() == 0; }
};

/// Importance of hidden channel j: the norm of lin1 row j with its bias entry appended.
std::vector<double> channel_importance(const ResidualBlock& block, PruneNorm norm);

/// Local scope removes floor(sparsity * h) channels from every target block;
/// global scope removes floor(sparsity * total) channels across them, never
/// the last channel of a block. Ties go to the lower (block, channel).
PrunePlan prune_plan(const BlockNetwork& net, const PruneSpec& spec);

/// A copy of `net` with the planned channels cut out of lin1 rows, lin1 bias
/// and lin2 columns, in both the live blocks and the snapshot.
BlockNetwork apply_prune(const BlockNetwork& net, const PrunePlan& plan);

/// Parameters of `subset` in `pruned` over those in `original`.
double kept_param_fraction(const BlockNetwork& original, const BlockNetwork& pruned,
                           const SubsetSpec& subset);

nlohmann::json to_json(const PrunePlan& plan);
PrunePlan prune_plan_from_json(const nlohmann::json& j);

}  // namespace subtune
