#include "subtune/select.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "subtune/parallel.hpp"
#include "subtune/rng.hpp"
#include "subtune/stats.hpp"

namespace subtune {

double evaluate_subset(const BlockNetwork& pretrained, const SubsetSpec& subset,
                       const Dataset& data, const TrainConfig& cfg, const EvalPlan& plan) {
    if (plan.mode == EvalMode::cv) {
        return cv_score(pretrained, subset, data, cfg, CvOptions{plan.k, plan.head, plan.hooks})
            .mean_accuracy;
    }
    if (plan.holdout == nullptr) throw std::invalid_argument("holdout evaluation needs a holdout set");
    BlockNetwork net =
        prepare_for_tuning(pretrained, subset, plan.head, derive_seed(cfg.seed, 0x4ead));
    train(net, data, cfg, plan.hooks);
    return evaluate(net, *plan.holdout).accuracy;
}

ProfileResult finetune_profile(const BlockNetwork& pretrained, const Dataset& data,
                               std::size_t group_size, const EvalPlan& plan,
                               const TrainConfig& cfg, std::span<const std::uint64_t> seeds) {
    const std::size_t n = pretrained.n_blocks();
    if (group_size < 1 || group_size > n) {
        throw std::invalid_argument("group size " + std::to_string(group_size) +
                                    " outside [1, " + std::to_string(n) + "]");
    }
    if (seeds.empty()) throw std::invalid_argument("profile needs at least one seed");
    const std::size_t windows = n - group_size + 1;
    const std::size_t jobs = windows * seeds.size();
    const auto scores = parallel_map<double>(jobs, [&](std::size_t job) {
        const std::size_t w = job / seeds.size();
        TrainConfig c = cfg;
        c.seed = seeds[job % seeds.size()];
        return evaluate_subset(pretrained, block_window(pretrained, w + 1, group_size), data, c,
                               plan);
    });
    ProfileResult result;
    result.group_size = group_size;
    for (std::size_t w = 0; w < windows; ++w) {
        ProfileEntry e;
        e.subset = block_window(pretrained, w + 1, group_size);
        e.per_seed.assign(scores.begin() + static_cast<std::ptrdiff_t>(w * seeds.size()),
                          scores.begin() + static_cast<std::ptrdiff_t>((w + 1) * seeds.size()));
        e.mean_accuracy = mean(e.per_seed);
        e.std_accuracy = sample_stddev(e.per_seed);
        result.entries.push_back(std::move(e));
    }
    return result;
}

std::pair<BlockId, BlockId> PairwiseProfile::best_pair() const {
    std::pair<BlockId, BlockId> best{BlockId{1}, BlockId{2}};
    double best_score = -1.0;
    for (std::size_t i = 0; i < n_blocks; ++i) {
        for (std::size_t j = i + 1; j < n_blocks; ++j) {
            if (at(i, j) > best_score) {
                best_score = at(i, j);
                best = {BlockId{i + 1}, BlockId{j + 1}};
            }
        }
    }
    return best;
}

PairwiseProfile pairwise_profile(const BlockNetwork& pretrained, const Dataset& data,
                                 const TrainConfig& cfg, const EvalPlan& plan) {
    const std::size_t n = pretrained.n_blocks();
    if (n < 2) throw std::invalid_argument("pairwise profile needs at least two blocks");
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) pairs.emplace_back(i, j);
    }
    const auto scores = parallel_map<double>(pairs.size(), [&](std::size_t p) {
        const auto [i, j] = pairs[p];
        std::vector<BlockId> ids{BlockId{i + 1}};
        if (j != i) ids.push_back(BlockId{j + 1});
        return evaluate_subset(pretrained, make_subset(pretrained, ids), data, cfg, plan);
    });
    PairwiseProfile out;
    out.n_blocks = n;
    out.accuracy.assign(n * n, 0.0);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto [i, j] = pairs[p];
        out.accuracy[i * n + j] = scores[p];
        out.accuracy[j * n + i] = scores[p];
    }
    return out;
}

std::string GreedyTrace::selected_string() const {
    std::string s;
    for (std::size_t i = 0; i < selected.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(selected[i].index);
    }
    return s;
}

GreedyTrace greedy_select(std::size_t n_blocks, const SubsetEvaluator& evaluate,
                          const ParamCounter& params, const GreedyOptions& opts) {
    if (!(opts.epsilon >= 0.0) && !std::isinf(opts.epsilon)) {
        throw std::invalid_argument("greedy epsilon must be >= 0 (or -inf to force picks)");
    }
    GreedyTrace trace;
    trace.options = opts;
    trace.empty_score = evaluate({});
    double best = opts.init == GreedyInit::linear_probe ? trace.empty_score : 0.0;
    trace.initial_best = best;
    const std::size_t limit = std::min(n_blocks, opts.k_max.value_or(n_blocks));

    std::vector<BlockId> selected;
    while (selected.size() < limit) {
        std::vector<BlockId> candidates;
        for (std::size_t b = 1; b <= n_blocks; ++b) {
            if (std::find(selected.begin(), selected.end(), BlockId{b}) == selected.end()) {
                candidates.push_back(BlockId{b});
            }
        }
        if (candidates.empty()) break;
        const auto scores = parallel_map<double>(candidates.size(), [&](std::size_t c) {
            std::vector<BlockId> trial = selected;
            trial.push_back(candidates[c]);
            return evaluate(trial);
        });
        trace.candidate_evaluations += candidates.size();

        GreedyStep step;
        std::size_t best_idx = 0;
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            std::vector<BlockId> trial = selected;
            trial.push_back(candidates[c]);
            step.candidates.push_back({candidates[c], scores[c], params(trial)});
            if (scores[c] > scores[best_idx]) best_idx = c;
        }
        step.chosen = candidates[best_idx];
        step.chosen_score = scores[best_idx];
        const bool fits = !opts.budget_r || step.candidates[best_idx].params <= *opts.budget_r;
        step.accepted = step.chosen_score > best + opts.epsilon && fits;
        trace.steps.push_back(step);
        if (!step.accepted) break;
        best = step.chosen_score;
        selected.push_back(step.chosen);
    }
    trace.selected = selected;
    trace.selected_params = params(selected);
    trace.final_score = best;
    return trace;
}

GreedyTrace greedy_subtune(const BlockNetwork& pretrained, const Dataset& data,
                           const GreedyOptions& opts, const TrainConfig& cfg,
                           const EvalPlan& plan) {
    auto to_subset = [&pretrained](std::span<const BlockId> blocks) {
        return make_subset(pretrained, std::vector<BlockId>(blocks.begin(), blocks.end()));
    };
    return greedy_select(
        pretrained.n_blocks(),
        [&](std::span<const BlockId> blocks) {
            return evaluate_subset(pretrained, to_subset(blocks), data, cfg, plan);
        },
        [&](std::span<const BlockId> blocks) { return to_subset(blocks).param_count(); }, opts);
}

void LookupEvaluator::set(std::vector<std::size_t> blocks, double score) {
    std::sort(blocks.begin(), blocks.end());
    table_[std::move(blocks)] = score;
}

double LookupEvaluator::operator()(std::span<const BlockId> blocks) const {
    std::vector<std::size_t> key;
    for (BlockId b : blocks) key.push_back(b.index);
    std::sort(key.begin(), key.end());
    const auto it = table_.find(key);
    if (it == table_.end()) {
        std::string s;
        for (std::size_t k : key) s += (s.empty() ? "" : ",") + std::to_string(k);
        throw std::out_of_range("lookup table has no entry for {" + s + "}");
    }
    return it->second;
}

std::size_t LookupEvaluator::max_block() const {
    std::size_t m = 0;
    for (const auto& [key, score] : table_) {
        for (std::size_t b : key) m = std::max(m, b);
    }
    return m;
}

LookupEvaluator LookupEvaluator::parse(const std::string& text) {
    LookupEvaluator ev;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("lookup table line " + std::to_string(line_no) +
                                        ": expected '<blocks> = <score>'");
        }
        std::string lhs = line.substr(0, eq);
        std::erase_if(lhs, [](char c) { return c == '{' || c == '}' || c == ' ' || c == '\t'; });
        std::vector<std::size_t> blocks;
        std::istringstream ls(lhs);
        std::string tok;
        while (std::getline(ls, tok, ',')) {
            if (tok.empty()) continue;
            blocks.push_back(static_cast<std::size_t>(std::stoul(tok)));
        }
        ev.set(std::move(blocks), std::stod(line.substr(eq + 1)));
    }
    return ev;
}

LookupEvaluator LookupEvaluator::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open lookup table " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

namespace {

constexpr Slot kBlockSlots[] = {Slot::lin1_weight, Slot::lin1_bias, Slot::lin2_weight,
                                Slot::lin2_bias};

}  // namespace

double subset_delta_norm(const BlockNetwork& net, const SubsetSpec& subset) {
    double ss = 0.0;
    for (BlockId b : subset.blocks()) {
        for (Slot s : kBlockSlots) {
            const ParamId id{b.index, s};
            auto live = net.param(id);
            auto init = net.snapshot_param(id);
            for (std::size_t i = 0; i < live.size(); ++i) {
                const double d = live[i] - init[i];
                ss += d * d;
            }
        }
    }
    return std::sqrt(ss);
}

void project_to_ball(BlockNetwork& net, const SubsetSpec& subset, double delta) {
    const double norm = subset_delta_norm(net, subset);
    if (norm <= delta) return;
    const double scale = delta / norm;
    for (BlockId b : subset.blocks()) {
        for (Slot s : kBlockSlots) {
            const ParamId id{b.index, s};
            auto init = net.snapshot_param(id);
            auto live = net.mutable_param(id);
            for (std::size_t i = 0; i < live.size(); ++i) {
                live[i] = init[i] + (live[i] - init[i]) * scale;
            }
        }
    }
}

LinearizedResult linearized_evaluate(const BlockNetwork& pretrained, const SubsetSpec& subset,
                                     const Dataset& train_set, const Dataset& heldout,
                                     double delta, const TrainConfig& cfg) {
    if (!(delta > 0.0)) throw std::invalid_argument("norm radius delta must be > 0");
    BlockNetwork net = prepare_for_tuning(pretrained, subset, HeadKind::subtune,
                                          derive_seed(cfg.seed, 0x4ead));
    LinearizedResult out;
    out.best_train_loss = evaluate(net, train_set).loss;
    TrainHooks hooks;
    hooks.after_step = [&](BlockNetwork& n) {
        project_to_ball(n, subset, delta);
        out.best_train_loss = std::min(out.best_train_loss, evaluate(n, train_set).loss);
    };
    const EvalRecord tr = train(net, train_set, cfg, hooks);
    const EvalRecord ho = evaluate(net, heldout);
    out.train_loss = tr.loss;
    out.train_accuracy = tr.accuracy;
    out.heldout_loss = ho.loss;
    out.heldout_accuracy = ho.accuracy;
    out.delta_norm = subset_delta_norm(net, subset);
    return out;
}

void GapExperimentConfig::validate() const {
    if (!(delta > 0.0)) throw std::invalid_argument("gap experiment delta must be > 0");
    if (m < 1) throw std::invalid_argument("gap experiment needs m >= 1");
    if (subset_sizes.empty()) throw std::invalid_argument("gap experiment needs subset sizes");
    if (seeds.empty()) throw std::invalid_argument("gap experiment needs seeds");
    train.validate();
}

std::vector<GapRecord> gap_experiment(const BlockNetwork& pretrained, const Dataset& pool,
                                      const Dataset& test, const GapExperimentConfig& cfg) {
    cfg.validate();
    const std::size_t n = pretrained.n_blocks();
    const std::size_t largest = *std::max_element(cfg.subset_sizes.begin(), cfg.subset_sizes.end());
    if (largest > n) {
        throw std::invalid_argument("subset size " + std::to_string(largest) + " exceeds " +
                                    std::to_string(n) + " blocks");
    }
    std::vector<GapRecord> records;
    for (std::uint64_t seed : cfg.seeds) {
        const Dataset sample = subsample(pool, cfg.m, true, derive_seed(seed, 0x6d));
        TrainConfig tc = cfg.train;
        tc.seed = seed;
        auto constrained_cv = [&](std::span<const BlockId> blocks) {
            const SubsetSpec s =
                make_subset(pretrained, std::vector<BlockId>(blocks.begin(), blocks.end()));
            CvOptions opts{cfg.cv_k, HeadKind::subtune, {}};
            opts.hooks.after_step = [s, d = cfg.delta](BlockNetwork& net) {
                project_to_ball(net, s, d);
            };
            return cv_score(pretrained, s, sample, tc, opts).mean_accuracy;
        };

        std::vector<SubsetSpec> chosen;
        if (cfg.selection == GapSelection::greedy) {
            GreedyOptions go;
            go.epsilon = -std::numeric_limits<double>::infinity();
            go.k_max = largest;
            const GreedyTrace tr = greedy_select(
                n, constrained_cv,
                [&](std::span<const BlockId> b) {
                    return make_subset(pretrained, std::vector<BlockId>(b.begin(), b.end()))
                        .param_count();
                },
                go);
            for (std::size_t size : cfg.subset_sizes) {
                chosen.push_back(make_subset(
                    pretrained, std::vector<BlockId>(tr.selected.begin(),
                                                     tr.selected.begin() +
                                                         static_cast<std::ptrdiff_t>(size))));
            }
        } else {
            for (std::size_t size : cfg.subset_sizes) {
                if (size == 0) {
                    chosen.emplace_back();
                    continue;
                }
                SubsetSpec best_window;
                double best_score = -1.0;
                for (std::size_t start = 1; start + size - 1 <= n; ++start) {
                    const SubsetSpec w = block_window(pretrained, start, size);
                    const double score = constrained_cv(w.blocks());
                    if (score > best_score) {
                        best_score = score;
                        best_window = w;
                    }
                }
                chosen.push_back(best_window);
            }
        }

        for (std::size_t i = 0; i < cfg.subset_sizes.size(); ++i) {
            const LinearizedResult lr =
                linearized_evaluate(pretrained, chosen[i], sample, test, cfg.delta, tc);
            GapRecord rec;
            rec.subset_size = cfg.subset_sizes[i];
            rec.r_prime = chosen[i].param_count();
            rec.delta = cfg.delta;
            rec.m = cfg.m;
            rec.seed = seed;
            rec.blocks = chosen[i].to_string();
            rec.train_accuracy = lr.train_accuracy;
            rec.test_accuracy = lr.heldout_accuracy;
            rec.gap = lr.train_accuracy - lr.heldout_accuracy;
            records.push_back(std::move(rec));
        }
    }
    return records;
}

std::vector<GapSummaryRow> summarize_gap(std::span<const GapRecord> records) {
    std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (const auto& r : records) {
        groups[r.subset_size].first.push_back(static_cast<double>(r.r_prime));
        groups[r.subset_size].second.push_back(r.gap);
    }
    std::vector<GapSummaryRow> rows;
    for (const auto& [size, vals] : groups) {
        rows.push_back({size, mean(vals.first), mean(vals.second)});
    }
    return rows;
}

double gap_trend(std::span<const GapSummaryRow> rows) {
    std::vector<double> x, y;
    for (const auto& r : rows) {
        x.push_back(std::sqrt(r.mean_r_prime));
        y.push_back(r.mean_gap);
    }
    return spearman(x, y);
}

}  // namespace subtune
