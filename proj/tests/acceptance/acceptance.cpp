// Acceptance suite: one PASS/FAIL line per criterion. Tolerances and time
// limits are pinned below. Pass criterion numbers (e.g. "3 7") to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "subtune/active.hpp"
#include "subtune/costmodel.hpp"
#include "subtune/experiments.hpp"
#include "subtune/format.hpp"
#include "subtune/prune.hpp"
#include "subtune/rng.hpp"
#include "subtune/select.hpp"
#include "subtune/stats.hpp"

#include "harness.hpp"

using namespace subtune;

namespace {

constexpr double kGradTol = 1e-4;
constexpr double kLowDataLpMargin = 0.02;
constexpr double kLowDataFtMargin = 0.0;
constexpr double kReinitMargin = 0.05;
constexpr double kGapRhoMin = 0.8;
constexpr double kPruneKeptMax = 0.10;
constexpr double kSiameseLossTol = 1e-6;

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

std::string fmt(double v, int digits = 4) { return format_fixed(v, digits); }

Tensor2 random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    Tensor2 t(r, c);
    for (double& v : t.values()) v = scale * rng.normal();
    return t;
}

std::vector<int> random_labels(Rng& rng, std::size_t n, std::size_t classes) {
    std::vector<int> y(n);
    for (int& v : y) v = static_cast<int>(rng.below(classes));
    return y;
}

// ---------------------------------------------------------------- 1
Outcome gradient_oracle() {
    std::size_t failures = 0;
    double worst = 0.0;
    std::size_t checked = 0;
    for (std::uint64_t trial = 0; trial < 50; ++trial) {
        Rng rng(derive_seed(0x9a7d, trial));
        const std::size_t width = 2 + rng.below(6);
        const std::size_t blocks = 1 + rng.below(4);
        const std::size_t classes = 2 + rng.below(4);
        BlockNetwork net = BlockNetwork::build(width, blocks, classes, rng.next_u64());
        const HeadKind kinds[] = {HeadKind::linear_probe, HeadKind::subtune, HeadKind::siamese};
        const HeadKind kind = kinds[trial % 3];
        net.attach_head(HeadSpec::for_network(net, kind), rng.next_u64());
        if (kind != HeadKind::linear_probe) {
            std::vector<BlockId> ids;
            for (std::size_t b = 1; b <= blocks; ++b) {
                if (rng.bernoulli(0.6)) ids.push_back(BlockId{b});
            }
            net.set_trainable(make_subset(net, ids));
        }
        if (kind == HeadKind::siamese) {
            // Move the live branch off the snapshot so both halves differ.
            for (ParamId id : net.trainable_params()) {
                for (double& v : net.mutable_param(id)) v += 0.1 * rng.normal();
            }
        }
        const std::size_t n = 3 + rng.below(6);
        const Tensor2 batch = random_matrix(rng, n, width);
        const auto labels = random_labels(rng, n, classes);
        GradCheckOptions opts;
        opts.tol = kGradTol;
        opts.seed = trial;
        const GradCheckReport rep = numerical_grad_check(net, batch, labels, opts);
        worst = std::max(worst, rep.max_rel_error);
        checked += rep.checked;
        if (!rep.passed) ++failures;
    }
    return {failures == 0, "50 nets, " + std::to_string(checked) + " entries, max rel err " +
                               format_double(worst) + " (tol " + format_double(kGradTol) + ")"};
}

// ---------------------------------------------------------------- 2
Outcome freeze_exactness() {
    std::size_t runs = 0;
    std::size_t violations = 0;
    for (std::uint64_t trial = 0; trial < 12; ++trial) {
        Rng rng(derive_seed(0xf2ee, trial));
        TaskGenerator gen(8, 3, 2, trial);
        const Dataset data = gen.sample(60, 1);
        BlockNetwork pre = BlockNetwork::build(8, 5, 3, rng.next_u64());
        pre.set_trainable(all_blocks(pre));
        TrainConfig warm;
        warm.epochs = 2;
        train(pre, data, warm);
        pre.commit_snapshot();
        std::vector<BlockId> ids;
        for (std::size_t b = 1; b <= 5; ++b) {
            if (rng.bernoulli(0.4)) ids.push_back(BlockId{b});
        }
        const HeadKind kinds[] = {HeadKind::linear_probe, HeadKind::subtune, HeadKind::siamese};
        const SubsetSpec subset = make_subset(pre, ids);
        BlockNetwork net = prepare_for_tuning(pre, subset, kinds[trial % 3], trial);
        TrainConfig tc;
        tc.epochs = 3;
        tc.lr = 1e-2;
        tc.seed = trial;
        train(net, data, tc);
        ++runs;
        for (std::size_t b = 1; b <= 5; ++b) {
            if (!net.is_frozen(BlockId{b})) continue;
            for (Slot s : {Slot::lin1_weight, Slot::lin1_bias, Slot::lin2_weight, Slot::lin2_bias}) {
                const ParamId id{b, s};
                if (!bitwise_equal(net.param(id), pre.snapshot_param(id))) ++violations;
            }
        }
    }
    return {violations == 0,
            std::to_string(runs) + " runs, " + std::to_string(violations) + " frozen tensors changed"};
}

// ---------------------------------------------------------------- 3
Outcome cost_oracle() {
    const CostProfile hand{{2, 3, 1, 4}, {1, 2, 2, 1}};
    const double hand_total = total_time(hand, {2, 3});
    std::size_t ranges = 0;
    std::size_t mismatches = 0;
    for (std::uint64_t trial = 0; trial < 1000; ++trial) {
        Rng rng(derive_seed(0xc057, trial));
        const std::size_t n = 1 + rng.below(20);
        CostProfile p;
        for (std::size_t i = 0; i < n; ++i) {
            p.c.push_back(rng.uniform(0.0, 10.0));
            p.s.push_back(rng.uniform(0.0, 10.0));
        }
        if (baseline_time(p) != simulate_pipeline(p, {1, 1}, false)) ++mismatches;
        for (std::size_t a = 1; a <= n; ++a) {
            for (std::size_t b = a; b <= n; ++b) {
                ++ranges;
                if (total_time(p, {a, b}) != simulate_pipeline(p, {a, b}, true)) ++mismatches;
            }
        }
    }
    return {mismatches == 0 && hand_total == 20.0,
            std::to_string(ranges) + " ranges, " + std::to_string(mismatches) +
                " mismatches; hand case total " + format_double(hand_total)};
}

// ---------------------------------------------------------------- 4
Outcome greedy_oracle() {
    const LookupEvaluator table = LookupEvaluator::parse(
        "{} = 0.5\n1 = 0.6\n2 = 0.7\n3 = 0.65\n2,1 = 0.72\n2,3 = 0.71\n2,1,3 = 0.722\n");
    std::size_t calls = 0;
    GreedyOptions opts;
    opts.epsilon = 0.005;
    const GreedyTrace trace = greedy_select(
        3,
        [&](std::span<const BlockId> b) {
            if (!b.empty()) ++calls;
            return table(b);
        },
        [](std::span<const BlockId> b) { return b.size(); }, opts);
    const bool ok = trace.selected_string() == "2,1" && trace.steps.size() == 3 &&
                    !trace.steps.back().accepted && trace.candidate_evaluations == 6 && calls == 6;
    return {ok, "selected {" + trace.selected_string() + "}, " +
                    std::to_string(trace.candidate_evaluations) + " candidate evaluations"};
}

// ---------------------------------------------------------------- 5
std::vector<std::pair<std::size_t, std::size_t>> brute_force_removed(
    const std::vector<std::vector<double>>& scores, PruneScope scope, double sparsity) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (scope == PruneScope::local) {
        for (std::size_t b = 0; b < scores.size(); ++b) {
            const auto k = static_cast<std::size_t>(std::floor(sparsity * scores[b].size()));
            std::vector<std::size_t> idx(scores[b].size());
            std::iota(idx.begin(), idx.end(), 0);
            std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
                return scores[b][x] != scores[b][y] ? scores[b][x] < scores[b][y] : x < y;
            });
            for (std::size_t i = 0; i < k; ++i) out.emplace_back(b, idx[i]);
        }
    } else {
        std::size_t total = 0;
        for (const auto& s : scores) total += s.size();
        const auto k = static_cast<std::size_t>(std::floor(sparsity * total));
        std::vector<std::vector<bool>> gone(scores.size());
        for (std::size_t b = 0; b < scores.size(); ++b) gone[b].assign(scores[b].size(), false);
        // Repeated minimum extraction over the still-removable channels.
        for (std::size_t step = 0; step < k; ++step) {
            bool found = false;
            std::size_t bb = 0, cc = 0;
            for (std::size_t b = 0; b < scores.size(); ++b) {
                const auto left = std::count(gone[b].begin(), gone[b].end(), false);
                if (left <= 1) continue;
                for (std::size_t c = 0; c < scores[b].size(); ++c) {
                    if (gone[b][c]) continue;
                    if (!found || scores[b][c] < scores[bb][cc]) {
                        found = true;
                        bb = b;
                        cc = c;
                    }
                }
            }
            if (!found) break;
            gone[bb][cc] = true;
            out.emplace_back(bb, cc);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<double> oracle_scores(const ResidualBlock& blk, PruneNorm norm) {
    std::vector<double> s;
    for (std::size_t j = 0; j < blk.hidden(); ++j) {
        double acc = 0.0;
        for (double w : blk.lin1.weight.row(j)) acc += norm == PruneNorm::l1 ? std::fabs(w) : w * w;
        const double b = blk.lin1.bias[j];
        acc += norm == PruneNorm::l1 ? std::fabs(b) : b * b;
        s.push_back(norm == PruneNorm::l1 ? acc : std::sqrt(acc));
    }
    return s;
}

// Forward through the original blocks with the listed hidden units forced to 0.
Tensor2 masked_forward(const BlockNetwork& net,
                       const std::vector<std::pair<std::size_t, std::size_t>>& masked,
                       const Tensor2& x) {
    Tensor2 h = x;
    for (std::size_t b = 0; b < net.n_blocks(); ++b) {
        const ResidualBlock& blk = net.live().blocks[b];
        Tensor2 next(h.rows(), h.cols());
        for (std::size_t r = 0; r < h.rows(); ++r) {
            std::vector<double> act(blk.hidden());
            for (std::size_t j = 0; j < blk.hidden(); ++j) {
                double acc = blk.lin1.bias[j];
                for (std::size_t i = 0; i < h.cols(); ++i) acc += blk.lin1.weight(j, i) * h(r, i);
                act[j] = acc > 0.0 ? acc : 0.0;
                if (std::find(masked.begin(), masked.end(), std::make_pair(b, j)) != masked.end()) {
                    act[j] = 0.0;
                }
            }
            for (std::size_t o = 0; o < h.cols(); ++o) {
                double acc = blk.lin2.bias[o];
                for (std::size_t j = 0; j < blk.hidden(); ++j) {
                    if (std::find(masked.begin(), masked.end(), std::make_pair(b, j)) !=
                        masked.end()) {
                        continue;
                    }
                    acc += blk.lin2.weight(o, j) * act[j];
                }
                next(r, o) = acc + h(r, o);
            }
        }
        h = std::move(next);
    }
    Tensor2 logits(h.rows(), net.classes());
    for (std::size_t r = 0; r < h.rows(); ++r) {
        for (std::size_t c = 0; c < net.classes(); ++c) {
            double acc = net.head().bias[c];
            for (std::size_t i = 0; i < h.cols(); ++i) acc += net.head().weight(c, i) * h(r, i);
            logits(r, c) = acc;
        }
    }
    return logits;
}

Outcome pruning_oracle() {
    std::size_t plan_mismatch = 0;
    std::size_t forward_mismatch = 0;
    std::size_t cases = 0;
    for (std::uint64_t trial = 0; trial < 200; ++trial) {
        Rng rng(derive_seed(0x9e0e, trial));
        const std::size_t width = 3 + rng.below(8);
        const std::size_t blocks = 1 + rng.below(3);
        BlockNetwork net = BlockNetwork::build(width, blocks, 3, rng.next_u64());
        const double sparsity = rng.uniform(0.0, 0.95);
        const Tensor2 x = random_matrix(rng, 5, width);
        for (PruneScope scope : {PruneScope::local, PruneScope::global}) {
            for (PruneNorm norm : {PruneNorm::l1, PruneNorm::l2}) {
                ++cases;
                PruneSpec spec{scope, norm, sparsity, all_blocks(net)};
                const PrunePlan plan = prune_plan(net, spec);
                std::vector<std::vector<double>> scores;
                for (const auto& blk : net.live().blocks) scores.push_back(oracle_scores(blk, norm));
                const auto expect = brute_force_removed(scores, scope, sparsity);
                std::vector<std::pair<std::size_t, std::size_t>> got;
                for (const auto& bp : plan.blocks) {
                    for (std::size_t j : bp.removed) got.emplace_back(bp.block.index - 1, j);
                }
                std::sort(got.begin(), got.end());
                if (got != expect) ++plan_mismatch;
                const BlockNetwork pruned = apply_prune(net, plan);
                if (!(pruned.forward(x).logits == masked_forward(net, expect, x))) ++forward_mismatch;
            }
        }
    }
    return {plan_mismatch == 0 && forward_mismatch == 0,
            std::to_string(cases) + " plans, " + std::to_string(plan_mismatch) +
                " removal mismatches, " + std::to_string(forward_mismatch) +
                " forward mismatches"};
}

// ---------------------------------------------------------------- 6
Outcome margin_oracle() {
    std::size_t mismatches = 0;
    for (std::uint64_t trial = 0; trial < 200; ++trial) {
        Rng rng(derive_seed(0x3a29, trial));
        const std::size_t width = 2 + rng.below(6);
        const std::size_t classes = 2 + rng.below(5);
        const std::size_t n = 5 + rng.below(60);
        BlockNetwork net = BlockNetwork::build(width, 1 + rng.below(3), classes, rng.next_u64());
        Dataset ds{random_matrix(rng, n, width, 2.0), random_labels(rng, n, classes), classes, "pool"};
        LabeledPool pool(ds);
        std::vector<std::size_t> pre;
        for (std::size_t i = 0; i < n; ++i) {
            if (rng.bernoulli(0.3)) pre.push_back(i);
        }
        pool.acquire(0, pre);
        const std::size_t want = rng.below(pool.size() - pool.labeled_count() + 1);
        const auto got = select_queries(net, pool, want);

        const Tensor2 logits = net.forward(ds.x).logits;
        std::vector<std::pair<double, std::size_t>> all;
        for (std::size_t r = 0; r < n; ++r) {
            if (pool.is_labeled(r)) continue;
            auto z = logits.row(r);
            const double m = *std::max_element(z.begin(), z.end());
            std::vector<double> p(z.size());
            double sum = 0.0;
            for (std::size_t c = 0; c < z.size(); ++c) {
                p[c] = std::exp(z[c] - m);
                sum += p[c];
            }
            for (double& v : p) v /= sum;
            std::sort(p.begin(), p.end(), std::greater<>());
            all.emplace_back(p[0] - p[1], r);
        }
        std::sort(all.begin(), all.end());
        std::vector<std::size_t> expect;
        for (std::size_t i = 0; i < want; ++i) expect.push_back(all[i].second);
        if (got != expect) ++mismatches;
    }
    return {mismatches == 0, "200 pools, " + std::to_string(mismatches) + " mismatches"};
}

// ------------------------------------------------------- desk experiments
DeskConfig desk_config() { return DeskConfig{}; }

const DeskSource& desk_source() {
    static const DeskSource source = pretrain_source(desk_config());
    return source;
}

TrainConfig target_train(std::uint64_t seed) {
    TrainConfig tc;
    tc.lr = 3e-3;
    tc.epochs = kScarceDataEpochs;
    tc.batch_size = 32;
    tc.seed = seed;
    return tc;
}

ShiftSpec desk_shift(std::uint64_t seed) {
    ShiftSpec s;
    s.kind = ShiftKind::impulse;
    s.severity = 1;
    s.seed = seed;
    return s;
}

constexpr std::size_t kTargetM = 100;
constexpr std::size_t kTargetTest = 2000;

std::string signed_fmt(double v) { return (v >= 0 ? "+" : "") + fmt(v); }

// ---------------------------------------------------------------- 7
Outcome low_data_claim() {
    const DeskSource& src = desk_source();
    std::vector<double> d_lp, d_ft;
    std::string picks;
    for (std::uint64_t seed : kSeeds) {
        const ShiftTask task = make_target(src, desk_shift(seed), kTargetM, kTargetTest);
        const MethodComparison mc =
            compare_methods(src.pretrained, task, target_train(seed), GreedyOptions{}, EvalPlan{});
        d_lp.push_back(mc.greedy - mc.linear_probe);
        d_ft.push_back(mc.greedy - mc.full_finetune);
        picks += (picks.empty() ? "" : " ") + std::string("{") + mc.trace.selected_string() + "}";
    }
    const double mlp = mean(d_lp);
    const double mft = mean(d_ft);
    return {mlp >= kLowDataLpMargin && mft >= kLowDataFtMargin,
            "paired mean greedy-LP " + signed_fmt(mlp) + " (need >= " + fmt(kLowDataLpMargin) +
                "), greedy-FT " + signed_fmt(mft) + " (need >= " + fmt(kLowDataFtMargin) +
                "); subsets " + picks};
}

// ---------------------------------------------------------------- 8
Outcome profile_non_monotone() {
    const DeskSource& src = desk_source();
    const std::uint64_t seeds[] = {1, 2, 3};
    std::string detail;
    bool any = false;
    for (ShiftKind kind : kAllShiftKinds) {
        ShiftSpec spec;
        spec.kind = kind;
        spec.severity = 1;
        spec.seed = 1;
        const ShiftTask task = make_target(src, spec, kTargetM, kTargetTest);
        EvalPlan plan;
        plan.mode = EvalMode::holdout;
        plan.holdout = &task.test;
        const ProfileResult prof =
            finetune_profile(src.pretrained, task.train, 1, plan, target_train(1), seeds);
        std::size_t best = 0;
        for (std::size_t i = 1; i < prof.entries.size(); ++i) {
            if (prof.entries[i].mean_accuracy > prof.entries[best].mean_accuracy) best = i;
        }
        const bool not_last = best + 1 != prof.entries.size();
        any = any || not_last;
        detail += (detail.empty() ? "" : ", ") + to_string(kind) + " argmax block " +
                  std::to_string(best + 1);
    }
    return {any, detail};
}

// ---------------------------------------------------------------- 9
Outcome reinit_ablation_claim() {
    const DeskSource& src = desk_source();
    std::vector<double> diffs;
    const SubsetSpec subset = block_window(src.pretrained, 1, 2);
    for (std::uint64_t seed : kSeeds) {
        const ShiftTask task = make_target(src, desk_shift(seed), kTargetM, kTargetTest);
        const ReinitResult r = reinit_ablation(src.pretrained, subset, task, target_train(seed));
        diffs.push_back(r.pretrained_init - r.random_init);
    }
    const double m = mean(diffs);
    return {m >= kReinitMargin, "blocks {" + subset.to_string() + "}, pretrained - reinit " +
                                    signed_fmt(m) + " (need >= " + fmt(kReinitMargin) + ")"};
}

// ---------------------------------------------------------------- 10
Outcome active_learning_claim() {
    const DeskSource& src = desk_source();
    constexpr std::size_t kPool = 5000;
    std::vector<double> margin_curve, random_curve;
    std::vector<std::size_t> budgets;
    for (std::uint64_t seed : kSeeds) {
        const ShiftTask task = make_target(src, desk_shift(seed), kPool, kTargetTest);
        ALConfig cfg;
        scale_default_budgets(cfg, kPool);
        cfg.seed = seed;
        cfg.train = target_train(seed);
        const SubsetSpec subset = block_window(src.pretrained, 1, 1);
        for (ALStrategy s : {ALStrategy::margin, ALStrategy::random}) {
            cfg.strategy = s;
            const ALResult r = al_loop(src.pretrained, task.train, task.test, subset, cfg);
            auto& curve = s == ALStrategy::margin ? margin_curve : random_curve;
            if (curve.empty()) curve.assign(r.curve.size(), 0.0);
            for (std::size_t i = 0; i < r.curve.size(); ++i) curve[i] += r.curve[i].test_accuracy / 5.0;
            if (budgets.empty()) {
                for (const auto& p : r.curve) budgets.push_back(p.budget);
            }
        }
    }
    bool every = true;
    std::string detail;
    for (std::size_t i = 0; i < budgets.size(); ++i) {
        every = every && margin_curve[i] >= random_curve[i];
        detail += (detail.empty() ? "" : " ") + std::to_string(budgets[i]) + ":" +
                  signed_fmt(margin_curve[i] - random_curve[i]);
    }
    const double area_m = std::accumulate(margin_curve.begin(), margin_curve.end(), 0.0);
    const double area_r = std::accumulate(random_curve.begin(), random_curve.end(), 0.0);
    return {every && area_m > area_r, "margin-random per budget " + detail + "; area " +
                                          fmt(area_m) + " vs " + fmt(area_r)};
}

// ---------------------------------------------------------------- 11
Outcome generalization_trend() {
    const DeskSource& src = desk_source();
    ShiftSpec spec = desk_shift(99);
    const ShiftTask task = make_target(src, spec, 2000, kTargetTest);
    GapExperimentConfig cfg;
    cfg.train = target_train(0);
    const auto records = gap_experiment(src.pretrained, task.train, task.test, cfg);
    const auto rows = summarize_gap(records);
    const double rho = gap_trend(rows);
    std::string detail;
    for (const auto& r : rows) {
        detail += (detail.empty() ? "" : " ") + std::string("r'=") +
                  std::to_string(static_cast<std::size_t>(r.mean_r_prime)) + ":" + fmt(r.mean_gap);
    }
    return {rows.size() >= 4 && rho > kGapRhoMin,
            "spearman " + fmt(rho) + " (need > " + fmt(kGapRhoMin) + "); gaps " + detail};
}

// ---------------------------------------------------------------- 12
Outcome pruning_direction() {
    const DeskSource& src = desk_source();
    std::vector<double> pruned, probe;
    double kept = 0.0;
    for (std::uint64_t seed : kSeeds) {
        const ShiftTask task = make_target(src, desk_shift(seed), kTargetM, kTargetTest);
        PruneSpec spec{PruneScope::local, PruneNorm::l1, 0.95, block_window(src.pretrained, 7, 2)};
        const PrunedResult r = pruned_subtune(src.pretrained, spec, task, target_train(seed));
        kept = std::max(kept, r.kept_fraction);
        pruned.push_back(r.accuracy);
        probe.push_back(
            tune_and_test(src.pretrained, {}, HeadKind::linear_probe, task, target_train(seed))
                .test.accuracy);
    }
    return {kept <= kPruneKeptMax && mean(pruned) >= mean(probe),
            "kept fraction " + fmt(kept) + " (need <= " + fmt(kPruneKeptMax) + "), pruned " +
                fmt(mean(pruned)) + " vs linear probe " + fmt(mean(probe))};
}

// ---------------------------------------------------------------- 13
Outcome determinism() {
    namespace fs = std::filesystem;
    const fs::path root = fs::temp_directory_path() / "subtune_acceptance_det";
    fs::remove_all(root);
    const std::vector<std::string> commands = harness::determinism_commands();
    std::size_t compared = 0;
    std::size_t differing = 0;
    std::string failed;
    for (const std::string& cmd : commands) {
        std::vector<std::string> outputs;
        for (int run = 0; run < 2; ++run) {
            const fs::path dir = root / (cmd + std::to_string(run));
            const int code = harness::run_smoke(cmd, dir);
            if (code != 0) {
                failed += " " + cmd;
                break;
            }
            std::string joined;
            for (const auto& entry : fs::directory_iterator(dir)) {
                if (entry.path().extension() != ".csv") continue;
                std::ifstream in(entry.path(), std::ios::binary);
                std::stringstream ss;
                ss << in.rdbuf();
                joined += entry.path().filename().string() + "\n" + ss.str();
            }
            outputs.push_back(joined);
        }
        if (outputs.size() == 2) {
            ++compared;
            if (outputs[0] != outputs[1] || outputs[0].empty()) ++differing;
        }
    }
    fs::remove_all(root);
    return {failed.empty() && differing == 0,
            std::to_string(compared) + " subcommands run twice, " + std::to_string(differing) +
                " with differing CSVs" + (failed.empty() ? "" : "; failed:" + failed)};
}

// ---------------------------------------------------------------- 14
Outcome siamese_containment() {
    const DeskSource& src = desk_source();
    std::size_t violations = 0;
    double worst = -1e300;
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        const Dataset data = random_label_dataset(src, 60, trial);
        TrainConfig tc;
        tc.lr = 1e-2;
        tc.epochs = 150;
        tc.batch_size = 60;
        tc.seed = trial;
        const SubsetSpec subset = block_window(src.pretrained, src.pretrained.n_blocks(), 1);
        const double lp =
            train_loss_trajectory(src.pretrained, subset, HeadKind::linear_probe, data, tc).min_loss;
        const double sia =
            train_loss_trajectory(src.pretrained, subset, HeadKind::siamese, data, tc).min_loss;
        worst = std::max(worst, sia - lp);
        if (sia > lp + kSiameseLossTol) ++violations;
    }
    return {violations == 0, "20 datasets, " + std::to_string(violations) +
                                 " violations, max(siamese - probe) " + format_double(worst)};
}

struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria = {
        {1, "gradient oracle", 30, gradient_oracle},
        {2, "freeze exactness", 60, freeze_exactness},
        {3, "cost-model oracle", 10, cost_oracle},
        {4, "greedy on lookup oracle", 1, greedy_oracle},
        {5, "pruning oracle", 30, pruning_oracle},
        {6, "margin oracle", 10, margin_oracle},
        {7, "low-data greedy vs probe and finetune", 900, low_data_claim},
        {8, "profile non-monotonicity", 1200, profile_non_monotone},
        {9, "reinit ablation", 600, reinit_ablation_claim},
        {10, "active learning margin vs random", 1200, active_learning_claim},
        {11, "generalization gap trend", 1200, generalization_trend},
        {12, "pruned subtuning vs probe", 900, pruning_direction},
        {13, "determinism", 600, determinism},
        {14, "siamese containment", 300, siamese_containment},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));

    int failures = 0;
    for (const Criterion& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto start = Clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(Clock::now() - start).count();
        const bool in_time = secs <= c.limit_seconds;
        const bool pass = o.pass && in_time;
        if (!pass) ++failures;
        std::printf("%s  C%02d %s: %s [%.1f s, limit %.0f s%s]\n", pass ? "PASS" : "FAIL", c.id,
                    c.name, o.detail.c_str(), secs, c.limit_seconds, in_time ? "" : ", too slow");
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
