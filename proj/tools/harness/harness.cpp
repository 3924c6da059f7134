#include "harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "subtune/active.hpp"
#include "subtune/costmodel.hpp"
#include "subtune/experiments.hpp"
#include "subtune/format.hpp"
#include "subtune/prune.hpp"
#include "subtune/rng.hpp"
#include "subtune/select.hpp"
#include "subtune/stats.hpp"

namespace subtune::harness {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> cmds = {"pretrain", "profile", "greedy", "subtune",
                                                  "siamese",  "prune",   "al",     "cost",
                                                  "gap",      "report"};
    return cmds;
}

const std::vector<std::pair<std::string, std::string>>& csv_schemas() {
    static const std::vector<std::pair<std::string, std::string>> schemas = {
        {"pretrain.csv", "split,n,accuracy,loss"},
        {"profile.csv", "group_size,l_start,l_end,mean_acc,std_acc,seeds"},
        {"pairwise.csv", "block_i,block_j,acc"},
        {"greedy.csv", "step,candidate_block,cv_acc,chosen,accepted"},
        {"subtune.csv", "seed,head,blocks,params,train_acc,test_acc"},
        {"siamese.csv", "seed,head,blocks,train_acc,test_acc,train_loss"},
        {"prune.csv", "seed,scope,norm,sparsity,kept_fraction,test_acc,linear_probe_acc"},
        {"al.csv", "round,budget,strategy,seed,test_acc"},
        {"cost.csv", "l_start,l_end,total,baseline,added"},
        {"gap.csv", "r_prime,delta,m,seed,train_acc,test_acc,gap"},
    };
    return schemas;
}

namespace {

const std::string& schema_header(const std::string& file) {
    for (const auto& [name, header] : csv_schemas()) {
        if (name == file) return header;
    }
    throw std::logic_error("no CSV schema for " + file);
}

class CsvWriter {
public:
    CsvWriter(const fs::path& dir, const std::string& file) : path_(dir / file) {
        out_.open(path_, std::ios::binary);
        if (!out_) throw std::runtime_error("cannot write " + path_.string());
        out_ << kCsvVersionLine << '\n' << schema_header(file) << '\n';
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }
    void comment(const std::string& text) { out_ << "# " << text << '\n'; }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
    std::ofstream out_;
};

std::string acc(double v) { return format_fixed(v, 6); }
std::string num(double v) { return format_double(v); }

std::string join_blocks(const SubsetSpec& s) { return "\"" + s.to_string() + "\""; }

/// Everything a command needs, resolved and validated up front so bad values
/// surface as config errors before any work starts.
struct Settings {
    DeskConfig desk;
    std::string checkpoint;
    std::vector<std::uint64_t> seeds;
    ShiftKind shift = ShiftKind::impulse;
    int severity = 1;
    std::size_t train_n = 0;
    std::size_t test_n = 0;
    std::string train_csv, test_csv, label_column;
    TrainConfig train;
    EvalMode eval_mode = EvalMode::cv;
    std::size_t folds = 5;
};

template <typename F>
auto as_config_error(const std::string& key, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
    }
}

std::vector<BlockId> block_list(const Config& cfg, const std::string& key, std::size_t n_blocks) {
    std::vector<BlockId> out;
    for (std::int64_t b : cfg.get_int_list(key)) {
        if (b < 1 || static_cast<std::size_t>(b) > n_blocks) {
            throw ConfigError("config key '" + key + "': block " + std::to_string(b) +
                              " outside [1, " + std::to_string(n_blocks) + "]");
        }
        out.push_back(BlockId{static_cast<std::size_t>(b)});
    }
    return out;
}

Settings resolve(const Config& cfg) {
    Settings s;
    s.desk.dim = cfg.get_size("data.dim");
    s.desk.classes = cfg.get_size("data.classes");
    s.desk.warp_depth = cfg.get_size("data.warp_depth");
    s.desk.warp_gain = cfg.get_real("data.warp_gain");
    s.desk.source_n = cfg.get_size("data.source_n");
    s.desk.task_seed = static_cast<std::uint64_t>(cfg.get_int("data.task_seed"));
    s.desk.blocks = cfg.get_size("model.blocks");
    s.desk.init_seed = static_cast<std::uint64_t>(cfg.get_int("model.init_seed"));
    s.desk.pretrain.lr = cfg.get_real("pretrain.lr");
    s.desk.pretrain.weight_decay = cfg.get_real("pretrain.weight_decay");
    s.desk.pretrain.batch_size = cfg.get_size("pretrain.batch_size");
    s.desk.pretrain.epochs = cfg.get_size("pretrain.epochs");
    s.desk.pretrain.seed = static_cast<std::uint64_t>(cfg.get_int("pretrain.seed"));
    as_config_error("data/model/pretrain", [&] {
        s.desk.validate();
        return 0;
    });
    s.checkpoint = cfg.get_text("model.checkpoint");
    for (std::int64_t v : cfg.get_int_list("run.seeds")) s.seeds.push_back(static_cast<std::uint64_t>(v));
    if (s.seeds.empty()) throw ConfigError("config key 'run.seeds' needs at least one seed");
    s.shift = as_config_error("data.shift", [&] { return shift_kind_from_string(cfg.get_text("data.shift")); });
    s.severity = static_cast<int>(cfg.get_int("data.severity"));
    as_config_error("data.severity", [&] {
        ShiftSpec{s.shift, s.severity, 0, {}}.validate();
        return 0;
    });
    s.train_n = cfg.get_size("data.train_n");
    s.test_n = cfg.get_size("data.test_n");
    s.train_csv = cfg.get_text("data.train_csv");
    s.test_csv = cfg.get_text("data.test_csv");
    s.label_column = cfg.get_text("data.label_column");
    if (s.train_csv.empty() != s.test_csv.empty()) {
        throw ConfigError("data.train_csv and data.test_csv must be set together");
    }
    s.train.lr = cfg.get_real("train.lr");
    s.train.weight_decay = cfg.get_real("train.weight_decay");
    s.train.batch_size = cfg.get_size("train.batch_size");
    s.train.epochs = cfg.get_size("train.epochs");
    as_config_error("train", [&] {
        s.train.validate();
        return 0;
    });
    const std::string mode = cfg.get_text("eval.mode");
    if (mode == "cv") {
        s.eval_mode = EvalMode::cv;
    } else if (mode == "holdout") {
        s.eval_mode = EvalMode::holdout;
    } else {
        throw ConfigError("config key 'eval.mode': expected cv or holdout, got '" + mode + "'");
    }
    s.folds = cfg.get_size("eval.folds");
    if (s.folds < 2) throw ConfigError("config key 'eval.folds' must be >= 2");
    return s;
}

DeskSource load_source(const Settings& s, std::ostream& log) {
    if (!s.checkpoint.empty()) {
        log << "loading checkpoint " << s.checkpoint << '\n';
        return attach_source(s.desk, load_checkpoint(s.checkpoint));
    }
    log << "pretraining on " << s.desk.source_n << " source samples\n";
    return pretrain_source(s.desk);
}

ShiftTask load_target(const Settings& s, const DeskSource& src, std::uint64_t seed,
                      std::size_t train_n) {
    if (!s.train_csv.empty()) {
        ShiftTask t{load_csv(s.train_csv, s.label_column), load_csv(s.test_csv, s.label_column)};
        const std::size_t classes = src.pretrained.classes();
        t.train.classes = t.test.classes = classes;
        t.train.validate();
        t.test.validate();
        return t;
    }
    return make_target(src, ShiftSpec{s.shift, s.severity, seed, {}}, train_n, s.test_n);
}

TrainConfig train_for(const Settings& s, std::uint64_t seed) {
    TrainConfig tc = s.train;
    tc.seed = seed;
    return tc;
}

EvalPlan plan_for(const Settings& s, const ShiftTask& task) {
    EvalPlan plan;
    plan.mode = s.eval_mode;
    plan.k = s.folds;
    plan.holdout = &task.test;
    return plan;
}

struct Summary {
    json metrics = json::object();
    std::vector<std::string> files;
};

// ------------------------------------------------------------- commands

void cmd_pretrain(const Settings& s, const fs::path& out, Summary& sum, std::ostream& log) {
    const DeskSource src = pretrain_source(s.desk);
    const Dataset held = src.generator.sample(s.test_n, derive_seed(s.desk.task_seed, 2), "source_test");
    const EvalRecord test = evaluate(src.pretrained, held);
    save_checkpoint(src.pretrained, out / "model.bin");
    CsvWriter csv(out, "pretrain.csv");
    csv.row({"train", std::to_string(src.source_train.n), acc(src.source_train.accuracy),
             num(src.source_train.loss)});
    csv.row({"test", std::to_string(test.n), acc(test.accuracy), num(test.loss)});
    sum.files = {"pretrain.csv", "model.bin"};
    sum.metrics = {{"source_train_accuracy", src.source_train.accuracy},
                   {"source_test_accuracy", test.accuracy},
                   {"parameter_hash", src.pretrained.parameter_hash()}};
    log << "source accuracy train " << acc(src.source_train.accuracy) << ", test "
        << acc(test.accuracy) << '\n';
}

void cmd_profile(const Config& cfg, const Settings& s, const RunOptions& opts, const fs::path& out,
                 Summary& sum, std::ostream& log) {
    const DeskSource src = load_source(s, log);
    const ShiftTask task = load_target(s, src, s.seeds.front(), s.train_n);
    const EvalPlan plan = plan_for(s, task);
    std::vector<std::size_t> groups;
    if (opts.group) {
        groups.push_back(*opts.group);
    } else {
        for (std::int64_t g : cfg.get_int_list("profile.groups")) {
            if (g < 1) throw ConfigError("config key 'profile.groups': sizes must be >= 1");
            groups.push_back(static_cast<std::size_t>(g));
        }
    }
    for (std::size_t g : groups) {
        if (g > src.pretrained.n_blocks()) {
            throw ConfigError("profile group " + std::to_string(g) + " exceeds " +
                              std::to_string(src.pretrained.n_blocks()) + " blocks");
        }
    }
    CsvWriter csv(out, "profile.csv");
    json best = json::object();
    for (std::size_t g : groups) {
        log << "profile g=" << g << '\n';
        const ProfileResult prof =
            finetune_profile(src.pretrained, task.train, g, plan, s.train, s.seeds);
        std::size_t arg = 0;
        for (std::size_t i = 0; i < prof.entries.size(); ++i) {
            const auto& e = prof.entries[i];
            const std::size_t start = e.subset.blocks().front().index;
            csv.row({std::to_string(g), std::to_string(start), std::to_string(start + g - 1),
                     acc(e.mean_accuracy), acc(e.std_accuracy), std::to_string(e.per_seed.size())});
            if (e.mean_accuracy > prof.entries[arg].mean_accuracy) arg = i;
        }
        best[std::to_string(g)] = prof.entries[arg].subset.blocks().front().index;
    }
    sum.files = {"profile.csv"};
    sum.metrics["argmax_l_start"] = best;
    if (cfg.get_bool("profile.pairwise") && !opts.group) {
        TrainConfig tc = train_for(s, s.seeds.front());
        const PairwiseProfile pw = pairwise_profile(src.pretrained, task.train, tc, plan);
        CsvWriter pcsv(out, "pairwise.csv");
        for (std::size_t i = 0; i < pw.n_blocks; ++i) {
            for (std::size_t j = i; j < pw.n_blocks; ++j) {
                pcsv.row({std::to_string(i + 1), std::to_string(j + 1), acc(pw.at(i, j))});
            }
        }
        const auto [a, b] = pw.best_pair();
        sum.metrics["best_pair"] = {a.index, b.index};
        sum.files.push_back("pairwise.csv");
    }
}

GreedyOptions greedy_options(const Config& cfg) {
    GreedyOptions go;
    go.epsilon = cfg.get_real("greedy.epsilon");
    if (!(go.epsilon >= 0.0)) throw ConfigError("config key 'greedy.epsilon' must be >= 0");
    if (const auto k = cfg.get_size("greedy.k_max"); k > 0) go.k_max = k;
    if (const auto r = cfg.get_size("greedy.budget"); r > 0) go.budget_r = r;
    const std::string init = cfg.get_text("greedy.init");
    if (init == "linear_probe") {
        go.init = GreedyInit::linear_probe;
    } else if (init == "zero") {
        go.init = GreedyInit::zero;
    } else {
        throw ConfigError("config key 'greedy.init': expected linear_probe or zero, got '" + init + "'");
    }
    return go;
}

void write_trace(const GreedyTrace& trace, const fs::path& out, Summary& sum) {
    CsvWriter csv(out, "greedy.csv");
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const GreedyStep& step = trace.steps[i];
        for (const auto& c : step.candidates) {
            const bool chosen = c.block == step.chosen;
            csv.row({std::to_string(i + 1), std::to_string(c.block.index), acc(c.score),
                     chosen ? "1" : "0", chosen && step.accepted ? "1" : "0"});
        }
    }
    csv.comment("selected: " + trace.selected_string());
    sum.files = {"greedy.csv"};
    sum.metrics = {{"selected", trace.selected_string()},
                   {"selected_params", trace.selected_params},
                   {"empty_score", trace.empty_score},
                   {"final_score", trace.final_score},
                   {"candidate_evaluations", trace.candidate_evaluations}};
}

void cmd_greedy(const Config& cfg, const Settings& s, const RunOptions& opts, const fs::path& out,
                Summary& sum, std::ostream& log) {
    const GreedyOptions go = greedy_options(cfg);
    std::string lookup = cfg.get_text("greedy.lookup");
    if (opts.lookup) lookup = *opts.lookup;
    if (!lookup.empty()) {
        const LookupEvaluator table = LookupEvaluator::load(lookup);
        const BlockNetwork shape = BlockNetwork::build(s.desk.dim, 1, s.desk.classes, 0);
        const std::size_t per_block = shape.block(BlockId{1}).param_count();
        log << "greedy over lookup table " << lookup << '\n';
        const GreedyTrace trace = greedy_select(
            table.max_block(), [&](std::span<const BlockId> b) { return table(b); },
            [&](std::span<const BlockId> b) { return b.size() * per_block; }, go);
        write_trace(trace, out, sum);
        return;
    }
    const DeskSource src = load_source(s, log);
    const std::uint64_t seed = s.seeds.front();
    const ShiftTask task = load_target(s, src, seed, s.train_n);
    const GreedyTrace trace =
        greedy_subtune(src.pretrained, task.train, go, train_for(s, seed), plan_for(s, task));
    write_trace(trace, out, sum);
    const TunedResult r = tune_and_test(src.pretrained, make_subset(src.pretrained, trace.selected),
                                        HeadKind::subtune, task, train_for(s, seed));
    sum.metrics["test_accuracy"] = r.test.accuracy;
    log << "selected {" << trace.selected_string() << "}, test accuracy " << acc(r.test.accuracy)
        << '\n';
}

void cmd_subtune(const Config& cfg, const Settings& s, const fs::path& out, Summary& sum,
                 std::ostream& log) {
    const HeadKind head = as_config_error("subtune.head", [&] {
        return head_kind_from_string(cfg.get_text("subtune.head"));
    });
    const std::vector<BlockId> ids = block_list(cfg, "subtune.blocks", s.desk.blocks);
    const DeskSource src = load_source(s, log);
    const SubsetSpec subset = as_config_error("subtune.blocks", [&] { return make_subset(src.pretrained, ids); });
    const std::vector<double> grid = cfg.get_real_list("train.lr_grid");
    for (double lr : grid) {
        if (!(lr > 0.0)) throw ConfigError("config key 'train.lr_grid': rates must be > 0");
    }
    CsvWriter csv(out, "subtune.csv");
    std::vector<double> accs;
    bool frozen_intact = true;
    for (std::uint64_t seed : s.seeds) {
        const ShiftTask task = load_target(s, src, seed, s.train_n);
        TrainConfig tc = train_for(s, seed);
        if (!grid.empty()) {
            CvOptions cv;
            cv.k = s.folds;
            cv.head = head;
            tc.lr = lr_sweep(src.pretrained, subset, task.train, grid, tc, cv).best_lr;
            log << "seed " << seed << ": swept lr " << tc.lr << '\n';
        }
        const TunedResult r = tune_and_test(src.pretrained, subset, head, task, tc);
        for (std::size_t b = 1; b <= r.net.n_blocks(); ++b) {
            if (!r.net.is_frozen(BlockId{b})) continue;
            for (Slot sl : {Slot::lin1_weight, Slot::lin1_bias, Slot::lin2_weight, Slot::lin2_bias}) {
                const ParamId id{b, sl};
                frozen_intact = frozen_intact && bitwise_equal(r.net.param(id), src.pretrained.snapshot_param(id));
            }
        }
        csv.row({std::to_string(seed), to_string(head), join_blocks(subset),
                 std::to_string(subset.param_count()), acc(r.train.accuracy), acc(r.test.accuracy)});
        accs.push_back(r.test.accuracy);
    }
    sum.files = {"subtune.csv"};
    sum.metrics = {{"mean_test_accuracy", mean(accs)},
                   {"std_test_accuracy", sample_stddev(accs)},
                   {"frozen_params_intact", frozen_intact}};
    log << "mean test accuracy " << acc(mean(accs)) << '\n';
}

void cmd_siamese(const Config& cfg, const Settings& s, const fs::path& out, Summary& sum,
                 std::ostream& log) {
    const std::vector<BlockId> ids = block_list(cfg, "siamese.blocks", s.desk.blocks);
    const DeskSource src = load_source(s, log);
    const SubsetSpec subset = make_subset(src.pretrained, ids);
    CsvWriter csv(out, "siamese.csv");
    std::map<std::string, std::vector<double>> accs;
    for (std::uint64_t seed : s.seeds) {
        const ShiftTask task = load_target(s, src, seed, s.train_n);
        for (HeadKind head : {HeadKind::linear_probe, HeadKind::subtune, HeadKind::siamese}) {
            const SubsetSpec used = head == HeadKind::linear_probe ? SubsetSpec{} : subset;
            const TunedResult r = tune_and_test(src.pretrained, used, head, task, train_for(s, seed));
            csv.row({std::to_string(seed), to_string(head), join_blocks(used), acc(r.train.accuracy),
                     acc(r.test.accuracy), num(r.train.loss)});
            accs[to_string(head)].push_back(r.test.accuracy);
        }
    }
    sum.files = {"siamese.csv"};
    for (const auto& [head, v] : accs) sum.metrics["mean_test_accuracy"][head] = mean(v);
    log << "siamese " << acc(mean(accs["siamese"])) << " vs linear probe "
        << acc(mean(accs["linear_probe"])) << '\n';
}

void cmd_prune(const Config& cfg, const Settings& s, const fs::path& out, Summary& sum,
               std::ostream& log) {
    PruneSpec spec;
    spec.scope = as_config_error("prune.scope", [&] { return prune_scope_from_string(cfg.get_text("prune.scope")); });
    spec.norm = as_config_error("prune.norm", [&] { return prune_norm_from_string(cfg.get_text("prune.norm")); });
    spec.sparsity = cfg.get_real("prune.sparsity");
    as_config_error("prune.sparsity", [&] {
        spec.validate();
        return 0;
    });
    const std::vector<BlockId> ids = block_list(cfg, "prune.blocks", s.desk.blocks);
    const DeskSource src = load_source(s, log);
    spec.target_blocks = make_subset(src.pretrained, ids);
    CsvWriter csv(out, "prune.csv");
    std::vector<double> pruned, probe;
    PrunePlan plan;
    double kept = 1.0;
    for (std::uint64_t seed : s.seeds) {
        const ShiftTask task = load_target(s, src, seed, s.train_n);
        const PrunedResult r = pruned_subtune(src.pretrained, spec, task, train_for(s, seed));
        const double lp =
            tune_and_test(src.pretrained, {}, HeadKind::linear_probe, task, train_for(s, seed)).test.accuracy;
        csv.row({std::to_string(seed), to_string(spec.scope), to_string(spec.norm), num(spec.sparsity),
                 acc(r.kept_fraction), acc(r.accuracy), acc(lp)});
        pruned.push_back(r.accuracy);
        probe.push_back(lp);
        plan = r.plan;
        kept = r.kept_fraction;
    }
    std::ofstream(out / "prune_plan.json", std::ios::binary) << to_json(plan).dump(2) << '\n';
    sum.files = {"prune.csv", "prune_plan.json"};
    sum.metrics = {{"kept_fraction", kept},
                   {"mean_test_accuracy", mean(pruned)},
                   {"mean_linear_probe_accuracy", mean(probe)}};
    log << "kept " << acc(kept) << ", pruned " << acc(mean(pruned)) << " vs probe " << acc(mean(probe))
        << '\n';
}

void cmd_al(const Config& cfg, const Settings& s, const fs::path& out, Summary& sum, std::ostream& log) {
    const std::string which = cfg.get_text("al.strategy");
    std::vector<ALStrategy> strategies;
    if (which == "both") {
        strategies = {ALStrategy::margin, ALStrategy::random};
    } else {
        strategies = {as_config_error("al.strategy", [&] { return al_strategy_from_string(which); })};
    }
    const std::size_t pool_n = cfg.get_size("al.pool_n");
    ALConfig base;
    scale_default_budgets(base, pool_n);
    if (const auto init = cfg.get_size("al.initial"); init > 0) base.initial_random = init;
    const auto budgets = cfg.get_int_list("al.budgets");
    if (!budgets.empty()) {
        base.budgets.clear();
        for (std::int64_t b : budgets) {
            if (b < 1) throw ConfigError("config key 'al.budgets': budgets must be >= 1");
            base.budgets.push_back(static_cast<std::size_t>(b));
        }
    }
    base.train = s.train;
    as_config_error("al", [&] {
        base.validate();
        return 0;
    });
    if (base.budgets.back() > pool_n) {
        throw ConfigError("al.budgets exceed al.pool_n (" + std::to_string(pool_n) + ")");
    }
    const std::vector<BlockId> ids = block_list(cfg, "al.blocks", s.desk.blocks);
    const DeskSource src = load_source(s, log);
    const SubsetSpec subset = make_subset(src.pretrained, ids);
    CsvWriter csv(out, "al.csv");
    std::map<std::string, double> area;
    for (std::uint64_t seed : s.seeds) {
        const ShiftTask task = load_target(s, src, seed, pool_n);
        for (ALStrategy st : strategies) {
            ALConfig c = base;
            c.strategy = st;
            c.seed = seed;
            c.train.seed = seed;
            const ALResult r = al_loop(src.pretrained, task.train, task.test, subset, c);
            for (const ALPoint& p : r.curve) {
                csv.row({std::to_string(p.round), std::to_string(p.budget), to_string(p.strategy),
                         std::to_string(p.seed), acc(p.test_accuracy)});
                area[to_string(st)] += p.test_accuracy / static_cast<double>(s.seeds.size());
            }
        }
    }
    sum.files = {"al.csv"};
    sum.metrics["curve_area"] = area;
    log << "AL curves written\n";
}

CostProfile cost_profile(const Config& cfg, const Settings& s) {
    const auto c = cfg.get_real_list("cost.c");
    const auto sv = cfg.get_real_list("cost.s");
    CostProfile p;
    if (!c.empty() || !sv.empty()) {
        p.c = c;
        p.s = sv;
    } else if (const std::string path = cfg.get_text("cost.profile"); !path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read cost profile " + path);
        p = cost_profile_from_json(json::parse(in));
    } else {
        UnitCosts units{cfg.get_real("cost.time_per_mac"), cfg.get_real("cost.time_per_byte")};
        const BlockNetwork shape = BlockNetwork::build(s.desk.dim, s.desk.blocks, s.desk.classes, 0);
        p = as_config_error("cost.time_per_mac", [&] { return profile_from_network(shape, units); });
    }
    as_config_error("cost.c", [&] {
        p.validate();
        return 0;
    });
    return p;
}

void cmd_cost(const Config& cfg, const Settings& s, const fs::path& out, Summary& sum, std::ostream& log) {
    const CostProfile p = cost_profile(cfg, s);
    const std::size_t width = cfg.get_size("cost.width");
    if (width > p.layers()) throw ConfigError("cost.width exceeds the layer count");
    std::vector<SweepRow> rows;
    if (width == 0) {
        const double base = baseline_time(p);
        for (std::size_t a = 1; a <= p.layers(); ++a) {
            for (std::size_t b = a; b <= p.layers(); ++b) {
                const double total = total_time(p, {a, b});
                rows.push_back({{a, b}, total, base, total - base});
            }
        }
    } else {
        rows = sweep_ranges(p, width).rows;
    }
    CsvWriter csv(out, "cost.csv");
    std::size_t arg = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const SweepRow& r = rows[i];
        csv.row({std::to_string(r.range.l_start), std::to_string(r.range.l_end), num(r.total),
                 num(r.baseline), num(r.added)});
        if (r.added < rows[arg].added) arg = i;
    }
    std::ofstream(out / "cost_profile.json", std::ios::binary) << to_json(p).dump() << '\n';
    sum.files = {"cost.csv", "cost_profile.json"};
    sum.metrics = {{"baseline", baseline_time(p)},
                   {"argmin_range", {rows[arg].range.l_start, rows[arg].range.l_end}},
                   {"argmin_added", rows[arg].added}};
    log << rows.size() << " ranges, cheapest [" << rows[arg].range.l_start << ", "
        << rows[arg].range.l_end << "]\n";
}

void cmd_gap(const Config& cfg, const Settings& s, const fs::path& out, Summary& sum, std::ostream& log) {
    GapExperimentConfig g;
    g.subset_sizes.clear();
    for (std::int64_t v : cfg.get_int_list("gap.sizes")) {
        if (v < 0) throw ConfigError("config key 'gap.sizes': sizes must be >= 0");
        g.subset_sizes.push_back(static_cast<std::size_t>(v));
    }
    g.delta = cfg.get_real("gap.delta");
    g.m = cfg.get_size("gap.m");
    g.seeds = s.seeds;
    g.train = s.train;
    g.cv_k = s.folds;
    const std::string sel = cfg.get_text("gap.selection");
    if (sel == "greedy") {
        g.selection = GapSelection::greedy;
    } else if (sel == "window") {
        g.selection = GapSelection::window;
    } else {
        throw ConfigError("config key 'gap.selection': expected greedy or window, got '" + sel + "'");
    }
    as_config_error("gap", [&] {
        g.validate();
        return 0;
    });
    const std::size_t pool_n = cfg.get_size("gap.pool_n");
    if (g.m > pool_n) throw ConfigError("gap.m exceeds gap.pool_n");
    for (std::size_t size : g.subset_sizes) {
        if (size > s.desk.blocks) throw ConfigError("gap.sizes entry exceeds model.blocks");
    }
    const DeskSource src = load_source(s, log);
    const ShiftTask task = load_target(s, src, s.seeds.front(), pool_n);
    const auto records = gap_experiment(src.pretrained, task.train, task.test, g);
    CsvWriter csv(out, "gap.csv");
    for (const GapRecord& r : records) {
        csv.row({std::to_string(r.r_prime), num(r.delta), std::to_string(r.m), std::to_string(r.seed),
                 acc(r.train_accuracy), acc(r.test_accuracy), acc(r.gap)});
    }
    const auto rows = summarize_gap(records);
    const double rho = gap_trend(rows);
    sum.files = {"gap.csv"};
    sum.metrics["spearman_sqrt_r_prime_gap"] = std::isnan(rho) ? json(nullptr) : json(rho);
    for (const auto& r : rows) {
        sum.metrics["mean_gap"][std::to_string(r.subset_size)] = r.mean_gap;
    }
    log << "gap trend spearman " << (std::isnan(rho) ? std::string("nan") : acc(rho)) << '\n';
}

// --------------------------------------------------------------- report

struct CsvTable {
    std::string header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const {
        std::stringstream ss(header);
        std::string cell;
        std::size_t i = 0;
        while (std::getline(ss, cell, ',')) {
            if (cell == name) return i;
            ++i;
        }
        throw std::runtime_error("column " + name + " missing");
    }
};

CsvTable read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("report input " + path.string() + " does not exist");
    CsvTable t;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (t.header.empty()) {
            t.header = line;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        t.rows.push_back(std::move(cells));
    }
    return t;
}

json plot_series(const std::vector<fs::path>& inputs) {
    json series = json::array();
    std::map<std::string, CsvTable> by_schema;
    for (const fs::path& p : inputs) by_schema[read_csv(p).header] = read_csv(p);

    const auto find = [&](const std::string& file) -> const CsvTable* {
        const auto it = by_schema.find(schema_header(file));
        return it == by_schema.end() ? nullptr : &it->second;
    };
    const CsvTable* profile = find("profile.csv");
    const CsvTable* cost = find("cost.csv");
    const CsvTable* al = find("al.csv");
    const CsvTable* gap = find("gap.csv");

    if (profile) {
        std::map<int, json> groups;
        const auto g = profile->column("group_size"), a = profile->column("l_start"),
                   b = profile->column("l_end"), m = profile->column("mean_acc"),
                   sd = profile->column("std_acc");
        for (const auto& r : profile->rows) {
            groups[std::stoi(r[g])].push_back({{"l_start", std::stoi(r[a])},
                                               {"l_end", std::stoi(r[b])},
                                               {"mean", std::stod(r[m])},
                                               {"std", std::stod(r[sd])}});
        }
        for (auto& [size, points] : groups) {
            series.push_back({{"figure", "finetuning_profile"}, {"group_size", size}, {"points", points}});
        }
    }
    if (cost) {
        const auto a = cost->column("l_start"), b = cost->column("l_end"), add = cost->column("added");
        json points = json::array();
        for (const auto& r : cost->rows) {
            json pt = {{"l_start", std::stoi(r[a])}, {"l_end", std::stoi(r[b])}, {"added", std::stod(r[add])}};
            if (profile) {
                const auto pa = profile->column("l_start"), pb = profile->column("l_end"),
                           pm = profile->column("mean_acc");
                for (const auto& pr : profile->rows) {
                    if (pr[pa] == r[a] && pr[pb] == r[b]) pt["accuracy"] = std::stod(pr[pm]);
                }
            }
            points.push_back(pt);
        }
        series.push_back({{"figure", profile ? "accuracy_vs_added_cost" : "added_cost"}, {"points", points}});
    }
    if (al) {
        const auto bud = al->column("budget"), st = al->column("strategy"), ac = al->column("test_acc");
        std::map<std::string, std::map<long, std::pair<double, int>>> curves;
        for (const auto& r : al->rows) {
            auto& cell = curves[r[st]][std::stol(r[bud])];
            cell.first += std::stod(r[ac]);
            ++cell.second;
        }
        for (const auto& [strategy, pts] : curves) {
            json points = json::array();
            for (const auto& [budget, v] : pts) {
                points.push_back({{"budget", budget}, {"mean_acc", v.first / v.second}});
            }
            series.push_back({{"figure", "al_curve"}, {"strategy", strategy}, {"points", points}});
        }
    }
    if (gap) {
        const auto rp = gap->column("r_prime"), gp = gap->column("gap");
        std::map<long, std::pair<double, int>> cells;
        for (const auto& r : gap->rows) {
            auto& c = cells[std::stol(r[rp])];
            c.first += std::stod(r[gp]);
            ++c.second;
        }
        json points = json::array();
        for (const auto& [r, v] : cells) {
            points.push_back({{"r_prime", r},
                              {"sqrt_r_prime", std::sqrt(static_cast<double>(r))},
                              {"mean_gap", v.first / v.second}});
        }
        series.push_back({{"figure", "gap_vs_r_prime"}, {"points", points}});
    }
    return series;
}

void cmd_report(const Config& cfg, const RunOptions& opts, const fs::path& out, Summary& sum,
                std::ostream& log) {
    std::vector<fs::path> inputs(opts.inputs.begin(), opts.inputs.end());
    if (inputs.empty()) {
        std::stringstream ss(cfg.get_text("report.inputs"));
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) inputs.emplace_back(item);
        }
    }
    const json series = plot_series(inputs);
    std::ofstream(out / "plot_data.json", std::ios::binary) << json{{"series", series}}.dump(2) << '\n';
    sum.files = {"plot_data.json"};
    sum.metrics = {{"series", series.size()}};
    log << series.size() << " plot series\n";
}

}  // namespace

int run_command(const RunOptions& opts, std::ostream& log, std::ostream& err) {
    try {
        if (std::find(subcommands().begin(), subcommands().end(), opts.command) == subcommands().end()) {
            throw ConfigError("unknown subcommand '" + opts.command + "'");
        }
        Config cfg = opts.config_path ? Config::load(*opts.config_path) : Config();
        for (const std::string& kv : opts.overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        const Settings s = resolve(cfg);
        fs::create_directories(opts.out_dir);
        Summary sum;
        const std::string& c = opts.command;
        if (c == "pretrain") cmd_pretrain(s, opts.out_dir, sum, log);
        else if (c == "profile") cmd_profile(cfg, s, opts, opts.out_dir, sum, log);
        else if (c == "greedy") cmd_greedy(cfg, s, opts, opts.out_dir, sum, log);
        else if (c == "subtune") cmd_subtune(cfg, s, opts.out_dir, sum, log);
        else if (c == "siamese") cmd_siamese(cfg, s, opts.out_dir, sum, log);
        else if (c == "prune") cmd_prune(cfg, s, opts.out_dir, sum, log);
        else if (c == "al") cmd_al(cfg, s, opts.out_dir, sum, log);
        else if (c == "cost") cmd_cost(cfg, s, opts.out_dir, sum, log);
        else if (c == "gap") cmd_gap(cfg, s, opts.out_dir, sum, log);
        else cmd_report(cfg, opts, opts.out_dir, sum, log);

        json seeds = json::array();
        for (std::uint64_t v : s.seeds) seeds.push_back(v);
        const json summary = {{"command", c},
                              {"run_id", c + "-" + cfg.hash().substr(0, 12)},
                              {"config_hash", cfg.hash()},
                              {"seeds", seeds},
                              {"files", sum.files},
                              {"metrics", sum.metrics}};
        std::ofstream(opts.out_dir / "summary.json", std::ios::binary) << summary.dump(2) << '\n';
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntimeError;
    }
}

int main_entry(int argc, const char* const* argv) {
    CLI::App app{"subtune: selective-layer finetuning experiments"};
    app.require_subcommand(1);
    RunOptions opts;
    std::string config, out = "subtune-out";
    std::vector<std::string> sets;
    std::size_t group = 0;
    std::string lookup;
    std::vector<std::string> inputs;
    bool dump_schema = false;
    app.add_flag("--schema", dump_schema, "print every config key with its default and exit");
    const std::map<std::string, std::string> about{
        {"pretrain", "train the source network and report its accuracy"},
        {"profile", "accuracy of every window of g consecutive blocks"},
        {"greedy", "greedy block selection by cross-validation"},
        {"subtune", "tune a fixed block subset"},
        {"siamese", "compare linear probe, subtune and siamese heads"},
        {"prune", "prune the tuned blocks, then tune them"},
        {"al", "margin vs random active learning curves"},
        {"cost", "fork/merge inference cost of tuned ranges"},
        {"gap", "generalization gap against tuned parameter count"},
        {"report", "merge result CSVs into plot data"},
    };
    for (const std::string& name : subcommands()) {
        CLI::App* sub = app.add_subcommand(name, about.at(name));
        sub->add_option("-c,--config", config, "config file (flat key = value)");
        sub->add_option("-o,--out", out, "output directory")->capture_default_str();
        sub->add_option("--set", sets, "override a config key: key=value");
        if (name == "profile") sub->add_option("--group", group, "only this window size");
        if (name == "greedy") sub->add_option("--lookup", lookup, "score table instead of training");
        if (name == "report") sub->add_option("inputs", inputs, "CSV files to merge");
    }
    app.require_subcommand(0, 1);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }
    if (dump_schema) {
        for (const KeySpec& k : config_schema()) {
            std::cout << k.key << " = " << k.default_value << "    # " << k.doc << '\n';
        }
        return kExitOk;
    }
    if (app.get_subcommands().empty()) {
        std::cerr << app.help();
        return kExitConfigError;
    }
    opts.command = app.get_subcommands().front()->get_name();
    if (!config.empty()) opts.config_path = config;
    opts.overrides = sets;
    opts.out_dir = out;
    if (group > 0) opts.group = group;
    if (!lookup.empty()) opts.lookup = lookup;
    opts.inputs = inputs;
    return run_command(opts, std::cout, std::cerr);
}

std::string smoke_config_text() {
    return "run.seeds = 1,2\n"
           "data.dim = 8\n"
           "data.classes = 3\n"
           "data.warp_depth = 2\n"
           "data.source_n = 300\n"
           "data.train_n = 30\n"
           "data.test_n = 120\n"
           "model.blocks = 3\n"
           "pretrain.lr = 0.01\n"
           "pretrain.epochs = 8\n"
           "train.lr = 0.01\n"
           "train.epochs = 8\n"
           "eval.folds = 3\n"
           "profile.groups = 1,2\n"
           "subtune.blocks = 1,2\n"
           "siamese.blocks = 3\n"
           "prune.blocks = 1\n"
           "al.pool_n = 120\n"
           "al.initial = 10\n"
           "al.budgets = 20,30\n"
           "gap.sizes = 0,1,3\n"
           "gap.m = 30\n"
           "gap.pool_n = 60\n"
           "cost.c = 2,3,1,4\n"
           "cost.s = 1,2,2,1\n";
}

int run_smoke(const std::string& command, const fs::path& dir) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    const fs::path cfg = dir / "smoke.cfg";
    std::ofstream(cfg) << smoke_config_text();
    std::ostringstream log, err;
    RunOptions opts;
    opts.config_path = cfg.string();
    opts.out_dir = dir;
    if (command == "report") {
        for (const char* dep : {"cost", "profile"}) {
            opts.command = dep;
            if (const int code = run_command(opts, log, err); code != 0) return code;
        }
        opts.inputs = {(dir / "profile.csv").string(), (dir / "cost.csv").string()};
    }
    opts.command = command;
    return run_command(opts, log, err);
}

std::vector<std::string> determinism_commands() { return subcommands(); }

}  // namespace subtune::harness
