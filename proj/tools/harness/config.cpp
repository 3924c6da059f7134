#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <span>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "subtune/format.hpp"
#include "subtune/rng.hpp"

namespace subtune::harness {

const std::vector<KeySpec>& config_schema() {
    using T = ValueType;
    static const std::vector<KeySpec> schema = {
        {"run.seeds", T::int_list, "1,2,3,4,5", "trial seeds; every seed replaces train.seed"},
        {"data.dim", T::integer, "32", "input width d"},
        {"data.classes", T::integer, "10", "class count C"},
        {"data.warp_depth", T::integer, "4", "dense+tanh maps in the task warp"},
        {"data.warp_gain", T::real, "0.75", "weight scale of the warp maps"},
        {"data.source_n", T::integer, "20000", "pretraining samples"},
        {"data.task_seed", T::integer, "7", "seed of the task geometry"},
        {"data.shift", T::text, "impulse", "gaussian_noise|impulse|smooth|quantize|label_permute"},
        {"data.severity", T::integer, "1", "shift severity 1..5"},
        {"data.train_n", T::integer, "100", "target training examples m"},
        {"data.test_n", T::integer, "2000", "target test examples"},
        {"data.train_csv", T::text, "", "target training CSV (replaces the synthetic target)"},
        {"data.test_csv", T::text, "", "target test CSV"},
        {"data.label_column", T::text, "label", "label column name in CSV inputs"},
        {"model.blocks", T::integer, "8", "residual blocks N"},
        {"model.init_seed", T::integer, "11", "seed of the initial weights"},
        {"model.checkpoint", T::text, "", "pretrained checkpoint to load instead of pretraining"},
        {"pretrain.lr", T::real, "0.003", "pretraining learning rate"},
        {"pretrain.weight_decay", T::real, "0.01", "pretraining weight decay"},
        {"pretrain.batch_size", T::integer, "64", "pretraining batch size"},
        {"pretrain.epochs", T::integer, "30", "pretraining epochs"},
        {"pretrain.seed", T::integer, "3", "pretraining shuffle seed"},
        {"train.lr", T::real, "0.003", "peak learning rate (cosine annealed)"},
        {"train.weight_decay", T::real, "0.01", "AdamW decoupled weight decay"},
        {"train.batch_size", T::integer, "32", "mini-batch size"},
        {"train.epochs", T::integer, "50", "epochs per training run"},
        {"train.lr_grid", T::real_list, "", "`subtune` picks its rate from these by CV; empty uses train.lr"},
        {"eval.mode", T::text, "cv", "cv|holdout: how subsets are scored"},
        {"eval.folds", T::integer, "5", "k for k-fold cross-validation"},
        {"profile.groups", T::int_list, "1,2,3", "window sizes g"},
        {"profile.pairwise", T::boolean, "false", "also write the all-pairs profile"},
        {"greedy.epsilon", T::real, "0.002", "minimum accepted gain"},
        {"greedy.k_max", T::integer, "0", "maximum blocks, 0 for no limit"},
        {"greedy.budget", T::integer, "0", "parameter budget r', 0 for no limit"},
        {"greedy.init", T::text, "linear_probe", "linear_probe|zero: starting A_best"},
        {"greedy.lookup", T::text, "", "score table replacing training"},
        {"subtune.blocks", T::int_list, "7", "blocks tuned by `subtune`"},
        {"subtune.head", T::text, "subtune", "linear_probe|subtune|siamese"},
        {"siamese.blocks", T::int_list, "8", "blocks tuned in the live branch"},
        {"prune.scope", T::text, "local", "local|global"},
        {"prune.norm", T::text, "l1", "l1|l2"},
        {"prune.sparsity", T::real, "0.5", "fraction of channels removed"},
        {"prune.blocks", T::int_list, "7,8", "blocks pruned and tuned"},
        {"al.strategy", T::text, "both", "margin|random|both"},
        {"al.pool_n", T::integer, "5000", "unlabeled pool size"},
        {"al.initial", T::integer, "0", "initial random labels, 0 for the scaled default"},
        {"al.budgets", T::int_list, "", "label budgets, empty for the scaled default"},
        {"al.blocks", T::int_list, "1", "blocks tuned each round"},
        {"cost.c", T::real_list, "", "per-layer compute times"},
        {"cost.s", T::real_list, "", "per-layer IO times"},
        {"cost.profile", T::text, "", "CostProfile JSON file"},
        {"cost.width", T::integer, "0", "range width to sweep, 0 for every range"},
        {"cost.time_per_mac", T::real, "0.001", "compute units per MAC (network profiles)"},
        {"cost.time_per_byte", T::real, "0.0001", "IO units per byte (network profiles)"},
        {"gap.sizes", T::int_list, "0,1,2,4,8", "subset sizes"},
        {"gap.delta", T::real, "1.0", "norm-ball radius"},
        {"gap.m", T::integer, "100", "training examples per seed"},
        {"gap.pool_n", T::integer, "2000", "pool the m examples are drawn from"},
        {"gap.selection", T::text, "greedy", "greedy|window"},
        {"report.inputs", T::text, "", "comma-separated CSV paths for `report`"},
    };
    return schema;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1,
                               prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    if (trim(s).empty()) return out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

/// Canonical spelling of `raw`, or nullopt if it does not parse as `type`.
std::optional<std::string> canonical(const std::string& raw, ValueType type) {
    const std::string v = trim(raw);
    switch (type) {
        case ValueType::integer: {
            std::int64_t x = 0;
            if (!parse_number(v, x)) return std::nullopt;
            return std::to_string(x);
        }
        case ValueType::real: {
            double x = 0;
            if (!parse_number(v, x) || !std::isfinite(x)) return std::nullopt;
            return format_double(x);
        }
        case ValueType::boolean:
            if (v == "true" || v == "1" || v == "yes") return std::string("true");
            if (v == "false" || v == "0" || v == "no") return std::string("false");
            return std::nullopt;
        case ValueType::text:
            return v;
        case ValueType::int_list: {
            std::string out;
            for (const auto& item : split_list(v)) {
                std::int64_t x = 0;
                if (!parse_number(item, x)) return std::nullopt;
                out += (out.empty() ? "" : ",") + std::to_string(x);
            }
            return out;
        }
        case ValueType::real_list: {
            std::string out;
            for (const auto& item : split_list(v)) {
                double x = 0;
                if (!parse_number(item, x) || !std::isfinite(x)) return std::nullopt;
                out += (out.empty() ? "" : ",") + format_double(x);
            }
            return out;
        }
    }
    return std::nullopt;
}

const char* type_name(ValueType t) {
    switch (t) {
        case ValueType::integer: return "an integer";
        case ValueType::real: return "a number";
        case ValueType::text: return "text";
        case ValueType::boolean: return "true or false";
        case ValueType::int_list: return "a comma-separated integer list";
        case ValueType::real_list: return "a comma-separated number list";
    }
    return "?";
}

}  // namespace

std::string nearest_key(const std::string& key) {
    std::string best;
    std::size_t best_d = static_cast<std::size_t>(-1);
    for (const auto& s : config_schema()) {
        const std::size_t d = edit_distance(key, s.key);
        if (d < best_d) {
            best_d = d;
            best = s.key;
        }
    }
    return best;
}

Config::Config() {
    for (const auto& s : config_schema()) values_[s.key] = *canonical(s.default_value, s.type);
}

const KeySpec& Config::spec(const std::string& key) const {
    for (const auto& s : config_schema()) {
        if (s.key == key) return s;
    }
    throw ConfigError("unknown config key '" + key + "' (did you mean '" + nearest_key(key) +
                      "'?)");
}

void Config::set(const std::string& key, const std::string& value) {
    const KeySpec& s = spec(trim(key));
    const auto v = canonical(value, s.type);
    if (!v) {
        throw ConfigError("config key '" + s.key + "' expects " + type_name(s.type) + ", got '" +
                          trim(value) + "'");
    }
    values_[s.key] = *v;
}

Config Config::parse(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected 'key = value'");
        }
        try {
            cfg.set(line.substr(0, eq), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return cfg;
}

Config Config::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::int64_t Config::get_int(const std::string& key) const {
    (void)spec(key);
    return std::stoll(values_.at(key));
}

std::size_t Config::get_size(const std::string& key) const {
    const std::int64_t v = get_int(key);
    if (v < 0) throw ConfigError("config key '" + key + "' must be >= 0");
    return static_cast<std::size_t>(v);
}

double Config::get_real(const std::string& key) const {
    (void)spec(key);
    return std::stod(values_.at(key));
}

bool Config::get_bool(const std::string& key) const {
    (void)spec(key);
    return values_.at(key) == "true";
}

const std::string& Config::get_text(const std::string& key) const {
    (void)spec(key);
    return values_.at(key);
}

std::vector<std::int64_t> Config::get_int_list(const std::string& key) const {
    (void)spec(key);
    std::vector<std::int64_t> out;
    for (const auto& item : split_list(values_.at(key))) out.push_back(std::stoll(item));
    return out;
}

std::vector<double> Config::get_real_list(const std::string& key) const {
    (void)spec(key);
    std::vector<double> out;
    for (const auto& item : split_list(values_.at(key))) out.push_back(std::stod(item));
    return out;
}

std::string Config::normalized() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

std::string Config::hash() const {
    const std::string text = normalized();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(std::span<const unsigned char>(
                      reinterpret_cast<const unsigned char*>(text.data()), text.size()))));
    return buf;
}

}  // namespace subtune::harness
