#include "subtune/datakit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "subtune/format.hpp"
#include "subtune/rng.hpp"

namespace subtune {

namespace {

constexpr double kNoiseSigma[5] = {0.04, 0.08, 0.12, 0.18, 0.26};
constexpr double kImpulseFraction[5] = {0.01, 0.03, 0.06, 0.1, 0.17};
constexpr std::size_t kSmoothWindow[5] = {2, 3, 4, 5, 6};

double clamp_value(double v) { return std::clamp(v, -kCorruptClamp, kCorruptClamp); }

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.x = x.gather_rows(indices);
    out.y.reserve(indices.size());
    for (std::size_t i : indices) out.y.push_back(y.at(i));
    out.classes = classes;
    out.name = name;
    return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(classes, 0);
    for (int label : y) ++counts.at(static_cast<std::size_t>(label));
    return counts;
}

void Dataset::validate() const {
    if (x.rows() != y.size()) {
        throw DimensionError("dataset '" + name + "' has " + std::to_string(x.rows()) +
                             " rows but " + std::to_string(y.size()) + " labels");
    }
    for (int label : y) {
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw std::out_of_range("dataset '" + name + "' label " + std::to_string(label) +
                                    " outside [0, " + std::to_string(classes) + ")");
        }
    }
}

Dataset concat(const Dataset& a, const Dataset& b) {
    if (a.width() != b.width() || a.classes != b.classes) {
        throw DimensionError("cannot concatenate datasets of different shape");
    }
    Dataset out;
    std::vector<double> values(a.x.values().begin(), a.x.values().end());
    values.insert(values.end(), b.x.values().begin(), b.x.values().end());
    out.x = Tensor2(a.size() + b.size(), a.width(), std::move(values));
    out.y = a.y;
    out.y.insert(out.y.end(), b.y.begin(), b.y.end());
    out.classes = a.classes;
    out.name = a.name;
    return out;
}

TaskGenerator::TaskGenerator(std::size_t dim, std::size_t classes, std::size_t warp_depth,
                             std::uint64_t seed, double warp_gain)
    : dim_(dim), classes_(classes), means_(classes, dim) {
    if (dim < 2) throw std::invalid_argument("task dimension must be >= 2");
    if (classes < 2) throw std::invalid_argument("task needs at least 2 classes");
    Rng rng(derive_seed(seed, 0x6d65616e));
    for (std::size_t c = 0; c < classes; ++c) {
        auto row = means_.row(c);
        double norm = 0.0;
        do {
            for (double& v : row) v = rng.normal();
            norm = std::sqrt(std::inner_product(row.begin(), row.end(), row.begin(), 0.0));
        } while (norm < 1e-12);
        for (double& v : row) v /= norm;
    }
    const double scale = warp_gain / std::sqrt(static_cast<double>(dim));
    for (std::size_t l = 0; l < warp_depth; ++l) {
        Rng wr(derive_seed(seed, 0x77617270 + l));
        WarpLayer layer{Tensor2(dim, dim), std::vector<double>(dim)};
        for (double& v : layer.weight.values()) v = scale * wr.normal();
        for (double& v : layer.bias) v = 0.2 * wr.normal();
        warp_.push_back(std::move(layer));
    }
}

std::vector<double> TaskGenerator::warp(std::span<const double> z) const {
    std::vector<double> cur(z.begin(), z.end());
    std::vector<double> next(dim_);
    for (const auto& layer : warp_) {
        for (std::size_t o = 0; o < dim_; ++o) {
            auto w = layer.weight.row(o);
            double acc = layer.bias[o];
            for (std::size_t i = 0; i < dim_; ++i) acc += w[i] * cur[i];
            next[o] = std::tanh(acc);
        }
        std::swap(cur, next);
    }
    return cur;
}

Dataset TaskGenerator::sample(std::size_t n, std::uint64_t stream, std::string name) const {
    Dataset ds;
    ds.classes = classes_;
    ds.name = std::move(name);
    ds.x = Tensor2(n, dim_);
    ds.y.resize(n);
    Rng rng(derive_seed(stream, 0x73616d70));
    for (std::size_t i = 0; i < n; ++i) ds.y[i] = static_cast<int>(i % classes_);
    rng.shuffle(ds.y);
    std::vector<double> z(dim_);
    for (std::size_t i = 0; i < n; ++i) {
        auto mean = means_.row(static_cast<std::size_t>(ds.y[i]));
        for (std::size_t j = 0; j < dim_; ++j) z[j] = mean[j] + kNoiseScale * rng.normal();
        const auto w = warp(z);
        std::copy(w.begin(), w.end(), ds.x.row(i).begin());
    }
    return ds;
}

Dataset gen_source_task(std::size_t dim, std::size_t classes, std::size_t n,
                        std::size_t warp_depth, std::uint64_t seed) {
    return TaskGenerator(dim, classes, warp_depth, seed).sample(n, seed);
}

std::string to_string(ShiftKind kind) {
    switch (kind) {
        case ShiftKind::gaussian_noise: return "gaussian_noise";
        case ShiftKind::impulse: return "impulse";
        case ShiftKind::smooth: return "smooth";
        case ShiftKind::quantize: return "quantize";
        case ShiftKind::label_permute: return "label_permute";
    }
    return "?";
}

ShiftKind shift_kind_from_string(const std::string& s) {
    for (ShiftKind k : kAllShiftKinds) {
        if (to_string(k) == s) return k;
    }
    throw std::invalid_argument("unknown shift kind '" + s + "'");
}

void ShiftSpec::validate() const {
    if (severity < 1 || severity > 5) {
        throw std::invalid_argument("shift severity " + std::to_string(severity) +
                                    " outside [1, 5]");
    }
}

std::vector<double> corrupt(std::span<const double> x, const ShiftSpec& spec,
                            std::uint64_t sample_index) {
    spec.validate();
    const auto sev = static_cast<std::size_t>(spec.severity - 1);
    std::vector<double> out(x.begin(), x.end());
    Rng rng(derive_seed(spec.seed, sample_index));
    switch (spec.kind) {
        case ShiftKind::gaussian_noise:
            for (double& v : out) v += kNoiseSigma[sev] * rng.normal();
            break;
        case ShiftKind::impulse:
            for (double& v : out) {
                const bool hit = rng.bernoulli(kImpulseFraction[sev]);
                const bool positive = rng.bernoulli(0.5);
                if (hit) v = positive ? 1.0 : -1.0;
            }
            break;
        case ShiftKind::smooth: {
            // centered moving average, truncated at the ends
            const std::size_t w = kSmoothWindow[sev];
            const std::size_t left = (w - 1) / 2;
            const std::size_t right = w - 1 - left;
            for (std::size_t j = 0; j < x.size(); ++j) {
                const std::size_t lo = j >= left ? j - left : 0;
                const std::size_t hi = std::min(x.size() - 1, j + right);
                double acc = 0.0;
                for (std::size_t k = lo; k <= hi; ++k) acc += x[k];
                out[j] = acc / static_cast<double>(hi - lo + 1);
            }
            break;
        }
        case ShiftKind::quantize: {
            // 2^(7 - severity) intervals on [-1, 1]; the grid contains 0
            const double step = 2.0 / std::ldexp(1.0, 7 - spec.severity);
            for (double& v : out) v = std::round(std::clamp(v, -1.0, 1.0) / step) * step;
            break;
        }
        case ShiftKind::label_permute:
            break;
    }
    for (double& v : out) v = clamp_value(v);
    return out;
}

std::vector<int> label_permutation(const ShiftSpec& spec, std::size_t classes) {
    if (!spec.permutation.empty()) {
        if (spec.permutation.size() != classes) {
            throw std::invalid_argument("label permutation has " +
                                        std::to_string(spec.permutation.size()) +
                                        " entries for " + std::to_string(classes) + " classes");
        }
        std::vector<int> sorted = spec.permutation;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t c = 0; c < classes; ++c) {
            if (sorted[c] != static_cast<int>(c)) {
                throw std::invalid_argument("label mapping is not a permutation");
            }
        }
        return spec.permutation;
    }
    // rotate min(C, 2 * severity) randomly chosen classes by one position
    const std::size_t k = std::min(classes, static_cast<std::size_t>(2 * spec.severity));
    const auto chosen = random_permutation(classes, derive_seed(spec.seed, 0x6c61626c));
    std::vector<int> perm(classes);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = 0; i < k; ++i) {
        perm[chosen[i]] = static_cast<int>(chosen[(i + 1) % k]);
    }
    return perm;
}

ShiftTask make_shift(const Dataset& source, const ShiftSpec& spec, const ShiftSplit& split) {
    spec.validate();
    Dataset shifted = source;
    shifted.name = source.name + "+" + to_string(spec.kind) + std::to_string(spec.severity);
    if (spec.kind == ShiftKind::label_permute) {
        const auto perm = label_permutation(spec, source.classes);
        for (int& label : shifted.y) label = perm[static_cast<std::size_t>(label)];
    } else {
        for (std::size_t i = 0; i < shifted.size(); ++i) {
            const auto row = corrupt(source.x.row(i), spec, i);
            std::copy(row.begin(), row.end(), shifted.x.row(i).begin());
        }
    }
    std::size_t train_n = split.train_n;
    if (train_n == 0) {
        train_n = static_cast<std::size_t>(
            std::llround(split.train_fraction * static_cast<double>(source.size())));
    }
    if (train_n > source.size()) {
        throw std::invalid_argument("shift split asks for " + std::to_string(train_n) +
                                    " training samples out of " + std::to_string(source.size()));
    }
    auto train_idx =
        subsample_indices(shifted.y, shifted.classes, train_n, true, derive_seed(spec.seed, 1));
    std::vector<char> in_train(shifted.size(), 0);
    for (std::size_t i : train_idx) in_train[i] = 1;
    std::vector<std::size_t> test_idx;
    for (std::size_t i = 0; i < shifted.size(); ++i) {
        if (!in_train[i]) test_idx.push_back(i);
    }
    ShiftTask task{shifted.subset(train_idx), shifted.subset(test_idx)};
    task.train.name = shifted.name + "/train";
    task.test.name = shifted.name + "/test";
    return task;
}

std::vector<std::size_t> subsample_indices(const std::vector<int>& labels, std::size_t classes,
                                           std::size_t m, bool stratified, std::uint64_t seed) {
    const std::size_t n = labels.size();
    if (m > n) {
        throw std::invalid_argument("cannot subsample " + std::to_string(m) + " of " +
                                    std::to_string(n) + " samples");
    }
    Rng rng(seed);
    if (!stratified) {
        auto perm = random_permutation(n, seed);
        perm.resize(m);
        return perm;
    }
    std::vector<std::vector<std::size_t>> by_class(classes);
    for (std::size_t i = 0; i < n; ++i) by_class.at(static_cast<std::size_t>(labels[i])).push_back(i);
    for (auto& members : by_class) rng.shuffle(members);

    // largest-remainder allocation of m across classes, capped by availability
    std::vector<std::size_t> quota(classes, 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        const double exact =
            static_cast<double>(m) * static_cast<double>(by_class[c].size()) / static_cast<double>(n);
        quota[c] = static_cast<std::size_t>(std::floor(exact));
        assigned += quota[c];
        remainders.emplace_back(exact - static_cast<double>(quota[c]), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < m; i = (i + 1) % classes) {
        const std::size_t c = remainders[i].second;
        if (quota[c] < by_class[c].size()) {
            ++quota[c];
            ++assigned;
        }
    }
    std::vector<std::size_t> picked;
    picked.reserve(m);
    for (std::size_t c = 0; c < classes; ++c) {
        picked.insert(picked.end(), by_class[c].begin(),
                      by_class[c].begin() + static_cast<std::ptrdiff_t>(quota[c]));
    }
    rng.shuffle(picked);
    return picked;
}

Dataset subsample(const Dataset& ds, std::size_t m, bool stratified, std::uint64_t seed) {
    const auto idx = subsample_indices(ds.y, ds.classes, m, stratified, seed);
    return ds.subset(idx);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        std::size_t start = cell.find_first_not_of(' ');
        cells.push_back(start == std::string::npos ? std::string{} : cell.substr(start));
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        header = split_csv_line(line);
        break;
    }
    if (header.empty()) throw CsvError("missing header row", line_no);
    const auto it = std::find(header.begin(), header.end(), label_column);
    if (it == header.end()) {
        throw CsvError("label column '" + label_column + "' not in header", line_no);
    }
    const auto label_at = static_cast<std::size_t>(it - header.begin());
    const std::size_t width = header.size() - 1;

    std::vector<double> values;
    std::vector<int> labels;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r" || line[0] == '#') continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw CsvError("expected " + std::to_string(header.size()) + " cells, found " +
                               std::to_string(cells.size()),
                           line_no);
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const std::string& cell = cells[c];
            if (c == label_at) {
                int label = 0;
                auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), label);
                if (ec != std::errc{} || p != cell.data() + cell.size() || label < 0) {
                    throw CsvError("label '" + cell + "' is not a non-negative integer", line_no);
                }
                labels.push_back(label);
            } else {
                double v = 0.0;
                auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
                if (ec != std::errc{} || p != cell.data() + cell.size() || !std::isfinite(v)) {
                    throw CsvError("cell '" + cell + "' in column '" + header[c] +
                                       "' is not numeric",
                                   line_no);
                }
                values.push_back(v);
            }
        }
    }
    Dataset ds;
    ds.x = Tensor2(labels.size(), width, std::move(values));
    ds.y = std::move(labels);
    ds.classes = ds.y.empty() ? 0 : static_cast<std::size_t>(*std::max_element(ds.y.begin(), ds.y.end())) + 1;
    ds.name = path.stem().string();
    return ds;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path,
              const std::string& label_column) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    for (std::size_t j = 0; j < ds.width(); ++j) out << 'x' << j << ',';
    out << label_column << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double v : ds.x.row(i)) out << format_double(v) << ',';
        out << ds.y[i] << '\n';
    }
}

}  // namespace subtune
