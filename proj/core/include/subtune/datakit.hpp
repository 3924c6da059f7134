#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "subtune/tensor.hpp"

namespace subtune {

struct Dataset {
    Tensor2 x;  // n x d
    std::vector<int> y;
    std::size_t classes = 0;
    std::string name;

    std::size_t size() const noexcept { return y.size(); }
    std::size_t width() const noexcept { return x.cols(); }
    bool empty() const noexcept { return y.empty(); }

    /// Rows `indices`, in order.
    Dataset subset(std::span<const std::size_t> indices) const;
    std::vector<std::size_t> class_counts() const;
    /// Throws if labels fall outside [0, classes) or shapes disagree.
    void validate() const;
};

/// Concatenation of two datasets with the same width and class count.
Dataset concat(const Dataset& a, const Dataset& b);

/// Seeded synthetic classification task: class means on the unit sphere,
/// isotropic noise, then a fixed stack of random dense+tanh maps. The task
/// geometry (means, warp) depends only on the construction seed; samples are
/// drawn from independent streams, so source and target sets can share a task.
class TaskGenerator {
public:
    static constexpr double kNoiseScale = 0.3;

    TaskGenerator(std::size_t dim, std::size_t classes, std::size_t warp_depth,
                  std::uint64_t seed, double warp_gain = 1.0);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t classes() const noexcept { return classes_; }

    /// n samples with balanced labels in random order, from stream `stream`.
    Dataset sample(std::size_t n, std::uint64_t stream, std::string name = "source") const;
    /// Warped image of an unwarped point.
    std::vector<double> warp(std::span<const double> z) const;

private:
    struct WarpLayer {
        Tensor2 weight;
        std::vector<double> bias;
    };
    std::size_t dim_;
    std::size_t classes_;
    Tensor2 means_;
    std::vector<WarpLayer> warp_;
};

/// d >= 2, C >= 2. Deterministic per seed.
Dataset gen_source_task(std::size_t dim, std::size_t classes, std::size_t n,
                        std::size_t warp_depth, std::uint64_t seed);

enum class ShiftKind { gaussian_noise, impulse, smooth, quantize, label_permute };

std::string to_string(ShiftKind kind);
ShiftKind shift_kind_from_string(const std::string& s);
inline constexpr ShiftKind kAllShiftKinds[] = {ShiftKind::gaussian_noise, ShiftKind::impulse,
                                               ShiftKind::smooth, ShiftKind::quantize,
                                               ShiftKind::label_permute};

struct ShiftSpec {
    ShiftKind kind = ShiftKind::gaussian_noise;
    int severity = 5;  // 1..5
    std::uint64_t seed = 0;
    /// label_permute only: explicit class mapping old -> new. When empty, one
    /// is drawn from the seed.
    std::vector<int> permutation;

    void validate() const;
};

/// Output values are clamped to this range after every corruption.
inline constexpr double kCorruptClamp = 3.0;

/// Input corruption of one sample. Deterministic in (spec.seed, sample_index).
/// label_permute leaves inputs untouched.
std::vector<double> corrupt(std::span<const double> x, const ShiftSpec& spec,
                            std::uint64_t sample_index);

/// Class mapping used by label_permute for `classes` classes.
std::vector<int> label_permutation(const ShiftSpec& spec, std::size_t classes);

struct ShiftSplit {
    /// Explicit train size; 0 means use train_fraction.
    std::size_t train_n = 0;
    double train_fraction = 0.1;
};

struct ShiftTask {
    Dataset train;
    Dataset test;
};

/// Corrupts every sample (or relabels), then splits into a small stratified
/// train set and the remaining test set.
ShiftTask make_shift(const Dataset& source, const ShiftSpec& spec, const ShiftSplit& split = {});

/// Index selection behind `subsample`.
std::vector<std::size_t> subsample_indices(const std::vector<int>& labels, std::size_t classes,
                                           std::size_t m, bool stratified, std::uint64_t seed);
/// m <= n. Stratified draws keep class counts proportional within +-1.
Dataset subsample(const Dataset& ds, std::size_t m, bool stratified, std::uint64_t seed);

/// CSV parse error carrying the 1-based line number.
class CsvError : public std::runtime_error {
public:
    CsvError(const std::string& what, std::size_t line)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Header row required. Feature columns keep file order; `classes` is
/// max(label) + 1.
Dataset load_csv(const std::filesystem::path& path, const std::string& label_column);
void save_csv(const Dataset& ds, const std::filesystem::path& path,
              const std::string& label_column = "label");

}  // namespace subtune
