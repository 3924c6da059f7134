#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace subtune {

/// Mixes a parent seed with a stream tag. Used to derive independent child
/// seeds (per fold, per block, per sample) from one experiment seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept;

/// Seeded generator with platform-stable distributions. The standard
/// distribution objects are implementation-defined, so samples are drawn from
/// the raw mt19937_64 stream directly.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);
    double normal();
    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }
    template <typename T>
    void shuffle(std::vector<T>& items) {
        shuffle(std::span<T>(items));
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// 0..n-1 in a seeded random order.
std::vector<std::size_t> random_permutation(std::size_t n, std::uint64_t seed);

/// FNV-1a over raw bytes; stable digest for parameter and config hashing.
std::uint64_t fnv1a(std::span<const unsigned char> bytes,
                    std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;
std::uint64_t fnv1a_doubles(std::span<const double> values,
                            std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

}  // namespace subtune
