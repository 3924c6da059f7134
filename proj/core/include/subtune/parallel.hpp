#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

namespace subtune {

/// Worker cap: SUBTUNE_THREADS when set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
std::size_t worker_threads();

/// Runs fn(0..n-1), possibly concurrently. If several calls throw, the
/// exception from the lowest index is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Results land at their index, so the output order never depends on
/// scheduling.
template <typename T, typename F>
std::vector<T> parallel_map(std::size_t n, F&& fn) {
    std::vector<std::optional<T>> slots(n);
    parallel_for(n, [&](std::size_t i) { slots[i].emplace(fn(i)); });
    std::vector<T> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

}  // namespace subtune
