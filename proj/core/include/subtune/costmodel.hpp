#pragma once

#include <cstddef>
#include <vector>

#include <nlohmann/json.hpp>

#include "subtune/model.hpp"

namespace subtune {

/// Per-layer compute times c_1..c_N and weight-load times s_1..s_N in
/// abstract units. Out-of-range indices read as c_0 = 0 and s_{N+1} = 0.
struct CostProfile {
    std::vector<double> c;
    std::vector<double> s;

    std::size_t layers() const noexcept { return c.size(); }
    /// 1-based accessors with the boundary conventions applied.
    double compute(std::size_t i) const { return i == 0 || i > c.size() ? 0.0 : c[i - 1]; }
    double io(std::size_t i) const { return i == 0 || i > s.size() ? 0.0 : s[i - 1]; }

    void validate() const;
};

/// Layers [l_start, l_end] (1-based, inclusive) are duplicated per task.
struct TuneRange {
    std::size_t l_start = 1;
    std::size_t l_end = 1;

    void validate(const CostProfile& p) const;
};

/// Fork/merge inference time for two tasks sharing the backbone outside the
/// tuned range:
///   max(2 s_ls, c_{ls-1}) + sum_{ls..le} 2 max(c_i, s_{i+1})
///     + sum_{le+1..N-1} max(2 c_i, s_{i+1}) + 2 c_N
/// accumulated left to right.
double total_time(const CostProfile& p, const TuneRange& r);
/// Single-task pipeline: s_1 + sum_{1..N-1} max(c_i, s_{i+1}) + c_N.
double baseline_time(const CostProfile& p);
double added_cost(const CostProfile& p, const TuneRange& r);

/// Event-driven run of a compute unit and an IO unit with one-deep weight
/// prefetch. With fork=false the range is ignored and a single task runs.
double simulate_pipeline(const CostProfile& p, const TuneRange& r, bool fork);

struct SweepRow {
    TuneRange range;
    double total = 0.0;
    double baseline = 0.0;
    double added = 0.0;
};

struct RangeSweep {
    std::vector<SweepRow> rows;  // l_start ascending
    std::size_t argmin = 0;      // index into rows; ties to the earliest
};

/// All N - w + 1 ranges of width w.
RangeSweep sweep_ranges(const CostProfile& p, std::size_t width);

struct UnitCosts {
    double time_per_mac = 1.0;
    double time_per_byte = 1.0;
};

/// c_i = 2 d h MACs per sample times time_per_mac; s_i = 8 bytes per
/// parameter times time_per_byte.
CostProfile profile_from_network(const BlockNetwork& net, const UnitCosts& units);

nlohmann::json to_json(const CostProfile& p);
CostProfile cost_profile_from_json(const nlohmann::json& j);

}  // namespace subtune
