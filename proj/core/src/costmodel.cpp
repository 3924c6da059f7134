#include "subtune/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <string>

namespace subtune {

void CostProfile::validate() const {
    if (c.size() != s.size()) throw std::invalid_argument("cost profile: c and s differ in length");
    if (c.empty()) throw std::invalid_argument("cost profile needs at least one layer");
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (!(c[i] >= 0.0) || !(s[i] >= 0.0) || !std::isfinite(c[i]) || !std::isfinite(s[i])) {
            throw std::invalid_argument("cost profile entry " + std::to_string(i + 1) +
                                        " must be finite and >= 0");
        }
    }
}

void TuneRange::validate(const CostProfile& p) const {
    if (l_start < 1 || l_start > l_end || l_end > p.layers()) {
        throw std::invalid_argument("tune range [" + std::to_string(l_start) + ", " +
                                    std::to_string(l_end) + "] invalid for " +
                                    std::to_string(p.layers()) + " layers");
    }
}

double total_time(const CostProfile& p, const TuneRange& r) {
    p.validate();
    r.validate(p);
    const std::size_t n = p.layers();
    double t = std::max(2.0 * p.io(r.l_start), p.compute(r.l_start - 1));
    for (std::size_t i = r.l_start; i <= r.l_end; ++i) {
        t += 2.0 * std::max(p.compute(i), p.io(i + 1));
    }
    for (std::size_t i = r.l_end + 1; i + 1 <= n; ++i) {
        t += std::max(2.0 * p.compute(i), p.io(i + 1));
    }
    t += 2.0 * p.compute(n);
    return t;
}

double baseline_time(const CostProfile& p) {
    p.validate();
    const std::size_t n = p.layers();
    double t = p.io(1);
    for (std::size_t i = 1; i + 1 <= n; ++i) t += std::max(p.compute(i), p.io(i + 1));
    t += p.compute(n);
    return t;
}

double added_cost(const CostProfile& p, const TuneRange& r) {
    return total_time(p, r) - baseline_time(p);
}

namespace {

/// One step of the pipeline: a compute job and the weight load that runs
/// alongside it (the prefetch for the next step).
struct Phase {
    double compute;
    double load;
};

std::vector<Phase> fork_phases(const CostProfile& p, const TuneRange& r) {
    const std::size_t n = p.layers();
    std::vector<Phase> phases;
    // Last shared layer computes while both copies of l_start load.
    phases.push_back({p.compute(r.l_start - 1), 2.0 * p.io(r.l_start)});
    // Forked layers: each copy computes and prefetches separately.
    for (std::size_t i = r.l_start; i <= r.l_end; ++i) {
        phases.push_back({2.0 * p.compute(i), 2.0 * p.io(i + 1)});
    }
    // Merged layers: both task batches go through one copy of the weights.
    for (std::size_t i = r.l_end + 1; i + 1 <= n; ++i) {
        phases.push_back({2.0 * p.compute(i), p.io(i + 1)});
    }
    phases.push_back({2.0 * p.compute(n), 0.0});
    return phases;
}

std::vector<Phase> single_phases(const CostProfile& p) {
    std::vector<Phase> phases;
    phases.push_back({0.0, p.io(1)});
    for (std::size_t i = 1; i <= p.layers(); ++i) phases.push_back({p.compute(i), p.io(i + 1)});
    return phases;
}

enum class Unit { compute, io };

struct Event {
    double time;
    std::size_t phase;
    Unit unit;
};

struct Later {
    bool operator()(const Event& a, const Event& b) const {
        if (a.time != b.time) return a.time > b.time;
        if (a.phase != b.phase) return a.phase > b.phase;
        return a.unit == Unit::io && b.unit == Unit::compute;
    }
};

/// Compute job k needs compute job k-1 finished and its weights (load k-1)
/// in memory. Load job k may only start once compute job k has started,
/// since the single prefetch buffer is busy until then.
double run(const std::vector<Phase>& phases) {
    std::priority_queue<Event, std::vector<Event>, Later> events;
    std::vector<bool> compute_done(phases.size(), false);
    std::vector<bool> load_done(phases.size(), false);
    std::size_t next = 0;  // next compute job to start
    double finish = 0.0;

    auto try_start = [&](double now) {
        if (next >= phases.size()) return;
        if (next > 0 && (!compute_done[next - 1] || !load_done[next - 1])) return;
        events.push({now + phases[next].compute, next, Unit::compute});
        events.push({now + phases[next].load, next, Unit::io});
        ++next;
    };

    try_start(0.0);
    while (!events.empty()) {
        const Event e = events.top();
        events.pop();
        finish = std::max(finish, e.time);
        (e.unit == Unit::compute ? compute_done : load_done)[e.phase] = true;
        try_start(e.time);
    }
    return finish;
}

}  // namespace

double simulate_pipeline(const CostProfile& p, const TuneRange& r, bool fork) {
    p.validate();
    if (!fork) return run(single_phases(p));
    r.validate(p);
    return run(fork_phases(p, r));
}

RangeSweep sweep_ranges(const CostProfile& p, std::size_t width) {
    p.validate();
    if (width < 1 || width > p.layers()) {
        throw std::invalid_argument("range width " + std::to_string(width) + " outside [1, " +
                                    std::to_string(p.layers()) + "]");
    }
    RangeSweep out;
    const double base = baseline_time(p);
    for (std::size_t start = 1; start + width - 1 <= p.layers(); ++start) {
        const TuneRange r{start, start + width - 1};
        const double total = total_time(p, r);
        out.rows.push_back({r, total, base, total - base});
        if (out.rows.back().added < out.rows[out.argmin].added) out.argmin = out.rows.size() - 1;
    }
    return out;
}

CostProfile profile_from_network(const BlockNetwork& net, const UnitCosts& units) {
    if (!(units.time_per_mac > 0.0) || !(units.time_per_byte > 0.0)) {
        throw std::invalid_argument("unit costs must be positive");
    }
    CostProfile p;
    for (const ResidualBlock& b : net.live().blocks) {
        const double macs = 2.0 * static_cast<double>(b.width() * b.hidden());
        const double bytes = 8.0 * static_cast<double>(b.param_count());
        p.c.push_back(macs * units.time_per_mac);
        p.s.push_back(bytes * units.time_per_byte);
    }
    return p;
}

nlohmann::json to_json(const CostProfile& p) { return {{"c", p.c}, {"s", p.s}}; }

CostProfile cost_profile_from_json(const nlohmann::json& j) {
    CostProfile p;
    p.c = j.at("c").get<std::vector<double>>();
    p.s = j.at("s").get<std::vector<double>>();
    p.validate();
    return p;
}

}  // namespace subtune
