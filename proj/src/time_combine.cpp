#include "depbounds/time_combine.hpp"

#include "depbounds/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace depbounds {

std::string to_string(TimeRule rule)
{
    switch (rule) {
    case TimeRule::Intersection: return "intersect";
    case TimeRule::MajorityVote: return "majority";
    case TimeRule::WeightedIntersection: return "weighted";
    }
    return "?";
}

TimeRule parse_time_rule(const std::string& s)
{
    if (s == "intersect" || s == "intersection") return TimeRule::Intersection;
    if (s == "majority") return TimeRule::MajorityVote;
    if (s == "weighted") return TimeRule::WeightedIntersection;
    throw std::invalid_argument("unknown combination rule '" + s + "'");
}

void TimeGrid::validate() const
{
    if (times.empty()) throw std::invalid_argument("time grid is empty");
    for (std::size_t a = 1; a < times.size(); ++a) {
        if (!(times[a - 1] < times[a])) throw std::invalid_argument("time grid must be strictly increasing");
    }
    if (!(threshold >= 0.0 && threshold < 1.0)) throw std::invalid_argument("vote threshold must lie in [0, 1)");
}

std::vector<double> TimeGrid::levels(double alpha) const
{
    const std::size_t A = times.size();
    switch (rule) {
    case TimeRule::Intersection: return std::vector<double>(A, alpha / static_cast<double>(A));
    case TimeRule::MajorityVote: return std::vector<double>(A, alpha / 2.0);
    case TimeRule::WeightedIntersection: return weighted_level_schedule(alpha, A);
    }
    return {};
}

std::vector<double> weighted_level_schedule(double alpha, std::size_t A)
{
    if (A < 1) throw std::invalid_argument("weighted schedule needs A >= 1");
    double h = 0.0;
    for (std::size_t a = 1; a <= A; ++a) h += 1.0 / static_cast<double>(a);
    std::vector<double> out(A);
    for (std::size_t a = 1; a <= A; ++a) out[a - 1] = alpha / static_cast<double>(a) / h;
    return out;
}

std::optional<Interval> intersect_intervals(const std::vector<Interval>& intervals)
{
    if (intervals.empty()) return std::nullopt;
    Interval out = intervals.front();
    for (const auto& iv : intervals) {
        out.lower = std::max(out.lower, iv.lower);
        out.upper = std::min(out.upper, iv.upper);
    }
    if (out.lower > out.upper) return std::nullopt;
    return out;
}

std::vector<Interval> majority_vote(const std::vector<std::vector<Interval>>& sets, double threshold)
{
    const double A = static_cast<double>(sets.size());
    if (sets.empty()) return {};
    // Closed intervals: at equal coordinates openings are processed before closings.
    struct Event {
        double x;
        int delta;
    };
    std::vector<Event> ev;
    for (const auto& s : sets) {
        for (const auto& iv : s) {
            ev.push_back({iv.lower, +1});
            ev.push_back({iv.upper, -1});
        }
    }
    std::sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) {
        return a.x < b.x || (a.x == b.x && a.delta > b.delta);
    });
    std::vector<Interval> out;
    int count = 0;
    bool inside = false;
    for (const auto& e : ev) {
        count += e.delta;
        bool now = static_cast<double>(count) > threshold * A;
        if (now && !inside) {
            out.push_back(Interval{e.x, e.x});
            inside = true;
        } else if (!now && inside) {
            out.back().upper = e.x;
            inside = false;
        }
    }
    return merge_intervals(out);
}

std::vector<Interval> intersect_sets(const std::vector<std::vector<Interval>>& sets)
{
    if (sets.empty()) return {};
    // Covered by all A inputs: count > A - 1.
    const double A = static_cast<double>(sets.size());
    return majority_vote(sets, (A - 1.0) / A + 1e-12 / A);
}

std::optional<Interval> majority_vote(const std::vector<Interval>& intervals, double threshold)
{
    std::vector<std::vector<Interval>> sets;
    for (const auto& iv : intervals) sets.push_back({iv});
    auto res = majority_vote(sets, threshold);
    if (res.empty()) return std::nullopt;
    return Interval{res.front().lower, res.back().upper};
}

CombinedResult combine_over_times(const SystemFactory& factory, const TestConfig& test, std::size_t k,
                                  const TimeGrid& grid, const InversionConfig& inv)
{
    grid.validate();
    test.validate();
    CombinedResult out;
    out.levels = grid.levels(test.alpha);
    out.per_time.resize(grid.times.size());
    InversionConfig inner = inv;
    const std::size_t A = grid.times.size();
    int outer = std::min<int>(resolve_threads(inv.threads), static_cast<int>(A));
    inner.threads = std::max(1, resolve_threads(inv.threads) / std::max(1, outer));
    parallel_for(A, outer, [&](std::size_t a) {
        MomentSystem sys = factory(grid.times[a]);
        TestConfig cfg = test;
        cfg.alpha = out.levels[a];
        out.per_time[a] = estimate_interval(sys, cfg, k, inner);
    });

    std::vector<std::vector<Interval>> sets;
    for (std::size_t a = 0; a < A; ++a) {
        sets.push_back(out.per_time[a].intervals);
        if (out.per_time[a].status == SetStatus::Misspecified) {
            out.combined.diagnostics.notes.push_back("time " + std::to_string(grid.times[a]) +
                                                     " is misspecified and votes for nothing");
        }
    }
    out.combined.intervals = grid.rule == TimeRule::MajorityVote ? majority_vote(sets, grid.threshold)
                                                                 : intersect_sets(sets);
    out.combined.status = out.combined.intervals.empty() ? SetStatus::Misspecified : SetStatus::Feasible;
    out.combined.k = k;
    out.combined.t = grid.times.back();
    out.combined.alpha = test.alpha;
    for (const auto& s : out.per_time) {
        out.combined.diagnostics.evaluations += s.diagnostics.evaluations;
        out.combined.cache.insert(out.combined.cache.end(), s.cache.begin(), s.cache.end());
    }
    return out;
}

}  // namespace depbounds
