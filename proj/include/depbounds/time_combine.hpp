#pragma once

#include "depbounds/core_types.hpp"
#include "depbounds/moments.hpp"
#include "depbounds/set_inversion.hpp"
#include "depbounds/subvector_test.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace depbounds {

enum class TimeRule { Intersection, MajorityVote, WeightedIntersection };

std::string to_string(TimeRule rule);
TimeRule parse_time_rule(const std::string& s);

struct TimeGrid {
    std::vector<double> times;
    TimeRule rule = TimeRule::Intersection;
    double threshold = 0.5;   // majority vote only

    // Per-time levels: alpha/A, alpha/2, or the weighted schedule.
    std::vector<double> levels(double alpha) const;
    void validate() const;
};

std::optional<Interval> intersect_intervals(const std::vector<Interval>& intervals);
// Each input is a union of disjoint intervals; an empty input votes for nothing.
std::vector<Interval> intersect_sets(const std::vector<std::vector<Interval>>& sets);

// Points covered by more than threshold * A of the inputs (sweep line).
std::vector<Interval> majority_vote(const std::vector<std::vector<Interval>>& sets, double threshold = 0.5);
std::optional<Interval> majority_vote(const std::vector<Interval>& intervals, double threshold = 0.5);

// alpha_a = (alpha / a) / (1 + 1/2 + ... + 1/A)
std::vector<double> weighted_level_schedule(double alpha, std::size_t A);

struct CombinedResult {
    IdentifiedSet combined;
    std::vector<IdentifiedSet> per_time;
    std::vector<double> levels;
};

using SystemFactory = std::function<MomentSystem(double t)>;

CombinedResult combine_over_times(const SystemFactory& factory, const TestConfig& test, std::size_t k,
                                  const TimeGrid& grid, const InversionConfig& inv);

}  // namespace depbounds
