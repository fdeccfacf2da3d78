#pragma once

#include "depbounds/core_types.hpp"
#include "depbounds/moments.hpp"
#include "depbounds/subvector_test.hpp"

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace depbounds {

struct Evaluation {
    double r = 0.0;
    double statistic = 0.0;
    double critical_value = 0.0;
    bool feasible() const { return statistic <= critical_value; }
    // V(r) = T_n(r) - gamma(r); feasible iff V <= 0.
    double violation() const { return statistic - critical_value; }
};

using Evaluator = std::function<Evaluation(double r)>;

class EvaluationCache {
public:
    EvaluationCache() = default;
    EvaluationCache(const EvaluationCache& other);
    EvaluationCache& operator=(const EvaluationCache& other);

    std::optional<Evaluation> find(double r) const;
    Evaluation get(double r, const Evaluator& eval);
    void insert(const Evaluation& e);
    void merge(const EvaluationCache& other);
    std::size_t size() const;
    std::vector<Evaluation> log() const;      // insertion order
    std::vector<Evaluation> sorted() const;   // by r

private:
    mutable std::mutex mutex_;
    std::map<double, Evaluation> map_;
    std::vector<double> order_;
};

enum class SearchMode { Auto, Single, Scan };
enum class RootFinder { Binary, Interpolation, Grid, Eam };
enum class SetStatus { Feasible, Misspecified };

std::string to_string(SearchMode m);
std::string to_string(RootFinder f);
std::string to_string(SetStatus s);
SearchMode parse_search_mode(const std::string& s);
RootFinder parse_root_finder(const std::string& s);

struct InitialSearch {
    bool misspecified = true;
    std::vector<double> feasible;                  // feasible grid points
    std::vector<std::pair<double, double>> clusters;  // first/last grid point of each feasible run
};

// Equispaced grid of n_init points over [lo, hi]. Single mode keeps only the
// evaluations up to the first feasible point, whatever the thread count.
InitialSearch find_initial_feasible(const Evaluator& eval, EvaluationCache& cache, double lo, double hi, int n_init,
                                    SearchMode mode, int threads = 1);

struct BoundResult {
    double bound = 0.0;
    bool at_boundary = false;
    int evaluations = 0;
};

// Bisection on an explicit bracket; throws BracketError unless exactly one end is feasible.
BoundResult bisect_bracket(const Evaluator& eval, EvaluationCache& cache, double a, double b, double tol);

// Bracket: the nearest cached infeasible point beyond feasible_r in direction
// dir, else the box edge (evaluated explicitly).
BoundResult binary_search_bound(const Evaluator& eval, EvaluationCache& cache, double feasible_r, int dir, double tol,
                                double lo, double hi);
BoundResult interpolation_search_bound(const Evaluator& eval, EvaluationCache& cache, double feasible_r, int dir,
                                       double tol, double lo, double hi);

struct SetDiagnostics {
    int evaluations = 0;
    bool lower_at_boundary = false;
    bool upper_at_boundary = false;
    std::vector<std::string> notes;
};

struct IdentifiedSet {
    std::vector<Interval> intervals;
    SetStatus status = SetStatus::Misspecified;
    std::size_t k = 0;
    double t = 0.0;
    double alpha = 0.05;
    std::vector<Evaluation> cache;   // insertion order
    SetDiagnostics diagnostics;

    bool contains(double v) const;
    double lower() const;   // hull
    double upper() const;
};

IdentifiedSet grid_search(const Evaluator& eval, double lo, double hi, double step, int threads = 1);

struct InversionConfig {
    SearchMode mode = SearchMode::Auto;
    RootFinder root_finder = RootFinder::Binary;
    int n_init = 100;
    std::optional<double> tol;        // default 0.01 * (hi - lo), at least 1e-3
    std::optional<double> grid_step;  // grid root finder; default tol
    int threads = 1;

    double tolerance(double lo, double hi) const;
};

// Initial search then endpoint searches on an arbitrary evaluator. Auto mode behaves as Single here.
IdentifiedSet invert(const Evaluator& eval, double lo, double hi, const InversionConfig& cfg);

// Called once per evaluated r, possibly from several threads at once.
using OutcomeObserver = std::function<void(const TestOutcome&)>;

IdentifiedSet estimate_interval(const MomentSystem& sys, const TestConfig& test, std::size_t k,
                                const InversionConfig& cfg, const OutcomeObserver& observer = {});

std::vector<Interval> merge_intervals(std::vector<Interval> v);

}  // namespace depbounds
