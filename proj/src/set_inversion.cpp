#include "depbounds/set_inversion.hpp"

#include "depbounds/errors.hpp"
#include "depbounds/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace depbounds {

// ---------------------------------------------------------- EvaluationCache

EvaluationCache::EvaluationCache(const EvaluationCache& other)
{
    std::lock_guard<std::mutex> lock(other.mutex_);
    map_ = other.map_;
    order_ = other.order_;
}

EvaluationCache& EvaluationCache::operator=(const EvaluationCache& other)
{
    if (this == &other) return *this;
    std::scoped_lock lock(mutex_, other.mutex_);
    map_ = other.map_;
    order_ = other.order_;
    return *this;
}

std::optional<Evaluation> EvaluationCache::find(double r) const
{
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = map_.find(r);
    if (it == map_.end()) return std::nullopt;
    return it->second;
}

Evaluation EvaluationCache::get(double r, const Evaluator& eval)
{
    if (auto hit = find(r)) return *hit;
    Evaluation e = eval(r);
    e.r = r;
    insert(e);
    return e;
}

void EvaluationCache::insert(const Evaluation& e)
{
    std::lock_guard<std::mutex> lock(mutex_);
    auto [it, fresh] = map_.insert_or_assign(e.r, e);
    if (fresh) order_.push_back(e.r);
}

void EvaluationCache::merge(const EvaluationCache& other)
{
    for (const auto& e : other.log()) {
        if (!find(e.r)) insert(e);
    }
}

std::size_t EvaluationCache::size() const
{
    std::lock_guard<std::mutex> lock(mutex_);
    return map_.size();
}

std::vector<Evaluation> EvaluationCache::log() const
{
    std::lock_guard<std::mutex> lock(mutex_);
    std::vector<Evaluation> out;
    out.reserve(order_.size());
    for (double r : order_) out.push_back(map_.at(r));
    return out;
}

std::vector<Evaluation> EvaluationCache::sorted() const
{
    std::lock_guard<std::mutex> lock(mutex_);
    std::vector<Evaluation> out;
    out.reserve(map_.size());
    for (const auto& [r, e] : map_) out.push_back(e);
    return out;
}

// ------------------------------------------------------------------- Names

std::string to_string(SearchMode m)
{
    switch (m) {
    case SearchMode::Auto: return "auto";
    case SearchMode::Single: return "single";
    case SearchMode::Scan: return "scan";
    }
    return "?";
}

std::string to_string(RootFinder f)
{
    switch (f) {
    case RootFinder::Binary: return "binary";
    case RootFinder::Interpolation: return "interp";
    case RootFinder::Grid: return "grid";
    case RootFinder::Eam: return "eam";
    }
    return "?";
}

std::string to_string(SetStatus s)
{
    return s == SetStatus::Feasible ? "feasible" : "misspecified";
}

SearchMode parse_search_mode(const std::string& s)
{
    if (s == "auto") return SearchMode::Auto;
    if (s == "single") return SearchMode::Single;
    if (s == "scan") return SearchMode::Scan;
    throw std::invalid_argument("unknown search mode '" + s + "'");
}

RootFinder parse_root_finder(const std::string& s)
{
    if (s == "binary") return RootFinder::Binary;
    if (s == "interp" || s == "interpolation") return RootFinder::Interpolation;
    if (s == "grid") return RootFinder::Grid;
    if (s == "eam") return RootFinder::Eam;
    throw std::invalid_argument("unknown root finder '" + s + "'");
}

// ---------------------------------------------------------- IdentifiedSet

bool IdentifiedSet::contains(double v) const
{
    return std::any_of(intervals.begin(), intervals.end(), [&](const Interval& i) { return i.contains(v); });
}

double IdentifiedSet::lower() const
{
    return intervals.empty() ? std::numeric_limits<double>::quiet_NaN() : intervals.front().lower;
}

double IdentifiedSet::upper() const
{
    return intervals.empty() ? std::numeric_limits<double>::quiet_NaN() : intervals.back().upper;
}

std::vector<Interval> merge_intervals(std::vector<Interval> v)
{
    std::sort(v.begin(), v.end(), [](const Interval& a, const Interval& b) { return a.lower < b.lower; });
    std::vector<Interval> out;
    for (const auto& iv : v) {
        if (!out.empty() && iv.lower <= out.back().upper) {
            out.back().upper = std::max(out.back().upper, iv.upper);
        } else {
            out.push_back(iv);
        }
    }
    return out;
}

double InversionConfig::tolerance(double lo, double hi) const
{
    return tol ? *tol : std::max(0.01 * (hi - lo), 1e-3);
}

// ------------------------------------------------------------ Initial search

namespace {

std::vector<double> grid_points(double lo, double hi, int count)
{
    std::vector<double> g(static_cast<std::size_t>(count));
    if (count == 1) {
        g[0] = 0.5 * (lo + hi);
        return g;
    }
    for (int i = 0; i < count; ++i) g[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (count - 1);
    g.back() = hi;
    return g;
}

}  // namespace

InitialSearch find_initial_feasible(const Evaluator& eval, EvaluationCache& cache, double lo, double hi, int n_init,
                                    SearchMode mode, int threads)
{
    if (n_init < 1) throw std::invalid_argument("n_init must be at least 1");
    if (!(lo < hi)) throw std::invalid_argument("search box must have lo < hi");
    std::vector<double> grid = grid_points(lo, hi, n_init);
    InitialSearch out;

    if (mode == SearchMode::Scan) {
        std::vector<Evaluation> res(grid.size());
        parallel_for(grid.size(), threads, [&](std::size_t i) {
            auto hit = cache.find(grid[i]);
            res[i] = hit ? *hit : eval(grid[i]);
            res[i].r = grid[i];
        });
        bool in_run = false;
        for (const auto& e : res) {
            cache.insert(e);
            if (e.feasible()) {
                out.feasible.push_back(e.r);
                if (!in_run) out.clusters.emplace_back(e.r, e.r);
                out.clusters.back().second = e.r;
                in_run = true;
            } else {
                in_run = false;
            }
        }
    } else {
        const std::size_t batch = static_cast<std::size_t>(resolve_threads(threads));
        for (std::size_t start = 0; start < grid.size() && out.feasible.empty(); start += batch) {
            std::size_t len = std::min(batch, grid.size() - start);
            std::vector<Evaluation> res(len);
            parallel_for(len, threads, [&](std::size_t i) {
                double r = grid[start + i];
                auto hit = cache.find(r);
                res[i] = hit ? *hit : eval(r);
                res[i].r = r;
            });
            for (const auto& e : res) {
                cache.insert(e);
                if (e.feasible()) {
                    out.feasible.push_back(e.r);
                    out.clusters.emplace_back(e.r, e.r);
                    break;
                }
            }
        }
    }
    out.misspecified = out.feasible.empty();
    return out;
}

// ------------------------------------------------------------ Endpoint search

namespace {

struct Bracket {
    double feasible;
    double infeasible;
    bool found;   // infeasible end located
};

// Walks cached points beyond r0 in direction dir.
Bracket cached_bracket(const EvaluationCache& cache, double r0, int dir)
{
    auto all = cache.sorted();
    Bracket b{r0, r0, false};
    if (dir > 0) {
        for (const auto& e : all) {
            if (e.r <= r0) continue;
            if (e.feasible()) {
                b.feasible = e.r;
            } else {
                b.infeasible = e.r;
                b.found = true;
                break;
            }
        }
    } else {
        for (auto it = all.rbegin(); it != all.rend(); ++it) {
            if (it->r >= r0) continue;
            if (it->feasible()) {
                b.feasible = it->r;
            } else {
                b.infeasible = it->r;
                b.found = true;
                break;
            }
        }
    }
    return b;
}

// Establishes the bracket, evaluating the edge if needed. Returns false with
// res filled in when the edge itself is feasible.
bool open_bracket(const Evaluator& eval, EvaluationCache& cache, double r0, int dir, double lo, double hi,
                  Bracket& br, BoundResult& res)
{
    if (dir != 1 && dir != -1) throw std::invalid_argument("direction must be -1 or +1");
    Evaluation start = cache.get(r0, eval);
    if (!start.feasible()) throw BracketError("search must start from a feasible point");
    br = cached_bracket(cache, r0, dir);
    if (!br.found) {
        double edge = dir > 0 ? hi : lo;
        bool fresh = !cache.find(edge);
        Evaluation e = cache.get(edge, eval);
        if (fresh) ++res.evaluations;
        if (e.feasible()) {
            res.bound = edge;
            res.at_boundary = true;
            return false;
        }
        br.infeasible = edge;
        br.found = true;
    }
    return true;
}

BoundResult bisect(const Evaluator& eval, EvaluationCache& cache, double r_l, double r_u, double tol, BoundResult res)
{
    while (std::abs(r_u - r_l) >= tol) {
        double m = 0.5 * (r_l + r_u);
        if (m == r_l || m == r_u) break;
        bool fresh = !cache.find(m);
        Evaluation e = cache.get(m, eval);
        if (fresh) ++res.evaluations;
        if (e.feasible()) {
            r_l = m;
        } else {
            r_u = m;
        }
    }
    res.bound = r_l;
    return res;
}

}  // namespace

BoundResult bisect_bracket(const Evaluator& eval, EvaluationCache& cache, double a, double b, double tol)
{
    BoundResult res;
    for (double r : {a, b}) {
        if (!cache.find(r)) ++res.evaluations;
    }
    Evaluation ea = cache.get(a, eval);
    Evaluation eb = cache.get(b, eval);
    if (ea.feasible() == eb.feasible()) throw BracketError("bracket endpoints have the same feasibility");
    return ea.feasible() ? bisect(eval, cache, a, b, tol, res) : bisect(eval, cache, b, a, tol, res);
}

BoundResult binary_search_bound(const Evaluator& eval, EvaluationCache& cache, double feasible_r, int dir, double tol,
                                double lo, double hi)
{
    BoundResult res;
    Bracket br;
    if (!open_bracket(eval, cache, feasible_r, dir, lo, hi, br, res)) return res;
    return bisect(eval, cache, br.feasible, br.infeasible, tol, res);
}

BoundResult interpolation_search_bound(const Evaluator& eval, EvaluationCache& cache, double feasible_r, int dir,
                                       double tol, double lo, double hi)
{
    BoundResult res;
    Bracket br;
    if (!open_bracket(eval, cache, feasible_r, dir, lo, hi, br, res)) return res;
    double r_l = br.feasible, r_u = br.infeasible;
    double v_l = cache.find(r_l)->violation();
    double v_u = cache.find(r_u)->violation();
    int last_side = 0, same_side = 0;
    while (std::abs(r_u - r_l) >= tol) {
        double width = r_u - r_l;
        double sgn = width > 0 ? 1.0 : -1.0;
        double r_m = 0.5 * (r_l + r_u);
        bool secant = same_side < 2 && v_u != v_l && std::isfinite(v_u) && std::isfinite(v_l);
        if (secant) {
            double r_s = r_l - v_l * width / (v_u - v_l);
            double from_l = (r_s - r_l) * sgn;
            double from_u = (r_u - r_s) * sgn;
            if (from_l >= 0.0 && from_u > 0.0) {
                // Keep a proposal within half a tolerance of an end away from
                // that end, so the next evaluation can close the bracket.
                if (from_l < 0.5 * tol) {
                    r_s = r_l + sgn * 0.5 * tol;
                } else if (from_u < 0.5 * tol) {
                    r_s = r_u - sgn * 0.5 * tol;
                }
                r_m = r_s;
            }
        }
        if (r_m == r_l || r_m == r_u) break;
        bool fresh = !cache.find(r_m);
        Evaluation e = cache.get(r_m, eval);
        if (fresh) ++res.evaluations;
        int side;
        if (e.feasible()) {
            r_l = r_m;
            v_l = e.violation();
            side = -1;
        } else {
            r_u = r_m;
            v_u = e.violation();
            side = 1;
        }
        same_side = side == last_side ? same_side + 1 : 1;
        last_side = side;
    }
    res.bound = r_l;
    return res;
}

// ------------------------------------------------------------ Grid search

IdentifiedSet grid_search(const Evaluator& eval, double lo, double hi, double step, int threads)
{
    if (!(step > 0.0)) throw std::invalid_argument("grid step must be positive");
    if (!(lo <= hi)) throw std::invalid_argument("grid search needs lo <= hi");
    std::vector<double> pts;
    for (std::size_t i = 0;; ++i) {
        double r = lo + step * static_cast<double>(i);
        if (r > hi + 1e-9 * step) break;
        pts.push_back(std::min(r, hi));
    }
    std::vector<Evaluation> res(pts.size());
    parallel_for(pts.size(), threads, [&](std::size_t i) {
        res[i] = eval(pts[i]);
        res[i].r = pts[i];
    });
    IdentifiedSet out;
    bool in_run = false;
    for (const auto& e : res) {
        out.cache.push_back(e);
        if (e.feasible()) {
            if (!in_run) out.intervals.push_back(Interval{e.r, e.r});
            out.intervals.back().upper = e.r;
            in_run = true;
        } else {
            in_run = false;
        }
    }
    out.status = out.intervals.empty() ? SetStatus::Misspecified : SetStatus::Feasible;
    out.diagnostics.evaluations = static_cast<int>(res.size());
    if (!out.intervals.empty()) {
        out.diagnostics.lower_at_boundary = res.front().feasible();
        out.diagnostics.upper_at_boundary = res.back().feasible();
    }
    return out;
}

// ------------------------------------------------------------ Full estimate

IdentifiedSet invert(const Evaluator& eval, double lo, double hi, const InversionConfig& cfg)
{
    const double tol = cfg.tolerance(lo, hi);
    if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
    if (cfg.root_finder == RootFinder::Eam) {
        throw NotSupported("the EAM root finder is not implemented; use binary, interp or grid");
    }
    if (cfg.root_finder == RootFinder::Grid) {
        return grid_search(eval, lo, hi, cfg.grid_step ? *cfg.grid_step : tol, cfg.threads);
    }
    const SearchMode mode = cfg.mode == SearchMode::Scan ? SearchMode::Scan : SearchMode::Single;

    EvaluationCache cache;
    InitialSearch init = find_initial_feasible(eval, cache, lo, hi, cfg.n_init, mode, cfg.threads);
    IdentifiedSet out;
    if (init.misspecified) {
        out.status = SetStatus::Misspecified;
        out.cache = cache.log();
        out.diagnostics.evaluations = static_cast<int>(cache.size());
        out.diagnostics.notes.push_back("no feasible point on the initial grid");
        return out;
    }

    struct Search {
        double start;
        int dir;
        BoundResult result;
        EvaluationCache local;
    };
    std::vector<Search> searches;
    for (const auto& [a, b] : init.clusters) {
        searches.push_back(Search{a, -1, {}, cache});
        searches.push_back(Search{b, +1, {}, cache});
    }
    parallel_for(searches.size(), cfg.threads, [&](std::size_t i) {
        Search& s = searches[i];
        s.result = cfg.root_finder == RootFinder::Interpolation
                       ? interpolation_search_bound(eval, s.local, s.start, s.dir, tol, lo, hi)
                       : binary_search_bound(eval, s.local, s.start, s.dir, tol, lo, hi);
    });
    for (const auto& s : searches) cache.merge(s.local);

    if (mode == SearchMode::Single) {
        double lb = std::numeric_limits<double>::infinity();
        double ub = -lb;
        for (const auto& e : cache.log()) {
            if (e.feasible()) {
                lb = std::min(lb, e.r);
                ub = std::max(ub, e.r);
            }
        }
        out.intervals.push_back(Interval{lb, ub});
    } else {
        std::vector<Interval> parts;
        for (std::size_t c = 0; c < init.clusters.size(); ++c) {
            parts.push_back(Interval{searches[2 * c].result.bound, searches[2 * c + 1].result.bound});
        }
        out.intervals = merge_intervals(parts);
    }
    out.status = SetStatus::Feasible;
    out.cache = cache.log();
    out.diagnostics.evaluations = static_cast<int>(cache.size());
    out.diagnostics.lower_at_boundary = searches.front().result.at_boundary;
    out.diagnostics.upper_at_boundary = searches.back().result.at_boundary;
    if (out.diagnostics.lower_at_boundary || out.diagnostics.upper_at_boundary) {
        out.diagnostics.notes.push_back("interval reaches the parameter box edge");
    }
    return out;
}

IdentifiedSet estimate_interval(const MomentSystem& sys, const TestConfig& test, std::size_t k,
                                const InversionConfig& cfg, const OutcomeObserver& observer)
{
    test.validate();
    if (k >= sys.dim()) throw std::invalid_argument("coefficient index out of range");
    ParameterBox box = test.parameter_box(sys.dim());
    const auto kk = static_cast<Eigen::Index>(k);
    InversionConfig run = cfg;
    if (run.mode == SearchMode::Auto) {
        run.mode = sys.data().has_continuous() ? SearchMode::Scan : SearchMode::Single;
    }
    Evaluator eval = [&](double r) {
        TestOutcome o = test_point(sys, test, r, k);
        if (observer) observer(o);
        return Evaluation{r, o.statistic, o.critical_value};
    };
    IdentifiedSet out = invert(eval, box.lower[kk], box.upper[kk], run);
    out.k = k;
    out.t = sys.t();
    out.alpha = test.alpha;
    if (!sys.t_in_support()) out.diagnostics.notes.push_back("time point lies outside the observed follow-up range");
    return out;
}

}  // namespace depbounds
