#include "depbounds/errors.hpp"
#include "depbounds/set_inversion.hpp"
#include "depbounds/simulation.hpp"

#include "generators.hpp"

#include <doctest.h>

#include <atomic>
#include <cmath>
#include <memory>

using namespace depbounds;

namespace {

// Violation curve v(r) as an evaluator: feasible iff v(r) <= 0.
Evaluator curve(std::function<double(double)> v, std::atomic<int>* calls = nullptr)
{
    return [v, calls](double r) {
        if (calls) ++*calls;
        return Evaluation{r, v(r) + 1.0, 1.0};
    };
}

// Feasible exactly on [a, b], growing violation outside.
Evaluator band(double a, double b, std::atomic<int>* calls = nullptr)
{
    return curve([a, b](double r) { return r < a ? a - r : (r > b ? r - b : -std::min(r - a, b - r) - 1e-9); },
                 calls);
}

bool endpoint_in_cache(const IdentifiedSet& s, double r)
{
    for (const auto& e : s.cache) {
        if (e.r == r && e.feasible()) return true;
    }
    return false;
}

}  // namespace

TEST_SUITE("set_inversion")
{
    TEST_CASE("cache keeps one entry per r")
    {
        EvaluationCache cache;
        std::atomic<int> calls{0};
        auto eval = band(-1, 1, &calls);
        cache.get(0.5, eval);
        cache.get(0.5, eval);
        cache.get(-3, eval);
        CHECK(calls == 2);
        CHECK(cache.size() == 2);
        CHECK(cache.log()[0].r == 0.5);
        CHECK(cache.sorted()[0].r == -3);
        CHECK(cache.find(0.5)->feasible());
        CHECK_FALSE(cache.find(1.0).has_value());
    }

    TEST_CASE("initial search finds a point of the root region")
    {
        EvaluationCache cache;
        auto init = find_initial_feasible(band(-1, 1), cache, -10, 10, 100, SearchMode::Single);
        REQUIRE_FALSE(init.misspecified);
        REQUIRE(init.feasible.size() >= 1);
        CHECK(init.feasible.front() > -1);
        CHECK(init.feasible.front() < 1);

        EvaluationCache c2;
        auto none = find_initial_feasible(curve([](double) { return 1.0; }), c2, -10, 10, 100, SearchMode::Scan);
        CHECK(none.misspecified);
        CHECK(c2.size() == 100);
    }

    TEST_CASE("single mode stops at the first feasible point for any thread count")
    {
        for (int threads : {1, 4}) {
            EvaluationCache cache;
            auto init = find_initial_feasible(band(3, 4), cache, -10, 10, 100, SearchMode::Single, threads);
            REQUIRE_FALSE(init.misspecified);
            auto log = cache.sorted();
            CHECK(log.back().feasible());
            CHECK(log.back().r == init.feasible.front());
            for (std::size_t i = 0; i + 1 < log.size(); ++i) CHECK_FALSE(log[i].feasible());
        }
    }

    TEST_CASE("binary search examples")
    {
        EvaluationCache cache;
        auto eval = curve([](double r) { return r - 1.5; });
        cache.get(0.0, eval);
        BoundResult b = binary_search_bound(eval, cache, 0.0, +1, 0.01, -10, 10);
        CHECK(b.bound >= 1.49);
        CHECK(b.bound <= 1.51);
        CHECK_FALSE(b.at_boundary);
        CHECK(b.evaluations <= static_cast<int>(std::ceil(std::log2(10.0 / 0.01))) + 2);

        EvaluationCache c2;
        auto open = curve([](double r) { return -r - 20; });
        c2.get(0.0, open);
        BoundResult e = binary_search_bound(open, c2, 0.0, +1, 0.01, -10, 10);
        CHECK(e.bound == 10.0);
        CHECK(e.at_boundary);
    }

    TEST_CASE("bisection needs a proper bracket")
    {
        EvaluationCache cache;
        auto eval = band(-1, 1);
        CHECK_THROWS_AS(bisect_bracket(eval, cache, 2.0, 3.0, 0.01), BracketError);
        CHECK_THROWS_AS(bisect_bracket(eval, cache, -0.5, 0.5, 0.01), BracketError);
        CHECK(bisect_bracket(eval, cache, 0.0, 3.0, 0.01).bound == doctest::Approx(1.0).epsilon(0.01));
    }

    TEST_CASE("interpolation search")
    {
        EvaluationCache cache;
        std::atomic<int> calls{0};
        auto lin = curve([](double r) { return r - 1.5; }, &calls);
        cache.get(0.0, lin);
        cache.get(10.0, lin);
        calls = 0;
        BoundResult b = interpolation_search_bound(lin, cache, 0.0, +1, 0.01, -10, 10);
        CHECK(calls <= 3);
        CHECK(b.bound <= 1.5);
        CHECK(b.bound >= 1.49);

        // Flat, then a jump: the secant is useless and bisection takes over.
        EvaluationCache c2;
        auto jump = curve([](double r) { return r < 2.0 ? -1.0 : 1.0; });
        c2.get(0.0, jump);
        BoundResult j = interpolation_search_bound(jump, c2, 0.0, +1, 0.01, -10, 10);
        CHECK(j.bound < 2.0);
        CHECK(j.bound >= 1.99);
    }

    TEST_CASE("interpolation and binary search agree on monotone curves")
    {
        CounterRng rng(6);
        for (int rep = 0; rep < 50; ++rep) {
            double root = testgen::uniform(rng, -8, 8);
            double p = testgen::uniform(rng, 0.3, 3);
            double s = testgen::uniform(rng, 0.1, 10);
            auto v = curve([=](double r) {
                double d = r - root;
                return s * (d >= 0 ? std::pow(d, p) : -std::pow(-d, p));
            });
            double start = root - testgen::uniform(rng, 0.5, root + 9.9);
            EvaluationCache a, b;
            a.get(start, v);
            b.get(start, v);
            double x = binary_search_bound(v, a, start, +1, 0.01, -10, 10).bound;
            double y = interpolation_search_bound(v, b, start, +1, 0.01, -10, 10).bound;
            CHECK(std::abs(x - y) <= 0.01);
        }
    }

    TEST_CASE("grid search examples")
    {
        IdentifiedSet s = grid_search(band(-1, 1), -10, 10, 0.1);
        REQUIRE(s.intervals.size() == 1);
        CHECK(std::abs(s.intervals[0].lower + 1) <= 0.1 + 1e-9);
        CHECK(std::abs(s.intervals[0].upper - 1) <= 0.1 + 1e-9);
        CHECK(s.status == SetStatus::Feasible);

        IdentifiedSet none = grid_search(curve([](double) { return 1.0; }), -10, 10, 0.1);
        CHECK(none.status == SetStatus::Misspecified);
        CHECK(none.intervals.empty());

        auto two = curve([](double r) { return (r > -5 && r < -3) || (r > 2 && r < 4) ? -1.0 : 1.0; });
        IdentifiedSet t = grid_search(two, -10, 10, 0.1);
        CHECK(t.intervals.size() == 2);
    }

    TEST_CASE("binary search and grid search agree on 50 synthetic curves")
    {
        CounterRng rng(19);
        for (int rep = 0; rep < 50; ++rep) {
            double a = testgen::uniform(rng, -9, 8);
            double b = a + testgen::uniform(rng, 0.3, 9.5 - a);
            auto eval = band(a, b);
            InversionConfig cfg;
            cfg.mode = SearchMode::Single;
            IdentifiedSet bin = invert(eval, -10, 10, cfg);
            const double step = 0.05;
            IdentifiedSet grid = grid_search(eval, -10, 10, step);
            REQUIRE(bin.status == SetStatus::Feasible);
            REQUIRE(grid.status == SetStatus::Feasible);
            double tol = cfg.tolerance(-10, 10);
            CHECK(std::abs(bin.lower() - grid.lower()) <= tol + step);
            CHECK(std::abs(bin.upper() - grid.upper()) <= tol + step);
        }
    }

    TEST_CASE("endpoints come from feasible cache entries")
    {
        CounterRng rng(23);
        for (int rep = 0; rep < 20; ++rep) {
            double a = testgen::uniform(rng, -9, 0), b = testgen::uniform(rng, 0.5, 9);
            for (auto finder : {RootFinder::Binary, RootFinder::Interpolation}) {
                InversionConfig cfg;
                cfg.root_finder = finder;
                cfg.mode = rep % 2 ? SearchMode::Scan : SearchMode::Single;
                IdentifiedSet s = invert(band(a, b), -10, 10, cfg);
                for (const auto& iv : s.intervals) {
                    CHECK(endpoint_in_cache(s, iv.lower));
                    CHECK(endpoint_in_cache(s, iv.upper));
                }
                for (const auto& e : s.cache) {
                    if (e.feasible()) CHECK(s.contains(e.r));
                }
            }
        }
    }

    TEST_CASE("misspecified exactly when the initial grid has no feasible point")
    {
        std::atomic<int> calls{0};
        // Feasible only between two grid points of the 100-point initial grid.
        double g0 = -10 + 20.0 * 40 / 99, g1 = -10 + 20.0 * 41 / 99;
        auto eval = band(g0 + 0.01, g1 - 0.01, &calls);
        InversionConfig cfg;
        IdentifiedSet s = invert(eval, -10, 10, cfg);
        CHECK(s.status == SetStatus::Misspecified);
        CHECK(s.intervals.empty());
        CHECK(calls == 100);
        CHECK(s.cache.size() == 100);
        CHECK(to_string(s.status) == "misspecified");
    }

    TEST_CASE("interval reaching the box edge is flagged")
    {
        InversionConfig cfg;
        IdentifiedSet s = invert(band(-20, 3), -10, 10, cfg);
        REQUIRE(s.status == SetStatus::Feasible);
        CHECK(s.lower() == -10.0);
        CHECK(s.diagnostics.lower_at_boundary);
        CHECK_FALSE(s.diagnostics.upper_at_boundary);
        CHECK_FALSE(s.diagnostics.notes.empty());
    }

    TEST_CASE("scan mode returns disconnected pieces")
    {
        auto two = curve([](double r) {
            if (r > -5 && r < -3) return -std::min(r + 5, -3 - r);
            if (r > 2 && r < 4) return -std::min(r - 2, 4 - r);
            return std::min(std::abs(r + 4), std::abs(r - 3)) - 1.0;
        });
        InversionConfig cfg;
        cfg.mode = SearchMode::Scan;
        IdentifiedSet s = invert(two, -10, 10, cfg);
        REQUIRE(s.intervals.size() == 2);
        CHECK(s.intervals[0].lower == doctest::Approx(-5).epsilon(0.05));
        CHECK(s.intervals[1].upper == doctest::Approx(4).epsilon(0.05));
        CHECK(s.intervals[0].upper < s.intervals[1].lower);

        cfg.mode = SearchMode::Single;
        IdentifiedSet one = invert(two, -10, 10, cfg);
        CHECK(one.intervals.size() == 1);
    }

    TEST_CASE("shrinking the tolerance never widens by more than the old tolerance")
    {
        CounterRng rng(29);
        for (int rep = 0; rep < 30; ++rep) {
            double a = testgen::uniform(rng, -9, 0), b = testgen::uniform(rng, 0.5, 9);
            InversionConfig coarse, fine;
            coarse.tol = 0.2;
            fine.tol = 0.01;
            IdentifiedSet c = invert(band(a, b), -10, 10, coarse);
            IdentifiedSet f = invert(band(a, b), -10, 10, fine);
            CHECK(f.lower() >= c.lower() - 0.2);
            CHECK(f.upper() <= c.upper() + 0.2);
        }
    }

    TEST_CASE("EAM is named but not supported")
    {
        InversionConfig cfg;
        cfg.root_finder = RootFinder::Eam;
        CHECK_THROWS_AS(invert(band(-1, 1), -10, 10, cfg), NotSupported);
        CHECK(parse_root_finder("eam") == RootFinder::Eam);
        CHECK(parse_search_mode("scan") == SearchMode::Scan);
    }

    TEST_CASE("default tolerance")
    {
        InversionConfig cfg;
        CHECK(cfg.tolerance(-10, 10) == doctest::Approx(0.2));
        CHECK(cfg.tolerance(0, 0.01) == doctest::Approx(1e-3));
    }

    TEST_CASE("merge intervals")
    {
        auto m = merge_intervals({{3, 4}, {-1, 1}, {0.5, 2}});
        REQUIRE(m.size() == 2);
        CHECK(m[0] == Interval{-1, 2});
        CHECK(m[1] == Interval{3, 4});
    }

    TEST_CASE("estimate on a simulated design contains every feasible cache entry")
    {
        SimDesign design;
        design.n = 300;
        CounterRng rng(stream_key({4, 1, 0}));
        auto data = std::make_shared<const Dataset>(generate_dataset(design, 0.2, rng));
        FittedInstruments fi = fit_instruments(*data, parse_family_spec("x1=spline:4,x2=indicator"));
        MomentSystem sys(data, LinkKind::CoxPH, 1.0, fi.normalizer, fi.family);
        TestConfig test;
        test.n_boot = 100;
        InversionConfig cfg;
        cfg.mode = SearchMode::Single;
        std::atomic<int> seen{0};
        IdentifiedSet s = estimate_interval(sys, test, 1, cfg, [&](const TestOutcome&) { ++seen; });
        REQUIRE(s.status == SetStatus::Feasible);
        CHECK(seen == static_cast<int>(s.cache.size()));
        CHECK(s.k == 1);
        for (const auto& e : s.cache) {
            if (e.feasible()) CHECK(s.contains(e.r));
        }
        CHECK(s.contains(1.0));
    }
}
