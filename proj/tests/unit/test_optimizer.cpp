#include "depbounds/optimizer.hpp"

#include "generators.hpp"

#include <doctest.h>

#include <cmath>

using namespace depbounds;

TEST_SUITE("optimizer")
{
    TEST_CASE("quadratic bowl")
    {
        Eigen::Vector3d c(0.3, -1.2, 2.0);
        auto f = [&](const Eigen::VectorXd& x) { return (x - c).squaredNorm() + 0.5 * (x[0] - c[0]) * (x[1] - c[1]); };
        auto r = minimize_box(f, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Constant(3, -5), Eigen::VectorXd::Constant(3, 5));
        CHECK((r.x - c).norm() < 1e-3);
        CHECK(r.f < 1e-6);
        CHECK(r.evaluations <= 500);
    }

    TEST_CASE("minimum outside the box lands on the boundary")
    {
        auto f = [](const Eigen::VectorXd& x) { return (x[0] - 3) * (x[0] - 3) + (x[1] + 0.5) * (x[1] + 0.5); };
        auto r = minimize_box(f, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Constant(2, -1), Eigen::VectorXd::Constant(2, 1));
        CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(r.x[1] == doctest::Approx(-0.5).epsilon(1e-3));
        CHECK((r.x.array() >= -1).all());
        CHECK((r.x.array() <= 1).all());
    }

    TEST_CASE("Rosenbrock")
    {
        auto f = [](const Eigen::VectorXd& x) {
            return 100 * (x[1] - x[0] * x[0]) * (x[1] - x[0] * x[0]) + (1 - x[0]) * (1 - x[0]);
        };
        LocalSearchOptions opt;
        opt.max_evals = 5000;
        opt.x_tol = 1e-7;
        opt.f_tol = 1e-14;
        Eigen::Vector2d x0(-1.2, 1.0);
        auto r = minimize_box(f, x0, Eigen::VectorXd::Constant(2, -2), Eigen::VectorXd::Constant(2, 2), opt);
        CHECK(r.f < 1e-6);
        CHECK(std::abs(r.x[0] - 1) < 1e-2);
        CHECK(std::abs(r.x[1] - 1) < 2e-2);
    }

    TEST_CASE("stop value ends the search early")
    {
        int calls = 0;
        auto f = [&](const Eigen::VectorXd& x) {
            ++calls;
            return std::max(0.0, x[0] - 1.0);
        };
        LocalSearchOptions opt;
        opt.stop_value = 0.0;
        auto r = minimize_box(f, Eigen::VectorXd::Constant(1, 3.0), Eigen::VectorXd::Constant(1, -5),
                              Eigen::VectorXd::Constant(1, 5), opt);
        CHECK(r.f == 0.0);
        CHECK(r.evaluations == calls);
        CHECK(calls < 100);
    }

    TEST_CASE("box QP agrees with a brute-force grid")
    {
        CounterRng rng(17);
        for (int rep = 0; rep < 30; ++rep) {
            Eigen::Matrix2d a;
            a << rng.normal(), rng.normal(), rng.normal(), rng.normal();
            Eigen::MatrixXd H = a * a.transpose() + 0.01 * Eigen::Matrix2d::Identity();
            Eigen::VectorXd g(2);
            g << 3 * rng.normal(), 3 * rng.normal();
            Eigen::VectorXd lo(2), hi(2);
            lo << -testgen::uniform(rng, 0.1, 2), -testgen::uniform(rng, 0.1, 2);
            hi << testgen::uniform(rng, 0.1, 2), testgen::uniform(rng, 0.1, 2);
            auto q = [&](double s0, double s1) {
                Eigen::Vector2d s(s0, s1);
                return g.dot(s) + 0.5 * s.dot(H * s);
            };
            double best = 0.0;
            const int m = 800;
            for (int i = 0; i <= m; ++i)
                for (int j = 0; j <= m; ++j)
                    best = std::min(best, q(lo[0] + (hi[0] - lo[0]) * i / m, lo[1] + (hi[1] - lo[1]) * j / m));
            Eigen::VectorXd s = box_qp(g, H, lo, hi);
            CHECK((s.array() >= lo.array() - 1e-12).all());
            CHECK((s.array() <= hi.array() + 1e-12).all());
            double v = q(s[0], s[1]);
            CHECK(v <= best + 1e-9);
            CHECK(v >= best - 1e-3 * (1 + std::abs(best)));
        }
    }
}
