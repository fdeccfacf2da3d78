#include "depbounds/subvector_test.hpp"

#include "depbounds/errors.hpp"
#include "depbounds/optimizer.hpp"
#include "depbounds/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace depbounds {

double TestConfig::kappa_n(std::size_t n) const
{
    return kappa ? *kappa : std::sqrt(std::log(static_cast<double>(n)));
}

double TestConfig::lambda_n(std::size_t n) const
{
    return lambda ? *lambda : std::log(static_cast<double>(n));
}

double TestConfig::epsilon_n(std::size_t n) const
{
    if (epsilon) return *epsilon;
    double ll = std::log(std::log(static_cast<double>(n)));
    return ll > 0.0 ? std::sqrt(ll / static_cast<double>(n)) : 0.0;
}

ParameterBox TestConfig::parameter_box(std::size_t dim) const
{
    if (box) {
        if (box->dim() != dim) throw std::invalid_argument("parameter box dimension does not match the model");
        return *box;
    }
    return ParameterBox::symmetric(dim, 10.0);
}

void TestConfig::validate() const
{
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    if (n_boot < 1) throw std::invalid_argument("n_boot must be at least 1");
    if (optimizer.starts < 1) throw std::invalid_argument("need at least one optimizer start");
    if (optimizer.max_evals < 1) throw std::invalid_argument("max_evals must be positive");
    if (lambda && *lambda < 0.0) throw std::invalid_argument("lambda_n must be nonnegative");
}

double s_function(const Eigen::VectorXd& v, const Eigen::VectorXd& sigma)
{
    if (v.size() != sigma.size()) throw std::invalid_argument("s_function: size mismatch");
    double s = 0.0;
    for (Eigen::Index j = 0; j < v.size(); ++j) {
        if (!(sigma[j] > 0.0)) throw std::invalid_argument("s_function: sigma must be positive");
        double r = -v[j] / sigma[j];
        if (r > 0.0) s += r * r;
    }
    return s;
}

Eigen::VectorXd gms_phi(const Eigen::VectorXd& mbar, const Eigen::VectorXd& sigma_hat, std::size_t n, double kappa_n,
                        double gms_large)
{
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(mbar.size());
    double rn = std::sqrt(static_cast<double>(n));
    for (Eigen::Index j = 0; j < mbar.size(); ++j) {
        if (rn * mbar[j] / sigma_hat[j] > kappa_n) phi[j] = gms_large;
    }
    return phi;
}

namespace {

Eigen::VectorXd embed(const Eigen::VectorXd& free, double r, std::size_t k)
{
    Eigen::VectorXd beta(free.size() + 1);
    Eigen::Index f = 0;
    for (Eigen::Index i = 0; i < beta.size(); ++i) {
        beta[i] = (static_cast<std::size_t>(i) == k) ? r : free[f++];
    }
    return beta;
}

Eigen::VectorXd drop(const Eigen::VectorXd& v, std::size_t k)
{
    Eigen::VectorXd out(v.size() - 1);
    Eigen::Index f = 0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (static_cast<std::size_t>(i) != k) out[f++] = v[i];
    }
    return out;
}

// Intercept making the average model probability match the midpoint of the
// sample Peterson bounds, other free coefficients at zero.
Eigen::VectorXd data_start(const MomentSystem& sys, double r, std::size_t k, const Eigen::VectorXd& lo,
                           const Eigen::VectorXd& hi)
{
    Eigen::VectorXd start = 0.5 * (lo + hi);
    if (k == 0) return start;
    const Dataset& d = sys.data();
    double mid = 0.0, xk = 0.0;
    for (const auto& o : d.rows()) {
        double a = o.y <= sys.t() ? 1.0 : 0.0;
        double b = (o.y <= sys.t() && o.delta == 1) ? 1.0 : 0.0;
        mid += 0.5 * (a + b);
        xk += o.x[k];
    }
    mid = std::clamp(mid / static_cast<double>(d.n()), 0.02, 0.98);
    xk /= static_cast<double>(d.n());
    start.setZero();
    start[0] = std::clamp(link_inverse(sys.link(), mid) - r * xk, lo[0], hi[0]);
    return start.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace

StatisticResult test_statistic(const MomentSystem& sys, const TestConfig& cfg, double r, std::size_t k)
{
    cfg.validate();
    const std::size_t p = sys.dim();
    if (k >= p) throw std::invalid_argument("coefficient index out of range");
    ParameterBox box = cfg.parameter_box(p);
    const auto kk = static_cast<Eigen::Index>(k);
    if (!(r >= box.lower[kk] && r <= box.upper[kk])) throw std::invalid_argument("r lies outside the parameter box");

    Eigen::VectorXd lo = drop(box.lower, k), hi = drop(box.upper, k);
    const Eigen::Index q = lo.size();

    std::vector<Eigen::VectorXd> starts;
    Eigen::VectorXd center = 0.5 * (lo + hi);
    starts.push_back(center);
    if (q > 0) {
        starts.push_back(data_start(sys, r, k, lo, hi));
        for (Eigen::Index i = 0; i < q; ++i) {
            for (double sgn : {1.0, -1.0}) {
                Eigen::VectorXd s = center;
                s[i] += sgn * 0.25 * (hi[i] - lo[i]) / 2.0;
                starts.push_back(s);
            }
        }
    }
    CounterRng rng(stream_key({cfg.seed, hash_double(r), 0x5354415254ULL}));
    while (static_cast<int>(starts.size()) < cfg.optimizer.starts && q > 0) {
        Eigen::VectorXd s(q);
        for (Eigen::Index i = 0; i < q; ++i) s[i] = lo[i] + (hi[i] - lo[i]) * rng.uniform();
        starts.push_back(s);
    }
    if (static_cast<int>(starts.size()) > cfg.optimizer.starts) starts.resize(static_cast<std::size_t>(cfg.optimizer.starts));

    Objective f = [&](const Eigen::VectorXd& free) { return sys.objective(embed(free, r, k)); };
    LocalSearchOptions lopt;
    lopt.max_evals = cfg.optimizer.max_evals;
    lopt.f_tol = cfg.optimizer.tolerance;
    lopt.initial_radius = 0.1 * 0.5 * (q > 0 ? (hi - lo).maxCoeff() : 1.0);
    lopt.stop_value = 0.0;
    lopt.record_path = cfg.trace;

    StatisticResult res;
    res.statistic = std::numeric_limits<double>::infinity();
    for (const auto& s0 : starts) {
        LocalSearchResult lr = minimize_box(f, s0, lo, hi, lopt);
        res.evaluations += lr.evaluations;
        StartTrace tr;
        tr.start = s0;
        tr.end = lr.x;
        tr.value = lr.f;
        tr.evaluations = lr.evaluations;
        if (cfg.trace) {
            tr.path = std::move(lr.path);
            tr.path_values = std::move(lr.path_f);
        }
        res.starts.push_back(std::move(tr));
        if (std::isfinite(lr.f)) res.statistic = std::min(res.statistic, lr.f);
        if (lr.f <= 0.0) break;
    }
    if (!std::isfinite(res.statistic)) throw NumericalFailure("test statistic: every optimizer start failed");

    double cut = res.statistic + std::max(1e-6, 0.01 * res.statistic);
    for (const auto& tr : res.starts) {
        if (!(tr.value <= cut)) continue;
        Eigen::VectorXd beta = embed(tr.end, r, k);
        bool dup = std::any_of(res.minimizers.begin(), res.minimizers.end(),
                               [&](const Eigen::VectorXd& b) { return (b - beta).norm() < 1e-3; });
        if (!dup) res.minimizers.push_back(beta);
    }
    return res;
}

Eigen::VectorXd bootstrap_process(const MomentSystem& sys, const Eigen::VectorXd& beta, const Eigen::VectorXd& zeta)
{
    if (static_cast<std::size_t>(zeta.size()) != sys.n()) throw std::invalid_argument("zeta must have length n");
    Linearization lin = sys.linearize(beta, true);
    return lin.z.transpose() * zeta / std::sqrt(static_cast<double>(sys.n()));
}

XiResult xi_minimize_linear(const Eigen::MatrixXd& G, const Eigen::VectorXd& w, double penalty,
                            const Eigen::VectorXd& lo, const Eigen::VectorXd& hi)
{
    const Eigen::Index q = G.cols();
    auto s_of = [&](const Eigen::VectorXd& xi) {
        Eigen::VectorXd u = w + G * xi;
        double s = 0.0;
        for (Eigen::Index j = 0; j < u.size(); ++j) {
            if (u[j] < 0.0) s += u[j] * u[j];
        }
        return s;
    };
    auto obj = [&](const Eigen::VectorXd& xi) { return s_of(xi) + penalty * xi.squaredNorm(); };

    XiResult zero{Eigen::VectorXd::Zero(q), 0.0, 0.0};
    zero.s_value = s_of(zero.xi);
    zero.objective = zero.s_value;
    bool empty = false;
    for (Eigen::Index i = 0; i < q; ++i) {
        if (lo[i] > hi[i]) empty = true;
    }
    if (empty || q == 0) return zero;

    // Projected Newton on the convex, piecewise quadratic objective.
    Eigen::VectorXd xi = Eigen::VectorXd::Zero(q).cwiseMax(lo).cwiseMin(hi);
    double fx = obj(xi);
    for (int it = 0; it < 200; ++it) {
        Eigen::VectorXd u = w + G * xi;
        Eigen::VectorXd grad = 2.0 * penalty * xi;
        Eigen::MatrixXd H = (2.0 * penalty + 1e-12) * Eigen::MatrixXd::Identity(q, q);
        for (Eigen::Index j = 0; j < u.size(); ++j) {
            if (u[j] < 0.0) {
                grad += 2.0 * u[j] * G.row(j).transpose();
                H += 2.0 * G.row(j).transpose() * G.row(j);
            }
        }
        Eigen::VectorXd pg = xi - (xi - grad).cwiseMax(lo).cwiseMin(hi);
        if (pg.lpNorm<Eigen::Infinity>() <= 1e-10 * (1.0 + std::abs(fx))) break;

        std::vector<Eigen::Index> free;
        Eigen::VectorXd d = Eigen::VectorXd::Zero(q);
        for (Eigen::Index i = 0; i < q; ++i) {
            double eps = 1e-12 * (1.0 + std::abs(lo[i]) + std::abs(hi[i]));
            bool at_lo = xi[i] <= lo[i] + eps && grad[i] > 0.0;
            bool at_hi = xi[i] >= hi[i] - eps && grad[i] < 0.0;
            if (lo[i] < hi[i] && !at_lo && !at_hi) free.push_back(i);
        }
        if (!free.empty()) {
            const auto m = static_cast<Eigen::Index>(free.size());
            Eigen::MatrixXd Hf(m, m);
            Eigen::VectorXd gf(m);
            for (Eigen::Index a = 0; a < m; ++a) {
                gf[a] = grad[free[static_cast<std::size_t>(a)]];
                for (Eigen::Index b = 0; b < m; ++b) Hf(a, b) = H(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
            }
            Eigen::VectorXd df = Hf.ldlt().solve(-gf);
            for (Eigen::Index a = 0; a < m; ++a) d[free[static_cast<std::size_t>(a)]] = df[a];
        }
        if (!d.allFinite() || d.lpNorm<Eigen::Infinity>() == 0.0) d = -grad;

        double step = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls) {
            Eigen::VectorXd xn = (xi + step * d).cwiseMax(lo).cwiseMin(hi);
            double fn = obj(xn);
            if (fn <= fx + 1e-4 * grad.dot(xn - xi)) {
                moved = fn < fx;
                xi = xn;
                fx = fn;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
    }
    XiResult best{xi, fx, s_of(xi)};
    if (zero.objective <= best.objective) return zero;
    return best;
}

namespace {

struct XiBox {
    Eigen::VectorXd lo, hi;
};

XiBox xi_box(const ParameterBox& box, double eps, std::size_t n, std::size_t k, const Eigen::VectorXd& beta_b)
{
    const double rn = std::sqrt(static_cast<double>(n));
    XiBox xb{Eigen::VectorXd(beta_b.size()), Eigen::VectorXd(beta_b.size())};
    for (Eigen::Index i = 0; i < beta_b.size(); ++i) {
        if (static_cast<std::size_t>(i) == k) {
            xb.lo[i] = 0.0;
            xb.hi[i] = 0.0;
        } else {
            xb.lo[i] = rn * (box.lower[i] + eps - beta_b[i]);
            xb.hi[i] = rn * (box.upper[i] - eps - beta_b[i]);
        }
    }
    return xb;
}

}  // namespace

XiResult xi_minimize(const MomentSystem& sys, const TestConfig& cfg, double r, std::size_t k,
                     const Eigen::VectorXd& beta_b, const Eigen::VectorXd& v_draw, const Eigen::VectorXd& phi)
{
    if (k >= sys.dim() || beta_b[static_cast<Eigen::Index>(k)] != r) {
        throw std::invalid_argument("beta_b must lie in the slice B(r)");
    }
    const std::size_t n = sys.n();
    Eigen::MatrixXd G = sys.g_hat(beta_b);
    XiBox xb = xi_box(cfg.parameter_box(sys.dim()), cfg.epsilon_n(n), n, k, beta_b);
    return xi_minimize_linear(G, v_draw + phi, cfg.lambda_n(n) / static_cast<double>(n), xb.lo, xb.hi);
}

double quantile_order_statistic(std::vector<double> draws, double alpha)
{
    if (draws.empty()) throw std::invalid_argument("no bootstrap draws");
    std::sort(draws.begin(), draws.end());
    double pos = std::ceil((1.0 - alpha) * static_cast<double>(draws.size()) - 1e-9);
    auto idx = static_cast<std::size_t>(std::clamp(pos, 1.0, static_cast<double>(draws.size())));
    return draws[idx - 1];
}

CriticalValueResult critical_value(const MomentSystem& sys, const TestConfig& cfg, double r, std::size_t k,
                                   const std::vector<Eigen::VectorXd>& minimizer_set)
{
    cfg.validate();
    if (minimizer_set.empty()) throw std::invalid_argument("critical value needs a nonempty minimizer set");
    const std::size_t n = sys.n();
    const double rn = std::sqrt(static_cast<double>(n));
    const double penalty = cfg.lambda_n(n) / static_cast<double>(n);
    const ParameterBox box = cfg.parameter_box(sys.dim());
    const double eps = cfg.epsilon_n(n);
    const GmsFunction gms = cfg.gms ? cfg.gms : GmsFunction(gms_phi);

    struct Prepared {
        Linearization lin;
        Eigen::VectorXd phi;
        XiBox box;
    };
    std::vector<Prepared> prep;
    for (const auto& b : minimizer_set) {
        Linearization lin = sys.linearize(b, true);
        Eigen::VectorXd phi = gms(lin.mbar, lin.sigma_hat, n, cfg.kappa_n(n), cfg.gms_large);
        prep.push_back(Prepared{std::move(lin), std::move(phi), xi_box(box, eps, n, k, b)});
    }

    CriticalValueResult res;
    res.draws.resize(static_cast<std::size_t>(cfg.n_boot));
    Eigen::VectorXd zeta(static_cast<Eigen::Index>(n));
    for (int b = 0; b < cfg.n_boot; ++b) {
        CounterRng rng(stream_key({cfg.seed, hash_double(r), static_cast<std::uint64_t>(b)}));
        for (Eigen::Index i = 0; i < zeta.size(); ++i) zeta[i] = rng.normal();
        double best = std::numeric_limits<double>::infinity();
        for (const auto& pr : prep) {
            Eigen::VectorXd v = pr.lin.z.transpose() * zeta / rn;
            XiResult xr = xi_minimize_linear(pr.lin.g_hat, v + pr.phi, penalty, pr.box.lo, pr.box.hi);
            best = std::min(best, xr.s_value);
        }
        res.draws[static_cast<std::size_t>(b)] = best;
    }
    res.gamma = quantile_order_statistic(res.draws, cfg.alpha);
    return res;
}

TestOutcome test_point(const MomentSystem& sys, const TestConfig& cfg, double r, std::size_t k)
{
    StatisticResult st = test_statistic(sys, cfg, r, k);
    CriticalValueResult cv = critical_value(sys, cfg, r, k, st.minimizers);
    TestOutcome out;
    out.r = r;
    out.statistic = st.statistic;
    out.critical_value = cv.gamma;
    out.reject = st.statistic > cv.gamma;
    out.minimizers = st.minimizers;
    out.evaluations = st.evaluations;
    std::vector<double> sorted = cv.draws;
    std::sort(sorted.begin(), sorted.end());
    out.draw_min = sorted.front();
    out.draw_max = sorted.back();
    out.draw_median = sorted[(sorted.size() - 1) / 2];
    if (cfg.trace) {
        out.draws = std::move(cv.draws);
        out.starts = std::move(st.starts);
    }
    return out;
}

}  // namespace depbounds
