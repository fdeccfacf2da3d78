#include "depbounds/simulation.hpp"

#include "depbounds/errors.hpp"
#include "depbounds/moments.hpp"
#include "depbounds/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace depbounds {

namespace {

// Stream labels keep data, bootstrap and pilot draws apart.
constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kTestStream = 2;
constexpr std::uint64_t kPilotStream = 3;

struct LatentDraw {
    double x1, x2, u1, u2;
};

std::vector<LatentDraw> draw_latent(const SimDesign& d, std::size_t n, CounterRng& rng)
{
    auto cov = sample_covariates(d.covariates, n, rng, d.rho);
    std::vector<LatentDraw> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto [u1, u2] = sample_frank_pair(d.theta, rng);
        out[i] = {cov[i].first, cov[i].second, u1, u2};
    }
    return out;
}

double event_time(const SimDesign& d, const LatentDraw& l)
{
    // beta_true without the intercept; log t enters through the inversion.
    return inverse_conditional_T(d.link, l.u1, l.x1 - l.x2);
}

double censoring_time(double lambda, double u2) { return -std::log1p(-u2) / lambda; }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

std::string to_string(CovariateModel m)
{
    return m == CovariateModel::Independent ? "independent" : "gaussian_copula";
}

CovariateModel parse_covariate_model(const std::string& s)
{
    if (s == "independent" || s == "indep") return CovariateModel::Independent;
    if (s == "gaussian_copula" || s == "copula" || s == "dependent") return CovariateModel::GaussianCopula;
    throw std::invalid_argument("unknown covariate model '" + s + "'");
}

FamilySpec SimDesign::default_family(std::size_t splines)
{
    FamilySpec f;
    f.per_covariate["x1"] = FactorSpec{FactorKind::Spline, splines};
    f.per_covariate["x2"] = FactorSpec{FactorKind::Indicator, 0};
    f.combine = CombineRule::Tensor;
    return f;
}

InversionConfig SimDesign::single_mode()
{
    InversionConfig c;
    c.mode = SearchMode::Single;
    return c;
}

void SimDesign::validate() const
{
    if (!(censoring_target > 0.0 && censoring_target < 1.0)) {
        throw std::invalid_argument("censoring target must lie in (0, 1)");
    }
    if (censoring_rate && !(*censoring_rate > 0.0)) throw std::invalid_argument("censoring rate must be positive");
    if (reps < 1) throw std::invalid_argument("reps must be at least 1");
    if (n < 2) throw std::invalid_argument("sample size must be at least 2");
    if (!std::isfinite(theta)) throw std::invalid_argument("copula parameter must be finite");
    if (!(t > 0.0)) throw std::invalid_argument("time point must be positive");
    if (coef > 2) throw std::invalid_argument("coefficient index must be 0, 1 or 2");
    if (!(rho > -1.0 && rho < 1.0)) throw std::invalid_argument("copula correlation must lie in (-1, 1)");
    if (times) times->validate();
}

Eigen::Vector3d beta_true(double t)
{
    if (!(t > 0.0)) throw std::invalid_argument("time point must be positive");
    return Eigen::Vector3d(std::log(t), 1.0, -1.0);
}

std::pair<double, double> sample_frank_pair(double theta, CounterRng& rng)
{
    double u1 = rng.uniform();
    double w = rng.uniform();
    if (theta == 0.0) return {u1, w};
    // Solve dC/du1 (u1, u2) = w for u2.
    double a = std::exp(-theta * u1);
    double b = w * std::expm1(-theta) / (w + (1.0 - w) * a);
    double u2 = -std::log1p(b) / theta;
    u2 = std::clamp(u2, 1e-16, 1.0 - 1e-16);
    return {u1, u2};
}

double frank_tau(double theta)
{
    if (theta == 0.0) return 0.0;
    // D1(x) = (1/x) int_0^x s / (e^s - 1) ds, by Simpson's rule; D1(-x) = D1(x) + x/2.
    double x = std::abs(theta);
    const int m = 2000;
    double h = x / m;
    auto f = [](double s) { return s == 0.0 ? 1.0 : s / std::expm1(s); };
    double sum = f(0.0) + f(x);
    for (int i = 1; i < m; ++i) sum += (i % 2 ? 4.0 : 2.0) * f(i * h);
    double d1 = sum * h / 3.0 / x;
    if (theta < 0.0) d1 += x / 2.0;
    return 1.0 - 4.0 / theta * (1.0 - d1);
}

std::vector<std::pair<double, double>> sample_covariates(CovariateModel model, std::size_t n, CounterRng& rng,
                                                         double rho)
{
    std::vector<std::pair<double, double>> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (model == CovariateModel::Independent) {
            double x1 = rng.normal();
            double x2 = rng.uniform() > 0.5 ? 1.0 : 0.0;
            out[i] = {x1, x2};
        } else {
            double z1 = rng.normal();
            double z2 = rho * z1 + std::sqrt(1.0 - rho * rho) * rng.normal();
            out[i] = {z1, normal_cdf(z2) > 0.5 ? 1.0 : 0.0};
        }
    }
    return out;
}

double inverse_conditional_T(LinkKind link, double u, double index)
{
    if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("u must lie in (0, 1)");
    return std::exp(link_inverse(link, u) - index);
}

Dataset generate_dataset(const SimDesign& design, double lambda, CounterRng& rng)
{
    auto latent = draw_latent(design, design.n, rng);
    std::vector<Observation> rows;
    rows.reserve(latent.size());
    for (const auto& l : latent) {
        double T = event_time(design, l);
        double C = censoring_time(lambda, l.u2);
        Observation o;
        o.y = std::min(T, C);
        o.delta = T <= C ? 1 : 0;
        o.x = {1.0, l.x1, l.x2};
        rows.push_back(std::move(o));
    }
    std::vector<CovariateGroup> groups(2);
    groups[0].name = "x1";
    groups[0].kind = CovariateKind::Continuous;
    groups[0].columns = {1};
    groups[1].name = "x2";
    groups[1].kind = CovariateKind::Binary;
    groups[1].columns = {2};
    return Dataset(std::move(rows), std::move(groups));
}

double censoring_proportion(const SimDesign& design, double lambda, std::size_t n, std::uint64_t key)
{
    if (!(lambda > 0.0)) throw std::invalid_argument("censoring rate must be positive");
    CounterRng rng(key);
    auto latent = draw_latent(design, n, rng);
    std::size_t censored = 0;
    for (const auto& l : latent) {
        if (censoring_time(lambda, l.u2) < event_time(design, l)) ++censored;
    }
    return static_cast<double>(censored) / static_cast<double>(n);
}

double calibrate_censoring(const SimDesign& design, double tolerance, std::size_t pilot)
{
    design.validate();
    // One pilot sample shared by every lambda; only C is rescaled.
    CounterRng rng(stream_key({design.seed, kPilotStream}));
    auto latent = draw_latent(design, pilot, rng);
    std::vector<double> T(pilot), E(pilot);
    for (std::size_t i = 0; i < pilot; ++i) {
        T[i] = event_time(design, latent[i]);
        E[i] = -std::log1p(-latent[i].u2);
    }
    auto share = [&](double lambda) {
        std::size_t c = 0;
        for (std::size_t i = 0; i < pilot; ++i) c += E[i] / lambda < T[i];
        return static_cast<double>(c) / static_cast<double>(pilot);
    };
    double lo = 0.0, hi = 2.0;
    double p_hi = share(hi);
    if (p_hi < design.censoring_target - tolerance) {
        throw CalibrationError("censoring target " + std::to_string(design.censoring_target) +
                               " unattainable: lambda in (0, 2] gives at most " + std::to_string(p_hi));
    }
    if (std::abs(p_hi - design.censoring_target) < tolerance) return hi;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        double p = share(mid);
        if (std::abs(p - design.censoring_target) < tolerance) return mid;
        if (p < design.censoring_target) lo = mid;
        else hi = mid;
        if (hi - lo < 1e-12) break;
    }
    throw CalibrationError("censoring calibration did not reach tolerance within lambda in [" + std::to_string(lo) +
                           ", " + std::to_string(hi) + "]");
}

RepResult run_replication(const SimDesign& design, double lambda, int rep)
{
    RepResult out;
    out.rep = rep;
    try {
        CounterRng rng(stream_key({design.seed, kDataStream, static_cast<std::uint64_t>(rep)}));
        auto data = std::make_shared<const Dataset>(generate_dataset(design, lambda, rng));
        std::size_t censored = 0;
        for (const auto& o : data->rows()) censored += o.delta == 0;
        out.censored = static_cast<double>(censored) / static_cast<double>(data->n());

        FittedInstruments inst = fit_instruments(*data, design.family);
        TestConfig test;
        test.alpha = design.alpha;
        test.n_boot = design.n_boot;
        test.seed = stream_key({design.seed, kTestStream, static_cast<std::uint64_t>(rep)});
        InversionConfig inv = design.inversion;
        inv.threads = 1;

        IdentifiedSet set;
        if (design.times) {
            SystemFactory factory = [&](double t) {
                return MomentSystem(data, design.link, t, inst.normalizer, inst.family);
            };
            set = combine_over_times(factory, test, design.coef, *design.times, inv).combined;
        } else {
            MomentSystem sys(data, design.link, design.t, inst.normalizer, inst.family);
            set = estimate_interval(sys, test, design.coef, inv);
        }
        out.status = set.status;
        out.intervals = set.intervals;
        out.evaluations = set.diagnostics.evaluations;
    } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
    }
    return out;
}

SimMetrics summarize(const std::vector<RepResult>& reps, double truth)
{
    SimMetrics m;
    std::vector<double> lower, upper;
    int sig = 0, cov = 0;
    for (const auto& r : reps) {
        if (!r.ok) {
            ++m.failed;
            continue;
        }
        if (r.status == SetStatus::Misspecified || r.intervals.empty()) {
            ++m.misspecified;
            continue;
        }
        lower.push_back(r.intervals.front().lower);
        upper.push_back(r.intervals.back().upper);
        auto inside = [&](double v) {
            return std::any_of(r.intervals.begin(), r.intervals.end(), [&](const Interval& iv) { return iv.contains(v); });
        };
        sig += !inside(0.0);
        cov += inside(truth);
    }
    m.used = static_cast<int>(lower.size());
    if (m.used == 0) return m;
    // Summation in rep order keeps the result independent of the thread count.
    double sl = 0.0, su = 0.0;
    for (int i = 0; i < m.used; ++i) {
        sl += lower[i];
        su += upper[i];
    }
    m.mean_lower = sl / m.used;
    m.mean_upper = su / m.used;
    if (m.used > 1) {
        double mw = m.mean_upper - m.mean_lower, ss = 0.0;
        for (int i = 0; i < m.used; ++i) ss += (upper[i] - lower[i] - mw) * (upper[i] - lower[i] - mw);
        m.var_width = ss / (m.used - 1);
    }
    m.sig = static_cast<double>(sig) / m.used;
    m.cov = static_cast<double>(cov) / m.used;
    return m;
}

SimResult run_design(const SimDesign& design, int threads)
{
    design.validate();
    SimResult out;
    out.lambda = design.censoring_rate ? *design.censoring_rate : calibrate_censoring(design);
    out.reps.resize(static_cast<std::size_t>(design.reps));
    parallel_for(out.reps.size(), threads,
                 [&](std::size_t r) { out.reps[r] = run_replication(design, out.lambda, static_cast<int>(r)); });
    out.metrics = summarize(out.reps, beta_true(design.t)[static_cast<Eigen::Index>(design.coef)]);
    return out;
}

double kendall_tau(const std::vector<double>& a, const std::vector<double>& b)
{
    if (a.size() != b.size()) throw std::invalid_argument("kendall_tau needs equal-length inputs");
    const std::size_t n = a.size();
    if (n < 2) throw std::invalid_argument("kendall_tau needs at least two pairs");
    long long s = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double p = (a[i] - a[j]) * (b[i] - b[j]);
            s += (p > 0) - (p < 0);
        }
    }
    return static_cast<double>(s) / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

}  // namespace depbounds
