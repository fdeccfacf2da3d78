#include "depbounds/oracle.hpp"

#include "depbounds/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <stdexcept>

namespace depbounds {

namespace {

constexpr std::uint64_t kOracleStream = 4;

// Lattice points are keyed by rounded coordinates so that revisits at a finer
// level hit the same entry.
using Key = std::array<long long, 3>;

Key key_of(const Eigen::Vector3d& b)
{
    return {std::llround(b[0] * 1e8), std::llround(b[1] * 1e8), std::llround(b[2] * 1e8)};
}

double violation(const MomentSystem& sys, const Eigen::VectorXd& beta, double slack_se)
{
    Eigen::VectorXd mbar, sd;
    sys.mean_sd(beta, mbar, sd);
    const double root_n = std::sqrt(static_cast<double>(sys.n()));
    double v = 0.0;
    for (Eigen::Index j = 0; j < mbar.size(); ++j) {
        double se = sd[j] / root_n;
        double z = (mbar[j] + slack_se * se) / se;
        if (z < 0.0) v += z * z;
    }
    return v;
}

class Explorer {
public:
    Explorer(const MomentSystem& sys, const OracleConfig& cfg) : sys_(sys), cfg_(cfg) {}

    // Evaluates the points not seen before, in parallel; returns violations in input order.
    std::vector<double> evaluate(const std::vector<Eigen::Vector3d>& pts)
    {
        std::vector<Eigen::Vector3d> fresh;
        for (const auto& p : pts) {
            if (!seen_.count(key_of(p))) {
                seen_[key_of(p)] = -1.0;
                fresh.push_back(p);
            }
        }
        std::vector<double> v(fresh.size());
        parallel_for(fresh.size(), cfg_.threads,
                     [&](std::size_t i) { v[i] = violation(sys_, fresh[i], cfg_.slack_se); });
        for (std::size_t i = 0; i < fresh.size(); ++i) {
            seen_[key_of(fresh[i])] = v[i];
            if (v[i] == 0.0) feasible_.push_back(fresh[i]);
        }
        evaluations_ += fresh.size();
        std::vector<double> out;
        out.reserve(pts.size());
        for (const auto& p : pts) out.push_back(seen_[key_of(p)]);
        return out;
    }

    const std::vector<Eigen::Vector3d>& feasible() const { return feasible_; }
    std::size_t evaluations() const { return evaluations_; }

    // The k least violating points evaluated so far.
    std::vector<Eigen::Vector3d> least_violating(std::size_t k) const
    {
        std::vector<std::pair<double, Key>> all;
        for (const auto& [key, v] : seen_) all.push_back({v, key});
        std::sort(all.begin(), all.end());
        std::vector<Eigen::Vector3d> out;
        for (std::size_t i = 0; i < std::min(k, all.size()); ++i) {
            const Key& q = all[i].second;
            out.emplace_back(q[0] * 1e-8, q[1] * 1e-8, q[2] * 1e-8);
        }
        return out;
    }

private:
    const MomentSystem& sys_;
    const OracleConfig& cfg_;
    std::map<Key, double> seen_;
    std::vector<Eigen::Vector3d> feasible_;
    std::size_t evaluations_ = 0;
};

std::vector<Eigen::Vector3d> stencil(const Eigen::Vector3d& c, double h)
{
    std::vector<Eigen::Vector3d> out;
    for (int a = -1; a <= 1; ++a)
        for (int b = -1; b <= 1; ++b)
            for (int d = -1; d <= 1; ++d) out.push_back(c + h * Eigen::Vector3d(a, b, d));
    return out;
}

}  // namespace

void OracleConfig::validate() const
{
    design.validate();
    if (n_mc < 1000) throw std::invalid_argument("n_mc must be at least 1000");
    if (!(error > 0.0)) throw std::invalid_argument("oracle error must be positive");
    if (grid_points < 2) throw std::invalid_argument("initial grid needs at least 2 points per coordinate");
    if (!(half_width > 0.0)) throw std::invalid_argument("grid half width must be positive");
    if (draws < 1) throw std::invalid_argument("draws must be at least 1");
}

MomentSystem mc_system(const OracleConfig& cfg, double lambda, int draw)
{
    SimDesign d = cfg.design;
    d.n = cfg.n_mc;
    CounterRng rng(stream_key({d.seed, kOracleStream, static_cast<std::uint64_t>(draw)}));
    auto data = std::make_shared<const Dataset>(generate_dataset(d, lambda, rng));
    FittedInstruments inst = fit_instruments(*data, d.family);
    return MomentSystem(data, d.link, d.t, inst.normalizer, inst.family);
}

Eigen::VectorXd mc_moments(const MomentSystem& sys, const Eigen::VectorXd& beta)
{
    Eigen::VectorXd mbar, sd;
    sys.mean_sd(beta, mbar, sd);
    return mbar;
}

bool mc_feasible(const MomentSystem& sys, const Eigen::VectorXd& beta, double slack_se)
{
    return violation(sys, beta, slack_se) == 0.0;
}

GridSearchResult adaptive_grid_search(const MomentSystem& sys, const OracleConfig& cfg,
                                      const std::optional<Eigen::VectorXd>& seed_point)
{
    if (sys.dim() != 3) throw std::invalid_argument("oracle grid search expects three coefficients");
    Explorer ex(sys, cfg);
    GridSearchResult out;

    double h = 2.0 * cfg.half_width / (cfg.grid_points - 1);
    std::vector<Eigen::Vector3d> grid;
    for (int a = 0; a < cfg.grid_points; ++a)
        for (int b = 0; b < cfg.grid_points; ++b)
            for (int c = 0; c < cfg.grid_points; ++c)
                grid.emplace_back(-cfg.half_width + a * h, -cfg.half_width + b * h, -cfg.half_width + c * h);
    if (seed_point) {
        grid.push_back(*seed_point);
        out.truth_feasible = ex.evaluate({Eigen::Vector3d(*seed_point)})[0] == 0.0;
    }
    ex.evaluate(grid);

    Eigen::Vector3d lo = Eigen::Vector3d::Constant(INFINITY), hi = Eigen::Vector3d::Constant(-INFINITY);
    auto record = [&](double level_h) {
        for (const auto& p : ex.feasible()) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        LevelBounds lb;
        lb.h = level_h;
        lb.lower = lo;
        lb.upper = hi;
        lb.feasible = ex.feasible().size();
        lb.evaluations = ex.evaluations();
        out.levels.push_back(lb);
    };
    record(h);

    while (h >= cfg.error) {
        double coarse = h;
        h *= 0.5;
        // Centres: feasible points within one coarse step of an extreme, or
        // the least violating points while nothing is feasible.
        std::vector<Eigen::Vector3d> centres;
        if (ex.feasible().empty()) {
            centres = ex.least_violating(10);
        } else {
            for (const auto& p : ex.feasible()) {
                for (int c = 0; c < 3; ++c) {
                    if (p[c] <= lo[c] + coarse || p[c] >= hi[c] - coarse) {
                        centres.push_back(p);
                        break;
                    }
                }
            }
        }
        // Expand until no new feasible point pushes an extreme outwards.
        while (!centres.empty()) {
            std::vector<Eigen::Vector3d> pts;
            for (const auto& c : centres) {
                auto s = stencil(c, h);
                pts.insert(pts.end(), s.begin(), s.end());
            }
            std::size_t before = ex.feasible().size();
            ex.evaluate(pts);
            centres.clear();
            for (std::size_t i = before; i < ex.feasible().size(); ++i) {
                const auto& p = ex.feasible()[i];
                bool extends = (p.array() < lo.array()).any() || (p.array() > hi.array()).any();
                if (lo[0] == INFINITY || extends) centres.push_back(p);
            }
            for (std::size_t i = before; i < ex.feasible().size(); ++i) {
                lo = lo.cwiseMin(ex.feasible()[i]);
                hi = hi.cwiseMax(ex.feasible()[i]);
            }
        }
        record(h);
    }
    out.empty = ex.feasible().empty();
    if (!out.empty) {
        // The lattice extreme can sit up to h inside the true one. Bisect along
        // each coordinate from the extreme points towards their infeasible
        // lattice neighbours.
        std::size_t extra = 0;
        for (int c = 0; c < 3; ++c) {
            for (int dir : {-1, 1}) {
                double edge = dir < 0 ? lo[c] : hi[c];
                for (const auto& p : ex.feasible()) {
                    if (p[c] != edge) continue;
                    double in = 0.0, outside = h;
                    for (int it = 0; it < 8; ++it) {
                        double mid = 0.5 * (in + outside);
                        Eigen::Vector3d q = p;
                        q[c] += dir * mid;
                        ++extra;
                        if (violation(sys, q, cfg.slack_se) == 0.0) in = mid;
                        else outside = mid;
                    }
                    if (dir < 0) lo[c] = std::min(lo[c], p[c] - in);
                    else hi[c] = std::max(hi[c], p[c] + in);
                }
            }
        }
        out.lower = lo;
        out.upper = hi;
        out.evaluations = ex.evaluations() + extra;
    } else {
        out.evaluations = ex.evaluations();
    }
    return out;
}

OracleResult run_oracle(const OracleConfig& cfg)
{
    cfg.validate();
    OracleResult out;
    out.lambda = cfg.design.censoring_rate ? *cfg.design.censoring_rate : calibrate_censoring(cfg.design);
    Eigen::VectorXd truth = beta_true(cfg.design.t);
    Eigen::Vector3d sl = Eigen::Vector3d::Zero(), su = Eigen::Vector3d::Zero();
    int used = 0;
    for (int d = 0; d < cfg.draws; ++d) {
        MomentSystem sys = mc_system(cfg, out.lambda, d);
        GridSearchResult g = adaptive_grid_search(sys, cfg, truth);
        if (!g.empty) {
            sl += g.lower;
            su += g.upper;
            ++used;
        }
        out.per_draw.push_back(std::move(g));
    }
    out.empty = used == 0;
    if (!out.empty) {
        out.lower = sl / used;
        out.upper = su / used;
    }
    return out;
}

}  // namespace depbounds
