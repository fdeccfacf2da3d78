#include "depbounds/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace depbounds {

namespace {

double model_value(const Eigen::VectorXd& g, const Eigen::MatrixXd& H, const Eigen::VectorXd& s)
{
    return g.dot(s) + 0.5 * s.dot(H * s);
}

// Exact coordinate sweeps on the quadratic model.
void coordinate_descent(const Eigen::VectorXd& g, const Eigen::MatrixXd& H, const Eigen::VectorXd& lo,
                        const Eigen::VectorXd& hi, Eigen::VectorXd& s)
{
    const Eigen::Index p = s.size();
    Eigen::VectorXd grad = g + H * s;
    for (int sweep = 0; sweep < 60; ++sweep) {
        double moved = 0.0;
        for (Eigen::Index i = 0; i < p; ++i) {
            double a = 0.5 * H(i, i);
            double b = grad[i] - H(i, i) * s[i];
            double t;
            if (a > 0.0) {
                t = std::clamp(-b / (2.0 * a), lo[i], hi[i]);
            } else {
                double vlo = a * lo[i] * lo[i] + b * lo[i];
                double vhi = a * hi[i] * hi[i] + b * hi[i];
                t = vlo <= vhi ? lo[i] : hi[i];
            }
            double step = t - s[i];
            if (step != 0.0) {
                grad += H.col(i) * step;
                s[i] = t;
                moved = std::max(moved, std::abs(step));
            }
        }
        if (moved <= 1e-14 * (1.0 + s.lpNorm<Eigen::Infinity>())) break;
    }
}

}  // namespace

Eigen::VectorXd box_qp(const Eigen::VectorXd& g, const Eigen::MatrixXd& H, const Eigen::VectorXd& lo,
                       const Eigen::VectorXd& hi)
{
    const Eigen::Index p = g.size();
    std::vector<Eigen::VectorXd> starts;
    starts.push_back(Eigen::VectorXd::Zero(p));
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        Eigen::VectorXd sn = ldlt.solve(-g);
        if (sn.allFinite()) starts.push_back(sn.cwiseMax(lo).cwiseMin(hi));
    }
    double gn = g.lpNorm<Eigen::Infinity>();
    if (gn > 0.0) {
        Eigen::VectorXd sd = -g / gn * std::max(hi.lpNorm<Eigen::Infinity>(), lo.lpNorm<Eigen::Infinity>());
        starts.push_back(sd.cwiseMax(lo).cwiseMin(hi));
    }
    if (p <= 4) {
        for (int mask = 0; mask < (1 << p); ++mask) {
            Eigen::VectorXd c(p);
            for (Eigen::Index i = 0; i < p; ++i) c[i] = (mask >> i) & 1 ? hi[i] : lo[i];
            starts.push_back(c);
        }
    }
    Eigen::VectorXd best = starts.front();
    double best_val = 0.0;
    for (auto& s : starts) {
        coordinate_descent(g, H, lo, hi, s);
        double v = model_value(g, H, s);
        if (v < best_val) {
            best_val = v;
            best = s;
        }
    }
    return best;
}

LocalSearchResult minimize_box(const Objective& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& lower,
                               const Eigen::VectorXd& upper, const LocalSearchOptions& opt)
{
    const Eigen::Index p = x0.size();
    LocalSearchResult res;
    res.x = x0.cwiseMax(lower).cwiseMin(upper);
    res.f = f(res.x);
    res.evaluations = 1;
    if (opt.record_path) {
        res.path.push_back(res.x);
        res.path_f.push_back(res.f);
    }
    if (p == 0 || res.f <= opt.stop_value) {
        res.converged = true;
        return res;
    }

    const Eigen::Index q = 1 + p + p * (p + 1) / 2;
    double radius_max = 0.5 * (upper - lower).maxCoeff();
    double delta = std::min(opt.initial_radius, radius_max);

    auto accept = [&](const Eigen::VectorXd& x, double fx) {
        res.x = x;
        res.f = fx;
        if (opt.record_path) {
            res.path.push_back(x);
            res.path_f.push_back(fx);
        }
    };

    while (res.evaluations + q <= opt.max_evals) {
        // Stencil: two points per axis and one per pair, step h_i per axis.
        Eigen::VectorXd h(p), side(p);
        std::vector<Eigen::VectorXd> pts;
        std::vector<double> vals;
        std::vector<Eigen::VectorXd> steps;
        for (Eigen::Index i = 0; i < p; ++i) {
            double up = upper[i] - res.x[i];
            double down = res.x[i] - lower[i];
            double hi_ = delta;
            double s1, s2;
            if (up >= hi_ && down >= hi_) {
                s1 = 1.0;
                s2 = -1.0;
            } else if (up >= down) {
                hi_ = std::min(hi_, up / 2.0);
                s1 = 1.0;
                s2 = 2.0;
            } else {
                hi_ = std::min(hi_, down / 2.0);
                s1 = -1.0;
                s2 = -2.0;
            }
            h[i] = hi_;
            side[i] = s1;
            Eigen::VectorXd a = Eigen::VectorXd::Zero(p), b = Eigen::VectorXd::Zero(p);
            a[i] = s1 * hi_;
            b[i] = s2 * hi_;
            steps.push_back(a);
            steps.push_back(b);
        }
        for (Eigen::Index i = 0; i < p; ++i) {
            for (Eigen::Index j = i + 1; j < p; ++j) {
                Eigen::VectorXd c = Eigen::VectorXd::Zero(p);
                c[i] = side[i] * h[i];
                c[j] = side[j] * h[j];
                steps.push_back(c);
            }
        }
        double best_f = res.f;
        Eigen::VectorXd best_x = res.x;
        for (const auto& s : steps) {
            Eigen::VectorXd xp = (res.x + s).cwiseMax(lower).cwiseMin(upper);
            double fp = f(xp);
            ++res.evaluations;
            vals.push_back(fp);
            pts.push_back(xp - res.x);
            if (fp < best_f) {
                best_f = fp;
                best_x = xp;
            }
        }
        if (best_f <= opt.stop_value) {
            accept(best_x, best_f);
            res.converged = true;
            return res;
        }

        // Fit the quadratic exactly through the q points (incumbent included).
        Eigen::MatrixXd A(q, q);
        Eigen::VectorXd rhs(q);
        auto fill_row = [&](Eigen::Index row, const Eigen::VectorXd& s, double fv) {
            Eigen::Index c = 0;
            A(row, c++) = 1.0;
            for (Eigen::Index i = 0; i < p; ++i) A(row, c++) = s[i];
            for (Eigen::Index i = 0; i < p; ++i) {
                for (Eigen::Index j = i; j < p; ++j) A(row, c++) = (i == j) ? 0.5 * s[i] * s[i] : s[i] * s[j];
            }
            rhs[row] = fv;
        };
        fill_row(0, Eigen::VectorXd::Zero(p), res.f);
        for (std::size_t r = 0; r < pts.size(); ++r) fill_row(static_cast<Eigen::Index>(r + 1), pts[r], vals[r]);
        Eigen::VectorXd coef = A.colPivHouseholderQr().solve(rhs);
        Eigen::VectorXd g = coef.segment(1, p);
        Eigen::MatrixXd H(p, p);
        {
            Eigen::Index c = 1 + p;
            for (Eigen::Index i = 0; i < p; ++i) {
                for (Eigen::Index j = i; j < p; ++j) {
                    H(i, j) = coef[c];
                    H(j, i) = coef[c];
                    ++c;
                }
            }
        }
        bool model_ok = coef.allFinite();

        double pred = 0.0;
        Eigen::VectorXd s;
        if (model_ok) {
            Eigen::VectorXd lo_s = (lower - res.x).cwiseMax(-delta);
            Eigen::VectorXd hi_s = (upper - res.x).cwiseMin(delta);
            s = box_qp(g, H, lo_s, hi_s);
            pred = -model_value(g, H, s);
        }

        if (!model_ok || pred <= opt.f_tol || s.lpNorm<Eigen::Infinity>() < 1e-3 * opt.x_tol) {
            if (best_f < res.f) {
                accept(best_x, best_f);
            } else {
                delta *= 0.5;
            }
        } else {
            Eigen::VectorXd xn = (res.x + s).cwiseMax(lower).cwiseMin(upper);
            double fn = f(xn);
            ++res.evaluations;
            double rho = std::isfinite(fn) ? (res.f - fn) / pred : -1.0;
            if (fn < best_f) {
                best_f = fn;
                best_x = xn;
            }
            if (rho >= 0.75 && s.lpNorm<Eigen::Infinity>() >= 0.9 * delta) {
                delta = std::min(2.0 * delta, radius_max);
            } else if (rho < 0.25) {
                delta *= 0.5;
            }
            if (best_f < res.f) accept(best_x, best_f);
            if (res.f <= opt.stop_value) {
                res.converged = true;
                return res;
            }
        }
        if (delta < opt.x_tol) {
            res.converged = true;
            break;
        }
    }
    return res;
}

}  // namespace depbounds
