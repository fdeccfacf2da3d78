#include "depbounds/moments.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace depbounds {

MomentSystem::MomentSystem(std::shared_ptr<const Dataset> data, LinkKind link, double t, Normalizer norm,
                           InstrumentalFamily family, double variance_floor)
    : data_(std::move(data)), link_(link), t_(t), norm_(std::move(norm)), family_(std::move(family)),
      floor_(variance_floor)
{
    if (!data_) throw std::invalid_argument("moment system needs a dataset");
    if (!(floor_ > 0.0)) throw std::invalid_argument("variance floor must be positive");
    if (!std::isfinite(t_)) throw std::invalid_argument("time point must be finite");
    if (family_.size() == 0) throw std::invalid_argument("instrumental family is empty");
    if (norm_.dim() != data_->d() + 1) throw std::invalid_argument("normalizer does not match the dataset");
    n_ = data_->n();
    p_ = data_->d() + 1;
    J_ = family_.size();
    x_.resize(n_ * p_);
    a_.resize(n_);
    b_.resize(n_);
    start_.assign(1, 0);
    std::vector<double> z(p_), g(J_);
    for (std::size_t i = 0; i < n_; ++i) {
        const Observation& o = data_->row(i);
        std::copy(o.x.begin(), o.x.end(), x_.begin() + static_cast<std::ptrdiff_t>(i * p_));
        a_[i] = o.y <= t_ ? 1.0 : 0.0;
        b_[i] = (o.y <= t_ && o.delta == 1) ? 1.0 : 0.0;
        norm_.apply(o.x, z);
        family_.evaluate(z, g);
        for (std::size_t j = 0; j < J_; ++j) {
            if (g[j] != 0.0) {
                col_.push_back(j);
                val_.push_back(g[j]);
            }
        }
        start_.push_back(col_.size());
    }
}

bool MomentSystem::t_in_support() const
{
    return data_->min_y() <= t_ && t_ <= data_->max_y();
}

void MomentSystem::check_beta(const Eigen::VectorXd& beta) const
{
    if (static_cast<std::size_t>(beta.size()) != p_) {
        throw std::invalid_argument("beta has dimension " + std::to_string(beta.size()) + ", expected " +
                                    std::to_string(p_));
    }
}

Eigen::VectorXd MomentSystem::moment_row(const Observation& obs, const Eigen::VectorXd& beta) const
{
    check_beta(beta);
    if (obs.x.size() != p_) throw std::invalid_argument("observation has the wrong dimension");
    double eta = 0.0;
    for (std::size_t k = 0; k < p_; ++k) eta += obs.x[k] * beta[static_cast<Eigen::Index>(k)];
    double lam = link_eval(link_, eta);
    double a = obs.y <= t_ ? 1.0 : 0.0;
    double b = (obs.y <= t_ && obs.delta == 1) ? 1.0 : 0.0;
    std::vector<double> z = norm_.apply(obs.x);
    std::vector<double> g = family_.evaluate(z);
    Eigen::VectorXd m(2 * J_);
    for (std::size_t j = 0; j < J_; ++j) {
        m[static_cast<Eigen::Index>(j)] = (a - lam) * g[j];
        m[static_cast<Eigen::Index>(J_ + j)] = (lam - b) * g[j];
    }
    return m;
}

void MomentSystem::sums(const Eigen::VectorXd& beta, Eigen::VectorXd& sum, Eigen::VectorXd& sq) const
{
    check_beta(beta);
    const auto J = static_cast<Eigen::Index>(J_);
    sum.setZero(2 * J);
    sq.setZero(2 * J);
    const double* bp = beta.data();
    for (std::size_t i = 0; i < n_; ++i) {
        const double* xi = &x_[i * p_];
        double eta = 0.0;
        for (std::size_t k = 0; k < p_; ++k) eta += xi[k] * bp[k];
        double lam = link_eval(link_, eta);
        double f1 = a_[i] - lam;
        double f2 = lam - b_[i];
        for (std::size_t e = start_[i]; e < start_[i + 1]; ++e) {
            auto j = static_cast<Eigen::Index>(col_[e]);
            double v1 = f1 * val_[e];
            double v2 = f2 * val_[e];
            sum[j] += v1;
            sq[j] += v1 * v1;
            sum[J + j] += v2;
            sq[J + j] += v2 * v2;
        }
    }
}

void MomentSystem::mean_sd(const Eigen::VectorXd& beta, Eigen::VectorXd& mbar, Eigen::VectorXd& sd) const
{
    Eigen::VectorXd sq;
    sums(beta, mbar, sq);
    const double inv_n = 1.0 / static_cast<double>(n_);
    mbar *= inv_n;
    sd.resize(mbar.size());
    for (Eigen::Index k = 0; k < mbar.size(); ++k) {
        double var = sq[k] * inv_n - mbar[k] * mbar[k];
        sd[k] = std::sqrt(std::max(var, floor_));
    }
}

double MomentSystem::objective(const Eigen::VectorXd& beta) const
{
    Eigen::VectorXd mbar, sd;
    mean_sd(beta, mbar, sd);
    double s = 0.0;
    for (Eigen::Index k = 0; k < mbar.size(); ++k) {
        double r = mbar[k] / sd[k];
        if (r < 0.0) s += r * r;
    }
    return static_cast<double>(n_) * s;
}

MomentStats MomentSystem::sample_stats(const Eigen::VectorXd& beta) const
{
    if (n_ < 2) throw std::invalid_argument("sample statistics need at least two observations");
    Linearization lin = linearize(beta, true);
    MomentStats st;
    st.n = n_;
    st.mbar = lin.mbar;
    st.sigma_hat = lin.sigma_hat;
    st.floored = lin.floored;
    st.omega_hat = lin.z.transpose() * lin.z / static_cast<double>(n_);
    for (Eigen::Index a = 0; a < st.omega_hat.rows(); ++a) {
        for (Eigen::Index b = 0; b < st.omega_hat.cols(); ++b) {
            st.omega_hat(a, b) = a == b ? 1.0 : std::clamp(st.omega_hat(a, b), -1.0, 1.0);
        }
    }
    return st;
}

Eigen::MatrixXd MomentSystem::moment_gradient(const Eigen::VectorXd& beta) const
{
    check_beta(beta);
    const auto J = static_cast<Eigen::Index>(J_);
    const auto p = static_cast<Eigen::Index>(p_);
    Eigen::MatrixXd dm = Eigen::MatrixXd::Zero(2 * J, p);
    const double inv_n = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < n_; ++i) {
        const double* xi = &x_[i * p_];
        double eta = 0.0;
        for (std::size_t k = 0; k < p_; ++k) eta += xi[k] * beta[static_cast<Eigen::Index>(k)];
        double dl = link_deriv(link_, eta);
        for (std::size_t e = start_[i]; e < start_[i + 1]; ++e) {
            auto j = static_cast<Eigen::Index>(col_[e]);
            double w = -dl * val_[e] * inv_n;
            for (Eigen::Index k = 0; k < p; ++k) {
                dm(j, k) += w * xi[k];
                dm(J + j, k) -= w * xi[k];
            }
        }
    }
    return dm;
}

Linearization MomentSystem::linearize(const Eigen::VectorXd& beta, bool with_z) const
{
    if (n_ < 2) throw std::invalid_argument("sample statistics need at least two observations");
    check_beta(beta);
    const auto J = static_cast<Eigen::Index>(J_);
    const auto p = static_cast<Eigen::Index>(p_);
    const double inv_n = 1.0 / static_cast<double>(n_);

    Linearization lin;
    Eigen::VectorXd sq;
    sums(beta, lin.mbar, sq);
    lin.mbar *= inv_n;
    lin.sigma_hat.resize(2 * J);
    lin.floored.assign(2 * J_, false);
    for (Eigen::Index k = 0; k < 2 * J; ++k) {
        double var = sq[k] * inv_n - lin.mbar[k] * lin.mbar[k];
        if (var < floor_) {
            lin.floored[static_cast<std::size_t>(k)] = true;
            var = floor_;
        }
        lin.sigma_hat[k] = std::sqrt(var);
    }

    // d mbar and sum_i (m_i - mbar) d m_i in one pass.
    Eigen::MatrixXd dm = Eigen::MatrixXd::Zero(2 * J, p);
    Eigen::MatrixXd ds = Eigen::MatrixXd::Zero(2 * J, p);
    if (with_z) {
        lin.z.resize(static_cast<Eigen::Index>(n_), 2 * J);
        Eigen::RowVectorXd base = (-lin.mbar.array() / lin.sigma_hat.array()).matrix().transpose();
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n_); ++i) lin.z.row(i) = base;
    }
    for (std::size_t i = 0; i < n_; ++i) {
        const double* xi = &x_[i * p_];
        double eta = 0.0;
        for (std::size_t k = 0; k < p_; ++k) eta += xi[k] * beta[static_cast<Eigen::Index>(k)];
        double lam = link_eval(link_, eta);
        double dl = link_deriv(link_, eta);
        double f1 = a_[i] - lam;
        double f2 = lam - b_[i];
        for (std::size_t e = start_[i]; e < start_[i + 1]; ++e) {
            auto j = static_cast<Eigen::Index>(col_[e]);
            double g = val_[e];
            double m1 = f1 * g, m2 = f2 * g;
            double d1 = -dl * g;  // d m_{j,1} / d beta = d1 * x_i, and the (j,2) entry is its negative
            double c1 = (m1 - lin.mbar[j]) * d1;
            double c2 = -(m2 - lin.mbar[J + j]) * d1;
            for (Eigen::Index k = 0; k < p; ++k) {
                dm(j, k) += d1 * xi[k];
                dm(J + j, k) -= d1 * xi[k];
                ds(j, k) += c1 * xi[k];
                ds(J + j, k) += c2 * xi[k];
            }
            if (with_z) {
                lin.z(static_cast<Eigen::Index>(i), j) = (m1 - lin.mbar[j]) / lin.sigma_hat[j];
                lin.z(static_cast<Eigen::Index>(i), J + j) = (m2 - lin.mbar[J + j]) / lin.sigma_hat[J + j];
            }
        }
    }
    dm *= inv_n;
    lin.g_hat.resize(2 * J, p);
    for (Eigen::Index r = 0; r < 2 * J; ++r) {
        double s = lin.sigma_hat[r];
        Eigen::RowVectorXd dsig = lin.floored[static_cast<std::size_t>(r)]
                                      ? Eigen::RowVectorXd::Zero(p)
                                      : Eigen::RowVectorXd(ds.row(r) * (inv_n / s));
        lin.g_hat.row(r) = (s * dm.row(r) - lin.mbar[r] * dsig) / (s * s);
    }
    return lin;
}

Eigen::MatrixXd MomentSystem::g_hat(const Eigen::VectorXd& beta) const
{
    return linearize(beta, false).g_hat;
}

}  // namespace depbounds
