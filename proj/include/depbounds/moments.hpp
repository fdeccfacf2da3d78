#pragma once

#include "depbounds/core_types.hpp"
#include "depbounds/instruments.hpp"

#include <Eigen/Dense>

#include <memory>
#include <vector>

namespace depbounds {

// Sample moments, entries ordered (j,1) for j < J, then (j,2).
struct MomentStats {
    Eigen::VectorXd mbar;
    Eigen::VectorXd sigma_hat;
    Eigen::MatrixXd omega_hat;
    std::size_t n = 0;
    std::vector<bool> floored;
};

// Quantities the bootstrap needs at one parameter value.
struct Linearization {
    Eigen::VectorXd mbar;
    Eigen::VectorXd sigma_hat;
    Eigen::MatrixXd g_hat;   // 2J x (d+1)
    Eigen::MatrixXd z;       // n x 2J, row i = (m_i - mbar) / sigma_hat
    std::vector<bool> floored;
};

class MomentSystem {
public:
    MomentSystem(std::shared_ptr<const Dataset> data, LinkKind link, double t, Normalizer norm,
                 InstrumentalFamily family, double variance_floor = 1e-6);

    std::size_t n() const { return n_; }
    std::size_t dim() const { return p_; }
    std::size_t num_functions() const { return J_; }
    std::size_t num_moments() const { return 2 * J_; }
    double t() const { return t_; }
    LinkKind link() const { return link_; }
    double variance_floor() const { return floor_; }
    const Dataset& data() const { return *data_; }
    std::shared_ptr<const Dataset> data_ptr() const { return data_; }
    const Normalizer& normalizer() const { return norm_; }
    const InstrumentalFamily& family() const { return family_; }
    bool t_in_support() const;

    Eigen::VectorXd moment_row(const Observation& obs, const Eigen::VectorXd& beta) const;
    MomentStats sample_stats(const Eigen::VectorXd& beta) const;
    // Mean and SD, with the variance floored at variance_floor(); the hot path of the test statistic.
    void mean_sd(const Eigen::VectorXd& beta, Eigen::VectorXd& mbar, Eigen::VectorXd& sd) const;
    Eigen::MatrixXd moment_gradient(const Eigen::VectorXd& beta) const;
    Eigen::MatrixXd g_hat(const Eigen::VectorXd& beta) const;
    Linearization linearize(const Eigen::VectorXd& beta, bool with_z = true) const;
    // S(sqrt(n) mbar, sigma_hat) = n * sum_j min(mbar_j / sigma_j, 0)^2.
    double objective(const Eigen::VectorXd& beta) const;

private:
    void check_beta(const Eigen::VectorXd& beta) const;
    void sums(const Eigen::VectorXd& beta, Eigen::VectorXd& sum, Eigen::VectorXd& sq) const;

    std::shared_ptr<const Dataset> data_;
    LinkKind link_;
    double t_;
    Normalizer norm_;
    InstrumentalFamily family_;
    double floor_;
    std::size_t n_ = 0, p_ = 0, J_ = 0;
    std::vector<double> x_;            // row-major n x p
    std::vector<double> a_, b_;        // 1{y <= t}, 1{y <= t, delta = 1}
    std::vector<std::size_t> start_;   // CSR row offsets of the instrument values
    std::vector<std::size_t> col_;
    std::vector<double> val_;
};

}  // namespace depbounds
