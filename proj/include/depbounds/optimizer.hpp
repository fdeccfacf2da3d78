#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace depbounds {

struct LocalSearchOptions {
    int max_evals = 500;
    double f_tol = 1e-8;           // stop when a model step gains less than this
    double x_tol = 1e-4;           // stop when the trust radius falls below this
    double initial_radius = 1.0;
    double stop_value = -1.0;      // stop as soon as f <= stop_value (e.g. 0 for a nonnegative f)
    bool record_path = false;
};

struct LocalSearchResult {
    Eigen::VectorXd x;
    double f = 0.0;
    int evaluations = 0;
    bool converged = false;
    std::vector<Eigen::VectorXd> path;   // accepted iterates when record_path is set
    std::vector<double> path_f;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

// Derivative-free trust-region search on a box: each iteration fits a full
// quadratic model through a stencil around the incumbent and takes the model
// minimiser inside the trust region.
LocalSearchResult minimize_box(const Objective& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& lower,
                               const Eigen::VectorXd& upper, const LocalSearchOptions& opt = {});

// Approximate minimiser of g's + 0.5 s'Hs over lo <= s <= hi (lo <= 0 <= hi).
Eigen::VectorXd box_qp(const Eigen::VectorXd& g, const Eigen::MatrixXd& H, const Eigen::VectorXd& lo,
                       const Eigen::VectorXd& hi);

}  // namespace depbounds
