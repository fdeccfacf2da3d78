#pragma once

#include "depbounds/moments.hpp"
#include "depbounds/simulation.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace depbounds {

// Population identified set of a simulation design, approximated on a large
// Monte-Carlo sample by adaptive grid refinement.
struct OracleConfig {
    SimDesign design;
    std::size_t n_mc = 50000;
    double error = 0.05;        // final grid spacing is below this
    int grid_points = 21;       // per coordinate, initial grid
    double half_width = 10.0;   // initial grid covers [-half_width, half_width]^3
    int draws = 5;
    double slack_se = 3.0;      // feasible when mbar_j >= -slack_se * SE_j
    int threads = 1;

    void validate() const;
};

// The Monte-Carlo sample as a moment system with the design's family.
MomentSystem mc_system(const OracleConfig& cfg, double lambda, int draw);

Eigen::VectorXd mc_moments(const MomentSystem& sys, const Eigen::VectorXd& beta);
bool mc_feasible(const MomentSystem& sys, const Eigen::VectorXd& beta, double slack_se);

struct LevelBounds {
    double h = 0.0;
    Eigen::VectorXd lower, upper;
    std::size_t feasible = 0;
    std::size_t evaluations = 0;
};

struct GridSearchResult {
    bool empty = true;
    Eigen::VectorXd lower, upper;     // per-coordinate projections
    std::vector<LevelBounds> levels;  // one entry per resolution
    std::size_t evaluations = 0;
    bool truth_feasible = false;
};

GridSearchResult adaptive_grid_search(const MomentSystem& sys, const OracleConfig& cfg,
                                      const std::optional<Eigen::VectorXd>& seed_point = std::nullopt);

struct OracleResult {
    double lambda = 0.0;
    bool empty = true;
    Eigen::VectorXd lower, upper;    // averaged over non-empty draws
    std::vector<GridSearchResult> per_draw;
};

OracleResult run_oracle(const OracleConfig& cfg);

}  // namespace depbounds
