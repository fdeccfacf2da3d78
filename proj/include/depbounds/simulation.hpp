#pragma once

#include "depbounds/core_types.hpp"
#include "depbounds/instruments.hpp"
#include "depbounds/rng.hpp"
#include "depbounds/set_inversion.hpp"
#include "depbounds/time_combine.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace depbounds {

enum class CovariateModel { Independent, GaussianCopula };

std::string to_string(CovariateModel m);
CovariateModel parse_covariate_model(const std::string& s);

// Covariates x1 ~ N(0,1) and binary x2; event time from the single-index
// model with beta(t) = (log t, 1, -1); censoring C ~ Exp(lambda) tied to T
// by a Frank copula.
struct SimDesign {
    LinkKind link = LinkKind::CoxPH;
    double theta = 0.0;
    double censoring_target = 0.3;
    std::optional<double> censoring_rate;   // skips calibration when set
    std::size_t n = 500;
    FamilySpec family = default_family(6);
    int reps = 1;
    int n_boot = 600;
    double alpha = 0.05;
    double t = 1.0;
    std::size_t coef = 1;
    CovariateModel covariates = CovariateModel::Independent;
    double rho = 0.8;
    std::uint64_t seed = 1;
    InversionConfig inversion = single_mode();
    std::optional<TimeGrid> times;          // combine over these instead of t alone

    // spline:<splines> on x1, indicator on x2, tensor product.
    static FamilySpec default_family(std::size_t splines);
    static InversionConfig single_mode();
    void validate() const;
};

Eigen::Vector3d beta_true(double t);

// Conditional inversion of the Frank copula; theta = 0 is independence.
std::pair<double, double> sample_frank_pair(double theta, CounterRng& rng);
// Closed-form Kendall tau of the Frank copula, 1 - 4/theta (1 - D1(theta)).
double frank_tau(double theta);

// Rows (x1, x2).
std::vector<std::pair<double, double>> sample_covariates(CovariateModel model, std::size_t n, CounterRng& rng,
                                                         double rho = 0.8);

// t solving Lambda(log t + index) = u, index = x1 - x2 for the design.
double inverse_conditional_T(LinkKind link, double u, double index);

// One dataset with columns x1 (continuous) and x2 (binary).
Dataset generate_dataset(const SimDesign& design, double lambda, CounterRng& rng);

// Share of censored observations in a pilot of size n. Equal keys reuse the
// same uniforms, so the result is monotone in lambda.
double censoring_proportion(const SimDesign& design, double lambda, std::size_t n, std::uint64_t key);
double calibrate_censoring(const SimDesign& design, double tolerance = 0.005, std::size_t pilot = 100000);

struct RepResult {
    int rep = 0;
    bool ok = true;
    std::string error;
    SetStatus status = SetStatus::Misspecified;
    std::vector<Interval> intervals;
    double censored = 0.0;
    int evaluations = 0;
};

struct SimMetrics {
    double mean_lower = 0.0;
    double mean_upper = 0.0;
    double var_width = 0.0;   // sample variance, n - 1 denominator
    double sig = 0.0;         // share with 0 outside the set
    double cov = 0.0;         // share containing the true coefficient
    int used = 0;             // reps entering the averages
    int misspecified = 0;
    int failed = 0;
};

SimMetrics summarize(const std::vector<RepResult>& reps, double truth);

struct SimResult {
    double lambda = 0.0;
    std::vector<RepResult> reps;
    SimMetrics metrics;
};

// Replications run in parallel with a substream per (seed, rep).
SimResult run_design(const SimDesign& design, int threads = 1);
RepResult run_replication(const SimDesign& design, double lambda, int rep);

// Sample Kendall tau (tau-a) of paired values.
double kendall_tau(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace depbounds
