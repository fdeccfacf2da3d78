#pragma once

#include "depbounds/core_types.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace depbounds {

// Maps a covariate row (x[0] = 1) to z in [0,1]^{d+1} with z[0] = 1.
class Normalizer {
public:
    enum class Kind { MinMax, Pca };

    Normalizer() = default;

    // bounds[j-1] is M_j for covariate column j. Without bounds, M_j is
    // 1.05 * max_i |x_ij| (1 for an all-zero column).
    static Normalizer fit_minmax(const Dataset& data,
                                 std::optional<std::vector<double>> bounds = std::nullopt,
                                 double margin = 0.05);
    static Normalizer fit_pca(const Dataset& data, double margin = 0.05);

    std::size_t dim() const { return dim_; }
    Kind kind() const { return kind_; }
    void apply(std::span<const double> x, std::span<double> z) const;
    std::vector<double> apply(std::span<const double> x) const;
    // Image of a raw value in a min-max handled column.
    double minmax_image(std::size_t column, double raw) const;
    const std::vector<double>& bounds() const { return bounds_; }
    std::string describe() const;

private:
    Kind kind_ = Kind::MinMax;
    std::size_t dim_ = 0;                 // d + 1
    std::vector<double> bounds_;          // index j, entry 0 unused; 0 for PCA columns
    std::vector<std::size_t> pca_cols_;   // continuous columns rotated by the PCA
    Eigen::VectorXd pca_mean_;
    Eigen::MatrixXd pca_vectors_;         // columns are eigenvectors
    Eigen::VectorXd score_min_;
    Eigen::VectorXd score_range_;         // 0 marks a zero-variance score
};

// Support of a one-dimensional function on its column. point marks an
// indicator (support {lo}); otherwise the open interval (lo, hi).
struct Support {
    std::size_t column = 0;
    double lo = 0.0;
    double hi = 1.0;
    bool point = false;
};

// A one-dimensional family acting on one covariate group.
class Factor {
public:
    virtual ~Factor() = default;
    virtual std::size_t size() const = 0;
    virtual void evaluate(std::span<const double> z, std::span<double> out) const = 0;
    virtual std::vector<Support> support(std::size_t j) const = 0;
    virtual std::string describe() const = 0;
};

struct Term {
    std::vector<std::pair<std::size_t, std::size_t>> parts;  // (factor index, function index)
    double scale = 1.0;
};

class InstrumentalFamily {
public:
    // The single constant function g = 1.
    InstrumentalFamily();
    InstrumentalFamily(std::vector<std::shared_ptr<const Factor>> factors, std::vector<Term> terms,
                       std::string provenance);

    std::size_t size() const { return terms_.size(); }
    void evaluate(std::span<const double> z, std::span<double> out) const;
    std::vector<double> evaluate(std::span<const double> z) const;
    std::vector<Support> support(std::size_t j) const;
    const std::string& provenance() const { return provenance_; }
    const std::vector<std::shared_ptr<const Factor>>& factors() const { return factors_; }
    const std::vector<Term>& terms() const { return terms_; }

    InstrumentalFamily subset(const std::vector<std::size_t>& keep) const;
    InstrumentalFamily permuted(const std::vector<std::size_t>& order) const;
    InstrumentalFamily scaled(double factor) const;

private:
    std::vector<std::shared_ptr<const Factor>> factors_;
    std::vector<Term> terms_;
    std::string provenance_;
};

// levels are values in the space the family is evaluated in.
InstrumentalFamily build_indicator_family(std::size_t column, std::vector<double> levels);
// One column per non-reference level; a column counts as 1 when its value
// exceeds threshold. Function l-1 fires on the all-zero reference pattern.
InstrumentalFamily build_dummy_family(std::vector<std::size_t> columns, std::vector<double> thresholds);
// count cubic B-splines on uniform knots with p_0 = 0 and p_{count-1} = 1.
InstrumentalFamily build_spline_family(std::size_t column, std::size_t count);
InstrumentalFamily build_box_family(std::size_t column, std::size_t count, double smoothing_fraction = 0.1);

// Cardinal cubic B-spline centred at 0 with support (-2, 2).
double cubic_bspline(double u);

InstrumentalFamily tensor_product(const std::vector<InstrumentalFamily>& families);
InstrumentalFamily pairwise_product(const std::vector<InstrumentalFamily>& families);

struct PruneResult {
    InstrumentalFamily family;
    std::vector<std::size_t> dropped;
};

PruneResult prune_family(const InstrumentalFamily& family, const Dataset& data, const Normalizer& norm,
                         std::size_t min_activation = 1);

// Throws CoverageError listing the rows that activate no function.
void check_coverage(const InstrumentalFamily& family, const Dataset& data, const Normalizer& norm);

enum class FactorKind { Spline, Box, Indicator };
enum class CombineRule { Tensor, Pairwise };

struct FactorSpec {
    FactorKind kind = FactorKind::Spline;
    std::size_t count = 0;  // 0: default
};

// Text form: "x1=spline:6,x2=indicator,combine=tensor,normalizer=minmax".
// Other keys: smoothing=<fraction>, min_activation=<k>, spline_default=<count>.
struct FamilySpec {
    std::map<std::string, FactorSpec> per_covariate;
    CombineRule combine = CombineRule::Tensor;
    Normalizer::Kind normalizer = Normalizer::Kind::MinMax;
    std::size_t default_count = 5;
    double box_smoothing = 0.1;
    std::size_t min_activation = 1;
};

FamilySpec parse_family_spec(std::string_view text);
std::string to_string(const FamilySpec& spec);

struct FittedInstruments {
    Normalizer normalizer;
    InstrumentalFamily family;
    std::vector<std::size_t> dropped;
};

FittedInstruments fit_instruments(const Dataset& data, const FamilySpec& spec);

}  // namespace depbounds
