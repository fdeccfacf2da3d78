#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace depbounds {

// Link function Lambda of the single-index model P(T <= t | x) = Lambda(x'beta).
enum class LinkKind { CoxPH, PropOdds };

double link_eval(LinkKind link, double v);
double link_deriv(LinkKind link, double v);
// Inverse of link_eval on (0, 1).
double link_inverse(LinkKind link, double p);

std::string to_string(LinkKind link);
// Accepts "cox", "coxph", "aft", "propodds", "po".
LinkKind parse_link(std::string_view name);

struct Observation {
    double y = 0.0;
    int delta = 0;
    // x[0] == 1 is the intercept.
    std::vector<double> x;
};

enum class CovariateKind { Continuous, Binary, Categorical };

std::string to_string(CovariateKind kind);
CovariateKind parse_covariate_kind(std::string_view name);

// One input column of the raw data. Categorical groups expand into
// levels.size() - 1 dummy columns; everything else owns a single column.
struct CovariateGroup {
    std::string name;
    CovariateKind kind = CovariateKind::Continuous;
    std::vector<std::size_t> columns;  // indices into Observation::x
    std::vector<std::string> levels;   // categorical only, levels[0] is the reference
    bool standardized = false;
    double mean = 0.0;
    double sd = 1.0;
};

class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<Observation> rows, std::vector<CovariateGroup> groups);

    std::size_t n() const { return rows_.size(); }
    // Number of covariate columns, excluding the intercept.
    std::size_t d() const { return d_; }
    const std::vector<Observation>& rows() const { return rows_; }
    const Observation& row(std::size_t i) const { return rows_[i]; }
    const std::vector<CovariateGroup>& groups() const { return groups_; }

    // Kind of covariate column j (1-based; dummy columns report Categorical).
    CovariateKind column_kind(std::size_t j) const;
    std::string column_name(std::size_t j) const;
    bool has_continuous() const;
    double min_y() const;
    double max_y() const;

private:
    std::vector<Observation> rows_;
    std::vector<CovariateGroup> groups_;
    std::vector<std::size_t> column_group_;  // column -> group index, entry 0 unused
    std::size_t d_ = 0;
};

struct ParameterBox {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    static ParameterBox symmetric(std::size_t dim, double half_width);
    std::size_t dim() const { return static_cast<std::size_t>(lower.size()); }
    void validate() const;
};

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
    double width() const { return upper - lower; }
    bool contains(double v) const { return lower <= v && v <= upper; }
    bool operator==(const Interval&) const = default;
};

}  // namespace depbounds
