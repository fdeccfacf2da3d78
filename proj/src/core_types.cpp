#include "depbounds/core_types.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace depbounds {

namespace {

std::string lower_case(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

void require_finite(double v)
{
    if (!std::isfinite(v)) throw std::invalid_argument("link argument must be finite");
}

}  // namespace

double link_eval(LinkKind link, double v)
{
    require_finite(v);
    switch (link) {
    case LinkKind::CoxPH:
        return -std::expm1(-std::exp(v));
    case LinkKind::PropOdds:
        if (v >= 0.0) {
            return 1.0 / (1.0 + std::exp(-v));
        } else {
            double e = std::exp(v);
            return e / (1.0 + e);
        }
    }
    return std::numeric_limits<double>::quiet_NaN();
}

double link_deriv(LinkKind link, double v)
{
    require_finite(v);
    switch (link) {
    case LinkKind::CoxPH: {
        double e = std::exp(v);
        return e * std::exp(-e);
    }
    case LinkKind::PropOdds: {
        double p = link_eval(link, v);
        return p * (1.0 - p);
    }
    }
    return std::numeric_limits<double>::quiet_NaN();
}

double link_inverse(LinkKind link, double p)
{
    if (!(p > 0.0 && p < 1.0)) {
        throw std::invalid_argument("link_inverse: probability must lie in (0, 1)");
    }
    switch (link) {
    case LinkKind::CoxPH:
        return std::log(-std::log1p(-p));
    case LinkKind::PropOdds:
        return std::log(p / (1.0 - p));
    }
    return std::numeric_limits<double>::quiet_NaN();
}

std::string to_string(LinkKind link)
{
    return link == LinkKind::CoxPH ? "cox" : "aft";
}

LinkKind parse_link(std::string_view name)
{
    std::string s = lower_case(name);
    if (s == "cox" || s == "coxph") return LinkKind::CoxPH;
    if (s == "aft" || s == "propodds" || s == "po") return LinkKind::PropOdds;
    throw std::invalid_argument("unknown link '" + std::string(name) + "'");
}

std::string to_string(CovariateKind kind)
{
    switch (kind) {
    case CovariateKind::Continuous: return "continuous";
    case CovariateKind::Binary: return "binary";
    case CovariateKind::Categorical: return "categorical";
    }
    return "?";
}

CovariateKind parse_covariate_kind(std::string_view name)
{
    std::string s = lower_case(name);
    if (s == "continuous") return CovariateKind::Continuous;
    if (s == "binary") return CovariateKind::Binary;
    if (s == "categorical") return CovariateKind::Categorical;
    throw std::invalid_argument("unknown covariate kind '" + std::string(name) + "'");
}

Dataset::Dataset(std::vector<Observation> rows, std::vector<CovariateGroup> groups)
    : rows_(std::move(rows)), groups_(std::move(groups))
{
    if (rows_.empty()) throw std::invalid_argument("dataset has no rows");
    d_ = rows_.front().x.empty() ? 0 : rows_.front().x.size() - 1;
    column_group_.assign(d_ + 1, std::numeric_limits<std::size_t>::max());
    for (std::size_t g = 0; g < groups_.size(); ++g) {
        for (std::size_t c : groups_[g].columns) {
            if (c == 0 || c > d_) throw std::invalid_argument("covariate group column out of range");
            if (column_group_[c] != std::numeric_limits<std::size_t>::max()) {
                throw std::invalid_argument("covariate column claimed by two groups");
            }
            column_group_[c] = g;
        }
    }
    for (std::size_t c = 1; c <= d_; ++c) {
        if (column_group_[c] == std::numeric_limits<std::size_t>::max()) {
            throw std::invalid_argument("covariate column " + std::to_string(c) + " has no group");
        }
    }
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        const Observation& o = rows_[i];
        if (o.x.size() != d_ + 1) throw std::invalid_argument("ragged covariate rows");
        if (o.x[0] != 1.0) throw std::invalid_argument("intercept column must be 1");
        if (!std::isfinite(o.y) || o.y < 0.0) throw std::invalid_argument("y must be finite and >= 0");
        if (o.delta != 0 && o.delta != 1) throw std::invalid_argument("delta must be 0 or 1");
        for (double v : o.x) {
            if (!std::isfinite(v)) throw std::invalid_argument("non-finite covariate");
        }
    }
}

CovariateKind Dataset::column_kind(std::size_t j) const
{
    return groups_.at(column_group_.at(j)).kind;
}

std::string Dataset::column_name(std::size_t j) const
{
    const CovariateGroup& g = groups_.at(column_group_.at(j));
    if (g.kind != CovariateKind::Categorical) return g.name;
    auto pos = std::find(g.columns.begin(), g.columns.end(), j) - g.columns.begin();
    return g.name + "_" + g.levels.at(static_cast<std::size_t>(pos) + 1);
}

bool Dataset::has_continuous() const
{
    return std::any_of(groups_.begin(), groups_.end(),
                       [](const CovariateGroup& g) { return g.kind == CovariateKind::Continuous; });
}

double Dataset::min_y() const
{
    double m = rows_.front().y;
    for (const auto& o : rows_) m = std::min(m, o.y);
    return m;
}

double Dataset::max_y() const
{
    double m = rows_.front().y;
    for (const auto& o : rows_) m = std::max(m, o.y);
    return m;
}

ParameterBox ParameterBox::symmetric(std::size_t dim, double half_width)
{
    ParameterBox b;
    b.lower = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim), -half_width);
    b.upper = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim), half_width);
    b.validate();
    return b;
}

void ParameterBox::validate() const
{
    if (lower.size() != upper.size() || lower.size() == 0) {
        throw std::invalid_argument("parameter box has inconsistent dimensions");
    }
    for (Eigen::Index i = 0; i < lower.size(); ++i) {
        if (!(lower[i] < upper[i])) throw std::invalid_argument("parameter box lower >= upper");
    }
}

}  // namespace depbounds
