#include "depbounds/instruments.hpp"

#include "depbounds/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace depbounds {

// ---------------------------------------------------------------- Normalizer

Normalizer Normalizer::fit_minmax(const Dataset& data, std::optional<std::vector<double>> bounds, double margin)
{
    Normalizer nz;
    nz.kind_ = Kind::MinMax;
    nz.dim_ = data.d() + 1;
    nz.bounds_.assign(nz.dim_, 0.0);
    if (bounds && bounds->size() != data.d()) {
        throw std::invalid_argument("fit_minmax: need one bound per covariate column");
    }
    for (std::size_t j = 1; j < nz.dim_; ++j) {
        double amax = 0.0;
        for (const auto& o : data.rows()) amax = std::max(amax, std::abs(o.x[j]));
        if (bounds) {
            double m = (*bounds)[j - 1];
            if (!(m > 0.0)) throw std::invalid_argument("fit_minmax: bounds must be positive");
            if (amax > m) {
                throw RangeError("column " + std::to_string(j) + " has values outside [-M, M]");
            }
            nz.bounds_[j] = m;
        } else {
            nz.bounds_[j] = amax > 0.0 ? (1.0 + margin) * amax : 1.0;
        }
    }
    return nz;
}

Normalizer Normalizer::fit_pca(const Dataset& data, double margin)
{
    Normalizer nz = fit_minmax(data, std::nullopt, margin);
    nz.kind_ = Kind::Pca;
    for (std::size_t j = 1; j < nz.dim_; ++j) {
        if (data.column_kind(j) == CovariateKind::Continuous) nz.pca_cols_.push_back(j);
    }
    const auto p = static_cast<Eigen::Index>(nz.pca_cols_.size());
    if (p < 2) throw std::invalid_argument("fit_pca: need at least two continuous covariates");
    const auto n = static_cast<Eigen::Index>(data.n());
    if (n < 2) throw std::invalid_argument("fit_pca: need at least two rows");

    Eigen::MatrixXd xc(n, p);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index q = 0; q < p; ++q) xc(i, q) = data.row(static_cast<std::size_t>(i)).x[nz.pca_cols_[static_cast<std::size_t>(q)]];
    }
    nz.pca_mean_ = xc.colwise().mean().transpose();
    xc.rowwise() -= nz.pca_mean_.transpose();
    Eigen::MatrixXd cov = xc.transpose() * xc / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw NumericalFailure("fit_pca: eigen decomposition failed");

    // Largest eigenvalue first; sign makes the largest-magnitude entry positive.
    nz.pca_vectors_.resize(p, p);
    for (Eigen::Index q = 0; q < p; ++q) {
        Eigen::VectorXd v = es.eigenvectors().col(p - 1 - q);
        Eigen::Index arg = 0;
        for (Eigen::Index r = 1; r < p; ++r) {
            if (std::abs(v[r]) > std::abs(v[arg])) arg = r;
        }
        if (v[arg] < 0.0) v = -v;
        nz.pca_vectors_.col(q) = v;
    }
    Eigen::MatrixXd scores = xc * nz.pca_vectors_;
    nz.score_min_ = scores.colwise().minCoeff().transpose();
    nz.score_range_ = (scores.colwise().maxCoeff().transpose() - nz.score_min_);
    double biggest = nz.score_range_.maxCoeff();
    for (Eigen::Index q = 0; q < p; ++q) {
        if (nz.score_range_[q] <= 1e-10 * (1.0 + biggest)) nz.score_range_[q] = 0.0;
    }
    for (std::size_t c : nz.pca_cols_) nz.bounds_[c] = 0.0;
    return nz;
}

void Normalizer::apply(std::span<const double> x, std::span<double> z) const
{
    z[0] = 1.0;
    for (std::size_t j = 1; j < dim_; ++j) {
        if (bounds_[j] > 0.0) z[j] = (x[j] + bounds_[j]) / (2.0 * bounds_[j]);
    }
    if (kind_ == Kind::Pca) {
        const auto p = static_cast<Eigen::Index>(pca_cols_.size());
        Eigen::VectorXd xc(p);
        for (Eigen::Index q = 0; q < p; ++q) xc[q] = x[pca_cols_[static_cast<std::size_t>(q)]] - pca_mean_[q];
        Eigen::VectorXd s = pca_vectors_.transpose() * xc;
        for (Eigen::Index q = 0; q < p; ++q) {
            double out = 0.5;
            if (score_range_[q] > 0.0) {
                double st = 2.0 * ((s[q] - score_min_[q]) / score_range_[q]) - 1.0;
                st = std::clamp(st, -1.0, 1.0);
                out = (std::sin(0.5 * std::numbers::pi * st) + 1.0) / 2.0;
            }
            z[pca_cols_[static_cast<std::size_t>(q)]] = out;
        }
    }
}

std::vector<double> Normalizer::apply(std::span<const double> x) const
{
    std::vector<double> z(dim_);
    apply(x, z);
    return z;
}

double Normalizer::minmax_image(std::size_t column, double raw) const
{
    double m = bounds_.at(column);
    if (!(m > 0.0)) throw std::invalid_argument("column is not min-max normalized");
    return (raw + m) / (2.0 * m);
}

std::string Normalizer::describe() const
{
    return kind_ == Kind::MinMax ? "minmax" : "pca";
}

// ------------------------------------------------------------------ Factors

double cubic_bspline(double u)
{
    double a = std::abs(u);
    if (a >= 2.0) return 0.0;
    if (a >= 1.0) {
        double t = 2.0 - a;
        return t * t * t / 6.0;
    }
    return (4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0;
}

namespace {

class IndicatorFactor final : public Factor {
public:
    IndicatorFactor(std::size_t column, std::vector<double> levels) : column_(column), levels_(std::move(levels)) {}
    std::size_t size() const override { return levels_.size(); }
    void evaluate(std::span<const double> z, std::span<double> out) const override
    {
        double v = z[column_];
        for (std::size_t j = 0; j < levels_.size(); ++j) {
            out[j] = std::abs(v - levels_[j]) <= 1e-9 * (1.0 + std::abs(levels_[j])) ? 1.0 : 0.0;
        }
    }
    std::vector<Support> support(std::size_t j) const override
    {
        return {Support{column_, levels_[j], levels_[j], true}};
    }
    std::string describe() const override
    {
        return "indicator(" + std::to_string(levels_.size()) + ")@" + std::to_string(column_);
    }

private:
    std::size_t column_;
    std::vector<double> levels_;
};

class DummyFactor final : public Factor {
public:
    DummyFactor(std::vector<std::size_t> columns, std::vector<double> thresholds)
        : columns_(std::move(columns)), thresholds_(std::move(thresholds)) {}
    std::size_t size() const override { return columns_.size() + 1; }
    void evaluate(std::span<const double> z, std::span<double> out) const override
    {
        std::size_t hits = 0, which = columns_.size();
        for (std::size_t c = 0; c < columns_.size(); ++c) {
            out[c] = 0.0;
            if (z[columns_[c]] > thresholds_[c]) {
                ++hits;
                which = c;
            }
        }
        if (hits > 1) throw DataIntegrityError("dummy pattern has more than one active level");
        out[columns_.size()] = 0.0;
        out[which] = 1.0;
    }
    std::vector<Support> support(std::size_t j) const override
    {
        std::vector<Support> s;
        for (std::size_t c = 0; c < columns_.size(); ++c) {
            double v = (c == j) ? 1.0 : 0.0;
            s.push_back(Support{columns_[c], v, v, true});
        }
        return s;
    }
    std::string describe() const override
    {
        return "dummy(" + std::to_string(size()) + ")@" + std::to_string(columns_.front());
    }

private:
    std::vector<std::size_t> columns_;
    std::vector<double> thresholds_;
};

class SplineFactor final : public Factor {
public:
    SplineFactor(std::size_t column, std::size_t count)
        : column_(column), count_(count), h_(1.0 / static_cast<double>(count - 1)) {}
    std::size_t size() const override { return count_; }
    void evaluate(std::span<const double> z, std::span<double> out) const override
    {
        double u = z[column_] / h_;
        for (std::size_t j = 0; j < count_; ++j) out[j] = cubic_bspline(u - static_cast<double>(j));
    }
    std::vector<Support> support(std::size_t j) const override
    {
        double c = static_cast<double>(j);
        return {Support{column_, (c - 2.0) * h_, (c + 2.0) * h_, false}};
    }
    std::string describe() const override
    {
        return "spline(" + std::to_string(count_) + ")@" + std::to_string(column_);
    }

private:
    std::size_t column_;
    std::size_t count_;
    double h_;
};

class BoxFactor final : public Factor {
public:
    BoxFactor(std::size_t column, std::size_t count, double frac) : column_(column), count_(count), frac_(frac) {}
    std::size_t size() const override { return count_; }
    void evaluate(std::span<const double> z, std::span<double> out) const override
    {
        double x = z[column_];
        double w = 1.0 / static_cast<double>(count_);
        for (std::size_t j = 0; j < count_; ++j) {
            double a = static_cast<double>(j) * w;
            double b = static_cast<double>(j + 1) * w;
            double c1 = a + frac_ * w;
            double c2 = b - frac_ * w;
            double v = 0.0;
            if (x <= a || x >= b) {
                v = 0.0;
            } else if (x < c1) {
                v = (x - a) / (c1 - a);
            } else if (x <= c2) {
                v = 1.0;
            } else {
                v = (b - x) / (b - c2);
            }
            out[j] = v;
        }
    }
    std::vector<Support> support(std::size_t j) const override
    {
        double w = 1.0 / static_cast<double>(count_);
        return {Support{column_, static_cast<double>(j) * w, static_cast<double>(j + 1) * w, false}};
    }
    std::string describe() const override
    {
        return "box(" + std::to_string(count_) + ")@" + std::to_string(column_);
    }

private:
    std::size_t column_;
    std::size_t count_;
    double frac_;
};

InstrumentalFamily single_factor(std::shared_ptr<const Factor> f)
{
    std::vector<Term> terms;
    for (std::size_t j = 0; j < f->size(); ++j) terms.push_back(Term{{{0, j}}, 1.0});
    std::string prov = f->describe();
    return InstrumentalFamily({std::move(f)}, std::move(terms), prov);
}

}  // namespace

InstrumentalFamily build_indicator_family(std::size_t column, std::vector<double> levels)
{
    if (levels.size() < 2) throw std::invalid_argument("indicator family needs at least two levels");
    return single_factor(std::make_shared<IndicatorFactor>(column, std::move(levels)));
}

InstrumentalFamily build_dummy_family(std::vector<std::size_t> columns, std::vector<double> thresholds)
{
    if (columns.empty()) throw std::invalid_argument("dummy family needs at least two levels");
    if (thresholds.size() != columns.size()) throw std::invalid_argument("dummy family: one threshold per column");
    return single_factor(std::make_shared<DummyFactor>(std::move(columns), std::move(thresholds)));
}

InstrumentalFamily build_spline_family(std::size_t column, std::size_t count)
{
    if (count < 2) throw std::invalid_argument("spline family needs at least one knot interval");
    return single_factor(std::make_shared<SplineFactor>(column, count));
}

InstrumentalFamily build_box_family(std::size_t column, std::size_t count, double smoothing_fraction)
{
    if (count < 1) throw std::invalid_argument("box family needs at least one cell");
    if (!(smoothing_fraction > 0.0 && smoothing_fraction < 0.5)) {
        throw std::invalid_argument("box smoothing fraction must lie in (0, 0.5)");
    }
    return single_factor(std::make_shared<BoxFactor>(column, count, smoothing_fraction));
}

// ------------------------------------------------------- InstrumentalFamily

InstrumentalFamily::InstrumentalFamily() : terms_{Term{}}, provenance_("constant") {}

InstrumentalFamily::InstrumentalFamily(std::vector<std::shared_ptr<const Factor>> factors, std::vector<Term> terms,
                                       std::string provenance)
    : factors_(std::move(factors)), terms_(std::move(terms)), provenance_(std::move(provenance))
{
    for (const auto& t : terms_) {
        for (auto [f, j] : t.parts) {
            if (f >= factors_.size() || j >= factors_[f]->size()) {
                throw std::invalid_argument("instrumental term refers to a missing factor");
            }
        }
    }
}

void InstrumentalFamily::evaluate(std::span<const double> z, std::span<double> out) const
{
    std::vector<std::vector<double>> vals(factors_.size());
    for (std::size_t f = 0; f < factors_.size(); ++f) {
        vals[f].resize(factors_[f]->size());
        factors_[f]->evaluate(z, vals[f]);
    }
    for (std::size_t t = 0; t < terms_.size(); ++t) {
        double v = terms_[t].scale;
        for (auto [f, j] : terms_[t].parts) v *= vals[f][j];
        out[t] = v;
    }
}

std::vector<double> InstrumentalFamily::evaluate(std::span<const double> z) const
{
    std::vector<double> out(size());
    evaluate(z, out);
    return out;
}

std::vector<Support> InstrumentalFamily::support(std::size_t j) const
{
    std::vector<Support> s;
    for (auto [f, k] : terms_.at(j).parts) {
        auto part = factors_[f]->support(k);
        s.insert(s.end(), part.begin(), part.end());
    }
    return s;
}

InstrumentalFamily InstrumentalFamily::subset(const std::vector<std::size_t>& keep) const
{
    std::vector<Term> terms;
    for (std::size_t j : keep) terms.push_back(terms_.at(j));
    return InstrumentalFamily(factors_, std::move(terms), provenance_);
}

InstrumentalFamily InstrumentalFamily::permuted(const std::vector<std::size_t>& order) const
{
    if (order.size() != terms_.size()) throw std::invalid_argument("permutation has wrong length");
    return subset(order);
}

InstrumentalFamily InstrumentalFamily::scaled(double factor) const
{
    if (!(factor > 0.0)) throw std::invalid_argument("scale factor must be positive");
    std::vector<Term> terms = terms_;
    for (auto& t : terms) t.scale *= factor;
    return InstrumentalFamily(factors_, std::move(terms), provenance_);
}

namespace {

// Appends the factors of every family to one list; returns each family's offset.
std::vector<std::size_t> merge_factors(const std::vector<InstrumentalFamily>& families,
                                       std::vector<std::shared_ptr<const Factor>>& factors)
{
    std::vector<std::size_t> offsets;
    for (const auto& fam : families) {
        offsets.push_back(factors.size());
        factors.insert(factors.end(), fam.factors().begin(), fam.factors().end());
    }
    return offsets;
}

std::vector<Term> cartesian(const std::vector<const InstrumentalFamily*>& fams, const std::vector<std::size_t>& offsets)
{
    std::vector<Term> acc{Term{}};
    for (std::size_t a = 0; a < fams.size(); ++a) {
        std::vector<Term> next;
        for (const auto& left : acc) {
            for (const auto& right : fams[a]->terms()) {
                Term t = left;
                t.scale *= right.scale;
                for (auto [f, j] : right.parts) t.parts.emplace_back(f + offsets[a], j);
                next.push_back(std::move(t));
            }
        }
        acc = std::move(next);
    }
    return acc;
}

std::string join_provenance(const std::string& op, const std::vector<InstrumentalFamily>& families)
{
    std::string s = op + "(";
    for (std::size_t i = 0; i < families.size(); ++i) {
        if (i) s += ", ";
        s += families[i].provenance();
    }
    return s + ")";
}

}  // namespace

InstrumentalFamily tensor_product(const std::vector<InstrumentalFamily>& families)
{
    if (families.empty()) return InstrumentalFamily();
    std::vector<std::shared_ptr<const Factor>> factors;
    auto offsets = merge_factors(families, factors);
    std::vector<const InstrumentalFamily*> ptrs;
    for (const auto& f : families) ptrs.push_back(&f);
    return InstrumentalFamily(std::move(factors), cartesian(ptrs, offsets), join_provenance("tensor", families));
}

InstrumentalFamily pairwise_product(const std::vector<InstrumentalFamily>& families)
{
    if (families.size() < 2) throw std::invalid_argument("pairwise product needs at least two covariates");
    if (families.size() == 2) return tensor_product(families);
    std::vector<std::shared_ptr<const Factor>> factors;
    auto offsets = merge_factors(families, factors);
    std::vector<Term> terms;
    for (std::size_t a = 0; a < families.size(); ++a) {
        for (std::size_t b = a + 1; b < families.size(); ++b) {
            auto pair_terms = cartesian({&families[a], &families[b]}, {offsets[a], offsets[b]});
            terms.insert(terms.end(), pair_terms.begin(), pair_terms.end());
        }
    }
    return InstrumentalFamily(std::move(factors), std::move(terms), join_provenance("pairwise", families));
}

// ------------------------------------------------------------------ Pruning

void check_coverage(const InstrumentalFamily& family, const Dataset& data, const Normalizer& norm)
{
    std::vector<std::size_t> uncovered;
    std::vector<double> z(data.d() + 1), g(family.size());
    for (std::size_t i = 0; i < data.n(); ++i) {
        norm.apply(data.row(i).x, z);
        family.evaluate(z, g);
        if (std::none_of(g.begin(), g.end(), [](double v) { return v > 0.0; })) uncovered.push_back(i);
    }
    if (!uncovered.empty()) {
        std::string msg = std::to_string(uncovered.size()) + " sample points activate no instrumental function";
        throw CoverageError(msg, std::move(uncovered));
    }
}

PruneResult prune_family(const InstrumentalFamily& family, const Dataset& data, const Normalizer& norm,
                         std::size_t min_activation)
{
    if (min_activation < 1) throw std::invalid_argument("min_activation must be at least 1");
    std::vector<std::size_t> counts(family.size(), 0);
    std::vector<double> z(data.d() + 1), g(family.size());
    for (std::size_t i = 0; i < data.n(); ++i) {
        norm.apply(data.row(i).x, z);
        family.evaluate(z, g);
        for (std::size_t j = 0; j < g.size(); ++j) {
            if (g[j] > 0.0) ++counts[j];
        }
    }
    std::vector<std::size_t> keep, dropped;
    for (std::size_t j = 0; j < counts.size(); ++j) {
        (counts[j] >= min_activation ? keep : dropped).push_back(j);
    }
    PruneResult res{dropped.empty() ? family : family.subset(keep), dropped};
    if (keep.empty()) throw CoverageError("pruning removed every instrumental function", {});
    check_coverage(res.family, data, norm);
    return res;
}

// ------------------------------------------------------------ Family specs

namespace {

FactorSpec parse_factor(std::string_view v)
{
    FactorSpec fs;
    std::string kind(v.substr(0, v.find(':')));
    if (kind == "spline") {
        fs.kind = FactorKind::Spline;
    } else if (kind == "box") {
        fs.kind = FactorKind::Box;
    } else if (kind == "indicator") {
        fs.kind = FactorKind::Indicator;
    } else {
        throw std::invalid_argument("unknown instrumental family '" + kind + "'");
    }
    if (auto pos = v.find(':'); pos != std::string_view::npos) {
        fs.count = static_cast<std::size_t>(std::stoul(std::string(v.substr(pos + 1))));
    }
    return fs;
}

std::string_view trim_ws(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

}  // namespace

FamilySpec parse_family_spec(std::string_view text)
{
    FamilySpec spec;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find_first_of(",;", start);
        std::string_view item = trim_ws(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
        start = end == std::string_view::npos ? text.size() + 1 : end + 1;
        if (item.empty()) continue;
        auto eq = item.find('=');
        if (eq == std::string_view::npos) throw std::invalid_argument("family spec item '" + std::string(item) + "' lacks '='");
        std::string key(trim_ws(item.substr(0, eq)));
        std::string val(trim_ws(item.substr(eq + 1)));
        if (key == "combine") {
            if (val == "tensor") spec.combine = CombineRule::Tensor;
            else if (val == "pairwise") spec.combine = CombineRule::Pairwise;
            else throw std::invalid_argument("unknown combine rule '" + val + "'");
        } else if (key == "normalizer") {
            if (val == "minmax") spec.normalizer = Normalizer::Kind::MinMax;
            else if (val == "pca") spec.normalizer = Normalizer::Kind::Pca;
            else throw std::invalid_argument("unknown normalizer '" + val + "'");
        } else if (key == "smoothing") {
            spec.box_smoothing = std::stod(val);
        } else if (key == "min_activation") {
            spec.min_activation = static_cast<std::size_t>(std::stoul(val));
        } else if (key == "spline_default") {
            spec.default_count = static_cast<std::size_t>(std::stoul(val));
        } else {
            spec.per_covariate[key] = parse_factor(val);
        }
    }
    return spec;
}

std::string to_string(const FamilySpec& spec)
{
    std::ostringstream os;
    for (const auto& [name, fs] : spec.per_covariate) {
        os << name << '=' << (fs.kind == FactorKind::Spline ? "spline" : fs.kind == FactorKind::Box ? "box" : "indicator");
        if (fs.count) os << ':' << fs.count;
        os << ',';
    }
    os << "combine=" << (spec.combine == CombineRule::Tensor ? "tensor" : "pairwise")
       << ",normalizer=" << (spec.normalizer == Normalizer::Kind::MinMax ? "minmax" : "pca")
       << ",spline_default=" << spec.default_count << ",smoothing=" << spec.box_smoothing
       << ",min_activation=" << spec.min_activation;
    return os.str();
}

FittedInstruments fit_instruments(const Dataset& data, const FamilySpec& spec)
{
    for (const auto& [name, fs] : spec.per_covariate) {
        bool found = std::any_of(data.groups().begin(), data.groups().end(),
                                 [&](const CovariateGroup& g) { return g.name == name; });
        if (!found) throw std::invalid_argument("family spec names unknown covariate '" + name + "'");
    }
    Normalizer norm = spec.normalizer == Normalizer::Kind::Pca ? Normalizer::fit_pca(data) : Normalizer::fit_minmax(data);

    std::vector<InstrumentalFamily> per_group;
    for (const auto& g : data.groups()) {
        auto it = spec.per_covariate.find(g.name);
        switch (g.kind) {
        case CovariateKind::Continuous: {
            FactorSpec fs = it != spec.per_covariate.end() ? it->second : FactorSpec{FactorKind::Spline, 0};
            std::size_t count = fs.count ? fs.count : spec.default_count;
            if (fs.kind == FactorKind::Spline) {
                per_group.push_back(build_spline_family(g.columns[0], count));
            } else if (fs.kind == FactorKind::Box) {
                per_group.push_back(build_box_family(g.columns[0], count, spec.box_smoothing));
            } else {
                throw std::invalid_argument("indicator family requested for continuous covariate " + g.name);
            }
            break;
        }
        case CovariateKind::Binary: {
            if (it != spec.per_covariate.end() && it->second.kind != FactorKind::Indicator) {
                throw std::invalid_argument("binary covariate " + g.name + " takes an indicator family");
            }
            std::size_t c = g.columns[0];
            per_group.push_back(build_indicator_family(c, {norm.minmax_image(c, 0.0), norm.minmax_image(c, 1.0)}));
            break;
        }
        case CovariateKind::Categorical: {
            if (it != spec.per_covariate.end() && it->second.kind != FactorKind::Indicator) {
                throw std::invalid_argument("categorical covariate " + g.name + " takes an indicator family");
            }
            std::vector<double> thresholds;
            for (std::size_t c : g.columns) {
                thresholds.push_back(0.5 * (norm.minmax_image(c, 0.0) + norm.minmax_image(c, 1.0)));
            }
            per_group.push_back(build_dummy_family(g.columns, thresholds));
            break;
        }
        }
    }
    InstrumentalFamily fam = (spec.combine == CombineRule::Pairwise && per_group.size() >= 2)
                                 ? pairwise_product(per_group)
                                 : tensor_product(per_group);
    if (spec.combine == CombineRule::Pairwise && per_group.size() < 2) {
        throw std::invalid_argument("pairwise combination needs at least two covariates");
    }
    PruneResult pr = prune_family(fam, data, norm, spec.min_activation);
    return FittedInstruments{std::move(norm), std::move(pr.family), std::move(pr.dropped)};
}

}  // namespace depbounds
