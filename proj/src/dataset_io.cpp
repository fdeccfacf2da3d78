#include "depbounds/dataset_io.hpp"

#include "depbounds/errors.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace depbounds {

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line, char sep)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        std::size_t pos = line.find(sep, start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

bool parse_number(std::string_view s, double& out)
{
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

double parse_cell(std::string_view s, std::size_t row, const std::string& column)
{
    double v;
    if (!parse_number(s, v)) {
        throw ParseError(row, "non-numeric cell '" + std::string(s) + "' in column " + column);
    }
    return v;
}

bool parse_bool(std::string_view s)
{
    std::string v(trim(s));
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off" || v.empty()) return false;
    throw ParseError(0, "invalid boolean '" + v + "' in schema");
}

std::pair<double, double> parse_scaling(std::string_view s)
{
    auto parts = split(s, ',');
    double m, sd;
    if (parts.size() != 2 || !parse_number(parts[0], m) || !parse_number(parts[1], sd) || !(sd > 0.0)) {
        throw ParseError(0, "invalid scaling entry '" + std::string(s) + "'");
    }
    return {m, sd};
}

Schema parse_json_schema(std::string_view text)
{
    Schema schema;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("schema: ") + e.what());
    }
    if (!j.contains("columns") || !j["columns"].is_object()) throw ParseError(0, "schema: missing 'columns' object");
    for (auto& [name, kind] : j["columns"].items()) {
        schema.columns[name] = parse_covariate_kind(kind.get<std::string>());
    }
    if (j.contains("standardize")) schema.standardize = j["standardize"].get<bool>();
    if (j.contains("scaling")) {
        for (auto& [name, ms] : j["scaling"].items()) {
            if (!ms.is_array() || ms.size() != 2) throw ParseError(0, "schema: scaling entries are [mean, sd]");
            schema.scaling[name] = {ms[0].get<double>(), ms[1].get<double>()};
        }
    }
    return schema;
}

Schema parse_ini_schema(std::string_view text)
{
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in{std::string(text)};
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ParseError(0, std::string("schema: ") + e.message());
    }
    Schema schema;
    if (auto cols = tree.get_child_optional("columns")) {
        for (const auto& [name, node] : *cols) {
            schema.columns[name] = parse_covariate_kind(std::string(trim(node.data())));
        }
    } else {
        throw ParseError(0, "schema: missing [columns] section");
    }
    if (auto opts = tree.get_child_optional("options")) {
        if (auto s = opts->get_optional<std::string>("standardize")) schema.standardize = parse_bool(*s);
    }
    if (auto sc = tree.get_child_optional("scaling")) {
        for (const auto& [name, node] : *sc) schema.scaling[name] = parse_scaling(node.data());
    }
    return schema;
}

}  // namespace

std::string format_double(double v)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

Schema parse_schema(std::string_view text)
{
    std::string_view t = trim(text);
    while (!t.empty() && (t.front() == '\n')) t = trim(t.substr(1));
    if (!t.empty() && t.front() == '{') return parse_json_schema(t);
    return parse_ini_schema(text);
}

Schema load_schema(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ParseError(0, "cannot open schema " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_schema(ss.str());
}

Dataset load_dataset(std::istream& csv, const Schema& schema)
{
    std::string line;
    if (!std::getline(csv, line)) throw ParseError(0, "empty CSV");
    std::vector<std::string> header;
    for (auto cell : split(line, ',')) header.emplace_back(cell);

    int y_col = -1, delta_col = -1;
    std::vector<std::size_t> cov_cols;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "y") {
            y_col = static_cast<int>(c);
        } else if (header[c] == "delta") {
            delta_col = static_cast<int>(c);
        } else {
            if (!schema.columns.count(header[c])) {
                throw ParseError(0, "column '" + header[c] + "' not declared in schema");
            }
            cov_cols.push_back(c);
        }
    }
    if (y_col < 0) throw ParseError(0, "missing column y");
    if (delta_col < 0) throw ParseError(0, "missing column delta");
    for (const auto& [name, kind] : schema.columns) {
        if (std::find(header.begin(), header.end(), name) == header.end()) {
            throw ParseError(0, "missing column " + name);
        }
    }

    struct RawRow {
        double y;
        int delta;
        std::vector<std::string> cells;
    };
    std::vector<RawRow> raw;
    std::size_t row = 0;
    while (std::getline(csv, line)) {
        if (trim(line).empty()) continue;
        ++row;
        auto cells = split(line, ',');
        if (cells.size() != header.size()) {
            throw ParseError(row, "expected " + std::to_string(header.size()) + " cells, got " +
                                      std::to_string(cells.size()));
        }
        RawRow r;
        r.y = parse_cell(cells[static_cast<std::size_t>(y_col)], row, "y");
        if (r.y < 0.0) throw ParseError(row, "negative y");
        double dv = parse_cell(cells[static_cast<std::size_t>(delta_col)], row, "delta");
        if (dv != 0.0 && dv != 1.0) throw ParseError(row, "delta must be 0 or 1");
        r.delta = static_cast<int>(dv);
        for (std::size_t c : cov_cols) r.cells.emplace_back(cells[c]);
        raw.push_back(std::move(r));
    }
    if (raw.empty()) throw ParseError(0, "CSV has no data rows");

    const std::size_t n = raw.size();
    std::vector<CovariateGroup> groups;
    std::vector<std::vector<double>> numeric(cov_cols.size());
    std::size_t next_col = 1;
    for (std::size_t g = 0; g < cov_cols.size(); ++g) {
        CovariateGroup grp;
        grp.name = header[cov_cols[g]];
        grp.kind = schema.columns.at(grp.name);
        if (grp.kind == CovariateKind::Categorical) {
            for (const auto& r : raw) {
                const std::string& lab = r.cells[g];
                if (lab.empty()) throw ParseError(0, "empty category label in column " + grp.name);
                if (std::find(grp.levels.begin(), grp.levels.end(), lab) == grp.levels.end()) {
                    grp.levels.push_back(lab);
                }
            }
            if (grp.levels.size() < 2) throw ParseError(0, "categorical column " + grp.name + " has one level");
            for (std::size_t l = 1; l < grp.levels.size(); ++l) grp.columns.push_back(next_col++);
        } else {
            numeric[g].resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                double v = parse_cell(raw[i].cells[g], i + 1, grp.name);
                if (grp.kind == CovariateKind::Binary && v != 0.0 && v != 1.0) {
                    throw ParseError(i + 1, "binary column " + grp.name + " must be 0 or 1");
                }
                numeric[g][i] = v;
            }
            if (grp.kind == CovariateKind::Continuous) {
                if (auto it = schema.scaling.find(grp.name); it != schema.scaling.end()) {
                    grp.standardized = true;
                    grp.mean = it->second.first;
                    grp.sd = it->second.second;
                } else if (schema.standardize) {
                    if (n < 2) throw ParseError(0, "cannot standardize with fewer than 2 rows");
                    double mean = 0.0;
                    for (double v : numeric[g]) mean += v;
                    mean /= static_cast<double>(n);
                    double ss = 0.0;
                    for (double v : numeric[g]) ss += (v - mean) * (v - mean);
                    double sd = std::sqrt(ss / static_cast<double>(n - 1));
                    if (!(sd > 0.0)) throw ParseError(0, "cannot standardize constant column " + grp.name);
                    for (double& v : numeric[g]) v = (v - mean) / sd;
                    grp.standardized = true;
                    grp.mean = mean;
                    grp.sd = sd;
                }
            }
            grp.columns.push_back(next_col++);
        }
        groups.push_back(std::move(grp));
    }

    std::vector<Observation> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        Observation& o = rows[i];
        o.y = raw[i].y;
        o.delta = raw[i].delta;
        o.x.assign(next_col, 0.0);
        o.x[0] = 1.0;
        for (std::size_t g = 0; g < groups.size(); ++g) {
            const CovariateGroup& grp = groups[g];
            if (grp.kind == CovariateKind::Categorical) {
                auto pos = static_cast<std::size_t>(
                    std::find(grp.levels.begin(), grp.levels.end(), raw[i].cells[g]) - grp.levels.begin());
                if (pos > 0) o.x[grp.columns[pos - 1]] = 1.0;
            } else {
                o.x[grp.columns[0]] = numeric[g][i];
            }
        }
    }
    return Dataset(std::move(rows), std::move(groups));
}

Dataset load_dataset(const std::filesystem::path& csv, const Schema& schema)
{
    std::ifstream in(csv);
    if (!in) throw ParseError(0, "cannot open " + csv.string());
    return load_dataset(in, schema);
}

void write_dataset(const Dataset& data, std::ostream& csv, std::ostream& schema)
{
    csv << "y,delta";
    for (const auto& g : data.groups()) csv << ',' << g.name;
    csv << '\n';
    for (const auto& o : data.rows()) {
        csv << format_double(o.y) << ',' << o.delta;
        for (const auto& g : data.groups()) {
            csv << ',';
            if (g.kind == CovariateKind::Categorical) {
                std::size_t level = 0;
                for (std::size_t l = 0; l < g.columns.size(); ++l) {
                    if (o.x[g.columns[l]] == 1.0) level = l + 1;
                }
                csv << g.levels[level];
            } else {
                csv << format_double(o.x[g.columns[0]]);
            }
        }
        csv << '\n';
    }

    schema << "[columns]\n";
    for (const auto& g : data.groups()) schema << g.name << " = " << to_string(g.kind) << '\n';
    schema << "\n[options]\nstandardize = false\n";
    bool any = false;
    for (const auto& g : data.groups()) {
        if (!g.standardized) continue;
        if (!any) schema << "\n[scaling]\n";
        any = true;
        schema << g.name << " = " << format_double(g.mean) << ", " << format_double(g.sd) << '\n';
    }
}

}  // namespace depbounds
