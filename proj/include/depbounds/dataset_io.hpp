#pragma once

#include "depbounds/core_types.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace depbounds {

// Column kinds for the CSV covariates, read from a sidecar file.
//
//   [columns]
//   x1 = continuous
//   x2 = binary
//   [options]
//   standardize = true
//   [scaling]          ; columns already standardized: mean, sd
//   x1 = 0.5, 2.0
//
// The same content is accepted as JSON:
//   {"columns": {"x1": "continuous"}, "standardize": true, "scaling": {"x1": [0.5, 2.0]}}
struct Schema {
    std::map<std::string, CovariateKind> columns;
    bool standardize = false;
    std::map<std::string, std::pair<double, double>> scaling;
};

Schema parse_schema(std::string_view text);
Schema load_schema(const std::filesystem::path& path);

Dataset load_dataset(std::istream& csv, const Schema& schema);
Dataset load_dataset(const std::filesystem::path& csv, const Schema& schema);

// Writes the dataset in the input format. Reloading both outputs reproduces
// the dataset exactly, including recorded standardization parameters.
void write_dataset(const Dataset& data, std::ostream& csv, std::ostream& schema);

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

}  // namespace depbounds
