#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace depbounds {

// Malformed input file. row is the 1-based data row (0 for header or schema problems).
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t row, const std::string& what)
        : std::runtime_error("row " + std::to_string(row) + ": " + what), row_(row) {}
    std::size_t row() const { return row_; }

private:
    std::size_t row_;
};

class DataIntegrityError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class RangeError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class CoverageError : public std::runtime_error {
public:
    CoverageError(const std::string& what, std::vector<std::size_t> rows)
        : std::runtime_error(what), rows_(std::move(rows)) {}
    const std::vector<std::size_t>& uncovered_rows() const { return rows_; }

private:
    std::vector<std::size_t> rows_;
};

class NumericalFailure : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class BracketError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class CalibrationError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class NotSupported : public std::logic_error {
    using std::logic_error::logic_error;
};

}  // namespace depbounds
