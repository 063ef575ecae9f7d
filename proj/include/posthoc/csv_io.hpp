#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "posthoc/pvalues.hpp"

namespace posthoc {

// Shortest round-trip decimal representation, locale independent.
std::string format_double(double value);

// Locale-independent strict parse; throws InputError on trailing garbage.
double parse_double(std::string_view text);
long long parse_integer(std::string_view text);

// Numeric matrix from comma-separated text, one row per line. Blank lines are
// skipped; with `header` the first non-blank line is dropped.
std::vector<std::vector<double>> parse_csv_numbers(std::istream& in, bool header);

// P-values from a CSV file: all numbers in reading order, so one column or
// one row both work.
PValueVector read_pvalues_csv(const std::string& path, bool header = false);

// m rows, n columns.
Eigen::MatrixXd read_matrix_csv(const std::string& path, bool header = false);
void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& data);

std::vector<std::string> split(std::string_view text, char sep);

}  // namespace posthoc
