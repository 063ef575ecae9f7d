#include "posthoc/csv_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <system_error>

#include "posthoc/errors.hpp"

namespace posthoc {

namespace {

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open file: " + path);
  return in;
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || text.empty()) {
    throw InputError("not a number: '" + std::string(text) + "'");
  }
  return value;
}

long long parse_integer(std::string_view text) {
  text = trim(text);
  long long value = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || text.empty()) {
    throw InputError("not an integer: '" + std::string(text) + "'");
  }
  return value;
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.emplace_back(trim(text.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::vector<double>> parse_csv_numbers(std::istream& in, bool header) {
  std::vector<std::vector<double>> rows;
  std::string line;
  bool skipped = !header;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (!skipped) {
      skipped = true;
      continue;
    }
    std::vector<double> row;
    for (const auto& field : split(line, ',')) {
      try {
        row.push_back(parse_double(field));
      } catch (const InputError& e) {
        throw InputError("malformed CSV at line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

PValueVector read_pvalues_csv(const std::string& path, bool header) {
  auto in = open_or_throw(path);
  std::vector<double> values;
  for (const auto& row : parse_csv_numbers(in, header)) {
    values.insert(values.end(), row.begin(), row.end());
  }
  return PValueVector(std::move(values));
}

Eigen::MatrixXd read_matrix_csv(const std::string& path, bool header) {
  auto in = open_or_throw(path);
  const auto rows = parse_csv_numbers(in, header);
  if (rows.empty()) throw InputError("empty matrix file: " + path);
  const auto n = rows.front().size();
  Eigen::MatrixXd data(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != n) {
      throw InputError("ragged matrix: row " + std::to_string(i + 1) + " has " +
                       std::to_string(rows[i].size()) + " columns, expected " + std::to_string(n));
    }
    for (std::size_t j = 0; j < n; ++j) {
      data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return data;
}

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& data) {
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      if (j > 0) out << ',';
      out << format_double(data(i, j));
    }
    out << '\n';
  }
}

}  // namespace posthoc
