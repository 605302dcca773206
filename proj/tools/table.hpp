#pragma once

// CSV tables with shortest round-trip number formatting, and the long-format reshape
// used for plotting.

#include "otto/error.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace otto::cli {

inline std::string format_number(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add(const std::vector<double>& values) {
    std::vector<std::string> r;
    r.reserve(values.size());
    for (double v : values) r.push_back(format_number(v));
    add_row(std::move(r));
  }

  void add_row(std::vector<std::string> r) {
    if (r.size() != columns.size()) raise_numeric("TableShape", "row width differs from the header");
    rows.push_back(std::move(r));
  }

  // Prepends a constant column (used for multi-seed sweeps).
  void prepend(const std::string& name, const std::string& value) {
    columns.insert(columns.begin(), name);
    for (auto& r : rows) r.insert(r.begin(), value);
  }

  void append(const Table& other) {
    if (columns.empty() && rows.empty()) columns = other.columns;
    if (other.columns != columns) raise_numeric("TableShape", "cannot append tables with different columns");
    rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  }

  void write(std::ostream& os) const {
    auto line = [&os](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
      os << '\n';
    };
    line(columns);
    for (const auto& r : rows) line(r);
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream in(line);
  std::string cell;
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline Table read_csv(std::istream& in) {
  Table t;
  std::string line;
  if (!std::getline(in, line)) raise_config("EmptyInput", "CSV input has no header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.columns = split_csv_line(line);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != t.columns.size()) raise_config("CsvShape", "row width differs from the header");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

// Long format: one row per (series, time, observable). "seed" and "path" identify
// series and are carried along; "t" is required; every other column is an observable.
inline Table plotdata(const Table& wide) {
  const auto find = [&](const std::string& c) {
    const auto it = std::find(wide.columns.begin(), wide.columns.end(), c);
    return it == wide.columns.end() ? -1 : static_cast<int>(it - wide.columns.begin());
  };
  const int t_col = find("t");
  if (t_col < 0) raise_config("MissingColumn", "results table has no 't' column");
  std::vector<int> keys, observables;
  for (const std::string k : {"seed", "path"})
    if (find(k) >= 0) keys.push_back(find(k));
  for (int c = 0; c < static_cast<int>(wide.columns.size()); ++c)
    if (c != t_col && std::find(keys.begin(), keys.end(), c) == keys.end()) observables.push_back(c);
  Table out;
  for (int k : keys) out.columns.push_back(wide.columns[k]);
  for (const char* c : {"observable", "t", "value"}) out.columns.push_back(c);
  // Series-major order: all rows of one observable before the next.
  for (int obs : observables)
    for (const auto& r : wide.rows) {
      std::vector<std::string> row;
      for (int k : keys) row.push_back(r[k]);
      row.push_back(wide.columns[obs]);
      row.push_back(r[t_col]);
      row.push_back(r[obs]);
      out.rows.push_back(std::move(row));
    }
  return out;
}

}  // namespace otto::cli
