#include "fusemap/csvio.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace fusemap {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::string(buf);
}

}  // namespace fusemap

namespace fusemap::csvio {

int Table::col_index(const std::string& name) const {
  for (size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return static_cast<int>(i);
  return -1;
}

int Table::col_index_required(const std::string& name) const {
  int idx = col_index(name);
  if (idx < 0) throw ValidationError("missing required column '" + name + "'");
  return idx;
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.pop_back();
    size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos)
      s.clear();
    else if (b > 0)
      s = s.substr(b);
  }
  return out;
}

}  // namespace

Table parse_csv(const std::string& text, const std::string& origin) {
  Table t;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_commas(line);
    if (t.columns.empty()) {
      t.columns = cells;
      continue;
    }
    if (cells.size() != t.columns.size())
      throw ParseError(origin + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(t.columns.size()) + " cells, got " + std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
  }
  if (t.columns.empty()) throw ParseError(origin + ": no header row");
  return t;
}

Table read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_csv(ss.str(), path);
}

void write_csv(const std::string& path, const Table& t) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path + "'");
  for (size_t i = 0; i < t.columns.size(); ++i) f << (i ? "," : "") << t.columns[i];
  f << "\n";
  for (const auto& row : t.rows) {
    for (size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << row[i];
    f << "\n";
  }
  if (!f) throw IoError("write failed for '" + path + "'");
}

double to_double(const std::string& cell, const std::string& context) {
  try {
    size_t pos = 0;
    double v = std::stod(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw ParseError(context + ": not a number: '" + cell + "'");
  }
}

long to_long(const std::string& cell, const std::string& context) {
  try {
    size_t pos = 0;
    long v = std::stol(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw ParseError(context + ": not an integer: '" + cell + "'");
  }
}

}  // namespace fusemap::csvio
