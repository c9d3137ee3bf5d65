#pragma once

#include <map>
#include <string>
#include <vector>

#include "fusemap/common.hpp"

namespace fusemap::csvio {

/// Minimal CSV table: header row plus string cells. All project file
/// formats round-trip through this and the typed readers below.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int col_index(const std::string& name) const;          // -1 if absent
  int col_index_required(const std::string& name) const; // throws
};

Table read_csv(const std::string& path);
Table parse_csv(const std::string& text, const std::string& origin = "<string>");
void write_csv(const std::string& path, const Table& t);

double to_double(const std::string& cell, const std::string& context);
long to_long(const std::string& cell, const std::string& context);

}  // namespace fusemap::csvio
