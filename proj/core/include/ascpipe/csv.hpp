#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace ascpipe::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index by name, -1 if absent.
  int column(const std::string& name) const;
  int require_column(const std::string& name) const;
};

Table read_file(const std::string& path);
Table read_string(const std::string& text);

void write_file(const std::string& path, const Table& table);

// Deterministic float formatting: shortest round-trip representation.
std::string format_double(double v);

double parse_double(const std::string& cell, const std::string& context);
int parse_int(const std::string& cell, const std::string& context);

}  // namespace ascpipe::csv
