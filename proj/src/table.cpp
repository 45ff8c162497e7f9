/*
 * Copyright 2026 the secrel authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "secrel/table.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "secrel/common.hpp"

namespace secrel {

std::size_t Table::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (schema[i] == name) return i;
  }
  fail(ErrorCode::kMissingColumn, "no column '" + name + "' in table");
}

bool same_multiset(const Table& a, const Table& b) {
  if (a.schema != b.schema || a.rows.size() != b.rows.size()) return false;
  auto ra = a.rows;
  auto rb = b.rows;
  std::sort(ra.begin(), ra.end());
  std::sort(rb.begin(), rb.end());
  return ra == rb;
}

Table sorted_copy(const Table& table) {
  Table out = table;
  std::sort(out.rows.begin(), out.rows.end());
  return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::int64_t parse_cell(const std::string& text, std::size_t line_no,
                        const std::string& origin) {
  std::int64_t value = 0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || text.empty()) {
    fail(ErrorCode::kParseError, origin + ":" + std::to_string(line_no) +
                                     ": not an integer: '" + text + "'");
  }
  return value;
}

}  // namespace

Table parse_csv(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) {
    fail(ErrorCode::kParseError, origin + ": empty file, header expected");
  }
  Table table;
  table.schema = split_line(line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (fields.size() != table.schema.size()) {
      fail(ErrorCode::kArityMismatch,
           origin + ":" + std::to_string(line_no) + ": expected " +
               std::to_string(table.schema.size()) + " fields, got " +
               std::to_string(fields.size()));
    }
    Row row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(parse_cell(f, line_no, origin));
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string to_csv(const Table& table) {
  std::ostringstream out;
  for (std::size_t i = 0; i < table.schema.size(); ++i) {
    if (i) out << ',';
    out << table.schema[i];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << row[i];
    }
    out << '\n';
  }
  return out.str();
}

Table read_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kMissingInput, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), path);
}

void write_table(const Table& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kMissingInput, "cannot write " + path);
  out << to_csv(table);
}

}  // namespace secrel
