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

#ifndef SECREL_TABLE_HPP_
#define SECREL_TABLE_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace secrel {

using Row = std::vector<std::int64_t>;

// In-memory relation: ordered column names plus rows of 64-bit signed
// integers, the engine's only value type.
struct Table {
  std::vector<std::string> schema;
  std::vector<Row> rows;

  Table() = default;
  Table(std::vector<std::string> schema_in, std::vector<Row> rows_in = {})
      : schema(std::move(schema_in)), rows(std::move(rows_in)) {}

  std::size_t width() const { return schema.size(); }
  std::size_t size() const { return rows.size(); }

  // Index of a column name; fails with MissingColumn.
  std::size_t column_index(const std::string& name) const;

  bool operator==(const Table& other) const = default;
};

// Multiset equality on rows, schema order respected.
bool same_multiset(const Table& a, const Table& b);

// Canonical form: rows sorted lexicographically. Output files are written in
// this form so runs with different shuffle seeds produce identical bytes.
Table sorted_copy(const Table& table);

// CSV persistence. First line is the comma-separated header, then one row of
// decimal integers per line, newline terminated. Round trip is bit exact.
Table read_table(const std::string& path);
void write_table(const Table& table, const std::string& path);

Table parse_csv(const std::string& text, const std::string& origin = "<memory>");
std::string to_csv(const Table& table);

}  // namespace secrel

#endif  // SECREL_TABLE_HPP_
