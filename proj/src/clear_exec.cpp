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

#include "secrel/clear_exec.hpp"

#include <algorithm>
#include <map>

namespace secrel {

bool filter_matches(std::int64_t value, Cmp cmp, std::int64_t constant) {
  switch (cmp) {
    case Cmp::Eq: return value == constant;
    case Cmp::Lt: return value < constant;
    case Cmp::Gt: return value > constant;
  }
  return false;
}

namespace {

Table project(const Table& in, const std::vector<std::string>& columns) {
  Table out(columns);
  std::vector<std::size_t> idx;
  idx.reserve(columns.size());
  for (const auto& c : columns) idx.push_back(in.column_index(c));
  out.rows.reserve(in.size());
  for (const auto& row : in.rows) {
    Row r;
    r.reserve(idx.size());
    for (std::size_t i : idx) r.push_back(row[i]);
    out.rows.push_back(std::move(r));
  }
  return out;
}

Table filter(const Table& in, const FilterParams& p) {
  Table out(in.schema);
  const std::size_t col = in.column_index(p.column);
  for (const auto& row : in.rows) {
    if (filter_matches(row[col], p.cmp, p.constant)) out.rows.push_back(row);
  }
  return out;
}

// Inner equi-join preserving duplicates. Sort-merge, so the output comes out
// key-sorted; public joins rely on this to skip oblivious sorts downstream.
Table join(const Table& left, const Table& right, const JoinParams& p,
           const std::vector<std::string>& out_schema) {
  const std::size_t lk = left.column_index(p.left_key);
  const std::size_t rk = right.column_index(p.right_key);
  std::vector<std::size_t> lorder(left.size()), rorder(right.size());
  for (std::size_t i = 0; i < lorder.size(); ++i) lorder[i] = i;
  for (std::size_t i = 0; i < rorder.size(); ++i) rorder[i] = i;
  std::stable_sort(lorder.begin(), lorder.end(), [&](auto a, auto b) {
    return left.rows[a][lk] < left.rows[b][lk];
  });
  std::stable_sort(rorder.begin(), rorder.end(), [&](auto a, auto b) {
    return right.rows[a][rk] < right.rows[b][rk];
  });
  Table out(out_schema);
  std::size_t i = 0, j = 0;
  while (i < lorder.size() && j < rorder.size()) {
    const std::int64_t lv = left.rows[lorder[i]][lk];
    const std::int64_t rv = right.rows[rorder[j]][rk];
    if (lv < rv) {
      ++i;
    } else if (rv < lv) {
      ++j;
    } else {
      std::size_t jend = j;
      while (jend < rorder.size() && right.rows[rorder[jend]][rk] == lv) ++jend;
      for (; i < lorder.size() && left.rows[lorder[i]][lk] == lv; ++i) {
        for (std::size_t jj = j; jj < jend; ++jj) {
          const Row& l = left.rows[lorder[i]];
          const Row& r = right.rows[rorder[jj]];
          Row row;
          row.reserve(out_schema.size());
          row.push_back(lv);
          for (std::size_t c = 0; c < l.size(); ++c) {
            if (c != lk) row.push_back(l[c]);
          }
          for (std::size_t c = 0; c < r.size(); ++c) {
            if (c != rk) row.push_back(r[c]);
          }
          out.rows.push_back(std::move(row));
        }
      }
      j = jend;
    }
  }
  return out;
}

Table aggregate(const Table& in, const AggregateParams& p,
                const std::vector<std::string>& out_schema) {
  std::vector<std::size_t> group_idx;
  for (const auto& g : p.group_by) group_idx.push_back(in.column_index(g));
  std::size_t agg_idx = 0;
  if (p.func == AggFunc::Sum) agg_idx = in.column_index(p.agg_col);

  // Ordered map keeps group output deterministic (ascending key order).
  std::map<Row, std::int64_t> groups;
  for (const auto& row : in.rows) {
    Row key;
    key.reserve(group_idx.size());
    for (std::size_t g : group_idx) key.push_back(row[g]);
    std::int64_t delta = p.func == AggFunc::Sum ? row[agg_idx] : 1;
    groups[std::move(key)] += delta;
  }
  Table out(out_schema);
  for (const auto& [key, value] : groups) {
    Row row = key;
    row.push_back(value);
    out.rows.push_back(std::move(row));
  }
  return out;
}

Table concat(const std::vector<const Table*>& inputs) {
  Table out(inputs[0]->schema);
  for (const Table* t : inputs) {
    out.rows.insert(out.rows.end(), t->rows.begin(), t->rows.end());
  }
  return out;
}

Table distinct(const Table& in) {
  Table out(in.schema);
  out.rows = in.rows;
  std::sort(out.rows.begin(), out.rows.end());
  out.rows.erase(std::unique(out.rows.begin(), out.rows.end()), out.rows.end());
  return out;
}

}  // namespace

Table run_clear_step(const OpNode& node, const std::vector<const Table*>& inputs) {
  switch (node.kind) {
    case OpKind::Input:
      fail(ErrorCode::kInternal, "input nodes are materialized, not executed");
    case OpKind::Concat:
      return concat(inputs);
    case OpKind::Project:
      return project(*inputs[0], node.params_as<ProjectParams>().columns);
    case OpKind::Filter:
      return filter(*inputs[0], node.params_as<FilterParams>());
    case OpKind::Join:
      return join(*inputs[0], *inputs[1], node.params_as<JoinParams>(),
                  node.out_meta.names());
    case OpKind::Aggregate:
      return aggregate(*inputs[0], node.params_as<AggregateParams>(),
                       node.out_meta.names());
    case OpKind::Multiply: {
      const auto& p = node.params_as<MultiplyParams>();
      const Table& in = *inputs[0];
      const std::size_t a = in.column_index(p.lhs);
      const std::size_t b = in.column_index(p.rhs);
      Table out(node.out_meta.names());
      for (const auto& row : in.rows) {
        Row r = row;
        r.push_back(row[a] * row[b]);
        out.rows.push_back(std::move(r));
      }
      return out;
    }
    case OpKind::Divide: {
      const auto& p = node.params_as<DivideParams>();
      const Table& in = *inputs[0];
      const std::size_t num = in.column_index(p.numerator);
      const std::size_t den = in.column_index(p.divisor);
      Table out(node.out_meta.names());
      for (std::size_t i = 0; i < in.rows.size(); ++i) {
        const Row& row = in.rows[i];
        if (row[den] == 0) {
          fail(ErrorCode::kDivisionByZero,
               "node '" + node.label + "': divisor '" + p.divisor +
                   "' is zero in row " + std::to_string(i));
        }
        Row r = row;
        r.push_back(row[num] / row[den]);  // truncates toward zero
        out.rows.push_back(std::move(r));
      }
      return out;
    }
    case OpKind::ScalarMul: {
      const auto& p = node.params_as<ScalarMulParams>();
      const Table& in = *inputs[0];
      const std::size_t src = in.column_index(p.source);
      Table out(node.out_meta.names());
      for (const auto& row : in.rows) {
        Row r = row;
        r.push_back(row[src] * p.factor);
        out.rows.push_back(std::move(r));
      }
      return out;
    }
    case OpKind::Enumerate: {
      const Table& in = *inputs[0];
      Table out(node.out_meta.names());
      for (std::size_t i = 0; i < in.rows.size(); ++i) {
        Row r = in.rows[i];
        r.push_back(static_cast<std::int64_t>(i));
        out.rows.push_back(std::move(r));
      }
      return out;
    }
    case OpKind::SortBy: {
      const auto& p = node.params_as<SortByParams>();
      const Table& in = *inputs[0];
      const std::size_t key = in.column_index(p.column);
      Table out = in;
      std::stable_sort(out.rows.begin(), out.rows.end(),
                       [key](const Row& a, const Row& b) { return a[key] < b[key]; });
      return out;
    }
    case OpKind::Distinct:
      return distinct(*inputs[0]);
    case OpKind::Output:
      return *inputs[0];
  }
  fail(ErrorCode::kInternal, "unhandled op kind");
}

std::map<std::string, Table> oracle_execute(
    const QueryDag& dag, const std::map<std::string, Table>& inputs) {
  std::map<NodeId, Table> values;
  std::map<std::string, Table> outputs;
  for (NodeId id : dag.topo_order()) {
    const OpNode& node = dag.node(id);
    if (node.kind == OpKind::Input) {
      auto it = inputs.find(node.label);
      if (it == inputs.end()) {
        fail(ErrorCode::kMissingInput,
             "no table supplied for input '" + node.label + "'");
      }
      if (it->second.schema != node.out_meta.names()) {
        fail(ErrorCode::kShapeMismatch,
             "input '" + node.label + "' schema does not match declaration");
      }
      values[id] = it->second;
      continue;
    }
    std::vector<const Table*> ins;
    for (NodeId in : node.inputs) ins.push_back(&values.at(in));
    values[id] = run_clear_step(node, ins);
    if (node.kind == OpKind::Output) {
      outputs[node.params_as<OutputParams>().name] = values[id];
    }
  }
  return outputs;
}

}  // namespace secrel
