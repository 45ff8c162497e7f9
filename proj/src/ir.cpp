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

#include "secrel/ir.hpp"

#include <algorithm>
#include <deque>

#include "json.hpp"

namespace secrel {

using nlohmann::json;

TrustSet TrustSet::full(int n_parties) {
  TrustSet s;
  for (int i = 0; i < n_parties; ++i) s.insert(i);
  return s;
}

TrustSet TrustSet::intersect(const TrustSet& other) const {
  TrustSet s;
  s.bits_ = bits_ & other.bits_;
  return s;
}

TrustSet TrustSet::unite(const TrustSet& other) const {
  TrustSet s;
  s.bits_ = bits_ | other.bits_;
  return s;
}

std::vector<int> TrustSet::members() const {
  std::vector<int> out;
  for (int i = 0; i < 32; ++i) {
    if (bits_ & (1u << i)) out.push_back(i);
  }
  return out;
}

int TrustSet::lowest() const {
  for (int i = 0; i < 32; ++i) {
    if (bits_ & (1u << i)) return i;
  }
  return -1;
}

int RelationMeta::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<std::string> RelationMeta::names() const {
  std::vector<std::string> out;
  out.reserve(columns.size());
  for (const auto& c : columns) out.push_back(c.name);
  return out;
}

const char* op_kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::Input: return "input";
    case OpKind::Concat: return "concat";
    case OpKind::Project: return "project";
    case OpKind::Filter: return "filter";
    case OpKind::Join: return "join";
    case OpKind::Aggregate: return "aggregate";
    case OpKind::Multiply: return "multiply";
    case OpKind::Divide: return "divide";
    case OpKind::ScalarMul: return "scalar_mul";
    case OpKind::Enumerate: return "enumerate";
    case OpKind::SortBy: return "sort_by";
    case OpKind::Distinct: return "distinct";
    case OpKind::Output: return "output";
  }
  return "?";
}

const char* exec_kind_name(ExecKind kind) {
  switch (kind) {
    case ExecKind::Unassigned: return "unassigned";
    case ExecKind::Clear: return "clear";
    case ExecKind::Mpc: return "mpc";
    case ExecKind::HybridJoin: return "hybrid_join";
    case ExecKind::PublicJoin: return "public_join";
    case ExecKind::HybridAgg: return "hybrid_agg";
  }
  return "?";
}

const OpNode& QueryDag::node(NodeId id) const {
  auto it = nodes.find(id);
  if (it == nodes.end())
    fail(ErrorCode::kUnknownNode, "no node with id " + std::to_string(id));
  return it->second;
}

OpNode& QueryDag::node(NodeId id) {
  auto it = nodes.find(id);
  if (it == nodes.end())
    fail(ErrorCode::kUnknownNode, "no node with id " + std::to_string(id));
  return it->second;
}

int QueryDag::party_index(const std::string& name) const {
  for (const auto& p : parties) {
    if (p.name == name) return p.id;
  }
  return -1;
}

std::vector<NodeId> QueryDag::topo_order() const {
  std::map<NodeId, int> pending;
  std::map<NodeId, std::vector<NodeId>> out_edges;
  for (const auto& [id, node] : nodes) {
    pending[id] = static_cast<int>(node.inputs.size());
    for (NodeId in : node.inputs) out_edges[in].push_back(id);
  }
  // Ready set kept ordered by id for deterministic traversal.
  std::set<NodeId> ready;
  for (const auto& [id, count] : pending) {
    if (count == 0) ready.insert(id);
  }
  std::vector<NodeId> order;
  order.reserve(nodes.size());
  while (!ready.empty()) {
    NodeId id = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(id);
    for (NodeId next : out_edges[id]) {
      if (--pending[next] == 0) ready.insert(next);
    }
  }
  if (order.size() != nodes.size()) {
    for (const auto& [id, count] : pending) {
      if (count > 0 && !nodes.at(id).inputs.empty()) {
        fail(ErrorCode::kCycleDetected,
             "node '" + nodes.at(id).label + "' lies on a cycle");
      }
    }
    fail(ErrorCode::kCycleDetected, "graph contains a cycle");
  }
  return order;
}

std::vector<NodeId> QueryDag::output_nodes() const {
  std::vector<NodeId> out;
  for (const auto& [id, node] : nodes) {
    if (node.kind == OpKind::Output) out.push_back(id);
  }
  return out;
}

std::map<NodeId, std::vector<NodeId>> QueryDag::consumers() const {
  std::map<NodeId, std::vector<NodeId>> out;
  for (const auto& [id, node] : nodes) {
    out.emplace(id, std::vector<NodeId>{});
  }
  for (const auto& [id, node] : nodes) {
    for (NodeId in : node.inputs) out[in].push_back(id);
  }
  return out;
}

NodeId QueryDag::fresh_id() const {
  return nodes.empty() ? 0 : nodes.rbegin()->first + 1;
}

void QueryDag::prune_dead_nodes() {
  std::set<NodeId> live;
  std::deque<NodeId> queue;
  for (NodeId id : output_nodes()) {
    live.insert(id);
    queue.push_back(id);
  }
  while (!queue.empty()) {
    NodeId id = queue.front();
    queue.pop_front();
    for (NodeId in : nodes.at(id).inputs) {
      if (live.insert(in).second) queue.push_back(in);
    }
  }
  for (auto it = nodes.begin(); it != nodes.end();) {
    if (!live.count(it->first)) {
      it = nodes.erase(it);
    } else {
      ++it;
    }
  }
}

namespace {

void require(bool cond, ErrorCode code, const std::string& message) {
  if (!cond) fail(code, message);
}

void check_unique_names(const std::vector<std::string>& names,
                        const std::string& where) {
  std::set<std::string> seen;
  for (const auto& n : names) {
    require(seen.insert(n).second, ErrorCode::kDuplicateColumn,
            where + ": duplicate column '" + n + "'");
  }
}

std::size_t need_column(const RelationMeta& meta, const std::string& name,
                        const std::string& where) {
  int idx = meta.column_index(name);
  require(idx >= 0, ErrorCode::kUnknownColumn,
          where + ": no column '" + name + "' in input schema");
  return static_cast<std::size_t>(idx);
}

}  // namespace

std::vector<std::string> infer_out_columns(
    const OpNode& node, const std::vector<const RelationMeta*>& inputs) {
  const std::string where = "node '" + node.label + "'";
  switch (node.kind) {
    case OpKind::Input:
      return node.out_meta.names();
    case OpKind::Concat: {
      const auto base = inputs[0]->names();
      for (std::size_t i = 1; i < inputs.size(); ++i) {
        require(inputs[i]->width() == base.size(), ErrorCode::kArityMismatch,
                where + ": concat inputs have different widths");
        require(inputs[i]->names() == base, ErrorCode::kUnknownColumn,
                where + ": concat inputs have different column names");
      }
      return base;
    }
    case OpKind::Project: {
      const auto& p = node.params_as<ProjectParams>();
      require(!p.columns.empty(), ErrorCode::kUnknownColumn,
              where + ": projection keeps no columns");
      for (const auto& c : p.columns) need_column(*inputs[0], c, where);
      check_unique_names(p.columns, where);
      return p.columns;
    }
    case OpKind::Filter: {
      const auto& p = node.params_as<FilterParams>();
      need_column(*inputs[0], p.column, where);
      return inputs[0]->names();
    }
    case OpKind::Join: {
      const auto& p = node.params_as<JoinParams>();
      need_column(*inputs[0], p.left_key, where);
      need_column(*inputs[1], p.right_key, where);
      std::vector<std::string> out{p.left_key};
      for (const auto& c : inputs[0]->names()) {
        if (c != p.left_key) out.push_back(c);
      }
      for (const auto& c : inputs[1]->names()) {
        if (c != p.right_key) out.push_back(c);
      }
      check_unique_names(out, where);
      return out;
    }
    case OpKind::Aggregate: {
      const auto& p = node.params_as<AggregateParams>();
      for (const auto& g : p.group_by) need_column(*inputs[0], g, where);
      if (p.func == AggFunc::Sum) need_column(*inputs[0], p.agg_col, where);
      std::vector<std::string> out = p.group_by;
      out.push_back(p.out_col);
      check_unique_names(out, where);
      return out;
    }
    case OpKind::Multiply: {
      const auto& p = node.params_as<MultiplyParams>();
      need_column(*inputs[0], p.lhs, where);
      need_column(*inputs[0], p.rhs, where);
      auto out = inputs[0]->names();
      out.push_back(p.out_col);
      check_unique_names(out, where);
      return out;
    }
    case OpKind::Divide: {
      const auto& p = node.params_as<DivideParams>();
      need_column(*inputs[0], p.numerator, where);
      need_column(*inputs[0], p.divisor, where);
      auto out = inputs[0]->names();
      out.push_back(p.out_col);
      check_unique_names(out, where);
      return out;
    }
    case OpKind::ScalarMul: {
      const auto& p = node.params_as<ScalarMulParams>();
      need_column(*inputs[0], p.source, where);
      auto out = inputs[0]->names();
      out.push_back(p.out_col);
      check_unique_names(out, where);
      return out;
    }
    case OpKind::Enumerate: {
      const auto& p = node.params_as<EnumerateParams>();
      auto out = inputs[0]->names();
      out.push_back(p.out_col);
      check_unique_names(out, where);
      return out;
    }
    case OpKind::SortBy: {
      const auto& p = node.params_as<SortByParams>();
      need_column(*inputs[0], p.column, where);
      return inputs[0]->names();
    }
    case OpKind::Distinct:
      return inputs[0]->names();
    case OpKind::Output:
      return inputs[0]->names();
  }
  fail(ErrorCode::kInternal, "unhandled op kind");
}

std::map<std::size_t, std::set<std::pair<std::size_t, std::size_t>>> column_deps(
    const QueryDag& dag, const OpNode& node) {
  using DepSet = std::set<std::pair<std::size_t, std::size_t>>;
  std::map<std::size_t, DepSet> deps;
  std::vector<const RelationMeta*> ins;
  for (NodeId in : node.inputs) ins.push_back(&dag.node(in).out_meta);
  auto in_col = [&](std::size_t input, const std::string& name) {
    return std::make_pair(input, need_column(*ins[input], name, node.label));
  };
  const std::size_t width = node.out_meta.width();
  switch (node.kind) {
    case OpKind::Input:
      break;
    case OpKind::Concat:
      for (std::size_t c = 0; c < width; ++c) {
        for (std::size_t i = 0; i < ins.size(); ++i) deps[c].insert({i, c});
      }
      break;
    case OpKind::Project:
      for (std::size_t c = 0; c < width; ++c) {
        deps[c].insert(in_col(0, node.out_meta.columns[c].name));
      }
      break;
    case OpKind::Filter: {
      const auto& p = node.params_as<FilterParams>();
      auto pred = in_col(0, p.column);
      for (std::size_t c = 0; c < width; ++c) {
        deps[c].insert({0, c});
        deps[c].insert(pred);
      }
      break;
    }
    case OpKind::Join: {
      const auto& p = node.params_as<JoinParams>();
      auto lk = in_col(0, p.left_key);
      auto rk = in_col(1, p.right_key);
      std::size_t c = 0;
      deps[c].insert(lk);
      deps[c].insert(rk);
      ++c;
      for (std::size_t i = 0; i < ins[0]->width(); ++i) {
        if (ins[0]->columns[i].name == p.left_key) continue;
        deps[c].insert({0, i});
        deps[c].insert(lk);
        deps[c].insert(rk);
        ++c;
      }
      for (std::size_t i = 0; i < ins[1]->width(); ++i) {
        if (ins[1]->columns[i].name == p.right_key) continue;
        deps[c].insert({1, i});
        deps[c].insert(lk);
        deps[c].insert(rk);
        ++c;
      }
      break;
    }
    case OpKind::Aggregate: {
      const auto& p = node.params_as<AggregateParams>();
      for (std::size_t g = 0; g < p.group_by.size(); ++g) {
        deps[g].insert(in_col(0, p.group_by[g]));
      }
      // The aggregated value depends on the aggregated column and on every
      // group-by column, since those decide how rows are combined. A count
      // with no groups depends on the whole row.
      DepSet value;
      if (p.func == AggFunc::Sum) value.insert(in_col(0, p.agg_col));
      for (const auto& g : p.group_by) value.insert(in_col(0, g));
      if (value.empty()) {
        for (std::size_t i = 0; i < ins[0]->width(); ++i) value.insert({0, i});
      }
      deps[p.group_by.size()] = std::move(value);
      break;
    }
    case OpKind::Multiply: {
      const auto& p = node.params_as<MultiplyParams>();
      for (std::size_t c = 0; c + 1 < width; ++c) deps[c].insert({0, c});
      deps[width - 1].insert(in_col(0, p.lhs));
      deps[width - 1].insert(in_col(0, p.rhs));
      break;
    }
    case OpKind::Divide: {
      const auto& p = node.params_as<DivideParams>();
      for (std::size_t c = 0; c + 1 < width; ++c) deps[c].insert({0, c});
      deps[width - 1].insert(in_col(0, p.numerator));
      deps[width - 1].insert(in_col(0, p.divisor));
      break;
    }
    case OpKind::ScalarMul: {
      const auto& p = node.params_as<ScalarMulParams>();
      for (std::size_t c = 0; c + 1 < width; ++c) deps[c].insert({0, c});
      deps[width - 1].insert(in_col(0, p.source));
      break;
    }
    case OpKind::Enumerate:
      // The index column reflects row order, which every input column can
      // influence upstream; treat it as depending on the whole row.
      for (std::size_t c = 0; c + 1 < width; ++c) deps[c].insert({0, c});
      for (std::size_t i = 0; i < ins[0]->width(); ++i) {
        deps[width - 1].insert({0, i});
      }
      break;
    case OpKind::SortBy: {
      const auto& p = node.params_as<SortByParams>();
      auto key = in_col(0, p.column);
      for (std::size_t c = 0; c < width; ++c) {
        deps[c].insert({0, c});
        deps[c].insert(key);
      }
      break;
    }
    case OpKind::Distinct:
      // Row survival depends on every column.
      for (std::size_t c = 0; c < width; ++c) {
        for (std::size_t i = 0; i < ins[0]->width(); ++i) deps[c].insert({0, i});
      }
      break;
    case OpKind::Output:
      for (std::size_t c = 0; c < width; ++c) deps[c].insert({0, c});
      break;
  }
  return deps;
}

// ---------------------------------------------------------------------------
// Document parsing and serialization
// ---------------------------------------------------------------------------

namespace {

Cmp parse_cmp(const std::string& s, const std::string& where) {
  if (s == "==") return Cmp::Eq;
  if (s == "<") return Cmp::Lt;
  if (s == ">") return Cmp::Gt;
  fail(ErrorCode::kParseError, where + ": bad comparator '" + s + "'");
}

const char* cmp_name(Cmp c) {
  switch (c) {
    case Cmp::Eq: return "==";
    case Cmp::Lt: return "<";
    case Cmp::Gt: return ">";
  }
  return "?";
}

OpKind parse_kind(const std::string& s, const std::string& where) {
  static const std::map<std::string, OpKind> kKinds = {
      {"input", OpKind::Input},         {"concat", OpKind::Concat},
      {"project", OpKind::Project},     {"filter", OpKind::Filter},
      {"join", OpKind::Join},           {"aggregate", OpKind::Aggregate},
      {"multiply", OpKind::Multiply},   {"divide", OpKind::Divide},
      {"scalar_mul", OpKind::ScalarMul},{"enumerate", OpKind::Enumerate},
      {"sort_by", OpKind::SortBy},      {"distinct", OpKind::Distinct},
      {"output", OpKind::Output},
  };
  auto it = kKinds.find(s);
  if (it == kKinds.end())
    fail(ErrorCode::kParseError, where + ": unknown op kind '" + s + "'");
  return it->second;
}

int resolve_party(const QueryDag& dag, const std::string& name,
                  const std::string& where) {
  int idx = dag.party_index(name);
  require(idx >= 0, ErrorCode::kUnknownParty,
          where + ": unknown party '" + name + "'");
  return idx;
}

TrustSet parse_trust(const QueryDag& dag, const json& arr,
                     const std::string& where) {
  TrustSet t;
  for (const auto& name : arr) {
    t.insert(resolve_party(dag, name.get<std::string>(), where));
  }
  return t;
}

json trust_to_json(const QueryDag& dag, const TrustSet& t) {
  json arr = json::array();
  for (int p : t.members()) arr.push_back(dag.parties[p].name);
  return arr;
}

OpParams parse_params(const QueryDag& dag, OpKind kind, const json& node_doc,
                      const std::string& where) {
  const json params = node_doc.value("params", json::object());
  switch (kind) {
    case OpKind::Input: {
      require(node_doc.contains("at"), ErrorCode::kParseError,
              where + ": input needs 'at'");
      return InputParams{
          resolve_party(dag, node_doc.at("at").get<std::string>(), where)};
    }
    case OpKind::Concat:
      return ConcatParams{};
    case OpKind::Project:
      return ProjectParams{params.at("columns").get<std::vector<std::string>>()};
    case OpKind::Filter:
      return FilterParams{params.at("column").get<std::string>(),
                          parse_cmp(params.at("op").get<std::string>(), where),
                          params.at("value").get<std::int64_t>()};
    case OpKind::Join:
      return JoinParams{params.at("left_key").get<std::string>(),
                        params.at("right_key").get<std::string>()};
    case OpKind::Aggregate: {
      AggregateParams p;
      const std::string func = params.at("func").get<std::string>();
      if (func == "sum") {
        p.func = AggFunc::Sum;
        p.agg_col = params.at("over").get<std::string>();
      } else if (func == "count") {
        p.func = AggFunc::Count;
      } else {
        fail(ErrorCode::kParseError, where + ": bad aggregate func '" + func + "'");
      }
      p.group_by = params.value("group", std::vector<std::string>{});
      p.out_col = params.at("as").get<std::string>();
      return p;
    }
    case OpKind::Multiply:
      return MultiplyParams{params.at("as").get<std::string>(),
                            params.at("lhs").get<std::string>(),
                            params.at("rhs").get<std::string>()};
    case OpKind::Divide:
      return DivideParams{params.at("as").get<std::string>(),
                          params.at("num").get<std::string>(),
                          params.at("den").get<std::string>()};
    case OpKind::ScalarMul:
      return ScalarMulParams{params.at("as").get<std::string>(),
                             params.at("src").get<std::string>(),
                             params.at("factor").get<std::int64_t>()};
    case OpKind::Enumerate:
      return EnumerateParams{params.at("as").get<std::string>()};
    case OpKind::SortBy:
      return SortByParams{params.at("column").get<std::string>()};
    case OpKind::Distinct:
      return DistinctParams{};
    case OpKind::Output: {
      require(node_doc.contains("to"), ErrorCode::kParseError,
              where + ": output needs 'to'");
      OutputParams p;
      for (const auto& name : node_doc.at("to")) {
        p.recipients.push_back(
            resolve_party(dag, name.get<std::string>(), where));
      }
      p.name = params.value("name", std::string{});
      return p;
    }
  }
  fail(ErrorCode::kInternal, "unhandled op kind");
}

json params_to_json(const QueryDag& dag, const OpNode& node, json& node_doc) {
  json params = json::object();
  switch (node.kind) {
    case OpKind::Input:
      node_doc["at"] = dag.parties[node.params_as<InputParams>().party].name;
      break;
    case OpKind::Concat:
    case OpKind::Distinct:
      break;
    case OpKind::Project:
      params["columns"] = node.params_as<ProjectParams>().columns;
      break;
    case OpKind::Filter: {
      const auto& p = node.params_as<FilterParams>();
      params["column"] = p.column;
      params["op"] = cmp_name(p.cmp);
      params["value"] = p.constant;
      break;
    }
    case OpKind::Join: {
      const auto& p = node.params_as<JoinParams>();
      params["left_key"] = p.left_key;
      params["right_key"] = p.right_key;
      break;
    }
    case OpKind::Aggregate: {
      const auto& p = node.params_as<AggregateParams>();
      params["func"] = p.func == AggFunc::Sum ? "sum" : "count";
      params["group"] = p.group_by;
      if (p.func == AggFunc::Sum) params["over"] = p.agg_col;
      params["as"] = p.out_col;
      break;
    }
    case OpKind::Multiply: {
      const auto& p = node.params_as<MultiplyParams>();
      params["as"] = p.out_col;
      params["lhs"] = p.lhs;
      params["rhs"] = p.rhs;
      break;
    }
    case OpKind::Divide: {
      const auto& p = node.params_as<DivideParams>();
      params["as"] = p.out_col;
      params["num"] = p.numerator;
      params["den"] = p.divisor;
      break;
    }
    case OpKind::ScalarMul: {
      const auto& p = node.params_as<ScalarMulParams>();
      params["as"] = p.out_col;
      params["src"] = p.source;
      params["factor"] = p.factor;
      break;
    }
    case OpKind::Enumerate:
      params["as"] = node.params_as<EnumerateParams>().out_col;
      break;
    case OpKind::SortBy:
      params["column"] = node.params_as<SortByParams>().column;
      break;
    case OpKind::Output: {
      const auto& p = node.params_as<OutputParams>();
      json to = json::array();
      for (int r : p.recipients) to.push_back(dag.parties[r].name);
      node_doc["to"] = to;
      params["name"] = p.name;
      break;
    }
  }
  return params;
}

void check_arity(const OpNode& node) {
  const std::string where = "node '" + node.label + "'";
  const std::size_t n = node.inputs.size();
  switch (node.kind) {
    case OpKind::Input:
      require(n == 0, ErrorCode::kArityMismatch, where + ": input takes no inputs");
      break;
    case OpKind::Concat:
      require(n >= 2, ErrorCode::kArityMismatch,
              where + ": concat needs at least 2 inputs");
      break;
    case OpKind::Join:
      require(n == 2, ErrorCode::kArityMismatch, where + ": join needs 2 inputs");
      break;
    default:
      require(n == 1, ErrorCode::kArityMismatch,
              where + ": operator takes exactly 1 input");
  }
}

Ownership parse_owner(const QueryDag& dag, const json& doc,
                      const std::string& where) {
  const std::string s = doc.get<std::string>();
  if (s == "partitioned") return Ownership::partitioned();
  if (s == "public") return {OwnerKind::Public, -1};
  if (s.rfind("single:", 0) == 0) {
    return Ownership::single(resolve_party(dag, s.substr(7), where));
  }
  fail(ErrorCode::kParseError, where + ": bad owner '" + s + "'");
}

std::string owner_to_string(const QueryDag& dag, const Ownership& o) {
  switch (o.kind) {
    case OwnerKind::Single: return "single:" + dag.parties[o.party].name;
    case OwnerKind::Partitioned: return "partitioned";
    case OwnerKind::Public: return "public";
  }
  return "?";
}

ExecMode parse_mode(const QueryDag& dag, const json& doc,
                    const std::string& where) {
  const std::string s = doc.get<std::string>();
  auto with_party = [&](ExecKind kind, const std::string& prefix) {
    return ExecMode{kind, resolve_party(dag, s.substr(prefix.size()), where)};
  };
  if (s == "unassigned") return {};
  if (s == "mpc") return ExecMode::mpc();
  if (s.rfind("clear:", 0) == 0) return with_party(ExecKind::Clear, "clear:");
  if (s.rfind("hybrid_join:", 0) == 0)
    return with_party(ExecKind::HybridJoin, "hybrid_join:");
  if (s.rfind("public_join:", 0) == 0)
    return with_party(ExecKind::PublicJoin, "public_join:");
  if (s.rfind("hybrid_agg:", 0) == 0)
    return with_party(ExecKind::HybridAgg, "hybrid_agg:");
  fail(ErrorCode::kParseError, where + ": bad exec mode '" + s + "'");
}

std::string mode_to_string(const QueryDag& dag, const ExecMode& m) {
  std::string s = exec_kind_name(m.kind);
  if (m.party >= 0) s += ":" + dag.parties[m.party].name;
  return s;
}

QueryDag parse_document(const std::string& text, bool restore_meta) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParseError, e.what());
  }
  QueryDag dag;
  try {
    require(doc.contains("parties") && doc.at("parties").is_array() &&
                !doc.at("parties").empty(),
            ErrorCode::kParseError, "document needs a non-empty 'parties' list");
    int next_party = 0;
    for (const auto& p : doc.at("parties")) {
      Party party;
      party.id = next_party++;
      party.name = p.at("name").get<std::string>();
      party.endpoint = p.value("endpoint", std::string{});
      require(dag.party_index(party.name) < 0, ErrorCode::kParseError,
              "duplicate party '" + party.name + "'");
      dag.parties.push_back(party);
    }
    require(dag.n_parties() <= 3, ErrorCode::kParseError,
            "at most 3 parties are supported");
    for (const auto& p : dag.parties) dag.consent[p.id] = false;
    if (doc.contains("consent")) {
      for (const auto& [name, value] : doc.at("consent").items()) {
        dag.consent[resolve_party(dag, name, "consent")] = value.get<bool>();
      }
    }

    require(doc.contains("nodes") && doc.at("nodes").is_array(),
            ErrorCode::kParseError, "document needs a 'nodes' list");
    // First pass: assign ids in document order. Serialized DAGs carry their
    // numeric ids (compilation leaves gaps), which re-parsing preserves.
    std::map<std::string, NodeId> by_label;
    std::vector<NodeId> assigned;
    NodeId next_id = 0;
    for (const auto& nd : doc.at("nodes")) {
      const std::string label = nd.at("id").get<std::string>();
      NodeId id = next_id;
      if (restore_meta && nd.contains("meta") && nd.at("meta").contains("nid")) {
        id = nd.at("meta").at("nid").get<NodeId>();
      }
      require(by_label.emplace(label, id).second, ErrorCode::kParseError,
              "duplicate node id '" + label + "'");
      assigned.push_back(id);
      next_id = std::max(next_id, id) + 1;
    }
    // Second pass: build nodes.
    std::size_t node_pos = 0;
    for (const auto& nd : doc.at("nodes")) {
      OpNode node;
      node.id = assigned[node_pos++];
      node.label = nd.at("id").get<std::string>();
      const std::string where = "node '" + node.label + "'";
      node.kind = parse_kind(nd.at("kind").get<std::string>(), where);
      if (nd.contains("inputs")) {
        for (const auto& ref : nd.at("inputs")) {
          const std::string in_label = ref.get<std::string>();
          auto it = by_label.find(in_label);
          require(it != by_label.end(), ErrorCode::kUnknownNode,
                  where + ": unknown input '" + in_label + "'");
          node.inputs.push_back(it->second);
        }
      }
      node.params = parse_params(dag, node.kind, nd, where);
      check_arity(node);
      if (node.kind == OpKind::Input) {
        require(nd.contains("out_columns"), ErrorCode::kParseError,
                where + ": input needs 'out_columns'");
        node.out_meta.owner =
            Ownership::single(node.params_as<InputParams>().party);
        node.out_meta.stored_at = {node.params_as<InputParams>().party};
      }
      if (nd.contains("out_columns")) {
        for (const auto& col : nd.at("out_columns")) {
          ColumnMeta c;
          c.name = col.at("name").get<std::string>();
          c.trust = parse_trust(dag, col.value("trust", json::array()), where);
          node.out_meta.columns.push_back(std::move(c));
        }
        check_unique_names(node.out_meta.names(), where);
      }
      if (node.kind == OpKind::Output &&
          node.params_as<OutputParams>().name.empty()) {
        node.params_as<OutputParams>().name = node.label;
      }
      if (restore_meta && nd.contains("meta")) {
        const json& meta = nd.at("meta");
        node.out_meta.owner = parse_owner(dag, meta.at("owner"), where);
        for (const auto& name : meta.value("stored_at", json::array())) {
          node.out_meta.stored_at.insert(
              resolve_party(dag, name.get<std::string>(), where));
        }
        if (meta.contains("sorted_by") && !meta.at("sorted_by").is_null()) {
          node.out_meta.sorted_by = meta.at("sorted_by").get<std::string>();
        }
        node.out_meta.order_public = meta.value("order_public", false);
        node.out_meta.row_count_public = meta.value("row_count_public", true);
        node.mode = parse_mode(dag, meta.at("mode"), where);
        node.mpc_required = meta.value("mpc", false);
        for (const auto& name : meta.value("lifted_to", json::array())) {
          node.lifted_to.insert(
              resolve_party(dag, name.get<std::string>(), where));
        }
        node.split_secondary = meta.value("split_secondary", false);
        node.sort_elided = meta.value("sort_elided", false);
        node.shuffle_elided = meta.value("shuffle_elided", false);
      }
      dag.nodes.emplace(node.id, std::move(node));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kParseError, e.what());
  }

  // Structure checks: acyclic, schemas resolve, outputs exist.
  const auto order = dag.topo_order();
  for (NodeId id : order) {
    OpNode& node = dag.node(id);
    std::vector<const RelationMeta*> ins;
    for (NodeId in : node.inputs) ins.push_back(&dag.node(in).out_meta);
    auto names = infer_out_columns(node, ins);
    if (node.out_meta.columns.empty()) {
      for (auto& n : names) node.out_meta.columns.push_back({n, TrustSet{}});
    } else {
      require(node.out_meta.names() == names, ErrorCode::kParseError,
              "node '" + node.label + "': declared columns do not match operator");
    }
  }
  bool has_output = false;
  std::set<std::string> output_names;
  for (const auto& [id, node] : dag.nodes) {
    if (node.kind != OpKind::Output) continue;
    const auto& p = node.params_as<OutputParams>();
    require(!p.recipients.empty(), ErrorCode::kNoOutput,
            "output '" + node.label + "' has no recipients");
    require(output_names.insert(p.name).second, ErrorCode::kParseError,
            "duplicate output name '" + p.name + "'");
    has_output = true;
  }
  require(has_output, ErrorCode::kNoOutput, "query has no output node");
  return dag;
}

}  // namespace

QueryDag build_dag(const std::string& json_text) {
  return parse_document(json_text, /*restore_meta=*/false);
}

QueryDag parse_dag(const std::string& json_text) {
  return parse_document(json_text, /*restore_meta=*/true);
}

std::string serialize_dag(const QueryDag& dag) {
  json doc;
  doc["parties"] = json::array();
  for (const auto& p : dag.parties) {
    doc["parties"].push_back({{"name", p.name}, {"endpoint", p.endpoint}});
  }
  json consent = json::object();
  for (const auto& [party, ok] : dag.consent) {
    consent[dag.parties[party].name] = ok;
  }
  doc["consent"] = consent;
  doc["nodes"] = json::array();
  for (const auto& [id, node] : dag.nodes) {
    json nd;
    nd["id"] = node.label;
    nd["kind"] = op_kind_name(node.kind);
    json inputs = json::array();
    for (NodeId in : node.inputs) inputs.push_back(dag.node(in).label);
    nd["inputs"] = inputs;
    json params = params_to_json(dag, node, nd);
    if (!params.empty()) nd["params"] = params;
    json cols = json::array();
    for (const auto& c : node.out_meta.columns) {
      cols.push_back({{"name", c.name}, {"trust", trust_to_json(dag, c.trust)}});
    }
    nd["out_columns"] = cols;
    json meta;
    meta["nid"] = node.id;
    meta["owner"] = owner_to_string(dag, node.out_meta.owner);
    json stored = json::array();
    for (int p : node.out_meta.stored_at) stored.push_back(dag.parties[p].name);
    meta["stored_at"] = stored;
    meta["sorted_by"] = node.out_meta.sorted_by
                            ? json(*node.out_meta.sorted_by)
                            : json(nullptr);
    meta["order_public"] = node.out_meta.order_public;
    meta["row_count_public"] = node.out_meta.row_count_public;
    meta["mode"] = mode_to_string(dag, node.mode);
    meta["mpc"] = node.mpc_required;
    json lifted = json::array();
    for (int p : node.lifted_to) lifted.push_back(dag.parties[p].name);
    meta["lifted_to"] = lifted;
    meta["split_secondary"] = node.split_secondary;
    meta["sort_elided"] = node.sort_elided;
    meta["shuffle_elided"] = node.shuffle_elided;
    nd["meta"] = meta;
    doc["nodes"].push_back(nd);
  }
  return doc.dump(2);
}

QueryDag clone_subdag(const QueryDag& dag, const std::vector<NodeId>& roots) {
  std::set<NodeId> live;
  std::deque<NodeId> queue;
  for (NodeId r : roots) {
    dag.node(r);  // raises UnknownNode
    if (live.insert(r).second) queue.push_back(r);
  }
  while (!queue.empty()) {
    NodeId id = queue.front();
    queue.pop_front();
    for (NodeId in : dag.node(id).inputs) {
      if (live.insert(in).second) queue.push_back(in);
    }
  }
  QueryDag out;
  out.parties = dag.parties;
  out.consent = dag.consent;
  std::map<NodeId, NodeId> remap;
  NodeId next = 0;
  for (NodeId id : live) remap[id] = next++;  // std::set iterates ascending
  for (NodeId id : live) {
    OpNode node = dag.node(id);
    node.id = remap[id];
    for (auto& in : node.inputs) in = remap.at(in);
    out.nodes.emplace(node.id, std::move(node));
  }
  return out;
}

bool same_structure(const QueryDag& a, const QueryDag& b) {
  if (a.nodes.size() != b.nodes.size()) return false;
  if (a.parties.size() != b.parties.size()) return false;
  auto ia = a.nodes.begin();
  auto ib = b.nodes.begin();
  for (; ia != a.nodes.end(); ++ia, ++ib) {
    const OpNode& na = ia->second;
    const OpNode& nb = ib->second;
    if (ia->first != ib->first || na.kind != nb.kind ||
        na.inputs != nb.inputs || na.params != nb.params ||
        na.out_meta != nb.out_meta || na.mode != nb.mode ||
        na.mpc_required != nb.mpc_required || na.lifted_to != nb.lifted_to ||
        na.split_secondary != nb.split_secondary ||
        na.sort_elided != nb.sort_elided ||
        na.shuffle_elided != nb.shuffle_elided) {
      return false;
    }
  }
  return true;
}

}  // namespace secrel
