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

#include "secrel/orchestrator.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <variant>

#include "json.hpp"
#include "secrel/analysis.hpp"
#include "secrel/clear_exec.hpp"

namespace secrel {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Cleartext value: the parties currently holding the table.
struct ClearValue {
  std::map<int, Table> copies;
};

using NodeValue = std::variant<ClearValue, SharedRelation>;

std::set<int> executing_parties(const OpNode& node) {
  if (node.kind == OpKind::Output) {
    const auto& p = node.params_as<OutputParams>();
    return {p.recipients.begin(), p.recipients.end()};
  }
  if (!node.lifted_to.empty()) return node.lifted_to;
  return {node.mode.party};
}

class Executor {
 public:
  Executor(const QueryDag& dag, const std::vector<Segment>& segments,
           const std::map<std::string, Table>& inputs, std::uint64_t seed,
           RunResult& result)
      : dag_(dag),
        inputs_(inputs),
        result_(result),
        engine_(dag.n_parties(), seed, &result.ledger, &result.transcript,
                &result.counters) {
    for (const auto& seg : segments) {
      for (NodeId id : seg.steps) seg_of_node_[id] = seg.id;
      result_.segment_counters[seg.id] = {};
    }
  }

  void run() {
    preflight();
    for (NodeId id : dag_.topo_order()) {
      const OpNode& node = dag_.node(id);
      engine_.set_step(id);
      const OpCounters before = result_.counters;
      if (node.mode.is_shared()) {
        exec_shared(node);
      } else {
        exec_clear(node);
      }
      result_.segment_counters[seg_of_node_.at(id)] +=
          result_.counters - before;
      record_rows(node);
    }
  }

 private:
  void preflight() {
    for (const auto& [id, node] : dag_.nodes) {
      if (node.kind != OpKind::Input) continue;
      if (!inputs_.count(node.label)) {
        const int party = node.params_as<InputParams>().party;
        fail(ErrorCode::kMissingInput,
             "party " + dag_.parties[party].name +
                 " has no table for input '" + node.label + "'");
      }
    }
  }

  void record_rows(const OpNode& node) {
    std::uint64_t rows = 0;
    const NodeValue& v = values_.at(node.id);
    if (std::holds_alternative<SharedRelation>(v)) {
      rows = std::get<SharedRelation>(v).rows();
    } else {
      const auto& cv = std::get<ClearValue>(v);
      rows = cv.copies.empty() ? 0 : cv.copies.begin()->second.size();
    }
    result_.node_rows[node.id] = rows;
  }

  // Cleartext table of `producer` as held by `party`, revealing or
  // forwarding it first if needed.
  const Table& table_at(const OpNode& producer, int party) {
    NodeValue& v = values_.at(producer.id);
    if (std::holds_alternative<SharedRelation>(v)) {
      const auto& rel = std::get<SharedRelation>(v);
      // Defense in depth: the compiler proved this reveal; re-check it.
      for (const auto& col : producer.out_meta.columns) {
        if (!col.trust.contains(party)) {
          fail(ErrorCode::kUnauthorizedReveal,
               "reveal of '" + producer.label + "' column '" + col.name +
                   "' to " + dag_.parties[party].name + " is unauthorized");
        }
      }
      Table t = engine_.reveal_to(rel, rel.schema, {party}, producer.label);
      revealed_[producer.id].copies[party] = std::move(t);
      return revealed_[producer.id].copies[party];
    }
    auto& cv = std::get<ClearValue>(v);
    auto it = cv.copies.find(party);
    if (it != cv.copies.end()) return it->second;
    // Plaintext send from some current holder.
    const int holder = cv.copies.begin()->first;
    const Table& src = cv.copies.begin()->second;
    for (const auto& col : producer.out_meta.columns) {
      if (!col.trust.contains(party)) {
        fail(ErrorCode::kUnauthorizedReveal,
             "plaintext send of '" + producer.label + "' to " +
                 dag_.parties[party].name + " is unauthorized");
      }
    }
    std::vector<std::uint64_t> words;
    for (const auto& row : src.rows) {
      for (auto cell : row) words.push_back(static_cast<std::uint64_t>(cell));
    }
    result_.transcript.record({producer.id, holder, party,
                               MsgClass::PlaintextTable, 8 * words.size(),
                               fnv1a(0, words.data(), words.size())});
    for (const auto& col : src.schema) {
      result_.ledger.record({producer.id, party, LeakKind::ColumnValues,
                             producer.label, col});
    }
    cv.copies[party] = src;
    return cv.copies[party];
  }

  SharedRelation shared_of(const OpNode& producer) {
    NodeValue& v = values_.at(producer.id);
    if (std::holds_alternative<SharedRelation>(v)) {
      return std::get<SharedRelation>(v);
    }
    // Clear relation entering shared space: the holder deals the shares
    // once, however many shared consumers follow.
    auto it = shared_cache_.find(producer.id);
    if (it != shared_cache_.end()) return it->second;
    auto& cv = std::get<ClearValue>(v);
    const int dealer = cv.copies.begin()->first;
    SharedRelation rel =
        engine_.share_in(cv.copies.at(dealer), dealer, producer.label);
    shared_cache_.emplace(producer.id, rel);
    return rel;
  }

  void exec_clear(const OpNode& node) {
    const auto parties = executing_parties(node);
    if (node.kind == OpKind::Input) {
      const int party = node.params_as<InputParams>().party;
      const Table& t = inputs_.at(node.label);
      if (t.schema != node.out_meta.names()) {
        fail(ErrorCode::kShapeMismatch,
             "input '" + node.label + "' schema does not match declaration");
      }
      for (const auto& col : t.schema) {
        result_.ledger.record(
            {node.id, party, LeakKind::ColumnValues, node.label, col});
      }
      ClearValue cv;
      cv.copies[party] = t;
      values_[node.id] = std::move(cv);
      return;
    }

    ClearValue out;
    for (int party : parties) {
      std::vector<const Table*> ins;
      ins.reserve(node.inputs.size());
      for (NodeId in : node.inputs) {
        ins.push_back(&table_at(dag_.node(in), party));
      }
      Table t = run_clear_step(node, ins);
      out.copies[party] = std::move(t);
    }
    if (node.kind == OpKind::Output) {
      const auto& p = node.params_as<OutputParams>();
      for (int r : p.recipients) {
        Table canonical = sorted_copy(out.copies.at(r));
        for (const auto& col : canonical.schema) {
          result_.ledger.record(
              {node.id, r, LeakKind::ColumnValues, node.label, col});
        }
        result_.ledger.record({node.id, r, LeakKind::Output, node.label, {}});
        result_.outputs[r][p.name] = std::move(canonical);
      }
    }
    values_[node.id] = std::move(out);
  }

  void exec_shared(const OpNode& node) {
    std::vector<SharedRelation> ins;
    ins.reserve(node.inputs.size());
    for (NodeId in : node.inputs) ins.push_back(shared_of(dag_.node(in)));
    const auto out_names = node.out_meta.names();
    switch (node.kind) {
      case OpKind::Concat: {
        std::vector<const SharedRelation*> parts;
        for (const auto& rel : ins) parts.push_back(&rel);
        values_[node.id] = engine_.concat(parts);
        break;
      }
      case OpKind::Project:
        values_[node.id] = engine_.project(
            ins[0], node.params_as<ProjectParams>().columns);
        break;
      case OpKind::Filter: {
        const auto& p = node.params_as<FilterParams>();
        values_[node.id] = engine_.filter_flags(ins[0], p.column, p.cmp, p.constant);
        break;
      }
      case OpKind::Multiply: {
        const auto& p = node.params_as<MultiplyParams>();
        values_[node.id] = engine_.append_mul(ins[0], p.lhs, p.rhs, p.out_col);
        break;
      }
      case OpKind::Divide: {
        const auto& p = node.params_as<DivideParams>();
        values_[node.id] = engine_.append_div(ins[0], p.numerator, p.divisor,
                                              p.out_col, "node '" + node.label + "'");
        break;
      }
      case OpKind::ScalarMul: {
        const auto& p = node.params_as<ScalarMulParams>();
        values_[node.id] =
            engine_.append_scalar_mul(ins[0], p.source, p.factor, p.out_col);
        break;
      }
      case OpKind::Enumerate:
        values_[node.id] = engine_.append_enumerate(
            ins[0], node.params_as<EnumerateParams>().out_col);
        break;
      case OpKind::SortBy:
        values_[node.id] = engine_.oblivious_sort(
            ins[0], {node.params_as<SortByParams>().column});
        break;
      case OpKind::Distinct:
        values_[node.id] = engine_.mpc_distinct(ins[0], node.sort_elided,
                                                node.shuffle_elided, node.label);
        break;
      case OpKind::Aggregate: {
        const auto& p = node.params_as<AggregateParams>();
        if (node.mode.kind == ExecKind::HybridAgg) {
          values_[node.id] = engine_.hybrid_aggregate(
              ins[0], p, out_names, node.mode.party,
              dag_.node(node.inputs[0]).label, node.label);
        } else {
          values_[node.id] = engine_.mpc_aggregate(
              ins[0], p, out_names, node.sort_elided, node.shuffle_elided,
              node.label);
        }
        break;
      }
      case OpKind::Join: {
        const auto& p = node.params_as<JoinParams>();
        const std::string left_label = dag_.node(node.inputs[0]).label;
        const std::string right_label = dag_.node(node.inputs[1]).label;
        if (node.mode.kind == ExecKind::HybridJoin) {
          values_[node.id] = engine_.hybrid_join(
              ins[0], ins[1], p.left_key, p.right_key, node.mode.party,
              out_names, left_label, right_label, node.label);
        } else if (node.mode.kind == ExecKind::PublicJoin) {
          values_[node.id] = engine_.public_join(
              ins[0], ins[1], p.left_key, p.right_key, node.mode.party,
              out_names, left_label, right_label, node.label);
        } else {
          values_[node.id] = engine_.mpc_join(ins[0], ins[1], p.left_key,
                                              p.right_key, out_names, node.label);
        }
        break;
      }
      default:
        fail(ErrorCode::kInternal,
             std::string("operator cannot run in shared space: ") +
                 op_kind_name(node.kind));
    }
    // Rename physical columns to the node's output schema (protocols build
    // them in schema order already).
    auto& rel = std::get<SharedRelation>(values_.at(node.id));
    if (rel.schema.size() == out_names.size()) rel.schema = out_names;
  }

  const QueryDag& dag_;
  const std::map<std::string, Table>& inputs_;
  RunResult& result_;
  MpcEngine engine_;
  std::map<NodeId, int> seg_of_node_;
  std::map<NodeId, NodeValue> values_;
  std::map<NodeId, ClearValue> revealed_;
  std::map<NodeId, SharedRelation> shared_cache_;
};

}  // namespace

RunResult simulate(const QueryDag& query, const std::map<std::string, Table>& inputs,
                   const SimulateOptions& opts) {
  RunResult result;
  result.seed = opts.seed;
  CompileOptions copts;
  copts.no_rewrites = opts.no_rewrites;
  copts.consent = opts.consent;
  CompileResult compiled = compile_query(query, copts);
  result.compiled = std::move(compiled.dag);
  result.trace = std::move(compiled.trace);
  result.segments = partition(result.compiled);
  result.plan_steps = lower_plan(result.compiled, result.segments);

  Executor exec(result.compiled, result.segments, inputs, opts.seed, result);
  exec.run();

  // The counter law: the static model must reproduce the runtime counters
  // exactly for the observed row counts.
  result.cost = estimate_cost(result.compiled, result.segments, result.node_rows);
  for (const auto& [seg, counters] : result.segment_counters) {
    const OpCounters expect = result.cost.per_segment.at(seg);
    if (!(expect == counters)) {
      fail(ErrorCode::kInternal,
           "cost model diverged from runtime counters in segment " +
               std::to_string(seg) + ": model " + expect.to_json() +
               " vs runtime " + counters.to_json());
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Audit
// ---------------------------------------------------------------------------

std::string AuditReport::to_json(const QueryDag& dag) const {
  json doc;
  doc["pass"] = pass;
  doc["events_checked"] = events_checked;
  json arr = json::array();
  for (const auto& v : violations) {
    json item;
    item["step"] = v.event.step;
    item["observer"] = v.event.observer >= 0 &&
                               v.event.observer < dag.n_parties()
                           ? dag.parties[v.event.observer].name
                           : std::to_string(v.event.observer);
    item["kind"] = leak_kind_name(v.event.kind);
    item["relation"] = v.event.relation;
    item["column"] = v.event.column;
    item["reason"] = v.reason;
    arr.push_back(item);
  }
  doc["violations"] = arr;
  return doc.dump(2);
}

AuditReport audit(const Ledger& ledger, const QueryDag& compiled) {
  AuditReport report;
  std::map<std::string, const OpNode*> by_label;
  for (const auto& [id, node] : compiled.nodes) by_label[node.label] = &node;
  const auto consumers = compiled.consumers();

  // Relations whose row counts necessarily become public: inputs, anything
  // in shared space, and anything crossing into it.
  auto cardinality_public = [&](const OpNode& node) {
    if (node.kind == OpKind::Input) return true;
    if (node.mode.is_shared()) return true;
    for (NodeId c : consumers.at(node.id)) {
      if (compiled.node(c).mode.is_shared()) return true;
    }
    return false;
  };
  // Hybrid-internal relations (index relations, shared flags) are named
  // "<node>.suffix"; their sizes are part of the hybrid's stated leakage.
  auto base_node = [&](const std::string& relation) -> const OpNode* {
    auto it = by_label.find(relation);
    if (it != by_label.end()) return it->second;
    const auto dot = relation.rfind('.');
    if (dot == std::string::npos) return nullptr;
    it = by_label.find(relation.substr(0, dot));
    return it == by_label.end() ? nullptr : it->second;
  };

  for (const auto& event : ledger.events()) {
    ++report.events_checked;
    const OpNode* node = base_node(event.relation);
    if (node == nullptr) {
      report.violations.push_back({event, "unknown relation"});
      continue;
    }
    if (event.observer < 0 || event.observer >= compiled.n_parties()) {
      report.violations.push_back({event, "unknown observer"});
      continue;
    }
    switch (event.kind) {
      case LeakKind::ColumnValues: {
        const int col = node->out_meta.column_index(event.column);
        if (col < 0) {
          report.violations.push_back({event, "unknown column"});
          break;
        }
        if (!node->out_meta.columns[col].trust.contains(event.observer)) {
          report.violations.push_back(
              {event, "observer outside the column's trust set"});
        }
        break;
      }
      case LeakKind::Cardinality: {
        const bool synthetic = !by_label.count(event.relation);
        if (synthetic) {
          const bool hybrid_parent = node->mode.kind == ExecKind::HybridJoin ||
                                     node->mode.kind == ExecKind::HybridAgg ||
                                     node->mode.kind == ExecKind::PublicJoin;
          if (!hybrid_parent) {
            report.violations.push_back(
                {event, "cardinality of non-hybrid internal relation"});
          }
          break;
        }
        if (!cardinality_public(*node)) {
          report.violations.push_back(
              {event, "cardinality of a purely local relation"});
        }
        break;
      }
      case LeakKind::Permutation: {
        if (node->mode.kind != ExecKind::PublicJoin &&
            node->mode.kind != ExecKind::HybridAgg) {
          report.violations.push_back(
              {event, "permutation outside a hybrid protocol"});
        }
        break;
      }
      case LeakKind::Output: {
        if (node->kind != OpKind::Output) {
          report.violations.push_back({event, "output event on a non-output"});
          break;
        }
        const auto& p = node->params_as<OutputParams>();
        if (std::find(p.recipients.begin(), p.recipients.end(),
                      event.observer) == p.recipients.end()) {
          report.violations.push_back({event, "observer is not a recipient"});
        }
        break;
      }
    }
  }
  report.pass = report.violations.empty();
  return report;
}

// ---------------------------------------------------------------------------
// Verification harness
// ---------------------------------------------------------------------------

std::string VerifyReport::to_json() const {
  json doc;
  doc["pass"] = pass;
  doc["trials"] = trials;
  doc["mismatch"] = mismatch;
  return doc.dump(2);
}

std::map<std::string, Table> generate_inputs(const QueryDag& query,
                                             std::uint64_t seed,
                                             std::size_t max_rows) {
  std::seed_seq seq{seed, std::uint64_t{0x696e7075}};
  std::mt19937_64 rng(seq);
  // Filter constants per column name, so predicates are exercised.
  std::map<std::string, std::vector<std::int64_t>> constants;
  std::set<std::string> join_keys, group_cols;
  for (const auto& [id, node] : query.nodes) {
    if (node.kind == OpKind::Filter) {
      const auto& p = node.params_as<FilterParams>();
      constants[p.column].push_back(p.constant);
      constants[p.column].push_back(p.constant + 1);
    } else if (node.kind == OpKind::Join) {
      const auto& p = node.params_as<JoinParams>();
      join_keys.insert(p.left_key);
      join_keys.insert(p.right_key);
    } else if (node.kind == OpKind::Aggregate) {
      const auto& p = node.params_as<AggregateParams>();
      group_cols.insert(p.group_by.begin(), p.group_by.end());
    }
  }
  std::map<std::string, Table> inputs;
  for (const auto& [id, node] : query.nodes) {
    if (node.kind != OpKind::Input) continue;
    Table t(node.out_meta.names());
    std::uniform_int_distribution<std::size_t> row_dist(0, max_rows);
    const std::size_t rows = row_dist(rng);
    for (std::size_t r = 0; r < rows; ++r) {
      Row row;
      for (const auto& col : t.schema) {
        // Join keys that never act as group columns get a domain scaling
        // with the table size, keeping join fan-out bounded; everything else
        // draws from a small domain so groups, matches and predicates hit.
        if (join_keys.count(col) && !group_cols.count(col)) {
          const std::int64_t hi =
              std::max<std::int64_t>(12, static_cast<std::int64_t>(max_rows / 2));
          std::uniform_int_distribution<std::int64_t> pick(1, hi);
          row.push_back(pick(rng));
          continue;
        }
        std::vector<std::int64_t> domain{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
        auto it = constants.find(col);
        if (it != constants.end()) {
          domain.insert(domain.end(), it->second.begin(), it->second.end());
        }
        std::uniform_int_distribution<std::size_t> pick(0, domain.size() - 1);
        row.push_back(domain[pick(rng)]);
      }
      t.rows.push_back(std::move(row));
    }
    inputs[node.label] = std::move(t);
  }
  return inputs;
}

namespace {

std::map<std::string, Table> collect_outputs(
    const std::map<int, std::map<std::string, Table>>& per_party) {
  std::map<std::string, Table> flat;
  for (const auto& [party, tables] : per_party) {
    for (const auto& [name, table] : tables) flat[name] = table;
  }
  return flat;
}

}  // namespace

VerifyReport verify(const QueryDag& query, int trials, std::uint64_t seed,
                    std::size_t max_rows,
                    const std::map<std::string, Table>& base_inputs,
                    const std::map<int, bool>& consent) {
  VerifyReport report;
  report.trials = trials;
  for (int t = 0; t < trials; ++t) {
    std::map<std::string, Table> inputs;
    if (t == 0 && !base_inputs.empty()) {
      inputs = base_inputs;
    } else {
      inputs = generate_inputs(query, seed + static_cast<std::uint64_t>(t),
                               max_rows);
    }
    SimulateOptions on;
    on.seed = seed + static_cast<std::uint64_t>(t);
    on.consent = consent;
    SimulateOptions off = on;
    off.no_rewrites = true;

    auto oracle = oracle_execute(query, inputs);
    auto rewritten = collect_outputs(simulate(query, inputs, on).outputs);
    auto baseline = collect_outputs(simulate(query, inputs, off).outputs);

    for (const auto& [name, expect] : oracle) {
      const auto check = [&](const std::map<std::string, Table>& got,
                             const std::string& which) {
        auto it = got.find(name);
        if (it == got.end()) {
          report.mismatch = "trial " + std::to_string(t) + ": " + which +
                            " plan produced no output '" + name + "'";
          return false;
        }
        if (!same_multiset(it->second, expect)) {
          report.mismatch = "trial " + std::to_string(t) + ": " + which +
                            " output '" + name + "' differs from the oracle";
          return false;
        }
        return true;
      };
      if (!check(rewritten, "rewritten") || !check(baseline, "baseline")) {
        return report;
      }
    }
  }
  report.pass = true;
  return report;
}

// ---------------------------------------------------------------------------
// Run directory
// ---------------------------------------------------------------------------

void write_run_dir(const std::string& dir, const QueryDag& query,
                   const RunResult& result) {
  fs::create_directories(dir);
  auto write = [&](const std::string& rel_path, const std::string& text) {
    const fs::path path = fs::path(dir) / rel_path;
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
  };
  json run_info;
  run_info["seed"] = result.seed;
  write("run.json", run_info.dump(2));
  write("query.json", serialize_dag(query));
  write("compiled.json", serialize_dag(result.compiled));
  write("trace.json", result.trace.to_json(result.compiled));
  write("ledger.json", result.ledger.to_json());
  json counters;
  counters["total"] = json::parse(result.counters.to_json());
  for (const auto& [seg, c] : result.segment_counters) {
    counters["segments"][std::to_string(seg)] = json::parse(c.to_json());
  }
  write("counters.json", counters.dump(2));
  write("cost.json", result.cost.to_json(result.segments));
  json rows;
  for (const auto& [id, n] : result.node_rows) {
    rows[result.compiled.node(id).label] = n;
  }
  write("rows.json", rows.dump(2));
  for (const auto& party : result.compiled.parties) {
    write("plans/" + party.name + ".json",
          plan_document(result.compiled, result.plan_steps, party.id));
    write("transcripts/" + party.name + ".log",
          result.transcript.to_text(party.id));
  }
  for (const auto& [party, tables] : result.outputs) {
    for (const auto& [name, table] : tables) {
      write("outputs/" + result.compiled.parties[party].name + "/" + name +
                ".csv",
            to_csv(table));
    }
  }
}

}  // namespace secrel
