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

#include "secrel/rewrite.hpp"

#include <algorithm>

#include "json.hpp"
#include "secrel/analysis.hpp"

namespace secrel {

std::string RewriteTrace::to_json(const QueryDag& dag) const {
  nlohmann::json arr = nlohmann::json::array();
  auto labels = [&](const std::vector<NodeId>& ids) {
    nlohmann::json out = nlohmann::json::array();
    for (NodeId id : ids) {
      out.push_back(dag.has_node(id) ? dag.node(id).label
                                     : "#" + std::to_string(id));
    }
    return out;
  };
  for (const auto& e : entries) {
    nlohmann::json item;
    item["pass"] = e.pass;
    item["rule"] = e.rule;
    item["before"] = labels(e.before);
    item["after"] = labels(e.after);
    item["note"] = e.note;
    arr.push_back(item);
  }
  return arr.dump(2);
}

namespace {

bool is_distributive(OpKind kind) {
  switch (kind) {
    case OpKind::Project:
    case OpKind::Filter:
    case OpKind::Multiply:
    case OpKind::Divide:
    case OpKind::ScalarMul:
      return true;
    default:
      return false;
  }
}

// Recomputes a node's schema from its (possibly new) inputs while keeping
// trust sets empty; the next analysis run fills them in.
void refresh_schema(QueryDag& dag, OpNode& node) {
  std::vector<const RelationMeta*> ins;
  for (NodeId in : node.inputs) ins.push_back(&dag.node(in).out_meta);
  auto names = infer_out_columns(node, ins);
  node.out_meta.columns.clear();
  for (auto& n : names) node.out_meta.columns.push_back({n, TrustSet{}});
}

// Concats eligible for push-down: a partitioned combination of relations
// each derivable by a single party.
bool is_partitioned_concat(const QueryDag& dag, const OpNode& node) {
  if (node.kind != OpKind::Concat) return false;
  if (node.out_meta.owner.kind != OwnerKind::Partitioned) return false;
  for (NodeId in : node.inputs) {
    if (!dag.node(in).out_meta.owner.is_single()) return false;
  }
  return true;
}

std::string party_suffix(const QueryDag& dag, int party) {
  return dag.parties[party].name;
}

bool apply_one_push_down(QueryDag& dag, RewriteTrace& trace) {
  for (const auto& [id, node_ref] : dag.nodes) {
    const OpNode& node = node_ref;
    if (node.inputs.size() != 1) continue;
    const OpNode& concat = dag.node(node.inputs[0]);
    if (!is_partitioned_concat(dag, concat)) continue;

    if (is_distributive(node.kind)) {
      // op(R_p1 | ... | R_pk)  ==>  op(R_p1) | ... | op(R_pk)
      std::vector<NodeId> clones;
      for (NodeId in : concat.inputs) {
        OpNode clone;
        clone.id = dag.fresh_id();
        clone.label =
            node.label + "." +
            party_suffix(dag, dag.node(in).out_meta.owner.party);
        clone.kind = node.kind;
        clone.params = node.params;
        clone.inputs = {in};
        refresh_schema(dag, clone);
        clones.push_back(clone.id);
        dag.nodes.emplace(clone.id, std::move(clone));
      }
      OpNode& mutated = dag.node(id);
      const NodeId old_concat = mutated.inputs[0];
      mutated.kind = OpKind::Concat;
      mutated.params = ConcatParams{};
      mutated.inputs = clones;
      refresh_schema(dag, mutated);
      trace.add({"push_down", "concat-distributive", {old_concat, id}, clones,
                 "operator distributed over the partitioned concat"});
      return true;
    }

    const bool splittable_agg =
        (node.kind == OpKind::Aggregate || node.kind == OpKind::Distinct) &&
        !node.split_secondary;
    if (splittable_agg) {
      // Splitting exposes per-party pre-aggregate cardinalities to everyone,
      // which is data dependent; every party must have opted in.
      std::vector<std::string> refusing;
      for (const auto& p : dag.parties) {
        auto it = dag.consent.find(p.id);
        if (it == dag.consent.end() || !it->second) refusing.push_back(p.name);
      }
      if (!refusing.empty()) {
        std::string who;
        for (const auto& name : refusing) {
          if (!who.empty()) who += ", ";
          who += name;
        }
        fail(ErrorCode::kConsentRequired,
             "splitting aggregation '" + node.label +
                 "' leaks data-dependent cardinalities; missing consent from " +
                 who);
      }

      std::vector<NodeId> locals;
      for (NodeId in : concat.inputs) {
        OpNode local;
        local.id = dag.fresh_id();
        local.label =
            node.label + "." +
            party_suffix(dag, dag.node(in).out_meta.owner.party);
        local.kind = node.kind;
        local.params = node.params;
        local.inputs = {in};
        refresh_schema(dag, local);
        locals.push_back(local.id);
        dag.nodes.emplace(local.id, std::move(local));
      }
      OpNode merged;
      merged.id = dag.fresh_id();
      merged.label = node.label + ".merged";
      merged.kind = OpKind::Concat;
      merged.params = ConcatParams{};
      merged.inputs = locals;
      refresh_schema(dag, merged);
      const NodeId merged_id = merged.id;
      dag.nodes.emplace(merged.id, std::move(merged));

      OpNode& secondary = dag.node(id);
      const NodeId old_concat = secondary.inputs[0];
      if (secondary.kind == OpKind::Aggregate) {
        auto& p = secondary.params_as<AggregateParams>();
        // Partial counts combine by summation.
        p.func = AggFunc::Sum;
        p.agg_col = p.out_col;
      }
      secondary.inputs = {merged_id};
      secondary.split_secondary = true;
      refresh_schema(dag, secondary);
      std::vector<NodeId> after = locals;
      after.push_back(merged_id);
      after.push_back(id);
      trace.add({"push_down", "aggregate-split", {old_concat, id}, after,
                 "per-party pre-aggregation with shared secondary combine"});
      return true;
    }
  }
  return false;
}

}  // namespace

void push_down(QueryDag& dag, RewriteTrace& trace) {
  analyze(dag);
  while (apply_one_push_down(dag, trace)) {
    dag.prune_dead_nodes();
    analyze(dag);
  }
}

namespace {

// The executing parties of a clear node: recipients for outputs, lift
// targets for lifted nodes, the owner otherwise.
std::set<int> clear_parties(const OpNode& node) {
  if (node.kind == OpKind::Output) {
    const auto& p = node.params_as<OutputParams>();
    return {p.recipients.begin(), p.recipients.end()};
  }
  if (!node.lifted_to.empty()) return node.lifted_to;
  return {node.mode.party};
}

// Walks from an output down through its clear tail and returns the
// shared-space nodes feeding it: the lift candidates.
void frontier_candidates(const QueryDag& dag, NodeId id,
                         const std::set<int>& recipients,
                         std::set<NodeId>& seen, std::vector<NodeId>& out) {
  if (!seen.insert(id).second) return;
  const OpNode& node = dag.node(id);
  if (node.mode.is_shared()) {
    out.push_back(id);
    return;
  }
  if (node.kind != OpKind::Output) {
    // Only descend through clear work the recipients themselves run.
    const auto parties = clear_parties(node);
    for (int p : parties) {
      if (!recipients.count(p)) return;
    }
  }
  for (NodeId in : node.inputs) {
    frontier_candidates(dag, in, recipients, seen, out);
  }
}

bool apply_one_push_up(QueryDag& dag, RewriteTrace& trace) {
  for (NodeId output_id : dag.output_nodes()) {
    const OpNode& output = dag.node(output_id);
    const auto& op = output.params_as<OutputParams>();
    const std::set<int> recipients(op.recipients.begin(), op.recipients.end());

    std::set<NodeId> seen;
    std::vector<NodeId> candidates;
    frontier_candidates(dag, output_id, recipients, seen, candidates);
    std::sort(candidates.begin(), candidates.end());

    for (NodeId cid : candidates) {
      OpNode& cand = dag.node(cid);
      if (cand.mode.kind != ExecKind::Mpc) continue;  // hybrids are terminal
      if (!cand.lifted_to.empty()) continue;
      if (relation_is_flagged(dag, cand.inputs.empty() ? cid : cand.inputs[0])) {
        continue;  // revealing a flagged relation would leak dead rows
      }
      switch (cand.kind) {
        case OpKind::ScalarMul: {
          if (cand.params_as<ScalarMulParams>().factor == 0) break;
          cand.lifted_to = recipients;
          trace.add({"push_up", "reversible-scalar-mul", {cid}, {cid},
                     "nonzero scalar multiple; pre-image revealed to recipients"});
          return true;
        }
        case OpKind::Project: {
          const auto& cols = cand.params_as<ProjectParams>().columns;
          const OpNode& in = dag.node(cand.inputs[0]);
          auto in_names = in.out_meta.names();
          auto sorted_cols = cols;
          std::sort(sorted_cols.begin(), sorted_cols.end());
          std::sort(in_names.begin(), in_names.end());
          if (sorted_cols != in_names) break;  // drops columns: not reversible
          cand.lifted_to = recipients;
          trace.add({"push_up", "reversible-reorder-project", {cid}, {cid},
                     "pure column reorder; pre-image revealed to recipients"});
          return true;
        }
        case OpKind::Divide: {
          const auto& p = cand.params_as<DivideParams>();
          if (output.out_meta.column_index(p.divisor) < 0) break;
          cand.lifted_to = recipients;
          trace.add({"push_up", "divide-revealed-divisor", {cid}, {cid},
                     "divisor '" + p.divisor +
                         "' is output-destined; quotient recomputed in the clear"});
          return true;
        }
        case OpKind::Aggregate: {
          const auto& p = cand.params_as<AggregateParams>();
          if (p.func != AggFunc::Count || p.group_by.empty()) break;
          // Leaf count: keep only the group columns in shared space and let
          // the recipients count key frequencies in the clear.
          OpNode proj;
          proj.id = dag.fresh_id();
          proj.label = cand.label + ".keys";
          proj.kind = OpKind::Project;
          proj.params = ProjectParams{p.group_by};
          proj.inputs = cand.inputs;
          refresh_schema(dag, proj);
          const NodeId proj_id = proj.id;
          dag.nodes.emplace(proj.id, std::move(proj));
          OpNode& count = dag.node(cid);
          count.inputs = {proj_id};
          count.lifted_to = recipients;
          trace.add({"push_up", "count-leaf", {cid}, {proj_id, cid},
                     "shared projection to group columns; cleartext count at "
                     "recipients"});
          return true;
        }
        default:
          break;
      }
    }
  }
  return false;
}

}  // namespace

void push_up(QueryDag& dag, RewriteTrace& trace) {
  analyze(dag);
  while (apply_one_push_up(dag, trace)) {
    analyze(dag);
  }
}

void insert_hybrids(QueryDag& dag, RewriteTrace& trace) {
  analyze(dag);
  const int n = dag.n_parties();
  for (auto& [id, node] : dag.nodes) {
    if (node.mode.kind != ExecKind::Mpc) continue;
    if (node.kind == OpKind::Join) {
      const auto& p = node.params_as<JoinParams>();
      const OpNode& left = dag.node(node.inputs[0]);
      const OpNode& right = dag.node(node.inputs[1]);
      if (relation_is_flagged(dag, node.inputs[0]) ||
          relation_is_flagged(dag, node.inputs[1])) {
        continue;
      }
      const TrustSet lt =
          left.out_meta.columns[left.out_meta.column_index(p.left_key)].trust;
      const TrustSet rt =
          right.out_meta.columns[right.out_meta.column_index(p.right_key)].trust;
      if (lt.is_full(n) && rt.is_full(n)) {
        node.mode = {ExecKind::PublicJoin, 0};
        trace.add({"insert_hybrids", "public-join", {id}, {id},
                   "both key columns public; keys joined in the clear at " +
                       dag.parties[0].name});
      } else if (!lt.intersect(rt).empty()) {
        const int stp = lt.intersect(rt).lowest();
        node.mode = {ExecKind::HybridJoin, stp};
        trace.add({"insert_hybrids", "hybrid-join", {id}, {id},
                   "key trust sets intersect; " + dag.parties[stp].name +
                       " acts as the selectively-trusted party"});
      }
    } else if (node.kind == OpKind::Aggregate) {
      const auto& p = node.params_as<AggregateParams>();
      if (p.group_by.size() != 1) continue;
      if (relation_is_flagged(dag, node.inputs[0])) continue;
      const OpNode& in = dag.node(node.inputs[0]);
      const TrustSet gt =
          in.out_meta.columns[in.out_meta.column_index(p.group_by[0])].trust;
      // A hybrid aggregation needs a selectively-trusted party: a proper,
      // non-empty subset of the parties. A public group column stays in
      // plain shared space (no public-aggregation protocol exists) where
      // sort elimination can still help.
      if (gt.empty() || gt.is_full(n)) continue;
      const int stp = gt.lowest();
      node.mode = {ExecKind::HybridAgg, stp};
      trace.add({"insert_hybrids", "hybrid-aggregation", {id}, {id},
                 "group column entrusted to " + dag.parties[stp].name});
    }
  }
  analyze(dag);
}

bool relation_is_flagged(const QueryDag& dag, NodeId id) {
  const OpNode& node = dag.node(id);
  if (!node.mode.is_shared()) return false;
  switch (node.kind) {
    case OpKind::Filter:
      return true;
    case OpKind::Project:
    case OpKind::Multiply:
    case OpKind::ScalarMul:
    case OpKind::Enumerate:
      return relation_is_flagged(dag, node.inputs[0]);
    default:
      return false;
  }
}

void eliminate_sorts(QueryDag& dag, RewriteTrace& trace) {
  // Forward sortedness tracking. Shuffles and shared joins destroy order;
  // the public join emits key-sorted rows whose order everyone knows.
  for (NodeId id : dag.topo_order()) {
    OpNode& node = dag.node(id);
    auto& meta = node.out_meta;
    meta.sorted_by.reset();
    meta.order_public = false;
    const RelationMeta* in0 =
        node.inputs.empty() ? nullptr : &dag.node(node.inputs[0]).out_meta;
    switch (node.kind) {
      case OpKind::Input:
      case OpKind::Concat:
        break;
      case OpKind::SortBy:
        meta.sorted_by = node.params_as<SortByParams>().column;
        break;
      case OpKind::Filter:
        if (node.mode.is_shared()) {
          // Flag-based filter keeps every row in place.
          meta.sorted_by = in0->sorted_by;
          meta.order_public = in0->order_public;
        } else if (in0->sorted_by) {
          meta.sorted_by = in0->sorted_by;  // subsequence stays sorted
        }
        break;
      case OpKind::Project: {
        const auto& cols = node.params_as<ProjectParams>().columns;
        if (in0->sorted_by &&
            std::find(cols.begin(), cols.end(), *in0->sorted_by) != cols.end()) {
          meta.sorted_by = in0->sorted_by;
          meta.order_public = in0->order_public;
        }
        break;
      }
      case OpKind::Multiply:
      case OpKind::Divide:
      case OpKind::ScalarMul:
      case OpKind::Enumerate:
      case OpKind::Output:
        meta.sorted_by = in0->sorted_by;
        meta.order_public = in0->order_public;
        break;
      case OpKind::Join:
        if (node.mode.kind == ExecKind::PublicJoin) {
          meta.sorted_by = meta.columns[0].name;
          meta.order_public = true;
        } else if (node.mode.is_clear()) {
          meta.sorted_by = meta.columns[0].name;  // sort-merge join
        }
        break;
      case OpKind::Aggregate: {
        const auto& p = node.params_as<AggregateParams>();
        if (node.mode.kind == ExecKind::Mpc) {
          node.sort_elided = p.group_by.size() == 1 && in0->sorted_by &&
                             *in0->sorted_by == p.group_by[0];
          // Skipping the survivor shuffle shows every party which publicly
          // ordered keys made it into the result, so the group column must
          // be readable by everyone.
          node.shuffle_elided =
              node.sort_elided && in0->order_public &&
              meta.columns[0].trust.is_full(dag.n_parties());
          if (node.sort_elided) {
            trace.add({"eliminate_sorts",
                       node.shuffle_elided ? "sort-and-shuffle-elision"
                                           : "sort-elision",
                       {id},
                       {id},
                       "input already sorted by '" + p.group_by[0] + "'"});
          }
          if (node.shuffle_elided) {
            meta.sorted_by = p.group_by[0];
            meta.order_public = in0->order_public;
          }
        } else if (node.mode.is_clear() && !p.group_by.empty()) {
          meta.sorted_by = p.group_by[0];  // clear aggregation sorts by group
        }
        break;
      }
      case OpKind::Distinct: {
        if (node.mode.kind == ExecKind::Mpc) {
          node.sort_elided = meta.width() == 1 && in0->sorted_by &&
                             *in0->sorted_by == meta.columns[0].name;
          node.shuffle_elided =
              node.sort_elided && in0->order_public &&
              meta.columns[0].trust.is_full(dag.n_parties());
          if (node.sort_elided) {
            trace.add({"eliminate_sorts",
                       node.shuffle_elided ? "sort-and-shuffle-elision"
                                           : "sort-elision",
                       {id},
                       {id},
                       "input already sorted by '" + meta.columns[0].name + "'"});
          }
          if (node.shuffle_elided) {
            meta.sorted_by = in0->sorted_by;
            meta.order_public = in0->order_public;
          }
        } else if (node.mode.is_clear()) {
          meta.sorted_by = meta.columns[0].name;
        }
        break;
      }
    }
  }

  // Delete shared sorts whose input is already in the right order.
  std::vector<NodeId> doomed;
  for (auto& [id, node] : dag.nodes) {
    if (node.kind != OpKind::SortBy || node.mode.kind != ExecKind::Mpc) continue;
    const auto& in_meta = dag.node(node.inputs[0]).out_meta;
    if (in_meta.sorted_by &&
        *in_meta.sorted_by == node.params_as<SortByParams>().column) {
      doomed.push_back(id);
    }
  }
  for (NodeId id : doomed) {
    const NodeId source = dag.node(id).inputs[0];
    for (auto& [other_id, other] : dag.nodes) {
      for (auto& in : other.inputs) {
        if (in == id) in = source;
      }
    }
    trace.add({"eliminate_sorts", "redundant-sort-deleted", {id}, {source},
               "input already sorted by the same column"});
    dag.nodes.erase(id);
  }
}

namespace {

// Reveals happen exactly where a clear consumer reads a shared relation or a
// plaintext relation changes hands; both require every revealed column to be
// readable by the receiving parties.
void check_frontier_soundness(const QueryDag& dag) {
  for (const auto& [id, node] : dag.nodes) {
    if (!node.mode.is_clear() || node.kind == OpKind::Input) continue;
    const auto parties = clear_parties(node);
    for (NodeId in_id : node.inputs) {
      const OpNode& in = dag.node(in_id);
      for (int p : parties) {
        if (in.mode.is_clear() && in.kind != OpKind::Output &&
            clear_parties(in).count(p)) {
          continue;  // already held in the clear at p
        }
        for (const auto& col : in.out_meta.columns) {
          if (!col.trust.contains(p)) {
            fail(ErrorCode::kIllegalBoundary,
                 "clear step '" + node.label + "' at " + dag.parties[p].name +
                     " would read column '" + col.name + "' of '" + in.label +
                     "' outside its trust set");
          }
        }
      }
    }
  }
}

void check_shared_constraints(const QueryDag& dag, bool rewrites_enabled) {
  const auto consumers = dag.consumers();
  for (const auto& [id, node] : dag.nodes) {
    if (rewrites_enabled && node.kind == OpKind::Divide &&
        node.mode.is_shared()) {
      fail(ErrorCode::kUnsupportedUnderMpc,
           "divide '" + node.label +
               "' remains in shared space; the engine has no division "
               "primitive and push-up could not lift it");
    }
    if (node.kind == OpKind::Enumerate && node.mode.is_shared()) {
      // Row order inside shared segments is protocol-defined (shuffles,
      // network sorts), so enumeration there would be nondeterministic.
      fail(ErrorCode::kUnsupportedUnderMpc,
           "enumerate '" + node.label +
               "' would index rows in a protocol-defined order; enumerate "
               "single-owner relations instead");
    }
    if (!node.mode.is_shared() || !relation_is_flagged(dag, id)) continue;
    for (NodeId cid : consumers.at(id)) {
      const OpNode& consumer = dag.node(cid);
      const bool ok_shared_consumer =
          consumer.mode.is_shared() &&
          (consumer.kind == OpKind::Filter || consumer.kind == OpKind::Project ||
           consumer.kind == OpKind::Multiply ||
           consumer.kind == OpKind::ScalarMul ||
           consumer.kind == OpKind::Aggregate ||
           consumer.kind == OpKind::Distinct);
      if (!ok_shared_consumer) {
        fail(ErrorCode::kUnsupportedUnderMpc,
             "'" + consumer.label + "' consumes the flag-filtered relation '" +
                 node.label +
                 "' but only flag-aware operators may follow an oblivious "
                 "filter");
      }
    }
  }
}

}  // namespace

CompileResult compile_query(const QueryDag& input, const CompileOptions& opts) {
  CompileResult result;
  result.dag = input;
  for (const auto& [party, ok] : opts.consent) {
    result.dag.consent[party] = ok;
  }
  analyze(result.dag);
  if (!opts.no_rewrites) {
    push_down(result.dag, result.trace);
    analyze(result.dag);
    insert_hybrids(result.dag, result.trace);
    push_up(result.dag, result.trace);
    analyze(result.dag);
    eliminate_sorts(result.dag, result.trace);
    // deleting a sort can re-wire an output's input; refresh trust for the
    // recipient injection before the soundness checks
    propagate_trust(result.dag);
  }
  check_shared_constraints(result.dag, !opts.no_rewrites);
  check_frontier_soundness(result.dag);
  return result;
}

}  // namespace secrel
