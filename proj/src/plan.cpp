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

#include "secrel/plan.hpp"

#include <algorithm>
#include <numeric>

#include "json.hpp"
#include "secrel/rewrite.hpp"

namespace secrel {

const char* transfer_kind_name(TransferKind kind) {
  switch (kind) {
    case TransferKind::ShareIn: return "share_in";
    case TransferKind::RevealTo: return "reveal_to";
    case TransferKind::PlaintextSend: return "plaintext_send";
    case TransferKind::SharedHandoff: return "shared_handoff";
  }
  return "?";
}

namespace {

bool is_hybrid(const ExecMode& m) {
  return m.kind == ExecKind::HybridJoin || m.kind == ExecKind::PublicJoin ||
         m.kind == ExecKind::HybridAgg;
}

std::set<int> executing_parties(const QueryDag& dag, const OpNode& node) {
  if (node.kind == OpKind::Output) {
    const auto& p = node.params_as<OutputParams>();
    return {p.recipients.begin(), p.recipients.end()};
  }
  if (!node.lifted_to.empty()) return node.lifted_to;
  if (node.mode.is_clear()) return {node.mode.party};
  std::set<int> all;
  for (const auto& p : dag.parties) all.insert(p.id);
  return all;
}

struct UnionFind {
  std::map<NodeId, NodeId> parent;
  NodeId find(NodeId x) {
    auto it = parent.find(x);
    if (it == parent.end() || it->second == x) return x;
    return parent[x] = find(it->second);
  }
  void unite(NodeId a, NodeId b) { parent[find(a)] = find(b); }
};

}  // namespace

std::vector<Segment> partition(const QueryDag& dag) {
  const auto order = dag.topo_order();
  UnionFind uf;
  for (NodeId id : order) uf.parent[id] = id;
  for (NodeId id : order) {
    const OpNode& node = dag.node(id);
    if (is_hybrid(node.mode)) continue;  // every hybrid operator stands alone
    for (NodeId in_id : node.inputs) {
      const OpNode& in = dag.node(in_id);
      if (is_hybrid(in.mode)) continue;
      const bool both_mpc = node.mode.kind == ExecKind::Mpc &&
                            in.mode.kind == ExecKind::Mpc;
      const bool both_clear_same =
          node.mode.is_clear() && in.mode.is_clear() &&
          executing_parties(dag, node) == executing_parties(dag, in);
      if (both_mpc || both_clear_same) uf.unite(id, in_id);
    }
  }

  // Segment ids in order of first appearance along the topological order.
  std::map<NodeId, int> seg_of_root;
  std::vector<Segment> segments;
  std::map<NodeId, int> seg_of_node;
  for (NodeId id : order) {
    const NodeId root = uf.find(id);
    auto it = seg_of_root.find(root);
    int seg_id;
    if (it == seg_of_root.end()) {
      seg_id = static_cast<int>(segments.size());
      seg_of_root[root] = seg_id;
      Segment s;
      s.id = seg_id;
      s.mode = dag.node(id).mode;
      segments.push_back(s);
    } else {
      seg_id = it->second;
    }
    segments[seg_id].steps.push_back(id);
    seg_of_node[id] = seg_id;
    const auto parties = executing_parties(dag, dag.node(id));
    segments[seg_id].participants.insert(parties.begin(), parties.end());
  }
  for (auto& seg : segments) {
    if (!seg.mode.is_clear()) {
      for (const auto& p : dag.parties) seg.participants.insert(p.id);
    }
  }

  // Boundary records: exactly one per cross-segment edge.
  for (NodeId id : order) {
    const OpNode& node = dag.node(id);
    const int to_seg = seg_of_node.at(id);
    for (NodeId in_id : node.inputs) {
      const int from_seg = seg_of_node.at(in_id);
      if (from_seg == to_seg) continue;
      const OpNode& in = dag.node(in_id);
      Boundary b;
      b.producer = in_id;
      b.from_segment = from_seg;
      b.to_segment = to_seg;
      const bool from_shared = in.mode.is_shared();
      const bool to_shared = node.mode.is_shared();
      if (from_shared && to_shared) {
        b.kind = TransferKind::SharedHandoff;
      } else if (!from_shared && to_shared) {
        b.kind = TransferKind::ShareIn;
      } else if (from_shared && !to_shared) {
        b.kind = TransferKind::RevealTo;
        b.targets = executing_parties(dag, node);
        for (int target : b.targets) {
          for (const auto& col : in.out_meta.columns) {
            if (!col.trust.contains(target)) {
              fail(ErrorCode::kIllegalBoundary,
                   "reveal of '" + in.label + "' to " +
                       dag.parties[target].name + " is not authorized for column '" +
                       col.name + "'");
            }
          }
        }
      } else {
        b.kind = TransferKind::PlaintextSend;
        b.targets = executing_parties(dag, node);
        for (int target : b.targets) {
          if (executing_parties(dag, in).count(target)) continue;
          for (const auto& col : in.out_meta.columns) {
            if (!col.trust.contains(target)) {
              fail(ErrorCode::kIllegalBoundary,
                   "plaintext send of '" + in.label + "' to " +
                       dag.parties[target].name + " violates column '" +
                       col.name + "'");
            }
          }
        }
      }
      segments[to_seg].in_boundaries.push_back(b);
      segments[from_seg].out_boundaries.push_back(b);
    }
  }
  return segments;
}

namespace {

void add_step(std::vector<PlanStep>& steps, int segment, const std::string& op,
              const QueryDag& dag, const OpNode& node, const std::string& detail,
              std::set<int> participants) {
  PlanStep s;
  s.step_id = static_cast<int>(steps.size());
  s.segment = segment;
  s.op = op;
  s.node = node.id;
  s.detail = detail;
  for (NodeId in : node.inputs) s.inputs.push_back(dag.node(in).label);
  s.output = node.label;
  s.participants = std::move(participants);
  steps.push_back(std::move(s));
}

}  // namespace

std::vector<PlanStep> lower_plan(const QueryDag& dag,
                                 const std::vector<Segment>& segments) {
  std::map<NodeId, int> seg_of_node;
  for (const auto& seg : segments) {
    for (NodeId id : seg.steps) seg_of_node[id] = seg.id;
  }
  std::set<int> all;
  for (const auto& p : dag.parties) all.insert(p.id);

  std::vector<PlanStep> steps;
  for (NodeId id : dag.topo_order()) {
    const OpNode& node = dag.node(id);
    const int seg = seg_of_node.at(id);

    // Boundary transfers feeding this node.
    for (NodeId in_id : node.inputs) {
      const int from = seg_of_node.at(in_id);
      if (from == seg) continue;
      const OpNode& in = dag.node(in_id);
      if (!in.mode.is_shared() && node.mode.is_shared()) {
        add_step(steps, seg, "share_in", dag, in,
                 "secret-share '" + in.label + "' into the shared segment", all);
      } else if (in.mode.is_shared() && !node.mode.is_shared()) {
        add_step(steps, seg, "reveal_to", dag, in,
                 "reconstruct '" + in.label + "' at the consuming parties", all);
      } else if (!in.mode.is_shared() && !node.mode.is_shared()) {
        auto from_parties = executing_parties(dag, in);
        auto to_parties = executing_parties(dag, node);
        std::set<int> both = from_parties;
        both.insert(to_parties.begin(), to_parties.end());
        add_step(steps, seg, "plaintext_send", dag, in,
                 "forward cleartext '" + in.label + "'", both);
      }
      // Shared handoffs move no data; the shares stay where they are.
    }

    const auto exec = executing_parties(dag, node);
    switch (node.mode.kind) {
      case ExecKind::Clear:
      case ExecKind::Unassigned: {
        if (node.kind == OpKind::Input) {
          add_step(steps, seg, "read_input", dag, node, "load local table", exec);
        } else if (node.kind == OpKind::Output) {
          add_step(steps, seg, "deliver_output", dag, node,
                   "write result for recipients", exec);
        } else {
          add_step(steps, seg, std::string("clear_") + op_kind_name(node.kind),
                   dag, node, "cleartext evaluation", exec);
        }
        break;
      }
      case ExecKind::Mpc: {
        switch (node.kind) {
          case OpKind::Filter:
            add_step(steps, seg, "oblivious_filter_flags", dag, node,
                     "append hidden predicate flags", all);
            break;
          case OpKind::Multiply:
            add_step(steps, seg, "abb_multiply", dag, node, "columnwise product",
                     all);
            break;
          case OpKind::Divide:
            add_step(steps, seg, "abb_divide", dag, node,
                     "columnwise quotient (baseline plans only)", all);
            break;
          case OpKind::SortBy:
            add_step(steps, seg, "oblivious_sort", dag, node,
                     "bitonic network sort", all);
            break;
          case OpKind::Aggregate:
          case OpKind::Distinct: {
            const bool eliding_sort = node.sort_elided;
            bool has_group = true;
            if (node.kind == OpKind::Aggregate) {
              has_group = !node.params_as<AggregateParams>().group_by.empty();
            }
            if (!eliding_sort && has_group) {
              add_step(steps, seg, "oblivious_sort", dag, node,
                       "arrange rows into key groups", all);
            }
            add_step(steps, seg, "oblivious_accumulate_scan", dag, node,
                     "fold each key group into its last row", all);
            if (!node.shuffle_elided) {
              add_step(steps, seg, "oblivious_shuffle", dag, node,
                       "hide survivor positions", all);
            }
            add_step(steps, seg, "reveal_group_flags", dag, node,
                     "open keep flags and discard dead rows", all);
            break;
          }
          case OpKind::Join:
            add_step(steps, seg, "pairwise_key_equality", dag, node,
                     "compare every row pair", all);
            add_step(steps, seg, "mask_payloads", dag, node,
                     "multiply payloads by match flags", all);
            add_step(steps, seg, "oblivious_shuffle", dag, node,
                     "hide candidate order", all);
            add_step(steps, seg, "reveal_match_flags", dag, node,
                     "open match flags and discard dead candidates", all);
            break;
          default:
            add_step(steps, seg, std::string("share_") + op_kind_name(node.kind),
                     dag, node, "local share arithmetic", all);
            break;
        }
        break;
      }
      case ExecKind::HybridJoin: {
        const int stp = node.mode.party;
        add_step(steps, seg, "oblivious_shuffle", dag, node,
                 "shuffle the left input", all);
        add_step(steps, seg, "oblivious_shuffle", dag, node,
                 "shuffle the right input", all);
        add_step(steps, seg, "reveal_keys_to_stp", dag, node,
                 "open both key columns toward the trusted helper", all);
        add_step(steps, seg, "enumerate_and_join_keys", dag, node,
                 "cleartext enumerate, join, and project row indexes", {stp});
        add_step(steps, seg, "share_in_index_relations", dag, node,
                 "secret-share matching row indexes", all);
        add_step(steps, seg, "oblivious_select", dag, node,
                 "gather matching left rows", all);
        add_step(steps, seg, "oblivious_select", dag, node,
                 "gather matching right rows", all);
        add_step(steps, seg, "column_concat", dag, node,
                 "stitch left and right rows", all);
        add_step(steps, seg, "oblivious_shuffle", dag, node,
                 "shuffle the joined result", all);
        break;
      }
      case ExecKind::PublicJoin: {
        const int chosen = node.mode.party;
        add_step(steps, seg, "send_keys_to_party", dag, node,
                 "ship public key columns in the clear", all);
        add_step(steps, seg, "sort_and_join_keys", dag, node,
                 "cleartext sort-merge join of the keys", {chosen});
        add_step(steps, seg, "broadcast_index_relation", dag, node,
                 "publish matching row index pairs", all);
        add_step(steps, seg, "local_gather_shares", dag, node,
                 "each party gathers its shares at the published positions",
                 all);
        break;
      }
      case ExecKind::HybridAgg: {
        const int stp = node.mode.party;
        add_step(steps, seg, "oblivious_shuffle", dag, node,
                 "shuffle the input", all);
        add_step(steps, seg, "reveal_group_column_to_stp", dag, node,
                 "open the group-by column toward the trusted helper", all);
        add_step(steps, seg, "sort_and_flag_keys", dag, node,
                 "cleartext sort plus previous-key equality flags", {stp});
        add_step(steps, seg, "broadcast_index_order", dag, node,
                 "publish the sorted index order", all);
        add_step(steps, seg, "share_in_equality_flags", dag, node,
                 "secret-share the equality flags", all);
        add_step(steps, seg, "reorder_shares", dag, node,
                 "apply the public order to local shares", all);
        add_step(steps, seg, "oblivious_accumulate_scan", dag, node,
                 "fold each key group into its last row", all);
        add_step(steps, seg, "oblivious_shuffle", dag, node,
                 "hide survivor positions", all);
        add_step(steps, seg, "reveal_group_flags", dag, node,
                 "open keep flags and discard dead rows", all);
        break;
      }
    }
  }
  return steps;
}

std::string plan_document(const QueryDag& dag, const std::vector<PlanStep>& steps,
                          int party) {
  nlohmann::json doc;
  doc["party"] = dag.parties[party].name;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : steps) {
    if (!s.participants.count(party)) continue;
    nlohmann::json item;
    item["step_id"] = s.step_id;
    item["segment"] = s.segment;
    item["op"] = s.op;
    item["node"] = dag.has_node(s.node) ? dag.node(s.node).label : "";
    item["detail"] = s.detail;
    item["inputs"] = s.inputs;
    item["output"] = s.output;
    nlohmann::json parts = nlohmann::json::array();
    for (int p : s.participants) parts.push_back(dag.parties[p].name);
    item["participants"] = parts;
    arr.push_back(item);
  }
  doc["steps"] = arr;
  return doc.dump(2);
}

// ---------------------------------------------------------------------------
// Cost model
// ---------------------------------------------------------------------------

std::uint64_t shuffle_units_for(std::uint64_t n) {
  if (n < 2) return 0;
  std::uint64_t k = 0;
  while ((std::uint64_t{1} << k) < n) ++k;
  return n * k;
}

std::uint64_t bitonic_exchanges(std::uint64_t n) {
  if (n < 2) return 0;
  std::uint64_t k = 0;
  while ((std::uint64_t{1} << k) < n) ++k;
  const std::uint64_t padded = std::uint64_t{1} << k;
  return (padded / 2) * k * (k + 1) / 2;
}

OpCounters CostModel::total() const {
  OpCounters t;
  for (const auto& [seg, c] : per_segment) t += c;
  return t;
}

std::string CostModel::to_json(const std::vector<Segment>& segments) const {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& seg : segments) {
    nlohmann::json item;
    item["segment"] = seg.id;
    item["mode"] = exec_kind_name(seg.mode.kind);
    auto it = per_segment.find(seg.id);
    const OpCounters c = it == per_segment.end() ? OpCounters{} : it->second;
    item["counters"] = nlohmann::json::parse(c.to_json());
    doc.push_back(item);
  }
  nlohmann::json root;
  root["segments"] = doc;
  root["total"] = nlohmann::json::parse(total().to_json());
  return root.dump(2);
}

namespace {

std::uint64_t rows_of(const std::map<NodeId, std::uint64_t>& rows, NodeId id) {
  auto it = rows.find(id);
  if (it == rows.end()) {
    fail(ErrorCode::kInternal,
         "cost model needs a row count for node " + std::to_string(id));
  }
  return it->second;
}

std::uint64_t minus1(std::uint64_t n) { return n == 0 ? 0 : n - 1; }

// Scan-phase counters shared by aggregate and distinct: adjacent-key
// equality over k columns, optional accumulate, and the flag bookkeeping
// that suppresses key groups whose rows were all filtered away.
OpCounters scan_cost(std::uint64_t n, std::uint64_t k, bool accumulate,
                     bool flagged, bool mask_values) {
  OpCounters c;
  c.eq = minus1(n) * k;
  if (k > 1) c.mul += minus1(n) * (k - 1);
  if (accumulate) c.mul += minus1(n);
  if (flagged) {
    if (mask_values) c.mul += n;
    c.mul += 2 * minus1(n);  // running group-liveness bit
    c.mul += minus1(n);      // keep = last-of-group AND live
  }
  return c;
}

}  // namespace

CostModel estimate_cost(const QueryDag& dag, const std::vector<Segment>& segments,
                        const std::map<NodeId, std::uint64_t>& node_rows) {
  CostModel model;
  for (const auto& seg : segments) model.per_segment[seg.id] = {};
  std::map<NodeId, int> seg_of_node;
  for (const auto& seg : segments) {
    for (NodeId id : seg.steps) seg_of_node[id] = seg.id;
  }

  for (const auto& [id, node] : dag.nodes) {
    if (!node.mode.is_shared()) continue;
    OpCounters c;
    const std::uint64_t out_rows = rows_of(node_rows, id);
    switch (node.kind) {
      case OpKind::Filter: {
        const std::uint64_t n = rows_of(node_rows, node.inputs[0]);
        if (node.params_as<FilterParams>().cmp == Cmp::Eq) {
          c.eq += n;
        } else {
          c.lt += n;
        }
        if (relation_is_flagged(dag, node.inputs[0])) c.mul += n;
        break;
      }
      case OpKind::Multiply:
        c.mul += rows_of(node_rows, node.inputs[0]);
        break;
      case OpKind::Divide:
        c.div += rows_of(node_rows, node.inputs[0]);
        break;
      case OpKind::SortBy:
        c.sort_compares += bitonic_exchanges(rows_of(node_rows, node.inputs[0]));
        break;
      case OpKind::Aggregate: {
        const auto& p = node.params_as<AggregateParams>();
        const std::uint64_t n = rows_of(node_rows, node.inputs[0]);
        const bool flagged = relation_is_flagged(dag, node.inputs[0]);
        if (node.mode.kind == ExecKind::HybridAgg) {
          c.shuffle_units += 2 * shuffle_units_for(n);
          c.mul += minus1(n);
          break;
        }
        if (!p.group_by.empty() && !node.sort_elided) {
          c.sort_compares += bitonic_exchanges(n);
        }
        c += scan_cost(n, p.group_by.size(), /*accumulate=*/true, flagged,
                       /*mask_values=*/flagged && p.func == AggFunc::Sum);
        if (!node.shuffle_elided) c.shuffle_units += shuffle_units_for(n);
        break;
      }
      case OpKind::Distinct: {
        const std::uint64_t n = rows_of(node_rows, node.inputs[0]);
        const bool flagged = relation_is_flagged(dag, node.inputs[0]);
        if (!node.sort_elided) c.sort_compares += bitonic_exchanges(n);
        c += scan_cost(n, node.out_meta.width(), /*accumulate=*/false, flagged,
                       /*mask_values=*/false);
        if (!node.shuffle_elided) c.shuffle_units += shuffle_units_for(n);
        break;
      }
      case OpKind::Join: {
        const std::uint64_t nl = rows_of(node_rows, node.inputs[0]);
        const std::uint64_t nr = rows_of(node_rows, node.inputs[1]);
        if (node.mode.kind == ExecKind::Mpc) {
          const std::uint64_t pairs = nl * nr;
          c.eq += pairs;
          c.mul += pairs * (node.out_meta.width() - 1);
          c.shuffle_units += shuffle_units_for(pairs);
        } else if (node.mode.kind == ExecKind::HybridJoin) {
          c.shuffle_units += shuffle_units_for(nl) + shuffle_units_for(nr) +
                             shuffle_units_for(out_rows);
          c.select_units += nl * out_rows + nr * out_rows;
        }
        // Public join: cleartext key work plus local share gathering only.
        break;
      }
      default:
        break;  // share plumbing is free
    }
    model.per_segment[seg_of_node.at(id)] += c;
  }
  return model;
}

}  // namespace secrel
