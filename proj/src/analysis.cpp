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

#include "secrel/analysis.hpp"

#include <algorithm>

#include "json.hpp"

namespace secrel {

void propagate_ownership(QueryDag& dag) {
  for (NodeId id : dag.topo_order()) {
    OpNode& node = dag.node(id);
    if (node.kind == OpKind::Input) {
      const int at = node.params_as<InputParams>().party;
      node.out_meta.owner = Ownership::single(at);
      node.out_meta.stored_at = {at};
      node.out_meta.row_count_public = true;
      continue;
    }
    if (!node.lifted_to.empty()) {
      // The push-up pass revealed this node's input to the lift targets, who
      // now hold the data and can derive the result locally.
      node.out_meta.owner = Ownership::single(*node.lifted_to.begin());
      node.out_meta.stored_at = node.lifted_to;
      continue;
    }
    Ownership owner = dag.node(node.inputs[0]).out_meta.owner;
    for (std::size_t i = 1; i < node.inputs.size(); ++i) {
      const Ownership& other = dag.node(node.inputs[i]).out_meta.owner;
      if (!(owner.is_single() && other.is_single() && owner.party == other.party)) {
        owner = Ownership::partitioned();
        break;
      }
    }
    node.out_meta.owner = owner;
    if (node.kind == OpKind::Output) {
      const auto& p = node.params_as<OutputParams>();
      node.out_meta.stored_at = {p.recipients.begin(), p.recipients.end()};
    } else if (owner.is_single()) {
      node.out_meta.stored_at = {owner.party};
    } else {
      node.out_meta.stored_at.clear();
    }
  }
}

void propagate_trust(QueryDag& dag) {
  const auto consumers = dag.consumers();
  for (NodeId id : dag.topo_order()) {
    OpNode& node = dag.node(id);
    if (node.kind == OpKind::Input) {
      // Annotations are a lower bound; the storing party always qualifies.
      const int at = node.params_as<InputParams>().party;
      for (auto& col : node.out_meta.columns) col.trust.insert(at);
    } else {
      const auto deps = column_deps(dag, node);
      for (std::size_t c = 0; c < node.out_meta.width(); ++c) {
        TrustSet trust = TrustSet::full(dag.n_parties());
        for (const auto& [input_pos, col_idx] : deps.at(c)) {
          const OpNode& in = dag.node(node.inputs[input_pos]);
          trust = trust.intersect(in.out_meta.columns[col_idx].trust);
        }
        node.out_meta.columns[c].trust = trust;
      }
      if (node.kind == OpKind::Output) {
        for (int r : node.params_as<OutputParams>().recipients) {
          for (auto& col : node.out_meta.columns) col.trust.insert(r);
        }
      }
    }
    // Recipients are implicitly trusted with the relation delivered to them,
    // and a downstream lift reveals this relation to the lift targets; keep
    // both in the trust sets so the reveal and everything derived from it
    // stay authorized. Neither extends past this relation.
    for (NodeId consumer_id : consumers.at(id)) {
      const OpNode& consumer = dag.node(consumer_id);
      if (consumer.kind == OpKind::Output) {
        for (int r : consumer.params_as<OutputParams>().recipients) {
          for (auto& col : node.out_meta.columns) col.trust.insert(r);
        }
      }
      for (int p : consumer.lifted_to) {
        for (auto& col : node.out_meta.columns) col.trust.insert(p);
      }
    }
  }
}

void mark_mpc(QueryDag& dag) {
  for (NodeId id : dag.topo_order()) {
    OpNode& node = dag.node(id);
    if (node.mode.kind == ExecKind::HybridJoin ||
        node.mode.kind == ExecKind::PublicJoin ||
        node.mode.kind == ExecKind::HybridAgg) {
      node.mpc_required = true;
      continue;
    }
    if (node.kind == OpKind::Output) {
      const auto& p = node.params_as<OutputParams>();
      int lowest = *std::min_element(p.recipients.begin(), p.recipients.end());
      node.mode = ExecMode::clear(lowest);
      node.mpc_required = false;
      continue;
    }
    switch (node.out_meta.owner.kind) {
      case OwnerKind::Single:
        node.mode = ExecMode::clear(node.out_meta.owner.party);
        node.mpc_required = false;
        break;
      case OwnerKind::Public:
        node.mode = ExecMode::clear(node.out_meta.stored_at.empty()
                                        ? 0
                                        : *node.out_meta.stored_at.begin());
        node.mpc_required = false;
        break;
      case OwnerKind::Partitioned:
        node.mode = ExecMode::mpc();
        node.mpc_required = true;
        break;
    }
  }
}

void analyze(QueryDag& dag) {
  propagate_ownership(dag);
  propagate_trust(dag);
  mark_mpc(dag);
}

std::string analysis_report(const QueryDag& dag) {
  nlohmann::json report = nlohmann::json::array();
  for (NodeId id : dag.topo_order()) {
    const OpNode& node = dag.node(id);
    nlohmann::json entry;
    entry["node"] = node.label;
    switch (node.out_meta.owner.kind) {
      case OwnerKind::Single:
        entry["owner"] = dag.parties[node.out_meta.owner.party].name;
        break;
      case OwnerKind::Partitioned:
        entry["owner"] = "partitioned";
        break;
      case OwnerKind::Public:
        entry["owner"] = "public";
        break;
    }
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& col : node.out_meta.columns) {
      nlohmann::json trust = nlohmann::json::array();
      for (int p : col.trust.members()) trust.push_back(dag.parties[p].name);
      cols.push_back({{"name", col.name}, {"trust", trust}});
    }
    entry["columns"] = cols;
    entry["mpc"] = node.mpc_required;
    entry["mode"] = std::string(exec_kind_name(node.mode.kind)) +
                    (node.mode.party >= 0
                         ? ":" + dag.parties[node.mode.party].name
                         : "");
    report.push_back(entry);
  }
  return report.dump(2);
}

}  // namespace secrel
