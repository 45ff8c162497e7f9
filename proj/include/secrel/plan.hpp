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

#ifndef SECREL_PLAN_HPP_
#define SECREL_PLAN_HPP_

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "secrel/ir.hpp"
#include "secrel/mpc.hpp"

namespace secrel {

enum class TransferKind {
  ShareIn,         // cleartext relation enters shared space
  RevealTo,        // shared relation reconstructed at specific parties
  PlaintextSend,   // cleartext relation moves between clear segments
  SharedHandoff,   // shares flow between shared-space segments unchanged
};

const char* transfer_kind_name(TransferKind kind);

struct Boundary {
  NodeId producer = -1;       // node whose output crosses
  int from_segment = -1;
  int to_segment = -1;
  TransferKind kind = TransferKind::ShareIn;
  std::set<int> targets;      // reveal recipients / plaintext receivers
};

struct Segment {
  int id = -1;
  ExecMode mode;              // Clear(p) | Mpc | hybrid kinds
  std::vector<NodeId> steps;  // topological order
  std::vector<Boundary> in_boundaries;
  std::vector<Boundary> out_boundaries;
  std::set<int> participants;
};

// Splits the compiled DAG at every transition between clear and shared
// execution. Maximal runs of same-mode nodes form one segment; every hybrid
// operator is its own segment. Re-checks that each reveal and plaintext send
// is covered by the trust sets (defense in depth behind the compiler).
std::vector<Segment> partition(const QueryDag& dag);

// One lowered protocol step. Hybrid operators expand into their cleartext
// and oblivious sub-steps so per-party plans show exactly who does what.
struct PlanStep {
  int step_id = -1;
  int segment = -1;
  std::string op;
  NodeId node = -1;
  std::string detail;
  std::vector<std::string> inputs;  // node labels
  std::string output;               // node label
  std::set<int> participants;
};

// The full lowered step list; party p's plan is the subsequence of steps it
// participates in. Together the per-party plans cover each step once per
// participant.
std::vector<PlanStep> lower_plan(const QueryDag& dag,
                                 const std::vector<Segment>& segments);

std::string plan_document(const QueryDag& dag, const std::vector<PlanStep>& steps,
                          int party);

// Static operation-count model. Every formula is definitional: the runtime
// counters of the simulated engine match these numbers exactly, given the
// per-node row counts actually observed (joins and aggregations have data
// dependent result sizes, so callers supply them).
struct CostModel {
  std::map<int, OpCounters> per_segment;
  OpCounters total() const;
  std::string to_json(const std::vector<Segment>& segments) const;
};

CostModel estimate_cost(const QueryDag& dag, const std::vector<Segment>& segments,
                        const std::map<NodeId, std::uint64_t>& node_rows);

// Formula helpers shared with tests.
std::uint64_t shuffle_units_for(std::uint64_t n);
std::uint64_t bitonic_exchanges(std::uint64_t n);

}  // namespace secrel

#endif  // SECREL_PLAN_HPP_
