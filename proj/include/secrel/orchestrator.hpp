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

#ifndef SECREL_ORCHESTRATOR_HPP_
#define SECREL_ORCHESTRATOR_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "secrel/ledger.hpp"
#include "secrel/mpc.hpp"
#include "secrel/plan.hpp"
#include "secrel/rewrite.hpp"
#include "secrel/table.hpp"

namespace secrel {

struct SimulateOptions {
  std::uint64_t seed = 0;
  bool no_rewrites = false;
  std::map<int, bool> consent;  // overrides the document's consent map
};

struct RunResult {
  std::uint64_t seed = 0;
  QueryDag compiled;
  RewriteTrace trace;
  std::vector<Segment> segments;
  std::vector<PlanStep> plan_steps;
  // outputs[party][output name]; rows in canonical (sorted) order.
  std::map<int, std::map<std::string, Table>> outputs;
  Ledger ledger;
  Transcript transcript;
  OpCounters counters;
  std::map<int, OpCounters> segment_counters;
  std::map<NodeId, std::uint64_t> node_rows;
  CostModel cost;
};

// Compiles and runs a query end to end on the in-process party actors,
// checking on the way that the runtime counters equal the static cost model.
// Deterministic for a fixed (query, inputs, seed).
RunResult simulate(const QueryDag& query, const std::map<std::string, Table>& inputs,
                   const SimulateOptions& opts);

struct AuditViolation {
  LeakageEvent event;
  std::string reason;
};

struct AuditReport {
  bool pass = false;
  std::vector<AuditViolation> violations;
  std::size_t events_checked = 0;
  std::string to_json(const QueryDag& dag) const;
};

// Replays every ledger event against the authorized set derived from the
// compiled DAG: column values against trust sets, cardinalities against the
// shared-space boundary relations, permutations against the hybrid operators
// that publish index orders, outputs against recipients.
AuditReport audit(const Ledger& ledger, const QueryDag& compiled);

struct VerifyReport {
  bool pass = false;
  int trials = 0;
  std::string mismatch;  // description of the first divergence
  std::string to_json() const;
};

// Equivalence harness: for randomized inputs, the rewritten plan, the
// un-rewritten baseline plan and the single-site oracle must produce the
// same output multisets. Inputs are generated per trial from the seed. When
// base_inputs is non-empty it is used for trial 0 as-is.
VerifyReport verify(const QueryDag& query, int trials, std::uint64_t seed,
                    std::size_t max_rows,
                    const std::map<std::string, Table>& base_inputs = {},
                    const std::map<int, bool>& consent = {});

// Random tables matching the query's input schemas. Values are drawn from a
// small domain plus any filter constants mentioned for the column, so
// predicates hit and miss; all values are >= 1, keeping sums of positives
// nonzero for divisors.
std::map<std::string, Table> generate_inputs(const QueryDag& query,
                                             std::uint64_t seed,
                                             std::size_t max_rows);

// Run-directory persistence used by the CLI: compiled DAG, trace, plans,
// ledger, counters, cost report, transcripts and per-recipient outputs.
void write_run_dir(const std::string& dir, const QueryDag& query,
                   const RunResult& result);

}  // namespace secrel

#endif  // SECREL_ORCHESTRATOR_HPP_
