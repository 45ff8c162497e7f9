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

#ifndef SECREL_REWRITE_HPP_
#define SECREL_REWRITE_HPP_

#include <map>
#include <string>
#include <vector>

#include "secrel/ir.hpp"

namespace secrel {

struct TraceEntry {
  std::string pass;
  std::string rule;
  std::vector<NodeId> before;
  std::vector<NodeId> after;
  std::string note;
};

// Ordered record of every rewrite applied during compilation, including the
// reveal each push-up lift introduces. Written next to the compiled plan so
// reveals can be audited back to the rule that licensed them.
struct RewriteTrace {
  std::vector<TraceEntry> entries;
  void add(TraceEntry e) { entries.push_back(std::move(e)); }
  std::string to_json(const QueryDag& dag) const;
};

// Moves the secret-shared frontier toward the inputs: distributive operators
// hop below a multi-party concat and run per party in the clear; group-by
// aggregations split into local pre-aggregations plus a shared secondary
// combine. The split makes shared input sizes data dependent, so it needs
// every party's consent.
void push_down(QueryDag& dag, RewriteTrace& trace);

// Moves the frontier toward the outputs: reversible leaf operators (scalar
// multiplication by a nonzero constant, reordering projections, division
// whose divisor the recipient receives anyway) run in the clear at the
// recipient, and a leaf group-by count becomes a shared projection plus a
// cleartext count.
void push_up(QueryDag& dag, RewriteTrace& trace);

// Swaps eligible shared joins and aggregations for hybrid protocols when the
// trust annotations name a selectively-trusted party, and for the public join
// when both key columns are public.
void insert_hybrids(QueryDag& dag, RewriteTrace& trace);

// Tracks sortedness through the DAG, deletes redundant oblivious sorts, and
// marks aggregations whose sort (and, when the row order is public, final
// shuffle) can be skipped.
void eliminate_sorts(QueryDag& dag, RewriteTrace& trace);

// True when the node's output carries a hidden validity-flag column, i.e. an
// oblivious filter ran upstream without an intervening consumer.
bool relation_is_flagged(const QueryDag& dag, NodeId id);

struct CompileResult {
  QueryDag dag;
  RewriteTrace trace;
};

struct CompileOptions {
  bool no_rewrites = false;
  // Overrides the document's consent map where present.
  std::map<int, bool> consent;
};

// Full pipeline: analysis, push-down, trust propagation, hybrid insertion,
// push-up, sort elimination, final soundness checks. With no_rewrites only
// the analysis runs, leaving one large shared segment (the equivalence
// baseline).
CompileResult compile_query(const QueryDag& input, const CompileOptions& opts = {});

}  // namespace secrel

#endif  // SECREL_REWRITE_HPP_
