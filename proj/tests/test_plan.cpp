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

#include <algorithm>

#include "doctest.h"
#include "secrel/plan.hpp"
#include "secrel/rewrite.hpp"
#include "test_util.hpp"

using namespace secrel;
using namespace secrel::test;

namespace {

const Segment& segment_of(const std::vector<Segment>& segments,
                          const QueryDag& dag, const std::string& label) {
  const NodeId id = node_by_label(dag, label).id;
  for (const auto& seg : segments) {
    if (std::find(seg.steps.begin(), seg.steps.end(), id) != seg.steps.end()) {
      return seg;
    }
  }
  REQUIRE_MESSAGE(false, ("no segment holds " + label));
  throw 0;
}

}  // namespace

TEST_CASE("partitioning splits the DAG at every mode transition") {
  SUBCASE("market concentration") {
    auto compiled = compile_query(load_fixture("market_concentration")).dag;
    auto segments = partition(compiled);
    // per-party clear prep, two shared combines, the public join, and the
    // clear tail at the regulator
    const auto& prep_b = segment_of(segments, compiled, "revenue.pB");
    CHECK(prep_b.mode == ExecMode::clear(1));
    const auto& combine = segment_of(segments, compiled, "revenue");
    CHECK(combine.mode.kind == ExecKind::Mpc);
    const auto& join_seg = segment_of(segments, compiled, "with_total");
    CHECK(join_seg.mode.kind == ExecKind::PublicJoin);
    CHECK(join_seg.steps.size() == 1);
    const auto& tail = segment_of(segments, compiled, "share_pct");
    CHECK(tail.mode == ExecMode::clear(0));
    // the tail keeps the multiply, final aggregate, and both outputs
    CHECK(tail.steps.size() == 5);
    // clear segments name one party, shared segments all of them
    for (const auto& seg : segments) {
      if (seg.mode.is_clear()) {
        std::set<int> expect;
        for (NodeId id : seg.steps) {
          const auto& node = compiled.node(id);
          if (node.kind == OpKind::Output) {
            for (int r : node.params_as<OutputParams>().recipients) {
              expect.insert(r);
            }
          } else {
            expect.insert(node.mode.party);
          }
        }
        CHECK(seg.participants == expect);
      } else {
        CHECK(seg.participants == std::set<int>{0, 1, 2});
      }
    }
  }

  SUBCASE("an all-clear query forms a single segment") {
    const std::string doc = R"({
      "parties": [{"name": "pA"}],
      "nodes": [
        {"id": "x", "kind": "input", "at": "pA",
         "out_columns": [{"name": "k", "trust": []}, {"name": "v", "trust": []}]},
        {"id": "agg", "kind": "aggregate",
         "params": {"func": "sum", "group": ["k"], "over": "v", "as": "s"},
         "inputs": ["x"]},
        {"id": "out", "kind": "output", "to": ["pA"], "inputs": ["agg"]}
      ]})";
    auto compiled = compile_query(build_dag(doc)).dag;
    auto segments = partition(compiled);
    CHECK(segments.size() == 1);
    CHECK(segments[0].steps.size() == 3);
  }

  SUBCASE("credit regulation: hybrid operators stand alone") {
    auto compiled = compile_query(load_fixture("credit_regulation")).dag;
    auto segments = partition(compiled);
    CHECK(segment_of(segments, compiled, "joined").mode.kind ==
          ExecKind::HybridJoin);
    CHECK(segment_of(segments, compiled, "by_zip").mode.kind ==
          ExecKind::HybridAgg);
    CHECK(segment_of(segments, compiled, "total_sc").mode.kind ==
          ExecKind::HybridAgg);
    CHECK(segment_of(segments, compiled, "avg_join").mode.kind ==
          ExecKind::HybridJoin);
    const auto& tail = segment_of(segments, compiled, "avg_scores");
    CHECK(tail.mode == ExecMode::clear(0));
    // every hybrid segment holds exactly its operator
    for (const auto& seg : segments) {
      if (!seg.mode.is_clear() && seg.mode.kind != ExecKind::Mpc) {
        CHECK(seg.steps.size() == 1);
      }
    }
  }

  SUBCASE("every cross-segment edge carries exactly one boundary record") {
    for (const auto& name :
         {"market_concentration", "credit_regulation", "medication_cohort",
          "diagnosis_frequency", "region_tally"}) {
      auto compiled = compile_query(load_fixture(name)).dag;
      auto segments = partition(compiled);
      std::map<NodeId, int> seg_of;
      for (const auto& seg : segments) {
        for (NodeId id : seg.steps) seg_of[id] = seg.id;
      }
      std::map<std::pair<NodeId, int>, int> records;
      for (const auto& seg : segments) {
        for (const auto& b : seg.in_boundaries) {
          ++records[{b.producer, b.to_segment}];
        }
      }
      for (const auto& [id, node] : compiled.nodes) {
        for (NodeId in : node.inputs) {
          if (seg_of.at(in) == seg_of.at(id)) continue;
          const int count = records[{in, seg_of.at(id)}];
          CHECK_MESSAGE(count == 1,
                        (name + std::string(": edge into ") + node.label));
        }
      }
    }
  }

  SUBCASE("boundary kinds match the modes on each side") {
    auto compiled = compile_query(load_fixture("medication_cohort")).dag;
    auto segments = partition(compiled);
    bool saw_share_in = false, saw_reveal = false;
    for (const auto& seg : segments) {
      for (const auto& b : seg.in_boundaries) {
        const OpNode& producer = compiled.node(b.producer);
        if (b.kind == TransferKind::ShareIn) {
          saw_share_in = true;
          CHECK(producer.mode.is_clear());
        }
        if (b.kind == TransferKind::RevealTo) {
          saw_reveal = true;
          CHECK(producer.mode.is_shared());
          CHECK(b.targets == std::set<int>{0, 1});
        }
      }
    }
    CHECK(saw_share_in);
    CHECK(saw_reveal);
  }

  SUBCASE("a tampered mode is caught as an illegal boundary") {
    auto compiled = compile_query(load_fixture("credit_regulation")).dag;
    // pretend the scores bank suddenly evaluates the lifted divide
    node_by_label(compiled, "avg_scores");
    for (auto& [id, node] : compiled.nodes) {
      if (node.label == "avg_scores") {
        node.mode = ExecMode::clear(1);
        node.lifted_to = {1};
      }
    }
    try {
      partition(compiled);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kIllegalBoundary);
    }
  }
}

TEST_CASE("plan emission covers every step exactly once per participant") {
  SUBCASE("shared steps appear in all plans, clear steps in one") {
    auto compiled = compile_query(load_fixture("market_concentration")).dag;
    auto segments = partition(compiled);
    auto steps = lower_plan(compiled, segments);
    // the shared combine steps list all three parties
    const NodeId revenue = node_by_label(compiled, "revenue").id;
    bool found = false;
    for (const auto& s : steps) {
      if (s.node == revenue && s.op == "oblivious_accumulate_scan") {
        found = true;
        CHECK(s.participants == std::set<int>{0, 1, 2});
      }
      if (s.op == "clear_aggregate" && s.output == "revenue.pB") {
        CHECK(s.participants == std::set<int>{1});
      }
    }
    CHECK(found);
  }

  SUBCASE("the helper's cleartext work appears only in its plan") {
    auto compiled = compile_query(load_fixture("credit_regulation")).dag;
    auto segments = partition(compiled);
    auto steps = lower_plan(compiled, segments);
    int helper_only = 0;
    for (const auto& s : steps) {
      if (s.op == "enumerate_and_join_keys" || s.op == "sort_and_flag_keys") {
        CHECK(s.participants == std::set<int>{0});
        ++helper_only;
      }
    }
    CHECK(helper_only == 4);  // two hybrid joins + two hybrid aggregations
    const std::string plan_b = plan_document(compiled, steps, 1);
    CHECK(plan_b.find("enumerate_and_join_keys") == std::string::npos);
    const std::string plan_a = plan_document(compiled, steps, 0);
    CHECK(plan_a.find("enumerate_and_join_keys") != std::string::npos);
  }

  SUBCASE("plans partition the step list") {
    auto compiled = compile_query(load_fixture("diagnosis_frequency")).dag;
    auto segments = partition(compiled);
    auto steps = lower_plan(compiled, segments);
    for (const auto& s : steps) {
      CHECK(!s.participants.empty());
      for (int p : s.participants) {
        CHECK(p >= 0);
        CHECK(p < compiled.n_parties());
      }
    }
  }
}

TEST_CASE("the cost model is definitional") {
  SUBCASE("a pairwise join on 100x100 rows costs 10000 comparisons") {
    auto dag = load_fixture("region_tally");
    CompileOptions opts;
    opts.no_rewrites = true;
    auto compiled = compile_query(dag, opts).dag;
    auto segments = partition(compiled);
    std::map<NodeId, std::uint64_t> rows;
    rows[node_by_label(compiled, "events_a").id] = 100;
    rows[node_by_label(compiled, "events_b").id] = 100;
    rows[node_by_label(compiled, "matched").id] = 120;
    rows[node_by_label(compiled, "tally").id] = 12;
    rows[node_by_label(compiled, "out").id] = 12;
    auto model = estimate_cost(compiled, segments, rows);
    // the baseline segment holds the join's n_l*n_r comparisons plus the
    // aggregation's adjacent-key comparisons over its 120 rows
    const auto& jseg = segment_of(segments, compiled, "matched");
    CHECK(model.per_segment.at(jseg.id).eq == 10000 + 119);
  }

  SUBCASE("closed forms for the oblivious sub-protocols") {
    CHECK(shuffle_units_for(100) == 700);
    CHECK(shuffle_units_for(1) == 0);
    CHECK(shuffle_units_for(0) == 0);
    CHECK(bitonic_exchanges(128) == 1792);
    CHECK(bitonic_exchanges(100) == 1792);  // padded to 128
    CHECK(bitonic_exchanges(64) == 672);
    CHECK(bitonic_exchanges(256) == 4608);
  }

  SUBCASE("helper-assisted join formula") {
    // n rows per side, m result rows: two input shuffles, two index selects,
    // one result shuffle
    const std::uint64_t n = 100, m = 10;
    CHECK(2 * shuffle_units_for(n) + shuffle_units_for(m) == 2 * 700 + 40);
    CHECK(2 * n * m == 2000);
  }
}
