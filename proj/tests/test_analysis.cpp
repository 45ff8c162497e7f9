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

#include <random>

#include "doctest.h"
#include "secrel/analysis.hpp"
#include "test_util.hpp"

using namespace secrel;
using namespace secrel::test;

TEST_CASE("ownership propagation") {
  auto market = load_fixture("market_concentration");
  propagate_ownership(market);

  SUBCASE("a concat of three parties' inputs has no single owner") {
    CHECK(node_by_label(market, "trips").out_meta.owner.kind ==
          OwnerKind::Partitioned);
  }
  SUBCASE("unary operators inherit their input's owner") {
    // fare_pct consumes the partitioned concat
    CHECK(node_by_label(market, "fare_pct").out_meta.owner.kind ==
          OwnerKind::Partitioned);
    auto credit = load_fixture("credit_regulation");
    propagate_ownership(credit);
    // nothing above the join is partitioned on the demographics side
    CHECK(node_by_label(credit, "demographics").out_meta.owner ==
          Ownership::single(0));
  }
  SUBCASE("multi-input nodes with one common owner keep it") {
    const std::string doc = R"({
      "parties": [{"name": "pA"}, {"name": "pB"}],
      "nodes": [
        {"id": "x", "kind": "input", "at": "pA",
         "out_columns": [{"name": "k", "trust": []}, {"name": "v", "trust": []}]},
        {"id": "y", "kind": "input", "at": "pA",
         "out_columns": [{"name": "k", "trust": []}, {"name": "w", "trust": []}]},
        {"id": "j", "kind": "join", "params": {"left_key": "k", "right_key": "k"},
         "inputs": ["x", "y"]},
        {"id": "out", "kind": "output", "to": ["pA"], "inputs": ["j"]}
      ]})";
    auto dag = build_dag(doc);
    propagate_ownership(dag);
    CHECK(node_by_label(dag, "j").out_meta.owner == Ownership::single(0));
  }
  SUBCASE("outputs record their recipients as storage") {
    auto cohort = load_fixture("medication_cohort");
    propagate_ownership(cohort);
    CHECK(node_by_label(cohort, "out").out_meta.stored_at ==
          std::set<int>{0, 1});
  }
  SUBCASE("running the pass twice equals running it once") {
    auto once = load_fixture("credit_regulation");
    propagate_ownership(once);
    auto twice = once;
    propagate_ownership(twice);
    CHECK(same_structure(once, twice));
  }
}

TEST_CASE("trust propagation") {
  auto credit = load_fixture("credit_regulation");
  propagate_ownership(credit);
  propagate_trust(credit);

  SUBCASE("the joined key keeps the regulator's trust from both sides") {
    const OpNode& joined = node_by_label(credit, "joined");
    const auto& ssn = joined.out_meta.columns[0];
    CHECK(ssn.name == "ssn");
    CHECK(ssn.trust.contains(0));
    CHECK_FALSE(ssn.trust.contains(1));
    CHECK_FALSE(ssn.trust.contains(2));
    // concat of pB's and pC's annotated columns intersects to the regulator
    const OpNode& scores = node_by_label(credit, "scores");
    CHECK(scores.out_meta.columns[0].trust.members() == std::vector<int>{0});
    // score columns have disjoint trust across banks, so the merge is empty
    CHECK(scores.out_meta.columns[1].trust.empty());
  }

  SUBCASE("all-public operands give public results") {
    const std::string doc = R"({
      "parties": [{"name": "pA"}, {"name": "pB"}],
      "nodes": [
        {"id": "x", "kind": "input", "at": "pA",
         "out_columns": [{"name": "k", "trust": ["pA", "pB"]},
                          {"name": "v", "trust": ["pA", "pB"]}]},
        {"id": "y", "kind": "input", "at": "pB",
         "out_columns": [{"name": "k", "trust": ["pA", "pB"]},
                          {"name": "w", "trust": ["pA", "pB"]}]},
        {"id": "j", "kind": "join", "params": {"left_key": "k", "right_key": "k"},
         "inputs": ["x", "y"]},
        {"id": "out", "kind": "output", "to": ["pA"], "inputs": ["j"]}
      ]})";
    auto dag = build_dag(doc);
    propagate_ownership(dag);
    propagate_trust(dag);
    for (const auto& col : node_by_label(dag, "j").out_meta.columns) {
      CHECK(col.trust.is_full(2));
    }
  }

  SUBCASE("monotonicity: widening an input trust set never narrows results") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 10; ++trial) {
      auto base = load_fixture("credit_regulation");
      propagate_ownership(base);
      propagate_trust(base);

      auto widened = load_fixture("credit_regulation");
      // add one random party to one random input column's annotation
      std::vector<OpNode*> inputs;
      for (auto& [id, node] : widened.nodes) {
        if (node.kind == OpKind::Input) inputs.push_back(&node);
      }
      auto& victim = *inputs[rng() % inputs.size()];
      auto& col = victim.out_meta.columns[rng() % victim.out_meta.width()];
      col.trust.insert(static_cast<int>(rng() % 3));
      propagate_ownership(widened);
      propagate_trust(widened);

      for (const auto& [id, node] : base.nodes) {
        const OpNode& other = widened.node(id);
        for (std::size_t c = 0; c < node.out_meta.width(); ++c) {
          CHECK(node.out_meta.columns[c].trust.is_subset_of(
              other.out_meta.columns[c].trust));
        }
      }
    }
  }

  SUBCASE("soundness against brute-force transitive closure") {
    for (const auto& name : {"credit_regulation", "medication_cohort",
                             "diagnosis_frequency", "region_tally"}) {
      auto dag = load_fixture(name);
      propagate_ownership(dag);
      propagate_trust(dag);
      // seed trust at the inputs, then close over transitive dependencies
      std::map<std::pair<NodeId, std::size_t>, TrustSet> closure;
      for (NodeId id : dag.topo_order()) {
        const OpNode& node = dag.node(id);
        if (node.kind == OpKind::Input) {
          for (std::size_t c = 0; c < node.out_meta.width(); ++c) {
            closure[{id, c}] = node.out_meta.columns[c].trust;
          }
          continue;
        }
        auto deps = column_deps(dag, node);
        for (std::size_t c = 0; c < node.out_meta.width(); ++c) {
          TrustSet t = TrustSet::full(dag.n_parties());
          for (const auto& [pos, col] : deps.at(c)) {
            t = t.intersect(closure.at({node.inputs[pos], col}));
          }
          closure[{id, c}] = t;
        }
      }
      // computed trust never exceeds the closure over reachable input columns
      // (outputs additionally pick up their recipients)
      for (const auto& [id, node] : dag.nodes) {
        const auto consumers = dag.consumers();
        for (std::size_t c = 0; c < node.out_meta.width(); ++c) {
          TrustSet allowed = closure.at({id, c});
          if (node.kind == OpKind::Output) {
            for (int r : node.params_as<OutputParams>().recipients) {
              allowed.insert(r);
            }
          }
          for (NodeId cid : consumers.at(id)) {
            const OpNode& consumer = dag.node(cid);
            if (consumer.kind == OpKind::Output) {
              for (int r : consumer.params_as<OutputParams>().recipients) {
                allowed.insert(r);
              }
            }
          }
          CHECK(node.out_meta.columns[c].trust.is_subset_of(allowed));
        }
      }
    }
  }
}

TEST_CASE("marking nodes for shared execution") {
  SUBCASE("everything downstream of a multi-party concat needs shared space") {
    auto market = load_fixture("market_concentration");
    analyze(market);
    for (const auto& label : {"fare_pct", "revenue", "market_size", "with_total",
                              "share_pct", "share_sq", "hhi"}) {
      CHECK_MESSAGE(node_by_label(market, label).mpc_required, label);
    }
    CHECK_FALSE(node_by_label(market, "trips_a").mpc_required);
  }

  SUBCASE("a single-party query runs fully in the clear") {
    const std::string doc = R"({
      "parties": [{"name": "pA"}],
      "nodes": [
        {"id": "x", "kind": "input", "at": "pA",
         "out_columns": [{"name": "k", "trust": []}, {"name": "v", "trust": []}]},
        {"id": "f", "kind": "filter",
         "params": {"column": "v", "op": ">", "value": 3}, "inputs": ["x"]},
        {"id": "agg", "kind": "aggregate",
         "params": {"func": "sum", "group": ["k"], "over": "v", "as": "s"},
         "inputs": ["f"]},
        {"id": "out", "kind": "output", "to": ["pA"], "inputs": ["agg"]}
      ]})";
    auto dag = build_dag(doc);
    analyze(dag);
    for (const auto& [id, node] : dag.nodes) {
      CHECK_FALSE(node.mpc_required);
      CHECK(node.mode.is_clear());
    }
  }

  SUBCASE("a join across owners is marked, and so are its descendants") {
    auto tally = load_fixture("region_tally");
    analyze(tally);
    CHECK(node_by_label(tally, "matched").mpc_required);
    CHECK(node_by_label(tally, "tally").mpc_required);
  }

  SUBCASE("every marked node touches a partitioned relation") {
    for (const auto& name : {"market_concentration", "credit_regulation",
                             "medication_cohort", "diagnosis_frequency"}) {
      auto dag = load_fixture(name);
      analyze(dag);
      for (const auto& [id, node] : dag.nodes) {
        if (!node.mpc_required) continue;
        bool touches = node.out_meta.owner.kind == OwnerKind::Partitioned;
        for (NodeId in : node.inputs) {
          touches |= dag.node(in).out_meta.owner.kind == OwnerKind::Partitioned;
        }
        CHECK_MESSAGE(touches, node.label);
      }
    }
  }
}

TEST_CASE("the analysis report lists owner, trust, and marking per node") {
  auto dag = load_fixture("region_tally");
  analyze(dag);
  const std::string report = analysis_report(dag);
  CHECK(report.find("\"node\"") != std::string::npos);
  CHECK(report.find("\"owner\"") != std::string::npos);
  CHECK(report.find("\"trust\"") != std::string::npos);
  CHECK(report.find("\"mpc\"") != std::string::npos);
  CHECK(report.find("partitioned") != std::string::npos);
}
