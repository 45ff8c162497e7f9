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

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>

#include "doctest.h"
#include "secrel/clear_exec.hpp"
#include "secrel/table.hpp"
#include "test_util.hpp"

using namespace secrel;
using namespace secrel::test;

namespace {

OpNode make_node(OpKind kind, OpParams params, std::vector<std::string> out_cols) {
  OpNode node;
  node.kind = kind;
  node.params = std::move(params);
  node.label = "t";
  node.inputs = {0};
  if (kind == OpKind::Join) node.inputs = {0, 1};
  for (auto& c : out_cols) node.out_meta.columns.push_back({c, {}});
  return node;
}

Table step(OpKind kind, OpParams params, std::vector<std::string> out_cols,
           const Table& in) {
  auto node = make_node(kind, std::move(params), std::move(out_cols));
  return run_clear_step(node, {&in});
}

}  // namespace

TEST_CASE("squared market shares sum to the concentration index") {
  // shares of 50, 30, 20 percent -> 2500 + 900 + 400 = 3800
  Table shares({"m_share"}, {{50}, {30}, {20}});
  Table squared = step(OpKind::Multiply, MultiplyParams{"sq", "m_share", "m_share"},
                       {"m_share", "sq"}, shares);
  CHECK(squared.rows == std::vector<Row>{{50, 2500}, {30, 900}, {20, 400}});
  Table total = step(OpKind::Aggregate,
                     AggregateParams{AggFunc::Sum, {}, "sq", "hhi"}, {"hhi"},
                     squared);
  CHECK(total.rows == std::vector<Row>{{3800}});
}

TEST_CASE("join semantics") {
  auto join = [](const Table& l, const Table& r,
                 std::vector<std::string> out_cols) {
    auto node = make_node(OpKind::Join, JoinParams{"k", "k"}, std::move(out_cols));
    return run_clear_step(node, {&l, &r});
  };

  SUBCASE("disjoint keys yield an empty table") {
    Table l({"k", "a"}, {{1, 7}});
    Table r({"k", "b"}, {{2, 8}});
    CHECK(join(l, r, {"k", "a", "b"}).rows.empty());
  }

  SUBCASE("duplicates multiply: |join| = sum over keys of nl*nr") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 30; ++trial) {
      Table l = random_table({"k", "a"}, 25, rng, 0, 6);
      Table r = random_table({"k", "b"}, 25, rng, 0, 6);
      Table out = join(l, r, {"k", "a", "b"});
      std::map<std::int64_t, std::size_t> lc, rc;
      for (const auto& row : l.rows) ++lc[row[0]];
      for (const auto& row : r.rows) ++rc[row[0]];
      std::size_t expect = 0;
      for (const auto& [k, n] : lc) expect += n * rc[k];
      CHECK(out.rows.size() == expect);
    }
  }

  SUBCASE("output comes out key-sorted") {
    Table l({"k", "a"}, {{3, 1}, {1, 2}, {2, 3}});
    Table r({"k", "b"}, {{2, 4}, {1, 5}, {3, 6}});
    Table out = join(l, r, {"k", "a", "b"});
    for (std::size_t i = 1; i < out.rows.size(); ++i) {
      CHECK(out.rows[i - 1][0] <= out.rows[i][0]);
    }
  }
}

TEST_CASE("aggregate semantics") {
  Table t({"companyID", "price"}, {{1, 10}, {2, 5}, {1, 7}});
  Table sum = step(OpKind::Aggregate,
                   AggregateParams{AggFunc::Sum, {"companyID"}, "price", "rev"},
                   {"companyID", "rev"}, t);
  CHECK(sum.rows == std::vector<Row>{{1, 17}, {2, 5}});

  SUBCASE("count") {
    Table cnt = step(OpKind::Aggregate,
                     AggregateParams{AggFunc::Count, {"companyID"}, "", "n"},
                     {"companyID", "n"}, t);
    CHECK(cnt.rows == std::vector<Row>{{1, 2}, {2, 1}});
  }

  SUBCASE("empty input gives an empty table, not a null row") {
    Table empty({"companyID", "price"});
    Table out = step(OpKind::Aggregate,
                     AggregateParams{AggFunc::Sum, {}, "price", "total"},
                     {"total"}, empty);
    CHECK(out.rows.empty());
  }

  SUBCASE("sum is permutation invariant") {
    std::mt19937_64 rng(7);
    Table a = random_table({"k", "v"}, 40, rng, 0, 5);
    Table b = a;
    std::shuffle(b.rows.begin(), b.rows.end(), rng);
    auto agg = [&](const Table& in) {
      return step(OpKind::Aggregate,
                  AggregateParams{AggFunc::Sum, {"k"}, "v", "s"}, {"k", "s"}, in);
    };
    CHECK(agg(a).rows == agg(b).rows);
  }
}

TEST_CASE("divide truncates toward zero and rejects zero divisors") {
  Table t({"a", "b"}, {{7, 2}, {-7, 2}, {7, -2}});
  Table out = step(OpKind::Divide, DivideParams{"q", "a", "b"},
                   {"a", "b", "q"}, t);
  CHECK(out.rows == std::vector<Row>{{7, 2, 3}, {-7, 2, -3}, {7, -2, -3}});

  Table bad({"a", "b"}, {{1, 1}, {4, 0}});
  try {
    step(OpKind::Divide, DivideParams{"q", "a", "b"}, {"a", "b", "q"}, bad);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDivisionByZero);
  }
}

TEST_CASE("missing columns are reported") {
  Table t({"a"}, {{1}});
  try {
    step(OpKind::Project, ProjectParams{{"zz"}}, {"zz"}, t);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMissingColumn);
  }
}

TEST_CASE("filter, sort, distinct, enumerate, concat") {
  SUBCASE("filter keeps matching rows") {
    Table t({"price"}, {{0}, {5}, {0}, {3}});
    Table out = step(OpKind::Filter, FilterParams{"price", Cmp::Gt, 0},
                     {"price"}, t);
    CHECK(out.rows == std::vector<Row>{{5}, {3}});
  }
  SUBCASE("stable sort keeps input order within equal keys") {
    Table t({"k", "tag"}, {{2, 0}, {1, 1}, {2, 2}, {1, 3}});
    Table out = step(OpKind::SortBy, SortByParams{"k"}, {"k", "tag"}, t);
    CHECK(out.rows == std::vector<Row>{{1, 1}, {1, 3}, {2, 0}, {2, 2}});
  }
  SUBCASE("distinct deduplicates") {
    Table t({"k"}, {{3}, {1}, {3}, {1}, {2}});
    Table out = step(OpKind::Distinct, DistinctParams{}, {"k"}, t);
    CHECK(out.rows == std::vector<Row>{{1}, {2}, {3}});
  }
  SUBCASE("enumerate appends a zero-based index") {
    Table t({"v"}, {{9}, {8}});
    Table out = step(OpKind::Enumerate, EnumerateParams{"idx"}, {"v", "idx"}, t);
    CHECK(out.rows == std::vector<Row>{{9, 0}, {8, 1}});
  }
  SUBCASE("concat preserves duplicates and order") {
    Table a({"v"}, {{1}, {2}});
    Table b({"v"}, {{2}});
    auto node = make_node(OpKind::Concat, ConcatParams{}, {"v"});
    node.inputs = {0, 1};
    Table out = run_clear_step(node, {&a, &b});
    CHECK(out.rows == std::vector<Row>{{1}, {2}, {2}});
    std::mt19937_64 rng(3);
    Table x = random_table({"v"}, 20, rng);
    Table y = random_table({"v"}, 15, rng);
    Table both = run_clear_step(node, {&x, &y});
    Table manual = x;
    manual.rows.insert(manual.rows.end(), y.rows.begin(), y.rows.end());
    CHECK(same_multiset(both, manual));
  }
}

TEST_CASE("csv files round-trip bit exact") {
  std::mt19937_64 rng(11);
  const std::string path = "/tmp/secrel_test_table.csv";
  for (int trial = 0; trial < 20; ++trial) {
    Table t = random_table({"alpha", "beta", "gamma"}, trial * 3, rng, -1000000,
                           1000000);
    write_table(t, path);
    CHECK(read_table(path) == t);
  }
  std::filesystem::remove(path);

  SUBCASE("parse errors carry the line number") {
    try {
      parse_csv("a,b\n1,2\n3,oops\n", "bad.csv");
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kParseError);
      CHECK(std::string(e.what()).find("bad.csv:3") != std::string::npos);
    }
  }
  SUBCASE("width mismatches are rejected") {
    try {
      parse_csv("a,b\n1\n", "bad.csv");
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kArityMismatch);
    }
  }
}

TEST_CASE("a thousand-row table loads quickly") {
  std::mt19937_64 rng(5);
  Table t = random_table({"company", "market", "fare"}, 1000, rng, 0, 100000);
  const std::string path = "/tmp/secrel_test_big.csv";
  write_table(t, path);
  const auto start = std::chrono::steady_clock::now();
  Table back = read_table(path);
  const auto elapsed = std::chrono::steady_clock::now() - start;
  CHECK(back.size() == 1000);
  CHECK(std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count() <
        1000);
  std::filesystem::remove(path);
}

TEST_CASE("the oracle runs whole queries at a single trusted site") {
  auto credit = load_fixture("credit_regulation");

  SUBCASE("crafted rows: one ssn on both sides yields one average row") {
    std::map<std::string, Table> inputs;
    inputs["demographics"] = Table({"ssn", "zip"}, {{7, 11}, {8, 12}});
    inputs["scores_b"] = Table({"ssn", "score"}, {{7, 700}});
    inputs["scores_c"] = Table({"ssn", "score"}, {{9, 900}});
    auto out = oracle_execute(credit, inputs);
    CHECK(out.at("avg_scores").rows == std::vector<Row>{{11, 700, 1, 700}});
  }

  SUBCASE("empty inputs flow through to empty outputs") {
    std::map<std::string, Table> inputs;
    inputs["demographics"] = Table({"ssn", "zip"});
    inputs["scores_b"] = Table({"ssn", "score"});
    inputs["scores_c"] = Table({"ssn", "score"});
    auto out = oracle_execute(credit, inputs);
    CHECK(out.at("avg_scores").rows.empty());
  }

  SUBCASE("missing tables are reported") {
    try {
      oracle_execute(credit, {});
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kMissingInput);
    }
  }
}
