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
#include <random>

#include "doctest.h"
#include "secrel/clear_exec.hpp"
#include "secrel/field.hpp"
#include "secrel/mpc.hpp"
#include "test_util.hpp"

namespace secrel {

// Test-side access to share internals: reconstructing hidden flag columns and
// raw share words. Never part of a party's view.
class MpcEngineTestPeer {
 public:
  static std::vector<std::uint64_t> column_sums(const MpcEngine& e,
                                                const SharedRelation& r,
                                                std::size_t col) {
    return e.column_sums(r, col);
  }
};

}  // namespace secrel

using namespace secrel;
using namespace secrel::test;

namespace {

struct Rig {
  Ledger ledger;
  Transcript transcript;
  OpCounters counters;
  MpcEngine engine;

  explicit Rig(std::uint64_t seed = 1, int parties = 3)
      : engine(parties, seed, &ledger, &transcript, &counters) {}
};

std::vector<std::int64_t> flags_of(Rig& rig, const SharedRelation& rel) {
  REQUIRE(rel.flagged);
  auto sums = MpcEngineTestPeer::column_sums(rig.engine, rel, rel.width());
  std::vector<std::int64_t> out;
  for (auto v : sums) out.push_back(field::decode(v));
  return out;
}

}  // namespace

TEST_CASE("field arithmetic embeds signed values") {
  CHECK(field::decode(field::encode(-3)) == -3);
  CHECK(field::decode(field::encode(0)) == 0);
  CHECK(field::decode(field::mul(field::encode(-4), field::encode(5))) == -20);
  CHECK(field::add(field::kPrime - 1, 1) == 0);
}

TEST_CASE("sharing splits values into uniform shares that reconstruct") {
  Rig rig;
  std::mt19937_64 rng(2);
  SUBCASE("zero splits into shares summing to zero") {
    Table t({"v"}, {{0}});
    auto rel = rig.engine.share_in(t, 0, "t");
    std::uint64_t sum = 0;
    for (int p = 0; p < 3; ++p) sum = field::add(sum, rel.shares[p][0][0]);
    CHECK(sum == 0);
  }
  SUBCASE("round trip on random tables") {
    for (int trial = 0; trial < 20; ++trial) {
      Table t = random_table({"a", "b"}, 1 + trial, rng, -1000, 1000);
      auto rel = rig.engine.share_in(t, trial % 3, "t");
      CHECK(rig.engine.reconstruct(rel) == t);
    }
  }
  SUBCASE("sharing and reveals touch no nonlinear counters") {
    Table t = random_table({"a"}, 100, rng);
    auto rel = rig.engine.share_in(t, 0, "t");
    rig.engine.reveal_to(rel, {"a"}, {0, 1, 2}, "t");
    CHECK(rig.counters == OpCounters{});
  }
  SUBCASE("revealing everything returns the original table") {
    Table t = random_table({"a", "b"}, 17, rng);
    auto rel = rig.engine.share_in(t, 1, "t");
    CHECK(rig.engine.reveal_to(rel, {"a", "b"}, {0, 1, 2}, "t") == t);
  }
  SUBCASE("revealing to one party ledgers only that observer") {
    Table t = random_table({"a"}, 4, rng);
    auto rel = rig.engine.share_in(t, 1, "t");
    rig.engine.reveal_to(rel, {"a"}, {2}, "t");
    for (const auto& e : rig.ledger.events()) {
      if (e.kind == LeakKind::ColumnValues) CHECK(e.observer == 2);
    }
  }
}

TEST_CASE("linear share operations cost nothing and reconstruct correctly") {
  Rig rig;
  std::mt19937_64 rng(3);
  Table t = random_table({"a", "b"}, 50, rng, -50, 50);
  auto rel = rig.engine.share_in(t, 0, "t");

  auto added = rig.engine.append_add(rel, "a", "b", "s");
  auto scaled = rig.engine.append_scalar_mul(added, "a", 3, "a3");
  CHECK(rig.counters == OpCounters{});

  Table out = rig.engine.reconstruct(scaled);
  for (std::size_t r = 0; r < t.size(); ++r) {
    CHECK(out.rows[r][2] == t.rows[r][0] + t.rows[r][1]);
    CHECK(out.rows[r][3] == 3 * t.rows[r][0]);
  }

  SUBCASE("x + 0 = x and enumerate is a public index") {
    auto enumd = rig.engine.append_enumerate(rel, "idx");
    Table e = rig.engine.reconstruct(enumd);
    for (std::size_t r = 0; r < e.size(); ++r) {
      CHECK(e.rows[r][2] == static_cast<std::int64_t>(r));
    }
    CHECK(rig.counters == OpCounters{});
  }
}

TEST_CASE("black-box comparisons and products") {
  Rig rig;
  std::mt19937_64 rng(4);

  SUBCASE("equality against a constant") {
    Table t({"x"}, {{5}, {6}});
    auto rel = rig.engine.share_in(t, 0, "t");
    auto flagged = rig.engine.filter_flags(rel, "x", Cmp::Eq, 5);
    CHECK(flags_of(rig, flagged) == std::vector<std::int64_t>{1, 0});
    CHECK(rig.counters.eq == 2);
  }
  SUBCASE("signed less-than") {
    Table t({"x"}, {{-3}, {2}, {7}});
    auto rel = rig.engine.share_in(t, 0, "t");
    auto flagged = rig.engine.filter_flags(rel, "x", Cmp::Lt, 2);
    CHECK(flags_of(rig, flagged) == std::vector<std::int64_t>{1, 0, 0});
    CHECK(rig.counters.lt == 3);
  }
  SUBCASE("products match cleartext arithmetic (many trials)") {
    Table t = random_table({"x", "y"}, 1000, rng, -1000, 1000);
    auto rel = rig.engine.share_in(t, 0, "t");
    auto prod = rig.engine.append_mul(rel, "x", "y", "xy");
    Table out = rig.engine.reconstruct(prod);
    for (std::size_t r = 0; r < t.size(); ++r) {
      CHECK(out.rows[r][2] == t.rows[r][0] * t.rows[r][1]);
    }
    CHECK(rig.counters.mul == 1000);
  }
}

TEST_CASE("oblivious shuffle permutes rows behind fresh shares") {
  std::mt19937_64 rng(5);
  SUBCASE("single row is untouched") {
    Rig rig;
    Table t({"a"}, {{42}});
    auto rel = rig.engine.share_in(t, 0, "t");
    auto shuffled = rig.engine.oblivious_shuffle(rel);
    CHECK(rig.engine.reconstruct(shuffled) == t);
    CHECK(rig.counters.shuffle_units == 0);
  }
  SUBCASE("row multiset is preserved and units follow n log n") {
    Rig rig;
    Table t = random_table({"a", "b"}, 100, rng);
    auto rel = rig.engine.share_in(t, 0, "t");
    auto shuffled = rig.engine.oblivious_shuffle(rel);
    CHECK(same_multiset(rig.engine.reconstruct(shuffled), t));
    CHECK(rig.counters.shuffle_units == 100 * 7);  // ceil(log2 100) = 7
  }
  SUBCASE("different seeds give different orders") {
    Table t({"a"}, {});
    for (std::int64_t i = 0; i < 32; ++i) t.rows.push_back({i});
    int differing = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rig a(1000 + seed), b(2000 + seed);
      auto ra = a.engine.oblivious_shuffle(a.engine.share_in(t, 0, "t"));
      auto rb = b.engine.oblivious_shuffle(b.engine.share_in(t, 0, "t"));
      if (a.engine.reconstruct(ra).rows != b.engine.reconstruct(rb).rows) {
        ++differing;
      }
    }
    CHECK(differing == 5);
  }
}

TEST_CASE("oblivious sort is a bitonic network with padding") {
  std::mt19937_64 rng(6);
  SUBCASE("sorted input stays sorted, reverse input gets sorted") {
    Rig rig;
    Table rev({"k"}, {});
    for (std::int64_t i = 16; i > 0; --i) rev.rows.push_back({i});
    auto rel = rig.engine.share_in(rev, 0, "t");
    auto sorted = rig.engine.oblivious_sort(rel, {"k"});
    Table out = rig.engine.reconstruct(sorted);
    for (std::size_t r = 1; r < out.size(); ++r) {
      CHECK(out.rows[r - 1][0] <= out.rows[r][0]);
    }
    auto again = rig.engine.oblivious_sort(sorted, {"k"});
    CHECK(rig.engine.reconstruct(again) == out);
  }
  SUBCASE("exchange counter matches the closed form") {
    Rig rig;
    Table t = random_table({"k", "v"}, 128, rng);
    auto rel = rig.engine.share_in(t, 0, "t");
    rig.engine.oblivious_sort(rel, {"k"});
    CHECK(rig.counters.sort_compares == 1792);  // (128/2) * 7 * 8 / 2
  }
  SUBCASE("non-power-of-two inputs pad with sentinels and strip them") {
    Rig rig;
    Table t = random_table({"k", "v"}, 100, rng, -500, 500);
    auto rel = rig.engine.share_in(t, 0, "t");
    auto sorted = rig.engine.oblivious_sort(rel, {"k"});
    Table out = rig.engine.reconstruct(sorted);
    CHECK(out.size() == 100);
    CHECK(same_multiset(out, t));
    for (std::size_t r = 1; r < out.size(); ++r) {
      CHECK(out.rows[r - 1][0] <= out.rows[r][0]);
    }
    CHECK(rig.counters.sort_compares == 1792);  // padded to 128
  }
  SUBCASE("negative keys order correctly under the signed window") {
    Rig rig;
    Table t({"k"}, {{5}, {-7}, {0}, {-1}});
    auto rel = rig.engine.share_in(t, 0, "t");
    Table out = rig.engine.reconstruct(rig.engine.oblivious_sort(rel, {"k"}));
    CHECK(out.rows == std::vector<Row>{{-7}, {-1}, {0}, {5}});
  }
}

TEST_CASE("pairwise-comparison join") {
  std::mt19937_64 rng(7);
  SUBCASE("matches, counters, and bag semantics") {
    Rig rig;
    Table l({"k", "a"}, {{1, 10}, {2, 20}, {3, 30}});
    Table r({"k", "b"}, {{3, 33}, {1, 11}});
    auto lrel = rig.engine.share_in(l, 0, "l");
    auto rrel = rig.engine.share_in(r, 1, "r");
    auto joined =
        rig.engine.mpc_join(lrel, rrel, "k", "k", {"k", "a", "b"}, "j");
    Table out = rig.engine.reconstruct(joined);
    CHECK(same_multiset(out, Table({"k", "a", "b"}, {{1, 10, 11}, {3, 30, 33}})));
    CHECK(rig.counters.eq == 6);
  }
  SUBCASE("disjoint keys produce nothing") {
    Rig rig;
    Table l({"k", "a"}, {{1, 1}});
    Table r({"k", "b"}, {{2, 2}});
    auto joined = rig.engine.mpc_join(rig.engine.share_in(l, 0, "l"),
                                      rig.engine.share_in(r, 1, "r"), "k", "k",
                                      {"k", "a", "b"}, "j");
    CHECK(joined.rows() == 0);
  }
  SUBCASE("duplicate keys multiply") {
    Rig rig;
    Table l({"k", "a"}, {{1, 5}, {1, 6}});
    Table r({"k", "b"}, {{1, 7}});
    auto joined = rig.engine.mpc_join(rig.engine.share_in(l, 0, "l"),
                                      rig.engine.share_in(r, 1, "r"), "k", "k",
                                      {"k", "a", "b"}, "j");
    CHECK(joined.rows() == 2);
  }
  SUBCASE("agrees with the cleartext join on random inputs") {
    for (int trial = 0; trial < 20; ++trial) {
      Rig rig(100 + trial);
      Table l = random_table({"k", "a"}, 12, rng, 0, 5);
      Table r = random_table({"k", "b"}, 9, rng, 0, 5);
      auto joined = rig.engine.mpc_join(rig.engine.share_in(l, 0, "l"),
                                        rig.engine.share_in(r, 1, "r"), "k", "k",
                                        {"k", "a", "b"}, "j");
      OpNode node;
      node.kind = OpKind::Join;
      node.params = JoinParams{"k", "k"};
      node.inputs = {0, 1};
      node.out_meta.columns = {{"k", {}}, {"a", {}}, {"b", {}}};
      Table expect = run_clear_step(node, {&l, &r});
      CHECK(same_multiset(rig.engine.reconstruct(joined), expect));
    }
  }
}

TEST_CASE("sort-and-scan aggregation") {
  std::mt19937_64 rng(8);
  OpNode agg_node;
  agg_node.kind = OpKind::Aggregate;
  agg_node.inputs = {0};

  SUBCASE("sums per group") {
    Rig rig;
    Table t({"g", "v"}, {{1, 10}, {1, 7}, {2, 5}});
    AggregateParams p{AggFunc::Sum, {"g"}, "v", "s"};
    auto rel = rig.engine.share_in(t, 0, "t");
    auto out = rig.engine.mpc_aggregate(rel, p, {"g", "s"}, false, false, "a");
    CHECK(same_multiset(rig.engine.reconstruct(out),
                        Table({"g", "s"}, {{1, 17}, {2, 5}})));
  }
  SUBCASE("single group collapses to one row") {
    Rig rig;
    Table t({"g", "v"}, {{4, 1}, {4, 2}, {4, 3}});
    AggregateParams p{AggFunc::Sum, {"g"}, "v", "s"};
    auto out = rig.engine.mpc_aggregate(rig.engine.share_in(t, 0, "t"), p,
                                        {"g", "s"}, false, false, "a");
    CHECK(rig.engine.reconstruct(out).rows == std::vector<Row>{{4, 6}});
  }
  SUBCASE("count over one key") {
    Rig rig;
    Table t({"g", "v"}, {{9, 1}, {9, 1}, {9, 2}, {9, 5}});
    AggregateParams p{AggFunc::Count, {"g"}, "", "n"};
    auto out = rig.engine.mpc_aggregate(rig.engine.share_in(t, 0, "t"), p,
                                        {"g", "n"}, false, false, "a");
    CHECK(rig.engine.reconstruct(out).rows == std::vector<Row>{{9, 4}});
  }
  SUBCASE("agrees with the cleartext aggregate on random inputs") {
    for (int trial = 0; trial < 20; ++trial) {
      Rig rig(300 + trial);
      Table t = random_table({"g", "v"}, 1 + trial * 3, rng, 0, 4);
      AggregateParams p{AggFunc::Sum, {"g"}, "v", "s"};
      auto out = rig.engine.mpc_aggregate(rig.engine.share_in(t, 0, "t"), p,
                                          {"g", "s"}, false, false, "a");
      agg_node.params = p;
      agg_node.out_meta.columns = {{"g", {}}, {"s", {}}};
      Table expect = run_clear_step(agg_node, {&t});
      CHECK(same_multiset(rig.engine.reconstruct(out), expect));
    }
  }
}

TEST_CASE("oblivious indexing gathers rows at secret positions") {
  std::mt19937_64 rng(9);
  SUBCASE("the identity permutation reproduces the relation") {
    Rig rig;
    Table t = random_table({"a", "b"}, 20, rng);
    Table idx({"idx"});
    for (std::int64_t i = 0; i < 20; ++i) idx.rows.push_back({i});
    auto rel = rig.engine.share_in(t, 0, "t");
    auto ids = rig.engine.share_in(idx, 1, "i");
    auto out = rig.engine.oblivious_select(rel, ids, "idx");
    CHECK(rig.engine.reconstruct(out) == t);
    CHECK(rig.counters.select_units == 400);
  }
  SUBCASE("a single index picks that row") {
    Rig rig;
    Table t({"a"}, {{10}, {11}, {12}});
    Table idx({"idx"}, {{2}});
    auto out = rig.engine.oblivious_select(rig.engine.share_in(t, 0, "t"),
                                           rig.engine.share_in(idx, 0, "i"),
                                           "idx");
    CHECK(rig.engine.reconstruct(out).rows == std::vector<Row>{{12}});
  }
  SUBCASE("random indexes match a cleartext gather (50 trials)") {
    for (int trial = 0; trial < 50; ++trial) {
      Rig rig(500 + trial);
      const std::size_t n = 1 + rng() % 30;
      const std::size_t m = rng() % (n + 1);
      Table t = random_table({"a", "b"}, n, rng);
      Table idx({"idx"});
      Table expect({"a", "b"});
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t pos = rng() % n;
        idx.rows.push_back({static_cast<std::int64_t>(pos)});
        expect.rows.push_back(t.rows[pos]);
      }
      auto out = rig.engine.oblivious_select(rig.engine.share_in(t, 0, "t"),
                                             rig.engine.share_in(idx, 1, "i"),
                                             "idx");
      CHECK(rig.engine.reconstruct(out) == expect);
    }
  }
}

TEST_CASE("helper-assisted join") {
  std::mt19937_64 rng(10);
  SUBCASE("pairs payloads like the oracle join") {
    Rig rig;
    Table l({"k", "a"}, {{1, 10}, {2, 20}, {3, 30}});
    Table r({"k", "b"}, {{3, 33}, {1, 11}});
    auto out = rig.engine.hybrid_join(rig.engine.share_in(l, 0, "l"),
                                      rig.engine.share_in(r, 1, "r"), "k", "k",
                                      /*stp=*/2, {"k", "a", "b"}, "l", "r", "j");
    CHECK(same_multiset(rig.engine.reconstruct(out),
                        Table({"k", "a", "b"}, {{1, 10, 11}, {3, 30, 33}})));
  }
  SUBCASE("an empty side leaves the helper with an empty key column") {
    Rig rig;
    Table l({"k", "a"}, {{1, 10}});
    Table r({"k", "b"});
    auto out = rig.engine.hybrid_join(rig.engine.share_in(l, 0, "l"),
                                      rig.engine.share_in(r, 1, "r"), "k", "k",
                                      2, {"k", "a", "b"}, "l", "r", "j");
    CHECK(out.rows() == 0);
  }
  SUBCASE("counters equal the shuffle/select formulas") {
    Rig rig;
    const std::size_t n = 100;
    Table l({"k", "a"});
    Table r({"k", "b"});
    for (std::size_t i = 0; i < n; ++i) {
      l.rows.push_back({static_cast<std::int64_t>(i), 1});
      // 10 matching keys, the rest far away
      r.rows.push_back({static_cast<std::int64_t>(i < 10 ? i : 1000 + i), 2});
    }
    auto out = rig.engine.hybrid_join(rig.engine.share_in(l, 0, "l"),
                                      rig.engine.share_in(r, 1, "r"), "k", "k",
                                      0, {"k", "a", "b"}, "l", "r", "j");
    CHECK(out.rows() == 10);
    CHECK(rig.counters.shuffle_units ==
          2 * 100 * 7 + 10 * 4);  // two input shuffles + result shuffle
    CHECK(rig.counters.select_units == 2 * 100 * 10);
    CHECK(rig.counters.eq == 0);
    CHECK(rig.counters.mul == 0);
  }
  SUBCASE("the helper observes exactly the two key columns") {
    Rig rig;
    Table l({"k", "a"}, {{1, 10}, {2, 20}});
    Table r({"k", "b"}, {{2, 22}});
    rig.engine.hybrid_join(rig.engine.share_in(l, 0, "left_rel"),
                           rig.engine.share_in(r, 1, "right_rel"), "k", "k", 2,
                           {"k", "a", "b"}, "left_rel", "right_rel", "j");
    int helper_cv = 0;
    for (const auto& e : rig.ledger.events()) {
      if (e.kind == LeakKind::ColumnValues) {
        CHECK(e.observer == 2);
        ++helper_cv;
      }
    }
    CHECK(helper_cv == 2);
  }
  SUBCASE("agrees with the pairwise join on random inputs") {
    for (int trial = 0; trial < 15; ++trial) {
      Rig a(700 + trial), b(800 + trial);
      Table l = random_table({"k", "a"}, 10, rng, 0, 4);
      Table r = random_table({"k", "b"}, 8, rng, 0, 4);
      auto h = a.engine.hybrid_join(a.engine.share_in(l, 0, "l"),
                                    a.engine.share_in(r, 1, "r"), "k", "k", 0,
                                    {"k", "a", "b"}, "l", "r", "j");
      auto m = b.engine.mpc_join(b.engine.share_in(l, 0, "l"),
                                 b.engine.share_in(r, 1, "r"), "k", "k",
                                 {"k", "a", "b"}, "j");
      CHECK(same_multiset(a.engine.reconstruct(h), b.engine.reconstruct(m)));
    }
  }
}

TEST_CASE("public join") {
  std::mt19937_64 rng(11);
  SUBCASE("no nonlinear work at all") {
    Rig rig;
    Table l = random_table({"k", "a"}, 40, rng, 0, 10);
    Table r = random_table({"k", "b"}, 30, rng, 0, 10);
    auto out = rig.engine.public_join(rig.engine.share_in(l, 0, "l"),
                                      rig.engine.share_in(r, 1, "r"), "k", "k",
                                      0, {"k", "a", "b"}, "l", "r", "j");
    CHECK(rig.counters == OpCounters{});
    OpNode node;
    node.kind = OpKind::Join;
    node.params = JoinParams{"k", "k"};
    node.inputs = {0, 1};
    node.out_meta.columns = {{"k", {}}, {"a", {}}, {"b", {}}};
    Table expect = run_clear_step(node, {&l, &r});
    CHECK(same_multiset(rig.engine.reconstruct(out), expect));
  }
  SUBCASE("result is key-sorted with a publicly known order") {
    Rig rig;
    Table l({"k", "a"}, {{5, 1}, {2, 2}, {9, 3}});
    Table r({"k", "b"}, {{9, 4}, {5, 5}, {2, 6}});
    auto out = rig.engine.public_join(rig.engine.share_in(l, 0, "l"),
                                      rig.engine.share_in(r, 1, "r"), "k", "k",
                                      1, {"k", "a", "b"}, "l", "r", "j");
    CHECK(out.sorted_by == std::optional<std::string>{"k"});
    CHECK(out.order_public);
    Table got = rig.engine.reconstruct(out);
    CHECK(got.rows == std::vector<Row>{{2, 2, 6}, {5, 1, 5}, {9, 3, 4}});
  }
  SUBCASE("agrees with the oracle on many random inputs") {
    for (int trial = 0; trial < 50; ++trial) {
      Rig rig(900 + trial);
      Table l = random_table({"k", "a"}, rng() % 20, rng, 0, 6);
      Table r = random_table({"k", "b"}, rng() % 20, rng, 0, 6);
      auto out = rig.engine.public_join(rig.engine.share_in(l, 0, "l"),
                                        rig.engine.share_in(r, 1, "r"), "k",
                                        "k", 0, {"k", "a", "b"}, "l", "r", "j");
      OpNode node;
      node.kind = OpKind::Join;
      node.params = JoinParams{"k", "k"};
      node.inputs = {0, 1};
      node.out_meta.columns = {{"k", {}}, {"a", {}}, {"b", {}}};
      Table expect = run_clear_step(node, {&l, &r});
      CHECK(same_multiset(rig.engine.reconstruct(out), expect));
    }
  }
}

TEST_CASE("helper-assisted aggregation") {
  std::mt19937_64 rng(12);
  SUBCASE("hand-computed sums") {
    Rig rig;
    Table t({"g", "v"}, {{5, 1}, {5, 2}, {9, 3}});
    AggregateParams p{AggFunc::Sum, {"g"}, "v", "s"};
    auto out = rig.engine.hybrid_aggregate(rig.engine.share_in(t, 0, "t"), p,
                                           {"g", "s"}, 2, "t", "a");
    CHECK(same_multiset(rig.engine.reconstruct(out),
                        Table({"g", "s"}, {{5, 3}, {9, 3}})));
  }
  SUBCASE("never sorts obliviously") {
    Rig rig;
    Table t = random_table({"g", "v"}, 64, rng, 0, 5);
    AggregateParams p{AggFunc::Sum, {"g"}, "v", "s"};
    rig.engine.hybrid_aggregate(rig.engine.share_in(t, 0, "t"), p, {"g", "s"},
                                1, "t", "a");
    CHECK(rig.counters.sort_compares == 0);
    CHECK(rig.counters.eq == 0);
    CHECK(rig.counters.lt == 0);
  }
  SUBCASE("matches the plain shared aggregation on random inputs") {
    for (int trial = 0; trial < 50; ++trial) {
      Rig a(1300 + trial), b(1400 + trial);
      Table t = random_table({"g", "v"}, rng() % 256, rng, 0, 9);
      AggregateParams p{AggFunc::Sum, {"g"}, "v", "s"};
      auto h = a.engine.hybrid_aggregate(a.engine.share_in(t, 0, "t"), p,
                                         {"g", "s"}, 0, "t", "a");
      auto m = b.engine.mpc_aggregate(b.engine.share_in(t, 0, "t"), p,
                                      {"g", "s"}, false, false, "a");
      CHECK(same_multiset(a.engine.reconstruct(h), b.engine.reconstruct(m)));
    }
  }
}

TEST_CASE("oblivious filters mark rows without removing them") {
  std::mt19937_64 rng(13);
  SUBCASE("flag column matches the predicate") {
    Rig rig;
    Table t({"price"}, {{0}, {5}, {0}, {3}});
    auto rel = rig.engine.share_in(t, 0, "t");
    auto flagged = rig.engine.filter_flags(rel, "price", Cmp::Gt, 0);
    CHECK(flagged.rows() == 4);
    CHECK(flags_of(rig, flagged) == std::vector<std::int64_t>{0, 1, 0, 1});
  }
  SUBCASE("flag-aware sum equals filter-then-aggregate in the clear") {
    for (int trial = 0; trial < 20; ++trial) {
      Rig rig(1500 + trial);
      Table t = random_table({"g", "v"}, 1 + rng() % 40, rng, 0, 6);
      auto rel = rig.engine.share_in(t, 0, "t");
      auto flagged = rig.engine.filter_flags(rel, "v", Cmp::Gt, 2);
      AggregateParams p{AggFunc::Sum, {"g"}, "v", "s"};
      auto out = rig.engine.mpc_aggregate(flagged, p, {"g", "s"}, false, false,
                                          "a");
      // cleartext reference
      Table kept({"g", "v"});
      for (const auto& row : t.rows) {
        if (row[1] > 2) kept.rows.push_back(row);
      }
      OpNode node;
      node.kind = OpKind::Aggregate;
      node.params = p;
      node.inputs = {0};
      node.out_meta.columns = {{"g", {}}, {"s", {}}};
      Table expect = run_clear_step(node, {&kept});
      CHECK(same_multiset(rig.engine.reconstruct(out), expect));
    }
  }
  SUBCASE("fully filtered groups disappear") {
    Rig rig;
    Table t({"g", "v"}, {{1, 0}, {1, 0}, {2, 5}});
    auto flagged = rig.engine.filter_flags(rig.engine.share_in(t, 0, "t"), "v",
                                           Cmp::Gt, 0);
    AggregateParams p{AggFunc::Sum, {"g"}, "v", "s"};
    auto out = rig.engine.mpc_aggregate(flagged, p, {"g", "s"}, false, false, "a");
    CHECK(rig.engine.reconstruct(out).rows == std::vector<Row>{{2, 5}});
  }
  SUBCASE("flag-aware distinct drops dead rows and duplicates") {
    for (int trial = 0; trial < 20; ++trial) {
      Rig rig(1600 + trial);
      Table t = random_table({"k"}, rng() % 30, rng, 0, 5);
      auto flagged = rig.engine.filter_flags(rig.engine.share_in(t, 0, "t"),
                                             "k", Cmp::Gt, 2);
      auto out = rig.engine.mpc_distinct(flagged, false, false, "d");
      Table kept({"k"});
      for (const auto& row : t.rows) {
        if (row[0] > 2) kept.rows.push_back(row);
      }
      OpNode node;
      node.kind = OpKind::Distinct;
      node.params = DistinctParams{};
      node.inputs = {0};
      node.out_meta.columns = {{"k", {}}};
      Table expect = run_clear_step(node, {&kept});
      CHECK(same_multiset(rig.engine.reconstruct(out), expect));
    }
  }
}

TEST_CASE("every transmitted value carries a message class") {
  Rig rig;
  std::mt19937_64 rng(14);
  Table l = random_table({"k", "a"}, 16, rng, 0, 5);
  Table r = random_table({"k", "b"}, 12, rng, 0, 5);
  auto j = rig.engine.hybrid_join(rig.engine.share_in(l, 0, "l"),
                                  rig.engine.share_in(r, 1, "r"), "k", "k", 2,
                                  {"k", "a", "b"}, "l", "r", "j");
  AggregateParams p{AggFunc::Sum, {"k"}, "a", "s"};
  rig.engine.hybrid_aggregate(j, p, {"k", "s"}, 0, "j", "agg");

  CHECK(!rig.transcript.records().empty());
  for (const auto& rec : rig.transcript.records()) {
    // parties only ever receive shares, ledgered reveals, or public metadata
    if (rec.receiver != kAbbEndpoint) {
      const bool allowed = rec.cls == MsgClass::FreshShare ||
                           rec.cls == MsgClass::Reveal ||
                           rec.cls == MsgClass::PublicCardinality ||
                           rec.cls == MsgClass::PublicPermutation ||
                           rec.cls == MsgClass::PlaintextTable;
      CHECK(allowed);
    } else {
      CHECK(rec.cls == MsgClass::AbbOperand);
    }
  }
  // the helper's view includes the two key reveals
  int reveals_to_helper = 0;
  for (const auto& rec : rig.transcript.view_of(2)) {
    if (rec.cls == MsgClass::Reveal && rec.receiver == 2) ++reveals_to_helper;
  }
  CHECK(reveals_to_helper > 0);
}
