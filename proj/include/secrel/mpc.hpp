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

#ifndef SECREL_MPC_HPP_
#define SECREL_MPC_HPP_

#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "secrel/ir.hpp"
#include "secrel/ledger.hpp"
#include "secrel/table.hpp"

namespace secrel {

// Work counters for the simulated protocols. Macro primitives (shuffle,
// select, sort) are denominated in their own unit counters, which stand for
// the multiplications and comparisons of the sub-protocol they model; the raw
// mul/eq/lt/div counters cover stand-alone arithmetic-black-box calls only,
// so nothing is counted twice. The static cost model in plan.hpp reproduces
// these numbers exactly.
struct OpCounters {
  std::uint64_t mul = 0;
  std::uint64_t eq = 0;
  std::uint64_t lt = 0;
  std::uint64_t div = 0;
  std::uint64_t shuffle_units = 0;
  std::uint64_t sort_compares = 0;
  std::uint64_t select_units = 0;

  std::uint64_t total_units() const {
    return mul + eq + lt + div + shuffle_units + sort_compares + select_units;
  }
  OpCounters& operator+=(const OpCounters& o);
  OpCounters operator-(const OpCounters& o) const;
  bool operator==(const OpCounters&) const = default;
  std::string to_json() const;
};

// A relation held as per-party additive secret shares mod p. Row and column
// counts are public; cell values are secret. A relation carrying a hidden
// validity flag column (from an oblivious filter) stores it as an extra
// physical column past the schema.
struct SharedRelation {
  std::vector<std::string> schema;
  int n_parties = 0;
  // shares[party][column][row]; physical columns = schema + optional flag
  std::vector<std::vector<std::vector<std::uint64_t>>> shares;
  bool flagged = false;
  std::optional<std::string> sorted_by;
  bool order_public = false;

  std::size_t width() const { return schema.size(); }
  std::size_t phys_width() const { return schema.size() + (flagged ? 1 : 0); }
  std::size_t rows() const {
    return shares.empty() || shares[0].empty() ? 0 : shares[0][0].size();
  }
  std::size_t column_index(const std::string& name) const;
};

// Simulated multi-party engine: 2 or 3 computing parties exchanging share
// messages plus an arithmetic black box standing in for the cryptographic
// sub-protocols of a real backend. Nonlinear results come back from the ABB
// as fresh uniform shares; everything a party receives is classified and
// logged, and reveals are ledgered. Deterministic for a fixed seed.
class MpcEngine {
 public:
  MpcEngine(int n_parties, std::uint64_t seed, Ledger* ledger,
            Transcript* transcript, OpCounters* counters);

  // Ledger/transcript attribution for subsequent calls.
  void set_step(NodeId step) { step_ = step; }

  int n_parties() const { return n_parties_; }

  // --- share management ----------------------------------------------------
  SharedRelation share_in(const Table& table, int dealer,
                          const std::string& relation);
  // Reconstructs the named columns at each target. Flagged relations never
  // reach a reveal; the compiler rejects such plans.
  Table reveal_to(const SharedRelation& rel,
                  const std::vector<std::string>& columns,
                  const std::set<int>& targets, const std::string& relation);
  // Test-harness reconstruction; not part of any party's view.
  Table reconstruct(const SharedRelation& rel) const;

  // --- linear operations (local, no communication, no counters) ------------
  SharedRelation append_add(const SharedRelation& rel, const std::string& lhs,
                            const std::string& rhs, const std::string& name);
  SharedRelation append_scalar_mul(const SharedRelation& rel,
                                   const std::string& source,
                                   std::int64_t factor, const std::string& name);
  SharedRelation append_enumerate(const SharedRelation& rel,
                                  const std::string& name);
  SharedRelation project(const SharedRelation& rel,
                         const std::vector<std::string>& columns);
  SharedRelation concat(const std::vector<const SharedRelation*>& parts);

  // --- ABB primitives -------------------------------------------------------
  SharedRelation append_mul(const SharedRelation& rel, const std::string& lhs,
                            const std::string& rhs, const std::string& name);
  SharedRelation append_div(const SharedRelation& rel, const std::string& num,
                            const std::string& den, const std::string& name,
                            const std::string& where);
  // Oblivious filter: appends/conjoins a hidden 0/1 flag column.
  SharedRelation filter_flags(const SharedRelation& rel, const std::string& column,
                              Cmp cmp, std::int64_t constant);

  // Scalar helpers used by tests and small protocols (one counter tick each).
  std::uint64_t abb_mul(std::uint64_t x_sum, std::uint64_t y_sum);

  // --- oblivious sub-protocols ---------------------------------------------
  SharedRelation oblivious_shuffle(const SharedRelation& rel);
  SharedRelation oblivious_sort(const SharedRelation& rel,
                                const std::vector<std::string>& key_columns);
  SharedRelation oblivious_select(const SharedRelation& rel,
                                  const SharedRelation& indexes,
                                  const std::string& index_column);

  // --- relational protocols -------------------------------------------------
  SharedRelation mpc_join(const SharedRelation& left, const SharedRelation& right,
                          const std::string& left_key, const std::string& right_key,
                          const std::vector<std::string>& out_schema,
                          const std::string& result_relation);
  SharedRelation mpc_aggregate(const SharedRelation& rel, const AggregateParams& p,
                               const std::vector<std::string>& out_schema,
                               bool sort_elided, bool shuffle_elided,
                               const std::string& result_relation);
  SharedRelation mpc_distinct(const SharedRelation& rel, bool sort_elided,
                              bool shuffle_elided, const std::string& result_relation);
  SharedRelation hybrid_join(const SharedRelation& left, const SharedRelation& right,
                             const std::string& left_key, const std::string& right_key,
                             int stp, const std::vector<std::string>& out_schema,
                             const std::string& left_relation,
                             const std::string& right_relation,
                             const std::string& result_relation);
  SharedRelation public_join(const SharedRelation& left, const SharedRelation& right,
                             const std::string& left_key, const std::string& right_key,
                             int chosen_party, const std::vector<std::string>& out_schema,
                             const std::string& left_relation,
                             const std::string& right_relation,
                             const std::string& result_relation);
  SharedRelation hybrid_aggregate(const SharedRelation& rel, const AggregateParams& p,
                                  const std::vector<std::string>& out_schema,
                                  int stp, const std::string& input_relation,
                                  const std::string& result_relation);

 private:
  friend class MpcEngineTestPeer;

  std::vector<std::uint64_t> deal(std::uint64_t value, std::mt19937_64& rng);
  // Fresh shares of a batch, dealt by the ABB; transcript recorded.
  void abb_reshare_into(const std::vector<std::uint64_t>& values,
                        std::vector<std::vector<std::uint64_t>>& out_shares);
  std::vector<std::uint64_t> column_sums(const SharedRelation& rel,
                                         std::size_t col) const;
  void log_abb_round_trip(std::size_t operand_words, std::size_t result_words,
                          std::uint64_t digest);
  SharedRelation reshared_like(const SharedRelation& rel,
                               const std::vector<std::vector<std::uint64_t>>& values);
  std::vector<std::vector<std::uint64_t>> plain_cells(const SharedRelation& rel) const;
  SharedRelation drop_rows_by_flag(const SharedRelation& rel,
                                   const std::vector<std::uint64_t>& keep,
                                   bool drop_flag_column);
  void ledger_cardinality(const std::string& relation);

  int n_parties_;
  NodeId step_ = -1;
  Ledger* ledger_;
  Transcript* transcript_;
  OpCounters* counters_;
  std::mt19937_64 abb_rng_;
  std::vector<std::mt19937_64> party_rng_;
};

}  // namespace secrel

#endif  // SECREL_MPC_HPP_
