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

#include "secrel/mpc.hpp"

#include <algorithm>
#include <numeric>

#include "json.hpp"
#include "secrel/field.hpp"

namespace secrel {

namespace f = field;

OpCounters& OpCounters::operator+=(const OpCounters& o) {
  mul += o.mul;
  eq += o.eq;
  lt += o.lt;
  div += o.div;
  shuffle_units += o.shuffle_units;
  sort_compares += o.sort_compares;
  select_units += o.select_units;
  return *this;
}

OpCounters OpCounters::operator-(const OpCounters& o) const {
  OpCounters r = *this;
  r.mul -= o.mul;
  r.eq -= o.eq;
  r.lt -= o.lt;
  r.div -= o.div;
  r.shuffle_units -= o.shuffle_units;
  r.sort_compares -= o.sort_compares;
  r.select_units -= o.select_units;
  return r;
}

std::string OpCounters::to_json() const {
  nlohmann::json j;
  j["mul"] = mul;
  j["eq"] = eq;
  j["lt"] = lt;
  j["div"] = div;
  j["shuffle_units"] = shuffle_units;
  j["sort_compares"] = sort_compares;
  j["select_units"] = select_units;
  j["total_units"] = total_units();
  return j.dump();
}

std::size_t SharedRelation::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (schema[i] == name) return i;
  }
  fail(ErrorCode::kMissingColumn, "no shared column '" + name + "'");
}

namespace {

std::uint64_t ceil_log2(std::uint64_t n) {
  std::uint64_t k = 0;
  while ((std::uint64_t{1} << k) < n) ++k;
  return k;
}

std::uint64_t shuffle_unit_count(std::uint64_t n) {
  return n < 2 ? 0 : n * ceil_log2(n);
}

}  // namespace

MpcEngine::MpcEngine(int n_parties, std::uint64_t seed, Ledger* ledger,
                     Transcript* transcript, OpCounters* counters)
    : n_parties_(n_parties),
      ledger_(ledger),
      transcript_(transcript),
      counters_(counters) {
  if (n_parties < 1 || n_parties > 3) {
    fail(ErrorCode::kInternal, "engine supports at most 3 computing parties");
  }
  // Independent deterministic streams per actor.
  std::seed_seq abb_seq{seed, std::uint64_t{0x61626200}};
  abb_rng_.seed(abb_seq);
  for (int p = 0; p < n_parties; ++p) {
    std::seed_seq seq{seed, std::uint64_t{0x70617279}, std::uint64_t(p)};
    party_rng_.emplace_back();
    std::seed_seq seq2{seed, std::uint64_t{0x70617279}, std::uint64_t(p)};
    party_rng_.back().seed(seq2);
  }
}

std::vector<std::uint64_t> MpcEngine::deal(std::uint64_t value,
                                           std::mt19937_64& rng) {
  std::vector<std::uint64_t> shares(n_parties_);
  std::uint64_t sum = 0;
  for (int p = 0; p + 1 < n_parties_; ++p) {
    shares[p] = f::random_elem(rng);
    sum = f::add(sum, shares[p]);
  }
  shares[n_parties_ - 1] = f::sub(value, sum);
  return shares;
}

void MpcEngine::ledger_cardinality(const std::string& relation) {
  for (int p = 0; p < n_parties_; ++p) {
    ledger_->record({step_, p, LeakKind::Cardinality, relation, {}});
  }
}

SharedRelation MpcEngine::share_in(const Table& table, int dealer,
                                   const std::string& relation) {
  SharedRelation rel;
  rel.schema = table.schema;
  rel.n_parties = n_parties_;
  rel.shares.assign(n_parties_, {});
  const std::size_t w = table.width();
  const std::size_t n = table.size();
  for (int p = 0; p < n_parties_; ++p) {
    rel.shares[p].assign(w, std::vector<std::uint64_t>(n));
  }
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < n; ++r) {
      auto shares = deal(f::encode(table.rows[r][c]), party_rng_[dealer]);
      for (int p = 0; p < n_parties_; ++p) rel.shares[p][c][r] = shares[p];
    }
  }
  // The dealer keeps one share and sends the others; row count is public.
  for (int p = 0; p < n_parties_; ++p) {
    if (p == dealer) continue;
    std::uint64_t digest = 0;
    for (std::size_t c = 0; c < w; ++c) {
      digest = fnv1a(digest, rel.shares[p][c].data(), n);
    }
    transcript_->record(
        {step_, dealer, p, MsgClass::FreshShare, 8 * w * n, digest});
  }
  ledger_cardinality(relation);
  return rel;
}

std::vector<std::uint64_t> MpcEngine::column_sums(const SharedRelation& rel,
                                                  std::size_t col) const {
  std::vector<std::uint64_t> sums(rel.rows(), 0);
  for (int p = 0; p < rel.n_parties; ++p) {
    const auto& column = rel.shares[p][col];
    for (std::size_t r = 0; r < sums.size(); ++r) {
      sums[r] = f::add(sums[r], column[r]);
    }
  }
  return sums;
}

Table MpcEngine::reconstruct(const SharedRelation& rel) const {
  Table out(rel.schema);
  out.rows.assign(rel.rows(), Row(rel.width()));
  for (std::size_t c = 0; c < rel.width(); ++c) {
    auto sums = column_sums(rel, c);
    for (std::size_t r = 0; r < sums.size(); ++r) {
      out.rows[r][c] = f::decode(sums[r]);
    }
  }
  return out;
}

Table MpcEngine::reveal_to(const SharedRelation& rel,
                           const std::vector<std::string>& columns,
                           const std::set<int>& targets,
                           const std::string& relation) {
  if (rel.flagged) {
    fail(ErrorCode::kInternal,
         "flagged relation reached a reveal; the compiler must reject this");
  }
  std::vector<std::size_t> idx;
  for (const auto& c : columns) idx.push_back(rel.column_index(c));
  const std::size_t n = rel.rows();
  Table out(columns);
  out.rows.assign(n, Row(columns.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    auto sums = column_sums(rel, idx[k]);
    for (std::size_t r = 0; r < n; ++r) out.rows[r][k] = f::decode(sums[r]);
  }
  // Every party ships its shares of the selected columns to each target.
  for (int target : targets) {
    for (int p = 0; p < n_parties_; ++p) {
      if (p == target) continue;
      std::uint64_t digest = 0;
      for (std::size_t k : idx) digest = fnv1a(digest, rel.shares[p][k].data(), n);
      transcript_->record(
          {step_, p, target, MsgClass::Reveal, 8 * idx.size() * n, digest});
    }
    for (const auto& c : columns) {
      ledger_->record({step_, target, LeakKind::ColumnValues, relation, c});
    }
  }
  ledger_cardinality(relation);
  return out;
}

void MpcEngine::log_abb_round_trip(std::size_t operand_words,
                                   std::size_t result_words,
                                   std::uint64_t digest) {
  for (int p = 0; p < n_parties_; ++p) {
    transcript_->record({step_, p, kAbbEndpoint, MsgClass::AbbOperand,
                         8 * operand_words, digest});
  }
  for (int p = 0; p < n_parties_; ++p) {
    transcript_->record({step_, kAbbEndpoint, p, MsgClass::FreshShare,
                         8 * result_words, digest ^ 0x5a5a5a5au});
  }
}

void MpcEngine::abb_reshare_into(const std::vector<std::uint64_t>& values,
                                 std::vector<std::vector<std::uint64_t>>& out) {
  out.assign(n_parties_, std::vector<std::uint64_t>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t sum = 0;
    for (int p = 0; p + 1 < n_parties_; ++p) {
      out[p][i] = f::random_elem(abb_rng_);
      sum = f::add(sum, out[p][i]);
    }
    out[n_parties_ - 1][i] = f::sub(values[i], sum);
  }
}

SharedRelation MpcEngine::reshared_like(
    const SharedRelation& rel,
    const std::vector<std::vector<std::uint64_t>>& values) {
  SharedRelation out;
  out.schema = rel.schema;
  out.n_parties = n_parties_;
  out.flagged = rel.flagged;
  out.shares.assign(n_parties_, {});
  const std::size_t w = values.size();
  for (int p = 0; p < n_parties_; ++p) {
    out.shares[p].assign(w, {});
  }
  for (std::size_t c = 0; c < w; ++c) {
    std::vector<std::vector<std::uint64_t>> col_shares;
    abb_reshare_into(values[c], col_shares);
    for (int p = 0; p < n_parties_; ++p) out.shares[p][c] = std::move(col_shares[p]);
  }
  return out;
}

std::vector<std::vector<std::uint64_t>> MpcEngine::plain_cells(
    const SharedRelation& rel) const {
  std::vector<std::vector<std::uint64_t>> cells(rel.phys_width());
  for (std::size_t c = 0; c < rel.phys_width(); ++c) cells[c] = column_sums(rel, c);
  return cells;
}

// ---------------------------------------------------------------------------
// Linear operations: pure share arithmetic, no messages, no counters.
// ---------------------------------------------------------------------------

SharedRelation MpcEngine::append_add(const SharedRelation& rel,
                                     const std::string& lhs,
                                     const std::string& rhs,
                                     const std::string& name) {
  SharedRelation out = rel;
  const std::size_t a = rel.column_index(lhs);
  const std::size_t b = rel.column_index(rhs);
  for (int p = 0; p < n_parties_; ++p) {
    std::vector<std::uint64_t> col(rel.rows());
    for (std::size_t r = 0; r < col.size(); ++r) {
      col[r] = f::add(rel.shares[p][a][r], rel.shares[p][b][r]);
    }
    out.shares[p].insert(out.shares[p].begin() + out.width(), std::move(col));
  }
  out.schema.push_back(name);
  return out;
}

SharedRelation MpcEngine::append_scalar_mul(const SharedRelation& rel,
                                            const std::string& source,
                                            std::int64_t factor,
                                            const std::string& name) {
  SharedRelation out = rel;
  const std::size_t src = rel.column_index(source);
  const std::uint64_t k = f::encode(factor);
  for (int p = 0; p < n_parties_; ++p) {
    std::vector<std::uint64_t> col(rel.rows());
    for (std::size_t r = 0; r < col.size(); ++r) {
      col[r] = f::mul(rel.shares[p][src][r], k);
    }
    out.shares[p].insert(out.shares[p].begin() + out.width(), std::move(col));
  }
  out.schema.push_back(name);
  return out;
}

SharedRelation MpcEngine::append_enumerate(const SharedRelation& rel,
                                           const std::string& name) {
  // Row positions are public, so the index column is a public constant:
  // party 0 holds the value and the rest hold zero.
  SharedRelation out = rel;
  const std::size_t n = rel.rows();
  for (int p = 0; p < n_parties_; ++p) {
    std::vector<std::uint64_t> col(n, 0);
    if (p == 0) {
      for (std::size_t r = 0; r < n; ++r) col[r] = f::encode(static_cast<std::int64_t>(r));
    }
    out.shares[p].insert(out.shares[p].begin() + out.width(), std::move(col));
  }
  out.schema.push_back(name);
  return out;
}

SharedRelation MpcEngine::project(const SharedRelation& rel,
                                  const std::vector<std::string>& columns) {
  SharedRelation out;
  out.schema = columns;
  out.n_parties = rel.n_parties;
  out.flagged = rel.flagged;
  out.order_public = rel.order_public;
  if (rel.sorted_by &&
      std::find(columns.begin(), columns.end(), *rel.sorted_by) != columns.end()) {
    out.sorted_by = rel.sorted_by;
  }
  out.shares.assign(rel.n_parties, {});
  for (int p = 0; p < rel.n_parties; ++p) {
    for (const auto& c : columns) {
      out.shares[p].push_back(rel.shares[p][rel.column_index(c)]);
    }
    if (rel.flagged) out.shares[p].push_back(rel.shares[p][rel.width()]);
  }
  return out;
}

SharedRelation MpcEngine::concat(const std::vector<const SharedRelation*>& parts) {
  SharedRelation out;
  out.schema = parts[0]->schema;
  out.n_parties = parts[0]->n_parties;
  for (const auto* part : parts) {
    if (part->flagged) fail(ErrorCode::kInternal, "concat of flagged relations");
  }
  out.shares.assign(out.n_parties, std::vector<std::vector<std::uint64_t>>(out.width()));
  for (int p = 0; p < out.n_parties; ++p) {
    for (std::size_t c = 0; c < out.width(); ++c) {
      for (const auto* part : parts) {
        const auto& col = part->shares[p][c];
        out.shares[p][c].insert(out.shares[p][c].end(), col.begin(), col.end());
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// ABB primitives
// ---------------------------------------------------------------------------

std::uint64_t MpcEngine::abb_mul(std::uint64_t x_sum, std::uint64_t y_sum) {
  counters_->mul += 1;
  return f::mul(x_sum, y_sum);
}

SharedRelation MpcEngine::append_mul(const SharedRelation& rel,
                                     const std::string& lhs,
                                     const std::string& rhs,
                                     const std::string& name) {
  const auto a = column_sums(rel, rel.column_index(lhs));
  const auto b = column_sums(rel, rel.column_index(rhs));
  std::vector<std::uint64_t> products(a.size());
  for (std::size_t r = 0; r < a.size(); ++r) products[r] = f::mul(a[r], b[r]);
  counters_->mul += a.size();
  log_abb_round_trip(2 * a.size(), a.size(), fnv1a(0, products.data(), products.size()));

  SharedRelation out = rel;
  std::vector<std::vector<std::uint64_t>> shares;
  abb_reshare_into(products, shares);
  for (int p = 0; p < n_parties_; ++p) {
    out.shares[p].insert(out.shares[p].begin() + out.width(), std::move(shares[p]));
  }
  out.schema.push_back(name);
  return out;
}

SharedRelation MpcEngine::append_div(const SharedRelation& rel,
                                     const std::string& num,
                                     const std::string& den,
                                     const std::string& name,
                                     const std::string& where) {
  // Ideal-functionality integer division. Baseline (un-rewritten) plans are
  // the only plans that run a divide in shared space.
  const auto a = column_sums(rel, rel.column_index(num));
  const auto b = column_sums(rel, rel.column_index(den));
  std::vector<std::uint64_t> quotients(a.size());
  for (std::size_t r = 0; r < a.size(); ++r) {
    const std::int64_t d = f::decode(b[r]);
    if (d == 0) {
      fail(ErrorCode::kDivisionByZero,
           where + ": divisor is zero in row " + std::to_string(r));
    }
    quotients[r] = f::encode(f::decode(a[r]) / d);
  }
  counters_->div += a.size();
  log_abb_round_trip(2 * a.size(), a.size(),
                     fnv1a(0, quotients.data(), quotients.size()));
  SharedRelation out = rel;
  std::vector<std::vector<std::uint64_t>> shares;
  abb_reshare_into(quotients, shares);
  for (int p = 0; p < n_parties_; ++p) {
    out.shares[p].insert(out.shares[p].begin() + out.width(), std::move(shares[p]));
  }
  out.schema.push_back(name);
  return out;
}

SharedRelation MpcEngine::filter_flags(const SharedRelation& rel,
                                       const std::string& column, Cmp cmp,
                                       std::int64_t constant) {
  const auto values = column_sums(rel, rel.column_index(column));
  const std::size_t n = values.size();
  std::vector<std::uint64_t> flags(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::int64_t v = f::decode(values[r]);
    bool hit = false;
    switch (cmp) {
      case Cmp::Eq: hit = v == constant; break;
      case Cmp::Lt: hit = v < constant; break;
      case Cmp::Gt: hit = v > constant; break;
    }
    flags[r] = hit ? 1 : 0;
  }
  if (cmp == Cmp::Eq) {
    counters_->eq += n;
  } else {
    counters_->lt += n;
  }
  if (rel.flagged) {
    // Conjoin with the carried flag.
    const auto old_flags = column_sums(rel, rel.width());
    for (std::size_t r = 0; r < n; ++r) flags[r] = f::mul(flags[r], old_flags[r]);
    counters_->mul += n;
  }
  log_abb_round_trip(n, n, fnv1a(0, flags.data(), flags.size()));

  SharedRelation out = rel;
  std::vector<std::vector<std::uint64_t>> shares;
  abb_reshare_into(flags, shares);
  if (rel.flagged) {
    for (int p = 0; p < n_parties_; ++p) out.shares[p].back() = std::move(shares[p]);
  } else {
    for (int p = 0; p < n_parties_; ++p) out.shares[p].push_back(std::move(shares[p]));
    out.flagged = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Oblivious sub-protocols
// ---------------------------------------------------------------------------

SharedRelation MpcEngine::oblivious_shuffle(const SharedRelation& rel) {
  const std::size_t n = rel.rows();
  if (n < 2) {
    SharedRelation out = rel;
    out.sorted_by.reset();
    out.order_public = false;
    return out;
  }
  counters_->shuffle_units += shuffle_unit_count(n);
  // Permutation drawn inside the ABB; rows come back as fresh shares, so no
  // party learns anything about the order.
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> dist(0, i);
    std::swap(perm[i], perm[dist(abb_rng_)]);
  }
  auto cells = plain_cells(rel);
  std::vector<std::vector<std::uint64_t>> permuted(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    permuted[c].resize(n);
    for (std::size_t r = 0; r < n; ++r) permuted[c][r] = cells[c][perm[r]];
  }
  std::uint64_t digest = 0;
  for (const auto& col : permuted) digest = fnv1a(digest, col.data(), col.size());
  log_abb_round_trip(rel.phys_width() * n, rel.phys_width() * n, digest);
  SharedRelation out = reshared_like(rel, permuted);
  out.sorted_by.reset();
  out.order_public = false;
  return out;
}

SharedRelation MpcEngine::oblivious_sort(const SharedRelation& rel,
                                         const std::vector<std::string>& key_columns) {
  const std::size_t n = rel.rows();
  if (n < 2) {
    SharedRelation out = rel;
    if (!key_columns.empty() && n > 0) out.sorted_by = key_columns[0];
    return out;
  }
  std::vector<std::size_t> keys;
  for (const auto& k : key_columns) keys.push_back(rel.column_index(k));

  // Pad to a power of two with +inf sentinel keys; they sink to the end of
  // the ascending order and are stripped afterwards.
  std::size_t padded = std::size_t{1} << ceil_log2(n);
  auto cells = plain_cells(rel);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const bool is_key = std::find(keys.begin(), keys.end(), c) != keys.end();
    cells[c].resize(padded, is_key ? f::kMaxPositive : 0);
  }

  auto lex_greater = [&](std::size_t a, std::size_t b) {
    for (std::size_t k : keys) {
      const std::int64_t va = f::decode(cells[k][a]);
      const std::int64_t vb = f::decode(cells[k][b]);
      if (va != vb) return va > vb;
    }
    return false;
  };
  std::uint64_t exchanges = 0;
  // Bitonic network; every compare-exchange runs through the ABB regardless
  // of the data, so the access pattern is oblivious.
  for (std::size_t size = 2; size <= padded; size <<= 1) {
    for (std::size_t stride = size >> 1; stride > 0; stride >>= 1) {
      for (std::size_t i = 0; i < padded; ++i) {
        const std::size_t j = i ^ stride;
        if (j <= i) continue;
        ++exchanges;
        const bool ascending = (i & size) == 0;
        if (lex_greater(i, j) == ascending) {
          for (auto& col : cells) std::swap(col[i], col[j]);
        }
      }
    }
  }
  counters_->sort_compares += exchanges;
  for (auto& col : cells) col.resize(n);
  std::uint64_t digest = 0;
  for (const auto& col : cells) digest = fnv1a(digest, col.data(), col.size());
  log_abb_round_trip(rel.phys_width() * n, rel.phys_width() * n, digest);
  SharedRelation out = reshared_like(rel, cells);
  out.sorted_by = key_columns.empty() ? std::nullopt
                                      : std::make_optional(key_columns[0]);
  out.order_public = false;
  return out;
}

SharedRelation MpcEngine::oblivious_select(const SharedRelation& rel,
                                           const SharedRelation& indexes,
                                           const std::string& index_column) {
  const std::size_t n = rel.rows();
  const std::size_t m = indexes.rows();
  counters_->select_units += static_cast<std::uint64_t>(n) * m;
  const auto idx_values = column_sums(indexes, indexes.column_index(index_column));
  auto cells = plain_cells(rel);
  std::vector<std::vector<std::uint64_t>> selected(cells.size(),
                                                   std::vector<std::uint64_t>(m));
  for (std::size_t r = 0; r < m; ++r) {
    const std::int64_t pos = f::decode(idx_values[r]);
    if (pos < 0 || static_cast<std::size_t>(pos) >= n) {
      fail(ErrorCode::kInternal, "oblivious select index out of range");
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      selected[c][r] = cells[c][static_cast<std::size_t>(pos)];
    }
  }
  std::uint64_t digest = 0;
  for (const auto& col : selected) digest = fnv1a(digest, col.data(), col.size());
  log_abb_round_trip((rel.phys_width() + 1) * n, rel.phys_width() * m, digest);
  SharedRelation out = reshared_like(rel, selected);
  out.sorted_by.reset();
  out.order_public = false;
  return out;
}

// ---------------------------------------------------------------------------
// Relational protocols
// ---------------------------------------------------------------------------

SharedRelation MpcEngine::drop_rows_by_flag(const SharedRelation& rel,
                                            const std::vector<std::uint64_t>& keep,
                                            bool drop_flag_column) {
  SharedRelation out;
  out.schema = rel.schema;
  out.n_parties = rel.n_parties;
  out.flagged = drop_flag_column ? false : rel.flagged;
  out.sorted_by = rel.sorted_by;
  out.order_public = rel.order_public;
  const std::size_t w = drop_flag_column ? rel.width() : rel.phys_width();
  out.shares.assign(rel.n_parties, std::vector<std::vector<std::uint64_t>>(w));
  for (std::size_t r = 0; r < rel.rows(); ++r) {
    if (!keep[r]) continue;
    for (int p = 0; p < rel.n_parties; ++p) {
      for (std::size_t c = 0; c < w; ++c) {
        out.shares[p][c].push_back(rel.shares[p][c][r]);
      }
    }
  }
  return out;
}

SharedRelation MpcEngine::mpc_join(const SharedRelation& left,
                                   const SharedRelation& right,
                                   const std::string& left_key,
                                   const std::string& right_key,
                                   const std::vector<std::string>& out_schema,
                                   const std::string& result_relation) {
  if (left.flagged || right.flagged) {
    fail(ErrorCode::kInternal, "joins over flagged relations are rejected upstream");
  }
  const std::size_t nl = left.rows();
  const std::size_t nr = right.rows();
  const std::size_t lk = left.column_index(left_key);
  const std::size_t rk = right.column_index(right_key);
  const std::size_t n_pairs = nl * nr;

  SharedRelation cand;
  cand.schema = out_schema;
  cand.n_parties = n_parties_;
  cand.flagged = true;

  const auto lcells = plain_cells(left);
  const auto rcells = plain_cells(right);

  // Pairwise key-equality flags for every candidate row.
  std::vector<std::uint64_t> flags(n_pairs);
  for (std::size_t i = 0; i < nl; ++i) {
    for (std::size_t j = 0; j < nr; ++j) {
      flags[i * nr + j] =
          f::decode(lcells[lk][i]) == f::decode(rcells[rk][j]) ? 1 : 0;
    }
  }
  counters_->eq += n_pairs;

  // Candidate rows: key plus both payloads, payload values masked by the
  // equality flag.
  std::vector<std::vector<std::uint64_t>> cells;
  cells.emplace_back(n_pairs);  // key column
  for (std::size_t i = 0; i < nl; ++i) {
    for (std::size_t j = 0; j < nr; ++j) cells[0][i * nr + j] = lcells[lk][i];
  }
  auto add_masked = [&](const std::vector<std::uint64_t>& src, bool from_left) {
    std::vector<std::uint64_t> col(n_pairs);
    for (std::size_t i = 0; i < nl; ++i) {
      for (std::size_t j = 0; j < nr; ++j) {
        const std::size_t r = i * nr + j;
        col[r] = f::mul(src[from_left ? i : j], flags[r]);
      }
    }
    cells.push_back(std::move(col));
  };
  for (std::size_t c = 0; c < left.width(); ++c) {
    if (c != lk) add_masked(lcells[c], true);
  }
  for (std::size_t c = 0; c < right.width(); ++c) {
    if (c != rk) add_masked(rcells[c], false);
  }
  counters_->mul += n_pairs * (out_schema.size() - 1);
  cells.push_back(flags);  // hidden flag column
  std::uint64_t digest = 0;
  for (const auto& col : cells) digest = fnv1a(digest, col.data(), col.size());
  log_abb_round_trip((left.phys_width() + right.phys_width()) * (nl + nr),
                     cells.size() * n_pairs, digest);
  SharedRelation shuffled = reshared_like(cand, cells);
  shuffled.flagged = true;
  shuffled = oblivious_shuffle(shuffled);

  // Reveal the flags and discard the non-matches; only the result size leaks.
  const auto revealed = column_sums(shuffled, shuffled.width());
  for (int p = 0; p < n_parties_; ++p) {
    for (int q = 0; q < n_parties_; ++q) {
      if (p == q) continue;
      transcript_->record({step_, p, q, MsgClass::Reveal, 8 * n_pairs,
                           fnv1a(0, revealed.data(), revealed.size())});
    }
  }
  std::vector<std::uint64_t> keep(n_pairs);
  for (std::size_t r = 0; r < n_pairs; ++r) keep[r] = f::reduce(revealed[r]);
  SharedRelation result = drop_rows_by_flag(shuffled, keep, /*drop_flag_column=*/true);
  ledger_cardinality(result_relation);
  return result;
}

SharedRelation MpcEngine::mpc_aggregate(const SharedRelation& rel,
                                        const AggregateParams& p,
                                        const std::vector<std::string>& out_schema,
                                        bool sort_elided, bool shuffle_elided,
                                        const std::string& result_relation) {
  const bool flagged = rel.flagged;
  SharedRelation work = rel;
  if (!p.group_by.empty() && !sort_elided) {
    work = oblivious_sort(work, p.group_by);
  }
  const std::size_t n = work.rows();

  std::vector<std::size_t> group_idx;
  for (const auto& g : p.group_by) group_idx.push_back(work.column_index(g));
  const std::size_t k = group_idx.size();

  auto cells = plain_cells(work);
  std::vector<std::uint64_t> values(n, 1);
  if (p.func == AggFunc::Sum) values = cells[work.column_index(p.agg_col)];
  std::vector<std::uint64_t> flags(n, 1);
  if (flagged) flags = cells[work.width()];

  // Scan state per row: previous-key equality, masked value, accumulated
  // aggregate and, under filter flags, the running "group has a live row" bit.
  std::vector<std::uint64_t> adj(n, 0);
  for (std::size_t r = 1; r < n; ++r) {
    bool equal = true;
    for (std::size_t g : group_idx) {
      if (f::decode(cells[g][r]) != f::decode(cells[g][r - 1])) {
        equal = false;
        break;
      }
    }
    adj[r] = equal ? 1 : 0;
  }
  if (n > 1) {
    counters_->eq += (n - 1) * k;
    counters_->mul += k > 0 ? (n - 1) * (k - 1) : 0;
  }

  std::vector<std::uint64_t> masked(n);
  for (std::size_t r = 0; r < n; ++r) {
    masked[r] = flagged && p.func == AggFunc::Sum ? f::mul(values[r], flags[r])
                                                  : (flagged ? flags[r] : values[r]);
  }
  if (flagged && p.func == AggFunc::Sum) counters_->mul += n;

  std::vector<std::uint64_t> acc(n, 0), live(n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    if (r == 0) {
      acc[r] = masked[r];
      live[r] = flagged ? flags[r] : 1;
      continue;
    }
    acc[r] = f::add(f::mul(adj[r], acc[r - 1]), masked[r]);
    if (flagged) {
      const std::uint64_t carry = f::mul(adj[r], live[r - 1]);
      live[r] = f::sub(f::add(carry, flags[r]), f::mul(carry, flags[r]));
    } else {
      live[r] = 1;
    }
  }
  if (n > 1) counters_->mul += (n - 1) * (flagged ? 3 : 1);

  // keep = "last row of its group" (and the group has a live row).
  std::vector<std::uint64_t> keep(n, 0);
  for (std::size_t r = 0; r + 1 < n; ++r) {
    keep[r] = f::sub(1, adj[r + 1]);
    if (flagged) keep[r] = f::mul(keep[r], live[r]);
  }
  if (n > 0) keep[n - 1] = flagged ? live[n - 1] : 1;
  if (flagged && n > 1) counters_->mul += n - 1;

  // Assemble (group columns, aggregate, keep flag) and hide the survivor
  // positions behind a shuffle unless the row order is already public.
  std::vector<std::vector<std::uint64_t>> out_cells;
  for (std::size_t g : group_idx) out_cells.push_back(cells[g]);
  out_cells.push_back(acc);
  out_cells.push_back(keep);
  SharedRelation staged;
  staged.schema = out_schema;
  staged.n_parties = n_parties_;
  std::uint64_t digest = 0;
  for (const auto& col : out_cells) digest = fnv1a(digest, col.data(), col.size());
  log_abb_round_trip(work.phys_width() * n, out_cells.size() * n, digest);
  staged = reshared_like(staged, out_cells);
  staged.flagged = true;
  if (!shuffle_elided) {
    staged = oblivious_shuffle(staged);
  } else {
    staged.sorted_by = p.group_by.empty() ? std::nullopt
                                          : std::make_optional(p.group_by[0]);
    staged.order_public = rel.order_public;
    // With the survivor shuffle skipped, the keep flags tell every party
    // which publicly ordered keys reached the result; the compiler only
    // elides when the group column is public, and the ledger records it.
    for (int q = 0; q < n_parties_; ++q) {
      for (const auto& g : p.group_by) {
        ledger_->record({step_, q, LeakKind::ColumnValues, result_relation, g});
      }
    }
  }

  const auto revealed = column_sums(staged, staged.width());
  for (int a = 0; a < n_parties_; ++a) {
    for (int b = 0; b < n_parties_; ++b) {
      if (a == b) continue;
      transcript_->record({step_, a, b, MsgClass::Reveal, 8 * n,
                           fnv1a(0, revealed.data(), revealed.size())});
    }
  }
  std::vector<std::uint64_t> keep_clear(staged.rows());
  for (std::size_t r = 0; r < staged.rows(); ++r) keep_clear[r] = f::reduce(revealed[r]);
  SharedRelation result = drop_rows_by_flag(staged, keep_clear, true);
  ledger_cardinality(result_relation);
  return result;
}

SharedRelation MpcEngine::mpc_distinct(const SharedRelation& rel, bool sort_elided,
                                       bool shuffle_elided,
                                       const std::string& result_relation) {
  const bool flagged = rel.flagged;
  SharedRelation work = rel;
  if (!sort_elided) work = oblivious_sort(work, rel.schema);
  const std::size_t n = work.rows();
  const std::size_t k = work.width();

  auto cells = plain_cells(work);
  std::vector<std::uint64_t> flags(n, 1);
  if (flagged) flags = cells[work.width()];

  std::vector<std::uint64_t> adj(n, 0);
  for (std::size_t r = 1; r < n; ++r) {
    bool equal = true;
    for (std::size_t c = 0; c < k; ++c) {
      if (f::decode(cells[c][r]) != f::decode(cells[c][r - 1])) {
        equal = false;
        break;
      }
    }
    adj[r] = equal ? 1 : 0;
  }
  if (n > 1) {
    counters_->eq += (n - 1) * k;
    counters_->mul += k > 0 ? (n - 1) * (k - 1) : 0;
  }

  std::vector<std::uint64_t> live(n, 1), keep(n, 0);
  if (flagged) {
    for (std::size_t r = 0; r < n; ++r) {
      if (r == 0) {
        live[r] = flags[r];
        continue;
      }
      const std::uint64_t carry = f::mul(adj[r], live[r - 1]);
      live[r] = f::sub(f::add(carry, flags[r]), f::mul(carry, flags[r]));
    }
    if (n > 1) counters_->mul += 2 * (n - 1);
  }
  for (std::size_t r = 0; r + 1 < n; ++r) {
    keep[r] = f::sub(1, adj[r + 1]);
    if (flagged) keep[r] = f::mul(keep[r], live[r]);
  }
  if (n > 0) keep[n - 1] = flagged ? live[n - 1] : 1;
  if (flagged && n > 1) counters_->mul += n - 1;

  std::vector<std::vector<std::uint64_t>> out_cells;
  for (std::size_t c = 0; c < k; ++c) out_cells.push_back(cells[c]);
  out_cells.push_back(keep);
  SharedRelation staged;
  staged.schema = work.schema;
  staged.n_parties = n_parties_;
  std::uint64_t digest = 0;
  for (const auto& col : out_cells) digest = fnv1a(digest, col.data(), col.size());
  log_abb_round_trip(work.phys_width() * n, out_cells.size() * n, digest);
  staged = reshared_like(staged, out_cells);
  staged.flagged = true;
  if (!shuffle_elided) {
    staged = oblivious_shuffle(staged);
  } else {
    staged.sorted_by = work.sorted_by;
    staged.order_public = rel.order_public;
    // Unshuffled keep flags disclose the surviving (public) key values.
    for (int q = 0; q < n_parties_; ++q) {
      for (const auto& name : work.schema) {
        ledger_->record({step_, q, LeakKind::ColumnValues, result_relation, name});
      }
    }
  }

  const auto revealed = column_sums(staged, staged.width());
  for (int a = 0; a < n_parties_; ++a) {
    for (int b = 0; b < n_parties_; ++b) {
      if (a == b) continue;
      transcript_->record({step_, a, b, MsgClass::Reveal, 8 * n,
                           fnv1a(0, revealed.data(), revealed.size())});
    }
  }
  std::vector<std::uint64_t> keep_clear(staged.rows());
  for (std::size_t r = 0; r < staged.rows(); ++r) keep_clear[r] = f::reduce(revealed[r]);
  SharedRelation result = drop_rows_by_flag(staged, keep_clear, true);
  ledger_cardinality(result_relation);
  return result;
}

SharedRelation MpcEngine::hybrid_join(const SharedRelation& left,
                                      const SharedRelation& right,
                                      const std::string& left_key,
                                      const std::string& right_key, int stp,
                                      const std::vector<std::string>& out_schema,
                                      const std::string& left_relation,
                                      const std::string& right_relation,
                                      const std::string& result_relation) {
  // Shuffle both inputs so the STP sees keys in an order unlinked to the
  // original rows, then reveal only the key columns to it.
  SharedRelation ls = oblivious_shuffle(left);
  SharedRelation rs = oblivious_shuffle(right);
  Table lkeys = reveal_to(project(ls, {left_key}), {left_key}, {stp}, left_relation);
  Table rkeys = reveal_to(project(rs, {right_key}), {right_key}, {stp}, right_relation);

  // STP, in the clear: enumerate both key relations, join them, and keep the
  // matching row-position pairs.
  std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
  {
    std::vector<std::pair<std::int64_t, std::int64_t>> lidx, ridx;
    for (std::size_t i = 0; i < lkeys.size(); ++i) {
      lidx.emplace_back(lkeys.rows[i][0], static_cast<std::int64_t>(i));
    }
    for (std::size_t j = 0; j < rkeys.size(); ++j) {
      ridx.emplace_back(rkeys.rows[j][0], static_cast<std::int64_t>(j));
    }
    std::sort(lidx.begin(), lidx.end());
    std::sort(ridx.begin(), ridx.end());
    std::size_t i = 0, j = 0;
    while (i < lidx.size() && j < ridx.size()) {
      if (lidx[i].first < ridx[j].first) {
        ++i;
      } else if (ridx[j].first < lidx[i].first) {
        ++j;
      } else {
        std::size_t jend = j;
        while (jend < ridx.size() && ridx[jend].first == lidx[i].first) ++jend;
        for (; i < lidx.size() && lidx[i].first == ridx[j].first; ++i) {
          for (std::size_t jj = j; jj < jend; ++jj) {
            pairs.emplace_back(lidx[i].second, ridx[jj].second);
          }
        }
        j = jend;
      }
    }
  }

  // STP shares the two index relations back in.
  Table lidx_table({"idx"});
  Table ridx_table({"idx"});
  for (const auto& [li, ri] : pairs) {
    lidx_table.rows.push_back({li});
    ridx_table.rows.push_back({ri});
  }
  SharedRelation lidx = share_in(lidx_table, stp, result_relation + ".left_indexes");
  SharedRelation ridx = share_in(ridx_table, stp, result_relation + ".right_indexes");

  // Oblivious indexing pulls the matching rows out of the shuffled inputs.
  SharedRelation lrows = oblivious_select(ls, lidx, "idx");
  SharedRelation rrows = oblivious_select(rs, ridx, "idx");

  // Column-wise concatenation, then a final shuffle of the result.
  SharedRelation result;
  result.schema = out_schema;
  result.n_parties = n_parties_;
  result.shares.assign(n_parties_, {});
  const std::size_t lk = left.column_index(left_key);
  const std::size_t rk = right.column_index(right_key);
  for (int p = 0; p < n_parties_; ++p) {
    result.shares[p].push_back(lrows.shares[p][lk]);
    for (std::size_t c = 0; c < left.width(); ++c) {
      if (c != lk) result.shares[p].push_back(lrows.shares[p][c]);
    }
    for (std::size_t c = 0; c < right.width(); ++c) {
      if (c != rk) result.shares[p].push_back(rrows.shares[p][c]);
    }
  }
  result = oblivious_shuffle(result);
  ledger_cardinality(result_relation);
  return result;
}

SharedRelation MpcEngine::public_join(const SharedRelation& left,
                                      const SharedRelation& right,
                                      const std::string& left_key,
                                      const std::string& right_key,
                                      int chosen_party,
                                      const std::vector<std::string>& out_schema,
                                      const std::string& left_relation,
                                      const std::string& right_relation,
                                      const std::string& result_relation) {
  // Key columns are public: send them to the chosen party in the clear.
  Table lkeys = reveal_to(project(left, {left_key}), {left_key}, {chosen_party},
                          left_relation);
  Table rkeys = reveal_to(project(right, {right_key}), {right_key},
                          {chosen_party}, right_relation);
  // Public columns count as visible to everyone, not only the chosen party.
  for (int p = 0; p < n_parties_; ++p) {
    if (p == chosen_party) continue;
    ledger_->record({step_, p, LeakKind::ColumnValues, left_relation, left_key});
    ledger_->record({step_, p, LeakKind::ColumnValues, right_relation, right_key});
  }

  // Chosen party enumerates, sorts and joins the keys in the clear, then
  // broadcasts the joined index relation; the result comes out key-sorted.
  std::vector<std::pair<std::int64_t, std::pair<std::int64_t, std::int64_t>>> matches;
  {
    std::vector<std::pair<std::int64_t, std::int64_t>> lidx, ridx;
    for (std::size_t i = 0; i < lkeys.size(); ++i) {
      lidx.emplace_back(lkeys.rows[i][0], static_cast<std::int64_t>(i));
    }
    for (std::size_t j = 0; j < rkeys.size(); ++j) {
      ridx.emplace_back(rkeys.rows[j][0], static_cast<std::int64_t>(j));
    }
    std::stable_sort(lidx.begin(), lidx.end(),
                     [](auto& a, auto& b) { return a.first < b.first; });
    std::stable_sort(ridx.begin(), ridx.end(),
                     [](auto& a, auto& b) { return a.first < b.first; });
    std::size_t i = 0, j = 0;
    while (i < lidx.size() && j < ridx.size()) {
      if (lidx[i].first < ridx[j].first) {
        ++i;
      } else if (ridx[j].first < lidx[i].first) {
        ++j;
      } else {
        std::size_t jend = j;
        while (jend < ridx.size() && ridx[jend].first == lidx[i].first) ++jend;
        for (; i < lidx.size() && lidx[i].first == ridx[j].first; ++i) {
          for (std::size_t jj = j; jj < jend; ++jj) {
            matches.push_back({lidx[i].first, {lidx[i].second, ridx[jj].second}});
          }
        }
        j = jend;
      }
    }
  }
  const std::size_t m = matches.size();
  std::vector<std::uint64_t> index_words;
  index_words.reserve(2 * m);
  for (const auto& match : matches) {
    index_words.push_back(static_cast<std::uint64_t>(match.second.first));
    index_words.push_back(static_cast<std::uint64_t>(match.second.second));
  }
  const std::uint64_t digest = fnv1a(0, index_words.data(), index_words.size());
  for (int p = 0; p < n_parties_; ++p) {
    if (p == chosen_party) continue;
    transcript_->record({step_, chosen_party, p, MsgClass::PublicPermutation,
                         16 * m, digest});
  }
  for (int p = 0; p < n_parties_; ++p) {
    ledger_->record({step_, p, LeakKind::Permutation, result_relation, {}});
  }

  // Every party gathers its own shares at the broadcast positions. Pure
  // share relocation: no fresh randomness, no nonlinear work.
  SharedRelation result;
  result.schema = out_schema;
  result.n_parties = n_parties_;
  result.shares.assign(n_parties_, {});
  const std::size_t lk = left.column_index(left_key);
  const std::size_t rk = right.column_index(right_key);
  for (int p = 0; p < n_parties_; ++p) {
    auto gather = [&](const SharedRelation& rel, std::size_t col, bool from_left) {
      std::vector<std::uint64_t> out(m);
      for (std::size_t r = 0; r < m; ++r) {
        const auto& pos = matches[r].second;
        out[r] = rel.shares[p][col][from_left ? pos.first : pos.second];
      }
      return out;
    };
    result.shares[p].push_back(gather(left, lk, true));
    for (std::size_t c = 0; c < left.width(); ++c) {
      if (c != lk) result.shares[p].push_back(gather(left, c, true));
    }
    for (std::size_t c = 0; c < right.width(); ++c) {
      if (c != rk) result.shares[p].push_back(gather(right, c, false));
    }
  }
  result.sorted_by = out_schema.empty() ? std::nullopt
                                        : std::make_optional(out_schema[0]);
  result.order_public = true;
  ledger_cardinality(result_relation);
  return result;
}

SharedRelation MpcEngine::hybrid_aggregate(const SharedRelation& rel,
                                           const AggregateParams& p,
                                           const std::vector<std::string>& out_schema,
                                           int stp,
                                           const std::string& input_relation,
                                           const std::string& result_relation) {
  if (p.group_by.size() != 1) {
    fail(ErrorCode::kInternal, "hybrid aggregation expects one group column");
  }
  // Shuffle, then reveal only the group-by column to the STP.
  SharedRelation work = oblivious_shuffle(rel);
  const std::string& group = p.group_by[0];
  Table keys = reveal_to(project(work, {group}), {group}, {stp}, input_relation);
  const std::size_t n = keys.size();

  // STP in the clear: enumerate the keys, sort, and flag rows whose key
  // equals the previous row's key.
  std::vector<std::pair<std::int64_t, std::int64_t>> order;
  for (std::size_t i = 0; i < n; ++i) {
    order.emplace_back(keys.rows[i][0], static_cast<std::int64_t>(i));
  }
  std::stable_sort(order.begin(), order.end(),
                   [](auto& a, auto& b) { return a.first < b.first; });
  Table flags_table({"flag"});
  std::vector<std::uint64_t> index_words;
  for (std::size_t i = 0; i < n; ++i) {
    const bool prev_equal = i > 0 && order[i].first == order[i - 1].first;
    flags_table.rows.push_back({prev_equal ? 1 : 0});
    index_words.push_back(static_cast<std::uint64_t>(order[i].second));
  }

  // The index order travels in the clear to every party; the flags are
  // secret-shared by the STP.
  const std::uint64_t digest = fnv1a(0, index_words.data(), index_words.size());
  for (int q = 0; q < n_parties_; ++q) {
    if (q == stp) continue;
    transcript_->record({step_, stp, q, MsgClass::PublicPermutation, 8 * n, digest});
  }
  for (int q = 0; q < n_parties_; ++q) {
    ledger_->record({step_, q, LeakKind::Permutation, result_relation, {}});
  }
  SharedRelation eq_flags = share_in(flags_table, stp, result_relation + ".flags");

  // Parties reorder their shares of the shuffled relation by the public
  // indexes; rows are now grouped by key.
  SharedRelation sorted;
  sorted.schema = work.schema;
  sorted.n_parties = n_parties_;
  sorted.shares.assign(n_parties_, std::vector<std::vector<std::uint64_t>>(work.width()));
  for (int q = 0; q < n_parties_; ++q) {
    for (std::size_t c = 0; c < work.width(); ++c) {
      sorted.shares[q][c].resize(n);
      for (std::size_t r = 0; r < n; ++r) {
        sorted.shares[q][c][r] =
            work.shares[q][c][static_cast<std::size_t>(order[r].second)];
      }
    }
  }

  // Oblivious accumulate scan: fold each row into the next while the shared
  // previous-equal flag is set. One multiplication per row; no comparisons.
  const auto adj = column_sums(eq_flags, 0);
  auto cells = plain_cells(sorted);
  const std::size_t group_idx = sorted.column_index(group);
  std::vector<std::uint64_t> values(n, 1);
  if (p.func == AggFunc::Sum) values = cells[sorted.column_index(p.agg_col)];
  std::vector<std::uint64_t> acc(n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    acc[r] = r == 0 ? values[r]
                    : f::add(f::mul(adj[r], acc[r - 1]), values[r]);
  }
  if (n > 1) counters_->mul += n - 1;

  // keep = last entry of its group, i.e. the next row starts a new key.
  std::vector<std::uint64_t> keep(n, 0);
  for (std::size_t r = 0; r + 1 < n; ++r) keep[r] = f::sub(1, adj[r + 1]);
  if (n > 0) keep[n - 1] = 1;

  std::vector<std::vector<std::uint64_t>> out_cells;
  out_cells.push_back(cells[group_idx]);
  out_cells.push_back(acc);
  out_cells.push_back(keep);
  SharedRelation staged;
  staged.schema = out_schema;
  staged.n_parties = n_parties_;
  std::uint64_t out_digest = 0;
  for (const auto& col : out_cells) out_digest = fnv1a(out_digest, col.data(), col.size());
  log_abb_round_trip(sorted.phys_width() * n, out_cells.size() * n, out_digest);
  staged = reshared_like(staged, out_cells);
  staged.flagged = true;
  staged = oblivious_shuffle(staged);

  const auto revealed = column_sums(staged, staged.width());
  for (int a = 0; a < n_parties_; ++a) {
    for (int b = 0; b < n_parties_; ++b) {
      if (a == b) continue;
      transcript_->record({step_, a, b, MsgClass::Reveal, 8 * n,
                           fnv1a(0, revealed.data(), revealed.size())});
    }
  }
  std::vector<std::uint64_t> keep_clear(staged.rows());
  for (std::size_t r = 0; r < staged.rows(); ++r) keep_clear[r] = f::reduce(revealed[r]);
  SharedRelation result = drop_rows_by_flag(staged, keep_clear, true);
  ledger_cardinality(result_relation);
  return result;
}

}  // namespace secrel
