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

#ifndef SECREL_IR_HPP_
#define SECREL_IR_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "secrel/common.hpp"

namespace secrel {

using NodeId = std::int32_t;

struct Party {
  int id = -1;
  std::string name;
  std::string endpoint;  // informational only
};

// Set of party ids authorized to see a column in the clear. Party ids are
// dense (0..P-1), so a bitmask is enough.
class TrustSet {
 public:
  TrustSet() = default;
  static TrustSet full(int n_parties);

  bool contains(int party) const { return (bits_ & (1u << party)) != 0; }
  void insert(int party) { bits_ |= (1u << party); }
  void remove(int party) { bits_ &= ~(1u << party); }
  TrustSet intersect(const TrustSet& other) const;
  TrustSet unite(const TrustSet& other) const;
  bool is_subset_of(const TrustSet& other) const {
    return (bits_ & ~other.bits_) == 0;
  }
  bool is_full(int n_parties) const {
    return bits_ == TrustSet::full(n_parties).bits_;
  }
  bool empty() const { return bits_ == 0; }
  std::vector<int> members() const;
  // Lowest-id member, or -1 when empty. Deterministic tie-break for STP and
  // public-join party selection.
  int lowest() const;

  bool operator==(const TrustSet&) const = default;

 private:
  std::uint32_t bits_ = 0;
};

struct ColumnMeta {
  std::string name;
  TrustSet trust;

  bool operator==(const ColumnMeta&) const = default;
};

enum class OwnerKind { Single, Partitioned, Public };

struct Ownership {
  OwnerKind kind = OwnerKind::Partitioned;
  int party = -1;  // meaningful for Single

  static Ownership single(int party) { return {OwnerKind::Single, party}; }
  static Ownership partitioned() { return {OwnerKind::Partitioned, -1}; }
  bool is_single() const { return kind == OwnerKind::Single; }

  bool operator==(const Ownership&) const = default;
};

struct RelationMeta {
  std::vector<ColumnMeta> columns;
  Ownership owner;
  std::set<int> stored_at;
  std::optional<std::string> sorted_by;
  // True when every party knows the physical row order (e.g. a public join
  // broadcast its index relation). Lets downstream scans skip re-shuffling.
  bool order_public = false;
  bool row_count_public = true;

  std::size_t width() const { return columns.size(); }
  int column_index(const std::string& name) const;  // -1 when absent
  std::vector<std::string> names() const;

  bool operator==(const RelationMeta&) const = default;
};

enum class OpKind {
  Input,
  Concat,
  Project,
  Filter,
  Join,
  Aggregate,
  Multiply,
  Divide,
  ScalarMul,
  Enumerate,
  SortBy,
  Distinct,
  Output,
};

const char* op_kind_name(OpKind kind);

enum class AggFunc { Sum, Count };
enum class Cmp { Eq, Lt, Gt };

struct InputParams {
  int party = -1;
  bool operator==(const InputParams&) const = default;
};
struct ConcatParams {
  bool operator==(const ConcatParams&) const = default;
};
struct ProjectParams {
  std::vector<std::string> columns;
  bool operator==(const ProjectParams&) const = default;
};
struct FilterParams {
  std::string column;
  Cmp cmp = Cmp::Eq;
  std::int64_t constant = 0;
  bool operator==(const FilterParams&) const = default;
};
struct JoinParams {
  std::string left_key;
  std::string right_key;
  bool operator==(const JoinParams&) const = default;
};
struct AggregateParams {
  AggFunc func = AggFunc::Sum;
  std::vector<std::string> group_by;
  std::string agg_col;  // empty for Count
  std::string out_col;
  bool operator==(const AggregateParams&) const = default;
};
struct MultiplyParams {
  std::string out_col, lhs, rhs;
  bool operator==(const MultiplyParams&) const = default;
};
struct DivideParams {
  std::string out_col, numerator, divisor;
  bool operator==(const DivideParams&) const = default;
};
struct ScalarMulParams {
  std::string out_col, source;
  std::int64_t factor = 1;
  bool operator==(const ScalarMulParams&) const = default;
};
struct EnumerateParams {
  std::string out_col;
  bool operator==(const EnumerateParams&) const = default;
};
struct SortByParams {
  std::string column;
  bool operator==(const SortByParams&) const = default;
};
struct DistinctParams {
  bool operator==(const DistinctParams&) const = default;
};
struct OutputParams {
  std::vector<int> recipients;
  std::string name;
  bool operator==(const OutputParams&) const = default;
};

using OpParams =
    std::variant<InputParams, ConcatParams, ProjectParams, FilterParams,
                 JoinParams, AggregateParams, MultiplyParams, DivideParams,
                 ScalarMulParams, EnumerateParams, SortByParams, DistinctParams,
                 OutputParams>;

enum class ExecKind { Unassigned, Clear, Mpc, HybridJoin, PublicJoin, HybridAgg };

const char* exec_kind_name(ExecKind kind);

struct ExecMode {
  ExecKind kind = ExecKind::Unassigned;
  int party = -1;  // Clear: executing party; hybrids: STP / chosen party

  static ExecMode clear(int party) { return {ExecKind::Clear, party}; }
  static ExecMode mpc() { return {ExecKind::Mpc, -1}; }
  bool is_clear() const { return kind == ExecKind::Clear; }
  bool is_shared() const { return kind != ExecKind::Clear && kind != ExecKind::Unassigned; }

  bool operator==(const ExecMode&) const = default;
};

struct OpNode {
  NodeId id = -1;
  std::string label;  // document id, preserved across serialization
  OpKind kind = OpKind::Input;
  OpParams params;
  std::vector<NodeId> inputs;
  RelationMeta out_meta;
  ExecMode mode;
  bool mpc_required = false;
  // Set by the push-up pass: the node runs in the clear at the recipients and
  // its input relation arrives through an authorized reveal.
  std::set<int> lifted_to;
  // Secondary half of a split aggregation; guards against re-splitting.
  bool split_secondary = false;
  // Oblivious sub-protocol elisions decided by the sort tracking pass.
  bool sort_elided = false;
  bool shuffle_elided = false;

  template <typename T>
  const T& params_as() const {
    return std::get<T>(params);
  }
  template <typename T>
  T& params_as() {
    return std::get<T>(params);
  }
};

struct QueryDag {
  std::vector<Party> parties;
  std::map<NodeId, OpNode> nodes;
  std::map<int, bool> consent;  // per-party cardinality-leak authorization

  int n_parties() const { return static_cast<int>(parties.size()); }
  const OpNode& node(NodeId id) const;
  OpNode& node(NodeId id);
  bool has_node(NodeId id) const { return nodes.count(id) != 0; }
  int party_index(const std::string& name) const;  // -1 when unknown

  // Node ids in topological order (inputs before consumers); ties broken by
  // ascending id so every pass is deterministic.
  std::vector<NodeId> topo_order() const;
  std::vector<NodeId> output_nodes() const;
  // Consumers of each node, ascending.
  std::map<NodeId, std::vector<NodeId>> consumers() const;
  NodeId fresh_id() const;

  // Drops nodes that no longer reach any output.
  void prune_dead_nodes();
};

// Computes a node's output columns from its inputs; the single source of
// schema truth shared by validation, the rewriter and both executors.
// Trust sets in the result are left empty; analysis fills them.
std::vector<std::string> infer_out_columns(const OpNode& node,
                                           const std::vector<const RelationMeta*>& inputs);

// Column-level dependencies: result column index -> set of (input position,
// input column index). Covers both direct row contribution and the columns
// that steer how rows are combined, filtered or reordered.
std::map<std::size_t, std::set<std::pair<std::size_t, std::size_t>>> column_deps(
    const QueryDag& dag, const OpNode& node);

// Parses, validates and freezes a query document (see README for the format).
// Node ids are assigned in document order, so parsing is deterministic.
QueryDag build_dag(const std::string& json_text);

// Serializes a DAG, including analysis metadata when present. Parsing the
// result reproduces the DAG structure and metadata exactly.
std::string serialize_dag(const QueryDag& dag);
QueryDag parse_dag(const std::string& json_text);

// Deep copy of the sub-DAG reachable from the given roots, with fresh dense
// ids. Structure and metadata are preserved.
QueryDag clone_subdag(const QueryDag& dag, const std::vector<NodeId>& roots);

// Structural equality ignoring labels: same nodes, edges, params, metadata.
bool same_structure(const QueryDag& a, const QueryDag& b);

}  // namespace secrel

#endif  // SECREL_IR_HPP_
