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

#ifndef SECREL_LEDGER_HPP_
#define SECREL_LEDGER_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace secrel {

enum class LeakKind { ColumnValues, Cardinality, Permutation, Output };

const char* leak_kind_name(LeakKind kind);

// One disclosure: `observer` learned `item` about `relation` while step
// `step` executed. Append-only; the audit replays it against the authorized
// set derived from the compiled DAG.
struct LeakageEvent {
  std::int32_t step = -1;     // node id of the executing operator
  int observer = -1;          // party id
  LeakKind kind = LeakKind::Cardinality;
  std::string relation;       // label of the node producing the relation
  std::string column;         // only for ColumnValues

  bool operator==(const LeakageEvent&) const = default;
};

class Ledger {
 public:
  void record(LeakageEvent event) { events_.push_back(std::move(event)); }
  const std::vector<LeakageEvent>& events() const { return events_; }

  std::string to_json() const;
  static Ledger from_json(const std::string& text);

 private:
  std::vector<LeakageEvent> events_;
};

// Every value that crosses actor boundaries is classified; an unclassified
// send is a protocol bug, which the share-privacy test asserts against.
enum class MsgClass {
  FreshShare,         // uniformly random share from a dealer or the ABB
  Reveal,             // ledgered reconstruction toward specific targets
  PublicCardinality,  // row counts
  PublicPermutation,  // index orders broadcast in the clear
  PlaintextTable,     // cleartext relation moved between clear segments
  AbbOperand,         // operand shares entering the isolated functionality
};

const char* msg_class_name(MsgClass cls);

inline constexpr int kAbbEndpoint = -1;

struct TranscriptRecord {
  std::int32_t step = -1;
  int sender = -1;    // party id or kAbbEndpoint
  int receiver = -1;  // party id or kAbbEndpoint
  MsgClass cls = MsgClass::FreshShare;
  std::uint64_t bytes = 0;
  std::uint64_t digest = 0;  // FNV-1a over the payload words
};

class Transcript {
 public:
  void record(TranscriptRecord rec) { records_.push_back(rec); }
  const std::vector<TranscriptRecord>& records() const { return records_; }

  // Records visible to one party (sent or received by it).
  std::vector<TranscriptRecord> view_of(int party) const;
  std::string to_text(int party) const;

 private:
  std::vector<TranscriptRecord> records_;
};

std::uint64_t fnv1a(std::uint64_t seed, const std::uint64_t* data, std::size_t n);

}  // namespace secrel

#endif  // SECREL_LEDGER_HPP_
