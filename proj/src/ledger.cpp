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

#include "secrel/ledger.hpp"

#include <sstream>

#include "json.hpp"
#include "secrel/common.hpp"

namespace secrel {

using nlohmann::json;

const char* leak_kind_name(LeakKind kind) {
  switch (kind) {
    case LeakKind::ColumnValues: return "column_values";
    case LeakKind::Cardinality: return "cardinality";
    case LeakKind::Permutation: return "permutation";
    case LeakKind::Output: return "output";
  }
  return "?";
}

namespace {

LeakKind parse_leak_kind(const std::string& s) {
  if (s == "column_values") return LeakKind::ColumnValues;
  if (s == "cardinality") return LeakKind::Cardinality;
  if (s == "permutation") return LeakKind::Permutation;
  if (s == "output") return LeakKind::Output;
  fail(ErrorCode::kParseError, "bad leakage kind '" + s + "'");
}

}  // namespace

std::string Ledger::to_json() const {
  json arr = json::array();
  for (const auto& e : events_) {
    json item;
    item["step"] = e.step;
    item["observer"] = e.observer;
    item["kind"] = leak_kind_name(e.kind);
    item["relation"] = e.relation;
    if (e.kind == LeakKind::ColumnValues) item["column"] = e.column;
    arr.push_back(item);
  }
  return arr.dump(2);
}

Ledger Ledger::from_json(const std::string& text) {
  Ledger ledger;
  json arr;
  try {
    arr = json::parse(text);
    for (const auto& item : arr) {
      LeakageEvent e;
      e.step = item.at("step").get<std::int32_t>();
      e.observer = item.at("observer").get<int>();
      e.kind = parse_leak_kind(item.at("kind").get<std::string>());
      e.relation = item.at("relation").get<std::string>();
      e.column = item.value("column", std::string{});
      ledger.record(e);
    }
  } catch (const json::exception& ex) {
    fail(ErrorCode::kParseError, std::string("ledger: ") + ex.what());
  }
  return ledger;
}

const char* msg_class_name(MsgClass cls) {
  switch (cls) {
    case MsgClass::FreshShare: return "fresh_share";
    case MsgClass::Reveal: return "reveal";
    case MsgClass::PublicCardinality: return "public_cardinality";
    case MsgClass::PublicPermutation: return "public_permutation";
    case MsgClass::PlaintextTable: return "plaintext_table";
    case MsgClass::AbbOperand: return "abb_operand";
  }
  return "?";
}

std::vector<TranscriptRecord> Transcript::view_of(int party) const {
  std::vector<TranscriptRecord> out;
  for (const auto& r : records_) {
    if (r.sender == party || r.receiver == party) out.push_back(r);
  }
  return out;
}

std::string Transcript::to_text(int party) const {
  std::ostringstream out;
  auto name = [](int e) {
    return e == kAbbEndpoint ? std::string("abb") : "p" + std::to_string(e);
  };
  for (const auto& r : view_of(party)) {
    out << r.step << ' ' << name(r.sender) << "->" << name(r.receiver) << ' '
        << msg_class_name(r.cls) << ' ' << r.bytes << ' ' << std::hex
        << r.digest << std::dec << '\n';
  }
  return out.str();
}

std::uint64_t fnv1a(std::uint64_t seed, const std::uint64_t* data, std::size_t n) {
  std::uint64_t h = seed ^ 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace secrel
