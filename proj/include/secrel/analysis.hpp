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

#ifndef SECREL_ANALYSIS_HPP_
#define SECREL_ANALYSIS_HPP_

#include <string>

#include "secrel/ir.hpp"

namespace secrel {

// First pass: derives each relation's owner in topological order. A unary
// operator inherits its input's owner; a multi-input operator keeps a single
// owner only when all inputs agree, otherwise the relation is partitioned and
// no party can derive it alone. Output nodes record their recipients as the
// storage location. Idempotent.
void propagate_ownership(QueryDag& dag);

// Second pass: trust sets. Every input column starts from its annotation plus
// the storing party; each derived column gets the intersection of the trust
// sets of the columns it depends on. Output recipients are added to the final
// relation's columns, and reveal points recorded by the push-up pass keep the
// revealed columns readable by the lift target.
void propagate_trust(QueryDag& dag);

// Assigns execution modes from ownership: partitioned relations must be
// computed in shared space, single-owner relations run in the clear at their
// owner. Hybrid assignments made by the rewriter are preserved.
void mark_mpc(QueryDag& dag);

// ownership + trust + marking, the standard re-analysis step.
void analyze(QueryDag& dag);

// Per-node report (owner, per-column trust, MPC flag) as a JSON document.
std::string analysis_report(const QueryDag& dag);

}  // namespace secrel

#endif  // SECREL_ANALYSIS_HPP_
