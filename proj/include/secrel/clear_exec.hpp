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

#ifndef SECREL_CLEAR_EXEC_HPP_
#define SECREL_CLEAR_EXEC_HPP_

#include <map>
#include <string>
#include <vector>

#include "secrel/ir.hpp"
#include "secrel/table.hpp"

namespace secrel {

// Evaluates one relational operator on plaintext tables with bag semantics.
// Joins emit key-sorted rows and aggregates emit group-sorted rows, so a
// step's output order is deterministic.
Table run_clear_step(const OpNode& node, const std::vector<const Table*>& inputs);

bool filter_matches(std::int64_t value, Cmp cmp, std::int64_t constant);

// Runs the whole (un-rewritten) DAG in the clear at one logical site, as if a
// single trusted party held every input. Ground truth for equivalence tests.
// Inputs are keyed by input-node label; the result maps output names to
// tables.
std::map<std::string, Table> oracle_execute(
    const QueryDag& dag, const std::map<std::string, Table>& inputs);

}  // namespace secrel

#endif  // SECREL_CLEAR_EXEC_HPP_
