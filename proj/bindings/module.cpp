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

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "secrel/analysis.hpp"
#include "secrel/clear_exec.hpp"
#include "secrel/orchestrator.hpp"

namespace py = pybind11;

namespace {

secrel::Table table_from_py(const py::dict& d) {
  secrel::Table t;
  for (const auto& c : d["columns"].cast<py::list>()) {
    t.schema.push_back(c.cast<std::string>());
  }
  for (const auto& row : d["rows"].cast<py::list>()) {
    secrel::Row r;
    for (const auto& cell : row.cast<py::list>()) {
      r.push_back(cell.cast<std::int64_t>());
    }
    if (r.size() != t.schema.size()) {
      secrel::fail(secrel::ErrorCode::kArityMismatch,
                   "row width does not match the column list");
    }
    t.rows.push_back(std::move(r));
  }
  return t;
}

py::dict table_to_py(const secrel::Table& t) {
  py::dict d;
  py::list cols;
  for (const auto& c : t.schema) cols.append(c);
  py::list rows;
  for (const auto& r : t.rows) {
    py::list row;
    for (auto cell : r) row.append(cell);
    rows.append(row);
  }
  d["columns"] = cols;
  d["rows"] = rows;
  return d;
}

std::map<std::string, secrel::Table> inputs_from_py(const py::dict& d) {
  std::map<std::string, secrel::Table> inputs;
  for (const auto& item : d) {
    inputs[item.first.cast<std::string>()] =
        table_from_py(item.second.cast<py::dict>());
  }
  return inputs;
}

std::map<int, bool> consent_from_py(const secrel::QueryDag& dag,
                                    const py::dict& d) {
  std::map<int, bool> consent;
  for (const auto& item : d) {
    const std::string name = item.first.cast<std::string>();
    const int idx = dag.party_index(name);
    if (idx < 0) {
      secrel::fail(secrel::ErrorCode::kUnknownParty,
                   "consent names unknown party '" + name + "'");
    }
    consent[idx] = item.second.cast<bool>();
  }
  return consent;
}

}  // namespace

PYBIND11_MODULE(_secrel, m) {
  m.doc() = "hybrid cleartext/MPC relational query compiler and simulator";

  py::register_exception<secrel::Error>(m, "SecrelError");

  m.def(
      "analyze",
      [](const std::string& query_json) {
        auto dag = secrel::build_dag(query_json);
        secrel::analyze(dag);
        return secrel::analysis_report(dag);
      },
      py::arg("query_json"),
      "Per-node ownership/trust/MPC report as a JSON string.");

  m.def(
      "compile",
      [](const std::string& query_json, const py::dict& consent,
         bool no_rewrites) {
        auto dag = secrel::build_dag(query_json);
        secrel::CompileOptions opts;
        opts.no_rewrites = no_rewrites;
        opts.consent = consent_from_py(dag, consent);
        auto result = secrel::compile_query(dag, opts);
        py::dict out;
        out["compiled"] = secrel::serialize_dag(result.dag);
        out["trace"] = result.trace.to_json(result.dag);
        return out;
      },
      py::arg("query_json"), py::arg("consent") = py::dict{},
      py::arg("no_rewrites") = false,
      "Compile a query; returns the compiled DAG and rewrite trace as JSON.");

  m.def(
      "oracle",
      [](const std::string& query_json, const py::dict& inputs) {
        auto dag = secrel::build_dag(query_json);
        auto outputs = secrel::oracle_execute(dag, inputs_from_py(inputs));
        py::dict out;
        for (const auto& [name, table] : outputs) {
          out[py::str(name)] = table_to_py(secrel::sorted_copy(table));
        }
        return out;
      },
      py::arg("query_json"), py::arg("inputs"),
      "Single-site cleartext execution; the equivalence ground truth.");

  m.def(
      "simulate",
      [](const std::string& query_json, const py::dict& inputs,
         std::uint64_t seed, bool no_rewrites, const py::dict& consent) {
        auto dag = secrel::build_dag(query_json);
        secrel::SimulateOptions opts;
        opts.seed = seed;
        opts.no_rewrites = no_rewrites;
        opts.consent = consent_from_py(dag, consent);
        auto run = secrel::simulate(dag, inputs_from_py(inputs), opts);
        auto report = secrel::audit(run.ledger, run.compiled);
        py::dict out;
        py::dict outputs;
        for (const auto& [party, tables] : run.outputs) {
          py::dict per_party;
          for (const auto& [name, table] : tables) {
            per_party[py::str(name)] = table_to_py(table);
          }
          outputs[py::str(run.compiled.parties[party].name)] = per_party;
        }
        out["outputs"] = outputs;
        out["ledger"] = run.ledger.to_json();
        out["counters"] = run.counters.to_json();
        out["audit_pass"] = report.pass;
        out["audit"] = report.to_json(run.compiled);
        out["compiled"] = secrel::serialize_dag(run.compiled);
        out["trace"] = run.trace.to_json(run.compiled);
        return out;
      },
      py::arg("query_json"), py::arg("inputs"), py::arg("seed") = 0,
      py::arg("no_rewrites") = false, py::arg("consent") = py::dict{},
      "Compile and run a query on the simulated parties.");

  m.def(
      "verify",
      [](const std::string& query_json, int trials, std::uint64_t seed,
         std::size_t max_rows) {
        auto dag = secrel::build_dag(query_json);
        auto report = secrel::verify(dag, trials, seed, max_rows);
        py::dict out;
        out["pass"] = report.pass;
        out["trials"] = report.trials;
        out["mismatch"] = report.mismatch;
        return out;
      },
      py::arg("query_json"), py::arg("trials") = 10, py::arg("seed") = 0,
      py::arg("max_rows") = 100,
      "Rewritten plan vs baseline plan vs oracle on randomized inputs.");

  m.def(
      "generate_inputs",
      [](const std::string& query_json, std::uint64_t seed,
         std::size_t max_rows) {
        auto dag = secrel::build_dag(query_json);
        auto inputs = secrel::generate_inputs(dag, seed, max_rows);
        py::dict out;
        for (const auto& [name, table] : inputs) {
          out[py::str(name)] = table_to_py(table);
        }
        return out;
      },
      py::arg("query_json"), py::arg("seed") = 0, py::arg("max_rows") = 100,
      "Random tables matching the query's input schemas.");
}
