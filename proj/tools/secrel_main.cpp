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

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "secrel/analysis.hpp"
#include "secrel/clear_exec.hpp"
#include "secrel/orchestrator.hpp"

namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CLI::ValidationError("input", "cannot open " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<int, bool> parse_consent(const secrel::QueryDag& dag,
                                  const std::string& spec) {
  std::map<int, bool> consent;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      secrel::fail(secrel::ErrorCode::kParseError,
                   "--consent expects party:bool pairs, got '" + item + "'");
    }
    const std::string party = item.substr(0, colon);
    const std::string value = item.substr(colon + 1);
    const int idx = dag.party_index(party);
    if (idx < 0) {
      secrel::fail(secrel::ErrorCode::kUnknownParty,
                   "--consent names unknown party '" + party + "'");
    }
    consent[idx] = value == "true" || value == "1" || value == "yes";
  }
  return consent;
}

std::map<std::string, secrel::Table> load_inputs(const secrel::QueryDag& dag,
                                                 const std::string& dir) {
  std::map<std::string, secrel::Table> inputs;
  for (const auto& [id, node] : dag.nodes) {
    if (node.kind != secrel::OpKind::Input) continue;
    inputs[node.label] =
        secrel::read_table((fs::path(dir) / (node.label + ".csv")).string());
  }
  return inputs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hybrid cleartext/MPC relational query compiler and simulator"};
  app.require_subcommand(1);

  std::string query_path, inputs_dir, out_dir, consent_spec, run_dir;
  bool no_rewrites = false;
  std::uint64_t seed = 0;
  int trials = 50;
  std::size_t max_rows = 1000;

  auto* analyze_cmd = app.add_subcommand("analyze", "ownership/trust/MPC report");
  analyze_cmd->add_option("query", query_path)->required();

  auto* compile_cmd = app.add_subcommand("compile", "compile and print the plan");
  compile_cmd->add_option("query", query_path)->required();
  compile_cmd->add_flag("--no-rewrites", no_rewrites,
                        "skip the frontier, hybrid, and sort passes");
  compile_cmd->add_option("--consent", consent_spec, "party:bool,...");
  compile_cmd->add_option("--out", out_dir, "directory for compiled.json/trace.json");

  auto* simulate_cmd = app.add_subcommand("simulate", "run a query end to end");
  simulate_cmd->add_option("query", query_path)->required();
  simulate_cmd->add_option("--inputs", inputs_dir, "directory with <input>.csv")
      ->required();
  simulate_cmd->add_option("--seed", seed);
  simulate_cmd->add_option("--out", out_dir, "run directory")->required();
  simulate_cmd->add_flag("--no-rewrites", no_rewrites);
  simulate_cmd->add_option("--consent", consent_spec, "party:bool,...");

  auto* verify_cmd = app.add_subcommand(
      "verify", "rewritten vs baseline vs oracle on randomized inputs");
  verify_cmd->add_option("query", query_path)->required();
  verify_cmd->add_option("--inputs", inputs_dir, "optional tables for trial 0");
  verify_cmd->add_option("--trials", trials);
  verify_cmd->add_option("--seed", seed);
  verify_cmd->add_option("--max-rows", max_rows);
  verify_cmd->add_option("--consent", consent_spec, "party:bool,...");

  auto* audit_cmd = app.add_subcommand("audit", "check a run's leakage ledger");
  audit_cmd->add_option("run_dir", run_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*analyze_cmd) {
      auto dag = secrel::build_dag(slurp(query_path));
      secrel::analyze(dag);
      std::cout << secrel::analysis_report(dag) << "\n";
      return 0;
    }
    if (*compile_cmd) {
      auto dag = secrel::build_dag(slurp(query_path));
      secrel::CompileOptions opts;
      opts.no_rewrites = no_rewrites;
      if (!consent_spec.empty()) opts.consent = parse_consent(dag, consent_spec);
      auto result = secrel::compile_query(dag, opts);
      if (out_dir.empty()) {
        std::cout << secrel::serialize_dag(result.dag) << "\n";
        std::cout << result.trace.to_json(result.dag) << "\n";
      } else {
        fs::create_directories(out_dir);
        std::ofstream(fs::path(out_dir) / "compiled.json")
            << secrel::serialize_dag(result.dag);
        std::ofstream(fs::path(out_dir) / "trace.json")
            << result.trace.to_json(result.dag);
        std::cout << "wrote " << out_dir << "/compiled.json and trace.json\n";
      }
      return 0;
    }
    if (*simulate_cmd) {
      auto dag = secrel::build_dag(slurp(query_path));
      secrel::SimulateOptions opts;
      opts.seed = seed;
      opts.no_rewrites = no_rewrites;
      if (!consent_spec.empty()) opts.consent = parse_consent(dag, consent_spec);
      auto result = secrel::simulate(dag, load_inputs(dag, inputs_dir), opts);
      secrel::write_run_dir(out_dir, dag, result);
      auto report = secrel::audit(result.ledger, result.compiled);
      std::ofstream(fs::path(out_dir) / "audit.json")
          << report.to_json(result.compiled);
      std::cout << "run written to " << out_dir << "; audit "
                << (report.pass ? "pass" : "FAIL") << "\n";
      return report.pass ? 0 : 1;
    }
    if (*verify_cmd) {
      auto dag = secrel::build_dag(slurp(query_path));
      std::map<std::string, secrel::Table> base;
      if (!inputs_dir.empty()) base = load_inputs(dag, inputs_dir);
      std::map<int, bool> consent;
      if (!consent_spec.empty()) consent = parse_consent(dag, consent_spec);
      auto report = secrel::verify(dag, trials, seed, max_rows, base, consent);
      std::cout << report.to_json() << "\n";
      return report.pass ? 0 : 1;
    }
    if (*audit_cmd) {
      auto compiled = secrel::parse_dag(
          slurp((fs::path(run_dir) / "compiled.json").string()));
      auto ledger = secrel::Ledger::from_json(
          slurp((fs::path(run_dir) / "ledger.json").string()));
      auto report = secrel::audit(ledger, compiled);
      std::ofstream(fs::path(run_dir) / "audit.json") << report.to_json(compiled);
      std::cout << report.to_json(compiled) << "\n";
      return report.pass ? 0 : 1;
    }
  } catch (const CLI::Error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const secrel::Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
