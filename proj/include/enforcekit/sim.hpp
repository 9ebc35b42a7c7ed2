#pragma once

// Scripted Android-like environment: component lifecycles, a resource
// registry, and verdicts computed from policy acceptors.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "enforcekit/acceptor.hpp"
#include "enforcekit/catalog.hpp"
#include "enforcekit/engine.hpp"
#include "enforcekit/model.hpp"

namespace enforcekit {

enum class ComponentKind { Activity, Service };

struct ScenarioComponent {
  std::string id;
  std::string class_name;
  ComponentKind kind = ComponentKind::Activity;
};

struct ApiCallStep {
  std::string component;
  std::string class_name;
  std::string method;
  /// Receiver name; "self" is the component itself.
  std::string receiver;
  /// The call creates the receiver object.
  bool creates = false;
  std::vector<Scalar> args;
};

struct LifecycleStep {
  std::string component;
  /// Short name: create, start, resume, pause, stop, restart, destroy,
  /// startCommand.
  std::string callback;
  std::vector<ApiCallStep> body;
};

struct UserStep {
  std::string label;
};

using Directive = std::variant<LifecycleStep, ApiCallStep, UserStep>;

struct Scenario {
  std::string name;
  std::vector<ScenarioComponent> components;
  std::vector<Directive> script;
};

Scenario scenario_from_json(const nlohmann::json& doc);
Scenario load_scenario(const std::filesystem::path& path);

enum class Verdict { Healed, NoViolation, ViolationUnhealed };
std::string to_string(Verdict v);
Verdict parse_verdict(const std::string& text);

struct SimException {
  std::size_t step = 0;  ///< index into the script
  std::string kind;
  bool operator==(const SimException&) const = default;
};

struct Leak {
  std::string component;
  std::string resource_class;
  std::string receiver;
  bool operator==(const Leak&) const = default;
};

struct SimOutcome {
  Verdict verdict = Verdict::NoViolation;
  std::vector<Leak> leaks;
  std::vector<SimException> exceptions;
  Trace trace_in;
  Trace trace_out;
  std::optional<EnforcementReport> report;
  /// Receiver names by id, for reporting.
  std::map<std::int64_t, std::string> names;

  bool clean() const { return verdict == Verdict::NoViolation && leaks.empty() && exceptions.empty(); }
};

nlohmann::ordered_json outcome_to_json(const SimOutcome& outcome);

/// The catalog extended with the scenario's component classes.
ApiCatalog scenario_catalog(const Scenario& s, const ApiCatalog& base);

/// Runs `s` with `models` active when `enforce` is set. Verdicts come from
/// `policies` alone. Throws ScenarioError on an illegal lifecycle order.
SimOutcome run_scenario(const Scenario& s, const std::vector<EnforcementModel>& models,
                        const std::vector<PolicyParams>& policies, const ApiCatalog& catalog,
                        bool enforce);

struct ManifestModel {
  std::string name;
  std::string file;
  std::vector<PolicyParams> policies;
};

struct ManifestCase {
  std::string app;
  std::string scenario;
  std::string model;
  Verdict expected = Verdict::Healed;
};

struct CorpusManifest {
  std::vector<ManifestModel> models;
  std::vector<ManifestCase> cases;

  const ManifestModel* find_model(const std::string& name) const;
};

CorpusManifest load_manifest(const std::filesystem::path& path);

struct CaseResult {
  ManifestCase row;
  SimOutcome outcome;
  bool matches() const { return outcome.verdict == row.expected; }
};

struct CorpusReport {
  std::vector<CaseResult> cases;
  std::size_t models_loaded = 0;
  std::size_t healed = 0;
  std::size_t no_violation = 0;
  std::size_t unhealed = 0;
  /// Cases that are not clean (violation, leak or exception).
  std::size_t flagged = 0;
};

/// Loads `corpus_dir/manifest.json`, the models from `models_dir` and runs
/// every case. Throws MissingFixture for absent files.
CorpusReport run_corpus(const std::filesystem::path& corpus_dir, const std::filesystem::path& models_dir,
                        const ApiCatalog& catalog, bool enforce = true);

nlohmann::ordered_json corpus_to_json(const CorpusReport& report);
std::string format_corpus(const CorpusReport& report);

struct BenchRow {
  std::size_t n_modules = 0;
  double mean_us_per_event = 0;
  double overhead_pct = 0;
};

/// `pool` is cycled (with renamed copies) to reach each module count.
/// Row 0 is always the enforcement-off baseline.
std::vector<BenchRow> bench_overhead(const Scenario& scenario, const std::vector<EnforcementModel>& pool,
                                     const ApiCatalog& catalog, const std::vector<std::size_t>& module_counts,
                                     std::size_t repetitions);

std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace enforcekit
