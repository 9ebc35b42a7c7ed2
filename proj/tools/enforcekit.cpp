// enforcekit command-line driver.
//
// Exit codes: 0 success, 1 domain failure (validation errors, verdict
// mismatch), 2 input error.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "enforcekit/acceptor.hpp"
#include "enforcekit/catalog.hpp"
#include "enforcekit/codegen.hpp"
#include "enforcekit/engine.hpp"
#include "enforcekit/io.hpp"
#include "enforcekit/sim.hpp"
#include "enforcekit/validate.hpp"

#ifndef ENFORCEKIT_DATA_DIR
#define ENFORCEKIT_DATA_DIR "data"
#endif

namespace ek = enforcekit;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kDomainFailure = 1;
constexpr int kInputError = 2;

struct Options {
  std::vector<std::string> models;
  std::string catalog = std::string(ENFORCEKIT_DATA_DIR) + "/catalog.android.json";
  std::string trace;
  std::string scenario;
  std::string corpus = std::string(ENFORCEKIT_DATA_DIR) + "/corpus";
  std::string models_dir;
  std::string profile = "xposed-java";
  std::string enforce = "on";
  std::size_t modules = 60;
  std::size_t reps = 10;
  std::string expect;
  bool json = false;
  std::string out;
  std::vector<std::string> targets;
  unsigned seed = 42;
};

void emit(const Options& opt, const std::string& text) {
  if (opt.out.empty()) {
    std::cout << text;
  } else {
    ek::write_text_file(opt.out, text);
  }
}

std::vector<ek::EnforcementModel> load_models(const std::vector<std::string>& paths) {
  std::vector<ek::EnforcementModel> models;
  for (const auto& p : paths) models.push_back(ek::load_model(p));
  return models;
}

std::string models_dir(const Options& opt) {
  return opt.models_dir.empty() ? (fs::path(opt.corpus).parent_path() / "models").string() : opt.models_dir;
}

int cmd_validate(const Options& opt) {
  const auto catalog = ek::load_catalog(opt.catalog);
  bool ok = true;
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  std::string text;
  for (const auto& path : opt.models) {
    const auto model = ek::load_model(path);
    const auto report = ek::validate_model(model, catalog);
    ok = ok && report.deployable();
    auto node = ek::report_to_json(report);
    node["model"] = model.name;
    doc.push_back(std::move(node));
    text += model.name + ":\n" + ek::format_report(report);
  }
  emit(opt, opt.json ? doc.dump(2) + "\n" : text);
  return ok ? kOk : kDomainFailure;
}

int cmd_enforce(const Options& opt) {
  const auto catalog = ek::load_catalog(opt.catalog);
  const auto trace = ek::load_trace(opt.trace);
  ek::SessionConfig config;
  config.catalog = catalog;
  config.target_components.insert(opt.targets.begin(), opt.targets.end());
  const auto [out, report] = ek::enforce_trace(load_models(opt.models), config, trace);
  emit(opt, ek::format_trace(out));
  std::ostream& side = opt.out.empty() ? std::cerr : std::cout;
  side << (opt.json ? ek::report_to_json(report).dump(2) + "\n" : ek::format_report(report));
  return kOk;
}

int cmd_gen(const Options& opt) {
  const auto catalog = ek::load_catalog(opt.catalog);
  const auto profile = ek::profile_by_name(opt.profile);
  if (opt.models.size() != 1) throw ek::Error("ParseError", "gen takes exactly one --model");
  const auto model = ek::load_model(opt.models.front());
  const auto module = ek::generate(model, profile, catalog);
  const fs::path dir = opt.out.empty() ? fs::path(".") : fs::path(opt.out);
  const auto file = dir / ek::output_file_name(model, profile.name);
  ek::write_text_file(file, module.source_text);
  if (opt.json) {
    nlohmann::ordered_json doc;
    doc["file"] = file.string();
    doc["sections"] = ek::section_report(module);
    std::cout << doc.dump(2) << "\n";
  } else {
    std::cout << "wrote " << file.string() << "\n";
    for (const auto& s : module.section_index) {
      std::cout << "  " << s.name << " lines " << s.first_line << "-" << s.last_line << "\n";
    }
  }
  return kOk;
}

bool parse_on_off(const std::string& flag) {
  if (flag == "on") return true;
  if (flag == "off") return false;
  throw ek::Error("ParseError", "--enforce takes on or off");
}

int cmd_run(const Options& opt) {
  const auto catalog = ek::load_catalog(opt.catalog);
  const auto scenario = ek::load_scenario(opt.scenario);
  const auto models = load_models(opt.models);
  const auto manifest = ek::load_manifest(fs::path(opt.corpus) / "manifest.json");
  std::vector<ek::PolicyParams> policies;
  for (const auto& m : models) {
    const auto* entry = manifest.find_model(m.name);
    if (!entry) throw ek::Error("MissingFixture", "no policy for model " + m.name + " in the corpus manifest");
    policies.insert(policies.end(), entry->policies.begin(), entry->policies.end());
  }
  const auto outcome = ek::run_scenario(scenario, models, policies, catalog, parse_on_off(opt.enforce));
  if (opt.json) {
    std::cout << ek::outcome_to_json(outcome).dump(2) << "\n";
  } else {
    std::cout << "scenario " << scenario.name << ": verdict " << ek::to_string(outcome.verdict) << "\n";
    for (const auto& e : outcome.exceptions) std::cout << "  exception at step " << e.step << ": " << e.kind << "\n";
    for (const auto& l : outcome.leaks) {
      std::cout << "  leak: " << l.resource_class << " (" << l.receiver << ") held by " << l.component << "\n";
    }
    if (outcome.report) std::cout << ek::format_report(*outcome.report);
  }
  if (!opt.out.empty()) ek::store_trace(outcome.trace_out, opt.out);
  return kOk;
}

int cmd_corpus(const Options& opt) {
  const auto catalog = ek::load_catalog(opt.catalog);
  const auto report = ek::run_corpus(opt.corpus, models_dir(opt), catalog, parse_on_off(opt.enforce));
  emit(opt, opt.json ? ek::corpus_to_json(report).dump(2) + "\n" : ek::format_corpus(report));
  if (opt.expect.empty()) return kOk;
  std::size_t healed = 0, clean = 0;
  char colon = 0;
  std::istringstream in(opt.expect);
  if (!(in >> healed >> colon >> clean) || colon != ':') {
    throw ek::Error("ParseError", "--expect takes H:V, e.g. 17:10");
  }
  if (report.healed == healed && report.no_violation == clean) return kOk;
  std::cerr << "expected " << healed << " healed / " << clean << " no violation, got " << report.healed << " / "
            << report.no_violation << "\n";
  return kDomainFailure;
}

int cmd_bench(const Options& opt) {
  const auto catalog = ek::load_catalog(opt.catalog);
  const auto scenario = ek::load_scenario(opt.scenario);
  std::vector<ek::EnforcementModel> pool;
  if (!opt.models.empty()) {
    pool = load_models(opt.models);
  } else {
    const auto manifest = ek::load_manifest(fs::path(opt.corpus) / "manifest.json");
    for (const auto& m : manifest.models) pool.push_back(ek::load_model(fs::path(models_dir(opt)) / m.file));
    if (pool.size() > 1) {
      std::mt19937 rng(opt.seed);
      std::shuffle(pool.begin() + 1, pool.end(), rng);
    }
  }
  std::vector<std::size_t> counts;
  for (std::size_t n : {1, 5, 10, 20, 30, 40, 50, 60}) {
    if (n <= opt.modules) counts.push_back(n);
  }
  if (opt.modules != 0 && std::find(counts.begin(), counts.end(), opt.modules) == counts.end()) {
    counts.push_back(opt.modules);
  }
  const auto rows = ek::bench_overhead(scenario, pool, catalog, counts, opt.reps);
  emit(opt, ek::bench_csv(rows));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"enforcekit: runtime enforcement of API usage policies"};
  app.require_subcommand(1);
  Options opt;

  auto add_model = [&](CLI::App* sub, bool required) {
    auto* o = sub->add_option("--model", opt.models, "Enforcement model JSON (repeatable)");
    if (required) o->required();
  };
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--catalog", opt.catalog, "API catalog JSON");
    sub->add_flag("--json", opt.json, "Machine-readable output");
    sub->add_option("--out", opt.out, "Output path");
  };

  auto* validate = app.add_subcommand("validate", "Validate models against the catalog");
  add_model(validate, true);
  add_common(validate);

  auto* enforce = app.add_subcommand("enforce", "Run a trace through the enforcers");
  add_model(enforce, false);
  add_common(enforce);
  enforce->add_option("--trace", opt.trace, "Input trace (JSONL)")->required();
  enforce->add_option("--target", opt.targets, "Target component class or package prefix (repeatable)");

  auto* gen = app.add_subcommand("gen", "Generate a proactive module");
  add_model(gen, true);
  add_common(gen);
  gen->add_option("--profile", opt.profile, "xposed-java or simscript");

  auto* run = app.add_subcommand("run", "Run one scenario in the simulator");
  add_model(run, false);
  add_common(run);
  run->add_option("--scenario", opt.scenario, "Scenario JSON")->required();
  run->add_option("--enforce", opt.enforce, "on or off");
  run->add_option("--corpus", opt.corpus, "Corpus directory holding the policy manifest");

  auto* corpus = app.add_subcommand("corpus", "Run the whole case corpus");
  add_common(corpus);
  corpus->add_option("--corpus", opt.corpus, "Corpus directory");
  corpus->add_option("--models-dir", opt.models_dir, "Model directory (default: <corpus>/../models)");
  corpus->add_option("--enforce", opt.enforce, "on or off");
  corpus->add_option("--expect", opt.expect, "Expected healed:no-violation counts, e.g. 17:10");

  auto* bench = app.add_subcommand("bench", "Measure dispatch overhead against module count");
  add_model(bench, false);
  add_common(bench);
  bench->add_option("--scenario", opt.scenario, "Scenario JSON")->required();
  bench->add_option("--corpus", opt.corpus, "Corpus directory supplying the model pool");
  bench->add_option("--models-dir", opt.models_dir, "Model directory (default: <corpus>/../models)");
  bench->add_option("--modules", opt.modules, "Largest module count");
  bench->add_option("--reps", opt.reps, "Repetitions");
  bench->add_option("--seed", opt.seed, "Seed for the model pool order");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInputError;
  }

  try {
    if (*validate) return cmd_validate(opt);
    if (*enforce) return cmd_enforce(opt);
    if (*gen) return cmd_gen(opt);
    if (*run) return cmd_run(opt);
    if (*corpus) return cmd_corpus(opt);
    if (*bench) return cmd_bench(opt);
  } catch (const ek::Error& e) {
    std::cerr << "error [" << e.code() << "]: " << e.what() << "\n";
    return e.code() == "UnvalidatedModel" ? kDomainFailure : kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kInputError;
}
