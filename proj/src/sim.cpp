#include "enforcekit/sim.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <set>
#include <sstream>

#include "enforcekit/io.hpp"

namespace enforcekit {

namespace {

enum class Life { Initial, Created, Started, Resumed, Paused, Stopped, Restarted, Destroyed };

struct LifeRule {
  std::string method;
  std::vector<Life> from;
  Life to;
};

std::string short_callback(const std::string& name) {
  if (name.size() > 2 && name.rfind("on", 0) == 0 && std::isupper(static_cast<unsigned char>(name[2]))) {
    std::string s = name.substr(2);
    s[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(s[0])));
    return s;
  }
  return name;
}

const LifeRule* life_rule(ComponentKind kind, const std::string& callback) {
  static const std::map<std::string, LifeRule> activity{
      {"create", {"onCreate", {Life::Initial, Life::Destroyed}, Life::Created}},
      {"start", {"onStart", {Life::Created, Life::Restarted}, Life::Started}},
      {"resume", {"onResume", {Life::Started, Life::Paused}, Life::Resumed}},
      {"pause", {"onPause", {Life::Resumed}, Life::Paused}},
      {"stop", {"onStop", {Life::Started, Life::Paused}, Life::Stopped}},
      {"restart", {"onRestart", {Life::Stopped}, Life::Restarted}},
      {"destroy", {"onDestroy", {Life::Stopped}, Life::Destroyed}},
  };
  static const std::map<std::string, LifeRule> service{
      {"create", {"onCreate", {Life::Initial, Life::Destroyed}, Life::Created}},
      {"startCommand", {"onStartCommand", {Life::Created}, Life::Created}},
      {"destroy", {"onDestroy", {Life::Created}, Life::Destroyed}},
  };
  const auto& table = kind == ComponentKind::Activity ? activity : service;
  auto it = table.find(short_callback(callback));
  return it == table.end() ? nullptr : &it->second;
}

bool leaking_state(ComponentKind kind, Life life) {
  if (kind == ComponentKind::Service) return life == Life::Destroyed;
  return life == Life::Paused || life == Life::Stopped || life == Life::Destroyed;
}

std::string simple_name(const std::string& cls) {
  auto dot = cls.rfind('.');
  return dot == std::string::npos ? cls : cls.substr(dot + 1);
}

std::vector<Scalar> args_from_json(const nlohmann::json& node) {
  std::vector<Scalar> args;
  for (const auto& a : node) {
    if (a.is_string()) {
      args.emplace_back(a.get<std::string>());
    } else if (a.is_boolean()) {
      args.emplace_back(a.get<bool>());
    } else if (a.is_number_integer()) {
      args.emplace_back(a.get<std::int64_t>());
    } else {
      throw Error("ParseError", "call args must be strings, integers or booleans");
    }
  }
  return args;
}

ApiCallStep call_from_json(const nlohmann::json& node, const std::string& component) {
  ApiCallStep c;
  c.component = node.value("component", component);
  c.class_name = node.at("class").get<std::string>();
  c.method = node.at("method").get<std::string>();
  c.receiver = node.value("receiver", std::string("self"));
  c.creates = node.value("new", false);
  c.args = args_from_json(node.value("args", nlohmann::json::array()));
  return c;
}

struct Simulated {
  Trace trace_in;
  Trace trace_out;
  std::vector<SimException> exceptions;
  std::vector<Leak> leaks;
  std::optional<EnforcementReport> report;
  std::map<std::int64_t, std::string> names;
};

class Simulator {
 public:
  Simulator(const Scenario& s, const ApiCatalog& catalog, std::shared_ptr<const Enforcer> enforcer)
      : scenario_(s), catalog_(catalog) {
    if (enforcer) session_.emplace(std::move(enforcer));
    std::int64_t next = 1;
    for (const auto& c : s.components) {
      if (components_.count(c.id)) throw Error("ScenarioError", "duplicate component " + c.id);
      components_[c.id] = {next, c.kind, Life::Initial, c.class_name};
      out_.names[next] = c.id;
      ++next;
    }
  }

  Simulated run() {
    for (std::size_t i = 0; i < scenario_.script.size(); ++i) {
      step_ = i;
      std::visit([&](const auto& d) { execute(d); }, scenario_.script[i]);
    }
    for (const auto& [key, holder] : registry_) {
      const auto& comp = component_by_id(holder.component);
      if (leaking_state(comp.kind, comp.life)) {
        out_.leaks.push_back({out_.names[holder.component], key.first, out_.names[holder.receiver]});
      }
    }
    if (session_) out_.report = session_->finalize();
    return std::move(out_);
  }

 private:
  struct ComponentState {
    std::int64_t id = 0;
    ComponentKind kind = ComponentKind::Activity;
    Life life = Life::Initial;
    std::string class_name;
  };
  struct Holder {
    std::int64_t component = 0;
    std::int64_t receiver = 0;
  };
  using ResourceKey = std::pair<std::string, std::int64_t>;

  ComponentState& component(const std::string& id) {
    auto it = components_.find(id);
    if (it == components_.end()) throw Error("ScenarioError", "unknown component " + id);
    return it->second;
  }
  const ComponentState& component_by_id(std::int64_t id) const {
    for (const auto& [name, c] : components_) {
      if (c.id == id) return c;
    }
    throw Error("ScenarioError", "unknown component id " + std::to_string(id));
  }

  std::int64_t receiver(const ApiCallStep& call, const ComponentState& comp) {
    if (call.receiver == "self") return comp.id;
    auto it = receivers_.find(call.receiver);
    if (it != receivers_.end()) return it->second;
    if (!call.creates) {
      throw Error("ScenarioError", "step " + std::to_string(step_) + ": receiver '" + call.receiver +
                                       "' used before it was created");
    }
    const std::int64_t id = 1000 + static_cast<std::int64_t>(receivers_.size());
    receivers_[call.receiver] = id;
    out_.names[id] = call.receiver;
    return id;
  }

  void execute(const UserStep&) {}

  void execute(const LifecycleStep& step) {
    auto& comp = component(step.component);
    const auto* rule = life_rule(comp.kind, step.callback);
    if (!rule) {
      throw Error("ScenarioError", "step " + std::to_string(step_) + ": unknown callback '" + step.callback +
                                       "' for component " + step.component);
    }
    if (std::find(rule->from.begin(), rule->from.end(), comp.life) == rule->from.end()) {
      throw Error("ScenarioError", "step " + std::to_string(step_) + ": illegal lifecycle order, " +
                                       step.callback + " on " + step.component);
    }
    Event ev;
    ev.class_name = comp.class_name;
    ev.method_name = rule->method;
    ev.receiver_id = comp.id;
    ev.component_id = comp.id;
    ev.source = Source::Framework;
    ev.phase = Phase::BeforeCall;
    // A destroyed component stays callable until its onDestroy returns.
    if (rule->to != Life::Destroyed) comp.life = rule->to;
    feed(ev);
    for (const auto& call : step.body) {
      if (call.component != step.component) {
        throw Error("ScenarioError", "step " + std::to_string(step_) + ": callback body calls from another component");
      }
      perform(call);
    }
    comp.life = rule->to;
    ev.phase = Phase::AfterCall;
    feed(ev);
  }

  void execute(const ApiCallStep& call) { perform(call); }

  void perform(const ApiCallStep& call) {
    auto& comp = component(call.component);
    if (comp.life == Life::Destroyed) {
      throw Error("ScenarioError", "step " + std::to_string(step_) + ": component " + call.component +
                                       " is not alive");
    }
    Event ev;
    ev.phase = Phase::BeforeCall;
    ev.class_name = call.class_name;
    ev.method_name = call.method;
    ev.receiver_id = receiver(call, comp);
    ev.component_id = comp.id;
    ev.args = call.args;
    ev.source = Source::App;
    if (!feed(ev)) return;
    ev.phase = Phase::AfterCall;
    feed(ev);
  }

  // Dispatches one raw event and applies what comes out. Returns false if
  // the raw call threw.
  bool feed(const Event& raw) {
    out_.trace_in.push_back(raw);
    std::vector<Event> outputs = session_ ? session_->dispatch(raw) : std::vector<Event>{raw};
    bool ok = true;
    std::set<std::tuple<std::int64_t, std::string, std::string>> failed;
    for (auto& ev : outputs) {
      auto key = std::make_tuple(ev.receiver_id, ev.class_name, ev.method_name);
      if (ev.phase == Phase::AfterCall && failed.count(key)) continue;
      if (!apply(ev)) {
        failed.insert(key);
        if (ev.source != Source::Enforcer && ev.phase == raw.phase && ev.receiver_id == raw.receiver_id &&
            ev.method_name == raw.method_name && ev.class_name == raw.class_name) {
          ok = false;
        }
      }
      out_.trace_out.push_back(std::move(ev));
    }
    return ok;
  }

  bool apply(const Event& ev) {
    const ClassInfo* info = catalog_.resource_info(ev.class_name);
    if (!info) return true;
    std::string resource;
    for (const auto& [name, ci] : catalog_.classes()) {
      if (&ci == info) resource = name;
    }
    const bool exclusive = info->resource_kind == ResourceKind::Exclusive;
    const ResourceKey key{resource, exclusive ? 0 : ev.receiver_id};
    const ResourceKey mine{resource, ev.receiver_id};
    const bool acquire = std::count(info->acquire.begin(), info->acquire.end(), ev.method_name) > 0;
    const bool release = std::count(info->release.begin(), info->release.end(), ev.method_name) > 0;

    if (ev.phase == Phase::AfterCall) {
      if (acquire) {
        registry_[key] = Holder{ev.component_id, ev.receiver_id};
        forced_.erase(mine);
      }
      return true;
    }
    if (acquire) {
      if (exclusive && registry_.count(key)) {
        out_.exceptions.push_back({step_, simple_name(resource) + "InUse"});
        return false;
      }
      return true;
    }
    if (release) {
      auto it = registry_.find(key);
      if (it != registry_.end() && it->second.receiver == ev.receiver_id) registry_.erase(it);
      if (ev.source == Source::Enforcer) forced_.insert(mine);
      return true;
    }
    if (forced_.count(mine)) {
      out_.exceptions.push_back({step_, "ResourceReleased"});
      return false;
    }
    return true;
  }

  const Scenario& scenario_;
  const ApiCatalog& catalog_;
  std::optional<Session> session_;
  std::map<std::string, ComponentState> components_;
  std::map<std::string, std::int64_t> receivers_;
  std::map<ResourceKey, Holder> registry_;
  std::set<ResourceKey> forced_;
  std::size_t step_ = 0;
  Simulated out_;
};

Verdict judge(const std::vector<PolicyParams>& policies, const ClassHierarchy& hierarchy, const Trace& in,
              const Trace& out) {
  if (accepts_all(policies, hierarchy, in)) return Verdict::NoViolation;
  return accepts_all(policies, hierarchy, out) ? Verdict::Healed : Verdict::ViolationUnhealed;
}

std::filesystem::path require_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("MissingFixture", "missing " + path.string());
  return path;
}

}  // namespace

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Healed: return "Healed";
    case Verdict::NoViolation: return "NoViolation";
    case Verdict::ViolationUnhealed: return "ViolationUnhealed";
  }
  return "?";
}

Verdict parse_verdict(const std::string& text) {
  if (text == "Healed") return Verdict::Healed;
  if (text == "NoViolation") return Verdict::NoViolation;
  if (text == "ViolationUnhealed") return Verdict::ViolationUnhealed;
  throw Error("ParseError", "unknown verdict '" + text + "'");
}

Scenario scenario_from_json(const nlohmann::json& doc) {
  Scenario s;
  try {
    s.name = doc.at("name").get<std::string>();
    for (const auto& c : doc.at("components")) {
      ScenarioComponent comp;
      comp.id = c.at("id").get<std::string>();
      comp.class_name = c.at("class").get<std::string>();
      const auto kind = c.value("kind", std::string("Activity"));
      if (kind == "Activity") {
        comp.kind = ComponentKind::Activity;
      } else if (kind == "Service") {
        comp.kind = ComponentKind::Service;
      } else {
        throw Error("ParseError", "unknown component kind '" + kind + "'");
      }
      s.components.push_back(std::move(comp));
    }
    for (const auto& d : doc.at("script")) {
      const auto step = d.at("step").get<std::string>();
      if (step == "lifecycle") {
        LifecycleStep l;
        l.component = d.at("component").get<std::string>();
        l.callback = d.at("callback").get<std::string>();
        for (const auto& c : d.value("body", nlohmann::json::array())) l.body.push_back(call_from_json(c, l.component));
        s.script.emplace_back(std::move(l));
      } else if (step == "call") {
        s.script.emplace_back(call_from_json(d, d.at("component").get<std::string>()));
      } else if (step == "user") {
        s.script.emplace_back(UserStep{d.value("label", std::string())});
      } else {
        throw Error("ParseError", "unknown script step '" + step + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("ParseError", std::string("scenario schema: ") + e.what());
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  try {
    return scenario_from_json(read_json_file(path));
  } catch (const Error& e) {
    if (e.code() == "ParseError") throw Error("ParseError", path.string() + ": " + e.what());
    throw;
  }
}

ApiCatalog scenario_catalog(const Scenario& s, const ApiCatalog& base) {
  ApiCatalog cat = base;
  for (const auto& c : s.components) {
    if (cat.find(c.class_name)) continue;
    ClassInfo info;
    info.parent = c.kind == ComponentKind::Activity ? "android.app.Activity" : "android.app.Service";
    if (!cat.find(*info.parent)) throw Error("ScenarioError", "catalog lacks " + *info.parent);
    cat.add(c.class_name, info);
  }
  return cat;
}

namespace {

Simulated simulate(const Scenario& s, const ApiCatalog& catalog, std::shared_ptr<const Enforcer> enforcer) {
  return Simulator(s, catalog, std::move(enforcer)).run();
}

}  // namespace

SimOutcome run_scenario(const Scenario& s, const std::vector<EnforcementModel>& models,
                        const std::vector<PolicyParams>& policies, const ApiCatalog& catalog, bool enforce) {
  const ApiCatalog cat = scenario_catalog(s, catalog);
  std::shared_ptr<const Enforcer> enforcer;
  if (enforce) {
    enforcer = deploy(models, SessionConfig{{}, std::nullopt, cat});
  }
  auto sim = simulate(s, cat, enforcer);
  SimOutcome out;
  out.verdict = judge(policies, cat.hierarchy(), sim.trace_in, sim.trace_out);
  out.leaks = std::move(sim.leaks);
  out.exceptions = std::move(sim.exceptions);
  out.trace_in = std::move(sim.trace_in);
  out.trace_out = std::move(sim.trace_out);
  out.report = std::move(sim.report);
  out.names = std::move(sim.names);
  return out;
}

nlohmann::ordered_json outcome_to_json(const SimOutcome& o) {
  nlohmann::ordered_json doc;
  doc["verdict"] = to_string(o.verdict);
  doc["leaks"] = nlohmann::ordered_json::array();
  for (const auto& l : o.leaks) {
    doc["leaks"].push_back({{"component", l.component}, {"resource", l.resource_class}, {"receiver", l.receiver}});
  }
  doc["exceptions"] = nlohmann::ordered_json::array();
  for (const auto& e : o.exceptions) doc["exceptions"].push_back({{"step", e.step}, {"kind", e.kind}});
  doc["eventsIn"] = o.trace_in.size();
  doc["eventsOut"] = o.trace_out.size();
  if (o.report) doc["report"] = report_to_json(*o.report);
  return doc;
}

const ManifestModel* CorpusManifest::find_model(const std::string& name) const {
  for (const auto& m : models) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
  const auto doc = read_json_file(require_file(path));
  CorpusManifest manifest;
  try {
    for (const auto& m : doc.at("models")) {
      ManifestModel entry;
      entry.name = m.at("name").get<std::string>();
      entry.file = m.at("file").get<std::string>();
      for (const auto& p : m.at("policies")) entry.policies.push_back(policy_from_json(p));
      manifest.models.push_back(std::move(entry));
    }
    for (const auto& c : doc.at("cases")) {
      ManifestCase entry;
      entry.app = c.at("app").get<std::string>();
      entry.scenario = c.at("scenario").get<std::string>();
      entry.model = c.at("model").get<std::string>();
      entry.expected = parse_verdict(c.at("expected").get<std::string>());
      if (!manifest.find_model(entry.model)) {
        throw Error("MissingFixture", "case " + entry.app + " names unknown model " + entry.model);
      }
      manifest.cases.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("ParseError", path.string() + ": manifest schema: " + e.what());
  }
  return manifest;
}

CorpusReport run_corpus(const std::filesystem::path& corpus_dir, const std::filesystem::path& models_dir,
                        const ApiCatalog& catalog, bool enforce) {
  const auto manifest = load_manifest(corpus_dir / "manifest.json");
  std::map<std::string, EnforcementModel> models;
  for (const auto& m : manifest.models) {
    auto model = load_model(require_file(models_dir / m.file));
    if (model.name != m.name) {
      throw Error("MissingFixture", m.file + " defines " + model.name + ", manifest expects " + m.name);
    }
    models.emplace(m.name, std::move(model));
  }
  CorpusReport report;
  report.models_loaded = models.size();
  for (const auto& c : manifest.cases) {
    const auto scenario = load_scenario(require_file(corpus_dir / c.scenario));
    const auto* entry = manifest.find_model(c.model);
    CaseResult result{c, run_scenario(scenario, {models.at(c.model)}, entry->policies, catalog, enforce)};
    switch (result.outcome.verdict) {
      case Verdict::Healed: ++report.healed; break;
      case Verdict::NoViolation: ++report.no_violation; break;
      case Verdict::ViolationUnhealed: ++report.unhealed; break;
    }
    if (!result.outcome.clean()) ++report.flagged;
    report.cases.push_back(std::move(result));
  }
  return report;
}

nlohmann::ordered_json corpus_to_json(const CorpusReport& report) {
  nlohmann::ordered_json doc;
  doc["models"] = report.models_loaded;
  doc["cases"] = nlohmann::ordered_json::array();
  for (const auto& c : report.cases) {
    nlohmann::ordered_json row;
    row["app"] = c.row.app;
    row["model"] = c.row.model;
    row["scenario"] = c.row.scenario;
    row["expected"] = to_string(c.row.expected);
    row["verdict"] = to_string(c.outcome.verdict);
    row["leaks"] = c.outcome.leaks.size();
    row["exceptions"] = c.outcome.exceptions.size();
    doc["cases"].push_back(std::move(row));
  }
  doc["healed"] = report.healed;
  doc["noViolation"] = report.no_violation;
  doc["unhealed"] = report.unhealed;
  doc["flagged"] = report.flagged;
  return doc;
}

std::string format_corpus(const CorpusReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(14) << "APP" << std::setw(40) << "MODEL" << std::setw(18) << "VERDICT"
      << std::setw(14) << "EXPECTED" << "LEAKS EXC\n";
  for (const auto& c : report.cases) {
    out << std::setw(14) << c.row.app << std::setw(40) << c.row.model << std::setw(18)
        << to_string(c.outcome.verdict) << std::setw(14) << to_string(c.row.expected) << std::setw(6)
        << c.outcome.leaks.size() << c.outcome.exceptions.size() << (c.matches() ? "" : "  MISMATCH") << '\n';
  }
  out << report.cases.size() << " cases, " << report.models_loaded << " models: " << report.healed << " healed, "
      << report.no_violation << " no violation, " << report.unhealed << " unhealed\n";
  return out.str();
}

std::vector<BenchRow> bench_overhead(const Scenario& scenario, const std::vector<EnforcementModel>& pool,
                                     const ApiCatalog& catalog, const std::vector<std::size_t>& module_counts,
                                     std::size_t repetitions) {
  using Clock = std::chrono::steady_clock;
  const ApiCatalog cat = scenario_catalog(scenario, catalog);

  std::vector<std::size_t> counts{0};
  for (auto n : module_counts) {
    if (n != 0) counts.push_back(n);
  }
  std::vector<std::shared_ptr<const Enforcer>> enforcers;
  for (auto n : counts) {
    if (n == 0) {
      enforcers.push_back(nullptr);
      continue;
    }
    if (pool.empty()) throw Error("InvalidConfig", "bench needs at least one model");
    std::vector<EnforcementModel> deployed;
    for (std::size_t i = 0; i < n; ++i) {
      auto m = pool[i % pool.size()];
      if (i >= pool.size()) m.name += "_" + std::to_string(i / pool.size());
      deployed.push_back(std::move(m));
    }
    enforcers.push_back(deploy(std::move(deployed), SessionConfig{{}, std::nullopt, cat}));
  }

  const std::size_t events = simulate(scenario, cat, nullptr).trace_in.size();
  // Enough inner runs that one sample spans a few milliseconds.
  const std::size_t inner = std::max<std::size_t>(1, 20000 / std::max<std::size_t>(events, 1));
  std::vector<double> total(counts.size(), 0.0);
  for (std::size_t rep = 0; rep < std::max<std::size_t>(repetitions, 1); ++rep) {
    for (std::size_t k = 0; k < counts.size(); ++k) {
      const auto start = Clock::now();
      for (std::size_t r = 0; r < inner; ++r) {
        auto sim = simulate(scenario, cat, enforcers[k]);
        if (sim.trace_in.size() != events) throw Error("InvalidConfig", "bench scenario is not deterministic");
      }
      const std::chrono::duration<double, std::micro> elapsed = Clock::now() - start;
      total[k] += elapsed.count() / static_cast<double>(inner * events);
    }
  }
  std::vector<BenchRow> rows;
  const double reps = static_cast<double>(std::max<std::size_t>(repetitions, 1));
  const double base = total[0] / reps;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const double mean = total[k] / reps;
    rows.push_back({counts[k], mean, counts[k] == 0 ? 0.0 : (mean - base) / base * 100.0});
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << "n_modules,mean_us_per_event,overhead_pct\n";
  out << std::fixed;
  for (const auto& r : rows) {
    out << r.n_modules << ',' << std::setprecision(4) << r.mean_us_per_event << ',' << std::setprecision(2)
        << r.overhead_pct << '\n';
  }
  return out.str();
}

}  // namespace enforcekit
