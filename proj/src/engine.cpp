#include "enforcekit/engine.hpp"

#include <algorithm>
#include <sstream>

#include "enforcekit/validate.hpp"

namespace enforcekit {

namespace {

std::size_t source_index(Source s) { return static_cast<std::size_t>(s); }

void collect_hints(const ApiCatalog& catalog, const std::string& cls,
                   std::set<std::string, std::less<>>& acquire,
                   std::set<std::string, std::less<>>& release) {
  const ClassInfo* info = catalog.find(cls);
  for (std::size_t depth = 0; info && depth <= catalog.classes().size(); ++depth) {
    acquire.insert(info->acquire.begin(), info->acquire.end());
    release.insert(info->release.begin(), info->release.end());
    info = info->parent ? catalog.find(*info->parent) : nullptr;
  }
}

}  // namespace

std::size_t EnforcementReport::pending_count() const {
  return static_cast<std::size_t>(
      std::count_if(instances.begin(), instances.end(), [](const InstanceReport& r) { return r.pending; }));
}

Enforcer::Enforcer(std::vector<EnforcementModel> models, SessionConfig config)
    : config_(std::move(config)), hierarchy_(config_.catalog.hierarchy()) {
  std::vector<std::string> order;
  if (config_.active_models) {
    order = *config_.active_models;
  } else {
    for (const auto& m : models) order.push_back(m.name);
  }
  for (const auto& name : order) {
    auto it = std::find_if(models.begin(), models.end(),
                           [&](const EnforcementModel& m) { return m.name == name; });
    if (it == models.end()) throw Error("InvalidConfig", "active model not loaded: " + name);
    Compiled c;
    c.model = *it;
    for (const auto& st : c.model.states) c.state_ids.push_back(st.id);
    auto index_of = [&](const std::string& id) {
      auto pos = std::find(c.state_ids.begin(), c.state_ids.end(), id);
      if (pos == c.state_ids.end()) {
        throw Error("UnvalidatedModel", "model " + c.model.name + " references unknown state " + id);
      }
      return static_cast<std::size_t>(pos - c.state_ids.begin());
    };
    try {
      c.initial = index_of(c.model.initial_state());
    } catch (const Error& e) {
      throw Error("UnvalidatedModel", e.what());
    }
    c.by_state.resize(c.state_ids.size());
    for (std::size_t i = 0; i < c.model.transitions.size(); ++i) {
      const auto& t = c.model.transitions[i];
      c.by_state[index_of(t.from)].push_back(i);
      c.target_of.push_back(index_of(t.to));
    }
    collect_hints(config_.catalog, c.model.api, c.acquire, c.release);
    active_.push_back(std::move(c));
  }
}

bool Enforcer::is_lifecycle_event(std::size_t index, const Event& ev) const {
  return hierarchy_.is_subclass(ev.class_name, active_[index].model.lifecycle_object);
}

bool Enforcer::is_api_event(std::size_t index, const Event& ev) const {
  return hierarchy_.is_subclass(ev.class_name, active_[index].model.api);
}

bool Enforcer::relevant(std::size_t index, const Event& ev) const {
  if (!hierarchy_.contains(ev.class_name)) return false;
  const auto& c = active_[index];
  bool covered = is_lifecycle_event(index, ev) || is_api_event(index, ev);
  for (const auto& t : c.model.transitions) {
    if (const auto* exact = std::get_if<ExactGuard>(&t.intercepted)) {
      if (signature_matches(exact->signature, ev, hierarchy_)) return true;
      continue;
    }
    const auto& any = std::get<AnyExceptGuard>(t.intercepted);
    bool excluded = false;
    bool in_alphabet = covered;
    for (const auto& sig : any.exclude) {
      if (hierarchy_.is_subclass(ev.class_name, sig.class_name)) in_alphabet = true;
      if (signature_matches(sig, ev, hierarchy_)) excluded = true;
    }
    if (in_alphabet && !excluded) return true;
  }
  return is_api_event(index, ev) && (c.acquire.count(ev.method_name) || c.release.count(ev.method_name));
}

const Enforcer::EventPlan& Enforcer::plan(const Event& ev) const {
  std::string key;
  key.reserve(ev.class_name.size() + ev.method_name.size() + 2);
  key += ev.phase == Phase::BeforeCall ? 'b' : 'a';
  key += ev.class_name;
  key += '#';
  key += ev.method_name;
  std::lock_guard<std::mutex> lock(plan_mutex_);
  auto it = plans_.find(key);
  if (it != plans_.end()) return *it->second;
  auto plan = std::make_unique<EventPlan>();
  plan->slot.assign(active_.size(), -1);
  for (std::size_t m = 0; m < active_.size(); ++m) {
    if (!relevant(m, ev)) continue;
    const auto& c = active_[m];
    ModelPlan mp;
    mp.model = m;
    mp.lifecycle = is_lifecycle_event(m, ev);
    mp.api = is_api_event(m, ev);
    mp.acquire = mp.api && c.acquire.count(ev.method_name) > 0;
    mp.release = mp.api && c.release.count(ev.method_name) > 0;
    for (const auto& t : c.model.transitions) {
      mp.matches.push_back(guard_matches(t.intercepted, ev, hierarchy_) ? 1 : 0);
      auto& emits = mp.emit_matches.emplace_back();
      for (const auto& action : t.outputs) {
        const auto* emit = std::get_if<EmitAction>(&action);
        emits.push_back(emit && signature_matches(emit->signature, ev, hierarchy_) ? 1 : 0);
      }
    }
    for (auto t : c.by_state[c.initial]) mp.creates = mp.creates || mp.matches[t];
    plan->slot[m] = static_cast<int>(plan->models.size());
    if (mp.creates) plan->creators.push_back(plan->models.size());
    plan->models.push_back(std::move(mp));
  }
  return *plans_.emplace(std::move(key), std::move(plan)).first->second;
}

Session::Session(std::shared_ptr<const Enforcer> enforcer) : enforcer_(std::move(enforcer)) {}

bool Session::targeted(const Event& ev) const {
  const auto& targets = enforcer_->config().target_components;
  if (targets.empty()) return true;
  auto it = component_classes_.find(ev.component_id);
  if (it == component_classes_.end()) return false;
  const std::string& cls = it->second;
  for (const auto& t : targets) {
    if (cls == t) return true;
    if (cls.size() > t.size() && cls.compare(0, t.size(), t) == 0 && cls[t.size()] == '.') return true;
  }
  return false;
}

std::vector<Event> Session::dispatch(const Event& ev) {
  ++events_in_;
  if (ev.receiver_id == ev.component_id && ev.source != Source::Enforcer) {
    component_classes_.try_emplace(ev.component_id, ev.class_name);
  }
  std::vector<Event> stream;
  if (ev.source == Source::Enforcer || !targeted(ev)) {
    stream.push_back(ev);
    events_out_ += 1;
    return stream;
  }

  if (ev.phase == Phase::AfterCall) {
    auto it = suppressed_open_.find(CallKey{ev.receiver_id, ev.class_name, ev.method_name});
    if (it != suppressed_open_.end() && !it->second.empty()) {
      // The call never ran, so its return is dropped too.
      instances_[it->second.back()].suppressed += 1;
      it->second.pop_back();
      if (it->second.empty()) suppressed_open_.erase(it);
      ++suppressed_;
      return stream;
    }
  }

  stream.push_back(ev);
  const auto& plan = enforcer_->plan(ev);
  if (plan.models.empty()) {
    events_out_ += 1;
    return stream;
  }
  auto& comp = by_component_[ev.component_id];
  comp.per_model.resize(enforcer_->active().size());

  // Models that may start an instance, merged with those already running
  // here; both lists follow activation order.
  candidates_.clear();
  auto creator = plan.creators.begin();
  for (auto m : comp.live) {
    const int slot = plan.slot[m];
    if (slot < 0) continue;
    const auto s = static_cast<std::size_t>(slot);
    while (creator != plan.creators.end() && *creator < s) candidates_.push_back(*creator++);
    if (creator != plan.creators.end() && *creator == s) ++creator;
    candidates_.push_back(s);
  }
  candidates_.insert(candidates_.end(), creator, plan.creators.end());

  for (auto slot : candidates_) {
    const auto& mp = plan.models[slot];
    auto& mine = comp.per_model[mp.model];
    const bool was_live = !mine.empty();
    next_.clear();
    for (auto& e : stream) {
      if (e.source == Source::Enforcer) {
        next_.push_back(std::move(e));
      } else {
        offer(mp, mine, std::move(e), next_);
      }
    }
    std::swap(stream, next_);
    if (!was_live && !mine.empty()) {
      comp.live.insert(std::upper_bound(comp.live.begin(), comp.live.end(), mp.model), mp.model);
    }
  }
  events_out_ += stream.size();
  return stream;
}

Trace Session::run(const Trace& trace) {
  Trace out;
  for (const auto& ev : trace) {
    auto emitted = dispatch(ev);
    out.insert(out.end(), std::make_move_iterator(emitted.begin()),
               std::make_move_iterator(emitted.end()));
  }
  return out;
}

void Session::route(const Enforcer::ModelPlan& mp, std::vector<std::size_t>& mine, const Event& ev,
                    std::vector<std::size_t>& targets) {
  targets.clear();
  const auto model = mp.model;
  const auto& compiled = enforcer_->active()[model];
  auto create = [&](std::optional<std::int64_t> receiver) {
    EnforcerInstance inst;
    inst.model_index = model;
    inst.current_state = compiled.initial;
    inst.component_id = ev.component_id;
    inst.resource_receiver = receiver;
    instances_.push_back(std::move(inst));
    mine.push_back(instances_.size() - 1);
    return instances_.size() - 1;
  };

  if (mp.lifecycle) {
    if (!mine.empty()) {
      targets.assign(mine.begin(), mine.end());
    } else if (mp.creates) {
      targets.push_back(create(std::nullopt));
    }
    return;
  }

  const auto receiver = ev.receiver_id;
  for (auto i : mine) {
    if (instances_[i].resource_receiver == receiver) {
      targets.push_back(i);
      return;
    }
  }
  for (auto i : mine) {
    if (!instances_[i].resource_receiver) {
      instances_[i].resource_receiver = receiver;
      targets.push_back(i);
      return;
    }
  }
  for (auto i : mine) {
    const auto& store = instances_[i].resume_store;
    if (!store || !store->held) {
      instances_[i].resource_receiver = receiver;
      targets.push_back(i);
      return;
    }
  }
  if (mp.creates) targets.push_back(create(receiver));
}

void Session::offer(const Enforcer::ModelPlan& mp, std::vector<std::size_t>& mine, Event&& ev,
                    std::vector<Event>& out) {
  route(mp, mine, ev, targets_);
  if (targets_.empty()) {
    out.push_back(std::move(ev));
    return;
  }
  if (targets_.size() == 1) {
    step(mp, targets_.front(), std::move(ev), out);
    return;
  }
  // Several instances (one per resource of the component) see lifecycle
  // events in creation order; each one's output feeds the next.
  const std::vector<std::size_t> targets = targets_;
  std::vector<Event> stream;
  stream.push_back(std::move(ev));
  for (auto inst : targets) {
    std::vector<Event> next;
    for (auto& e : stream) {
      if (e.source == Source::Enforcer) {
        next.push_back(std::move(e));
      } else {
        step(mp, inst, std::move(e), next);
      }
    }
    stream = std::move(next);
  }
  out.insert(out.end(), std::make_move_iterator(stream.begin()),
             std::make_move_iterator(stream.end()));
}

Event Session::materialize(const EnforcerInstance& inst, const ActionSignature& sig) const {
  const auto& compiled = enforcer_->active()[inst.model_index];
  Event e;
  e.phase = sig.phase;
  e.class_name = sig.class_name;
  e.method_name = sig.method_name;
  e.component_id = inst.component_id;
  e.receiver_id = enforcer_->hierarchy().is_subclass(sig.class_name, compiled.model.lifecycle_object)
                      ? inst.component_id
                      : inst.resource_receiver.value_or(0);
  e.source = Source::Enforcer;
  return e;
}

void Session::observe_app_event(const Enforcer::ModelPlan& mp, EnforcerInstance& inst, const Event& ev,
                                bool before_step) {
  if (!mp.api) return;
  if (before_step) {
    if (ev.phase == Phase::BeforeCall && mp.release && inst.resume_store) {
      inst.resume_store->held = false;
      inst.resume_store->forced_release = false;
    }
    return;
  }
  if (ev.phase != Phase::AfterCall || !mp.acquire) return;
  if (!inst.resume_store || !inst.resume_store->held) {
    inst.resume_store = ResourceRecord{ev.class_name, {}, true, false};
  }
  inst.resume_store->acquisition_calls.push_back({ev.method_name, ev.args});
}

void Session::observe_own_emission(EnforcerInstance& inst, const Event& ev) {
  const auto& compiled = enforcer_->active()[inst.model_index];
  if (ev.phase == Phase::BeforeCall && inst.resume_store &&
      enforcer_->is_api_event(inst.model_index, ev) && compiled.release.count(ev.method_name)) {
    inst.resume_store->held = false;
    inst.resume_store->forced_release = true;
  }
}

std::vector<Event> Session::resume(EnforcerInstance& inst) {
  auto& store = inst.resume_store;
  if (!store || store->acquisition_calls.empty()) {
    inst.resume_unavailable += 1;
    return {};
  }
  // Nothing to do if the app took the resource back on its own, or if it
  // released it itself.
  if (store->held || !store->forced_release) return {};
  std::vector<Event> replay;
  for (const auto& call : store->acquisition_calls) {
    for (Phase phase : {Phase::BeforeCall, Phase::AfterCall}) {
      Event e;
      e.phase = phase;
      e.class_name = store->class_name;
      e.method_name = call.method_name;
      e.receiver_id = inst.resource_receiver.value_or(0);
      e.component_id = inst.component_id;
      e.args = call.args;
      e.source = Source::Enforcer;
      replay.push_back(std::move(e));
    }
  }
  store->held = true;
  store->forced_release = false;
  inst.resumes += 1;
  return replay;
}

void Session::step(const Enforcer::ModelPlan& mp, std::size_t index, Event&& ev, std::vector<Event>& out) {
  const auto& compiled = enforcer_->active()[instances_[index].model_index];
  observe_app_event(mp, instances_[index], ev, true);

  const Transition* fired = nullptr;
  std::size_t fired_index = 0;
  for (auto t : compiled.by_state[instances_[index].current_state]) {
    if (mp.matches[t]) {
      fired = &compiled.model.transitions[t];
      fired_index = t;
      break;
    }
  }
  if (!fired) {
    observe_app_event(mp, instances_[index], ev, false);
    out.push_back(std::move(ev));
    return;
  }

  {
    auto& inst = instances_[index];
    inst.current_state = compiled.target_of[fired_index];
    inst.transitions_fired += 1;
    fired_by_source_[source_index(ev.source)] += 1;
  }

  // The original event keeps its slot in the output and is moved in last.
  std::optional<std::size_t> original;
  std::size_t inserted = 0;
  const auto& emit_hits = mp.emit_matches[fired_index];
  for (std::size_t k = 0; k < fired->outputs.size(); ++k) {
    const auto& action = fired->outputs[k];
    if (const auto* emit = std::get_if<EmitAction>(&action)) {
      if (!original && emit_hits[k]) {
        original = out.size();
        out.emplace_back();
        continue;
      }
      Event e = materialize(instances_[index], emit->signature);
      observe_own_emission(instances_[index], e);
      out.push_back(std::move(e));
      ++inserted;
    } else if (std::holds_alternative<EmitBoundAction>(action)) {
      if (!original) {
        original = out.size();
        out.emplace_back();
      } else {
        Event copy = ev;
        copy.source = Source::Enforcer;
        out.push_back(std::move(copy));
        ++inserted;
      }
    } else {
      auto replay = resume(instances_[index]);
      inserted += replay.size();
      out.insert(out.end(), std::make_move_iterator(replay.begin()),
                 std::make_move_iterator(replay.end()));
    }
  }

  auto& inst = instances_[index];
  inst.inserted += inserted;
  inserted_ += inserted;
  if (original) {
    observe_app_event(mp, inst, ev, false);
    out[*original] = std::move(ev);
  } else {
    inst.suppressed += 1;
    ++suppressed_;
    if (ev.phase == Phase::BeforeCall) {
      suppressed_open_[CallKey{ev.receiver_id, ev.class_name, ev.method_name}].push_back(index);
    }
  }
}

EnforcementReport Session::finalize() const {
  EnforcementReport report;
  report.events_in = events_in_;
  report.events_out = events_out_;
  report.suppressed = suppressed_;
  report.inserted = inserted_;
  report.fired_by_source = fired_by_source_;
  for (const auto& inst : instances_) {
    const auto& compiled = enforcer_->active()[inst.model_index];
    InstanceReport r;
    r.model = compiled.model.name;
    r.component_id = inst.component_id;
    r.resource_receiver = inst.resource_receiver;
    r.final_state = compiled.state_ids[inst.current_state];
    r.suppressed = inst.suppressed;
    r.inserted = inst.inserted;
    r.resumes = inst.resumes;
    r.resume_unavailable = inst.resume_unavailable;
    r.pending = inst.current_state != compiled.initial && inst.resume_store && inst.resume_store->held;
    report.instances.push_back(std::move(r));
  }
  return report;
}

nlohmann::ordered_json report_to_json(const EnforcementReport& report) {
  nlohmann::ordered_json doc;
  doc["eventsIn"] = report.events_in;
  doc["eventsOut"] = report.events_out;
  doc["suppressed"] = report.suppressed;
  doc["inserted"] = report.inserted;
  doc["pending"] = report.pending_count();
  doc["instances"] = nlohmann::ordered_json::array();
  for (const auto& r : report.instances) {
    nlohmann::ordered_json node;
    node["model"] = r.model;
    node["component"] = r.component_id;
    node["receiver"] = r.resource_receiver ? nlohmann::ordered_json(*r.resource_receiver) : nullptr;
    node["finalState"] = r.final_state;
    node["suppressed"] = r.suppressed;
    node["inserted"] = r.inserted;
    node["resumes"] = r.resumes;
    node["resumeUnavailable"] = r.resume_unavailable;
    node["pending"] = r.pending;
    doc["instances"].push_back(std::move(node));
  }
  return doc;
}

std::string format_report(const EnforcementReport& report) {
  std::ostringstream out;
  out << "events in " << report.events_in << ", out " << report.events_out << ", suppressed "
      << report.suppressed << ", inserted " << report.inserted << '\n';
  for (const auto& r : report.instances) {
    out << "  " << r.model << " component=" << r.component_id << " receiver="
        << (r.resource_receiver ? std::to_string(*r.resource_receiver) : "-") << " state="
        << r.final_state << " suppressed=" << r.suppressed << " inserted=" << r.inserted
        << " resumes=" << r.resumes;
    if (r.resume_unavailable) out << " resume-unavailable=" << r.resume_unavailable;
    if (r.pending) out << " PENDING";
    out << '\n';
  }
  return out.str();
}

std::shared_ptr<const Enforcer> deploy(std::vector<EnforcementModel> models, SessionConfig config) {
  for (const auto& m : models) {
    auto report = validate_model(m, config.catalog);
    if (!report.deployable()) {
      throw Error("UnvalidatedModel", "model " + m.name + " has validation errors: " +
                                          report.errors.front().code);
    }
  }
  return std::make_shared<const Enforcer>(std::move(models), std::move(config));
}

Session new_session(std::vector<EnforcementModel> models, SessionConfig config) {
  return Session(deploy(std::move(models), std::move(config)));
}

std::pair<Trace, EnforcementReport> enforce_trace(const std::vector<EnforcementModel>& models,
                                                  const SessionConfig& config, const Trace& trace) {
  auto session = new_session(models, config);
  auto out = session.run(trace);
  return {std::move(out), session.finalize()};
}

}  // namespace enforcekit
