#pragma once

// The policy enforcer. A Session consumes an event stream and emits the
// transformed stream, with one enforcer instance per model and
// (component, resource) pair.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "enforcekit/catalog.hpp"
#include "enforcekit/model.hpp"

namespace enforcekit {

struct SessionConfig {
  /// Component class names (or package prefixes) the enforcement applies to.
  /// Empty means every component.
  std::set<std::string> target_components;
  /// Activation order. nullopt activates every loaded model in load order.
  std::optional<std::vector<std::string>> active_models;
  /// Supplies the class hierarchy and the resource acquire/release hints.
  ApiCatalog catalog;
};

struct AcquisitionCall {
  std::string method_name;
  std::vector<Scalar> args;
  bool operator==(const AcquisitionCall&) const = default;
};

/// What the resource manager remembers to recreate a resource.
struct ResourceRecord {
  std::string class_name;
  std::vector<AcquisitionCall> acquisition_calls;
  bool held = false;
  /// Set when the last release was performed by the enforcer.
  bool forced_release = false;
};

struct EnforcerInstance {
  std::size_t model_index = 0;
  std::size_t current_state = 0;
  std::int64_t component_id = 0;
  std::optional<std::int64_t> resource_receiver;
  std::optional<ResourceRecord> resume_store;

  std::size_t suppressed = 0;
  std::size_t inserted = 0;
  std::size_t resumes = 0;
  std::size_t resume_unavailable = 0;
  std::size_t transitions_fired = 0;
};

struct InstanceReport {
  std::string model;
  std::int64_t component_id = 0;
  std::optional<std::int64_t> resource_receiver;
  std::string final_state;
  std::size_t suppressed = 0;
  std::size_t inserted = 0;
  std::size_t resumes = 0;
  std::size_t resume_unavailable = 0;
  bool pending = false;
};

struct EnforcementReport {
  std::vector<InstanceReport> instances;
  std::size_t events_in = 0;
  std::size_t events_out = 0;
  std::size_t suppressed = 0;
  std::size_t inserted = 0;
  /// Transitions fired per event source (index = Source). The Enforcer
  /// slot must stay zero.
  std::array<std::size_t, 3> fired_by_source{};

  std::size_t pending_count() const;
  bool balanced() const { return events_out + suppressed == events_in + inserted; }
};

nlohmann::ordered_json report_to_json(const EnforcementReport& report);
std::string format_report(const EnforcementReport& report);

/// Models compiled for dispatch; immutable and shareable across sessions.
class Enforcer {
 public:
  Enforcer(std::vector<EnforcementModel> models, SessionConfig config);

  struct Compiled {
    EnforcementModel model;
    std::vector<std::string> state_ids;
    std::size_t initial = 0;
    /// Transition indices per state index, in declaration order.
    std::vector<std::vector<std::size_t>> by_state;
    std::vector<std::size_t> target_of;
    std::set<std::string, std::less<>> acquire;
    std::set<std::string, std::less<>> release;
  };

  const std::vector<Compiled>& active() const { return active_; }
  const SessionConfig& config() const { return config_; }
  const ClassHierarchy& hierarchy() const { return hierarchy_; }

  /// Whether model `index` must see `ev`: some guard may match it, or it is
  /// an acquire/release call on the governed API.
  bool relevant(std::size_t index, const Event& ev) const;
  bool is_lifecycle_event(std::size_t index, const Event& ev) const;
  bool is_api_event(std::size_t index, const Event& ev) const;

  /// What one model needs to know about an event shape.
  struct ModelPlan {
    std::size_t model = 0;
    bool lifecycle = false;
    bool api = false;
    bool acquire = false;
    bool release = false;
    /// Some transition out of the initial state fires on the event.
    bool creates = false;
    /// Per transition: its guard matches the event.
    std::vector<char> matches;
    /// Per transition and output: an Emit whose signature matches the event.
    std::vector<std::vector<char>> emit_matches;
  };
  struct EventPlan {
    /// Relevant models in activation order.
    std::vector<ModelPlan> models;
    /// Position in `models` per active model, or -1.
    std::vector<int> slot;
    /// Positions of the models that can start an instance on the event.
    std::vector<std::size_t> creators;
  };
  /// Plan for events with this phase, class and method. Computed once per
  /// shape and shared by all sessions.
  const EventPlan& plan(const Event& ev) const;

 private:
  std::vector<Compiled> active_;
  SessionConfig config_;
  ClassHierarchy hierarchy_;
  mutable std::mutex plan_mutex_;
  mutable std::unordered_map<std::string, std::unique_ptr<const EventPlan>> plans_;
};

class Session {
 public:
  explicit Session(std::shared_ptr<const Enforcer> enforcer);

  /// Consumes one event and returns what continues downstream.
  std::vector<Event> dispatch(const Event& ev);
  Trace run(const Trace& trace);

  EnforcementReport finalize() const;

  const std::vector<EnforcerInstance>& instances() const { return instances_; }
  const Enforcer& enforcer() const { return *enforcer_; }

 private:
  using CallKey = std::tuple<std::int64_t, std::string, std::string>;

  bool targeted(const Event& ev) const;
  void offer(const Enforcer::ModelPlan& mp, std::vector<std::size_t>& mine, Event&& ev, std::vector<Event>& out);
  void route(const Enforcer::ModelPlan& mp, std::vector<std::size_t>& mine, const Event& ev,
             std::vector<std::size_t>& targets);
  void step(const Enforcer::ModelPlan& mp, std::size_t instance, Event&& ev, std::vector<Event>& out);
  std::vector<Event> resume(EnforcerInstance& inst);
  Event materialize(const EnforcerInstance& inst, const ActionSignature& sig) const;
  void observe_app_event(const Enforcer::ModelPlan& mp, EnforcerInstance& inst, const Event& ev, bool before_step);
  void observe_own_emission(EnforcerInstance& inst, const Event& ev);

  std::shared_ptr<const Enforcer> enforcer_;
  std::vector<EnforcerInstance> instances_;
  struct ComponentIndex {
    /// Instance indices per model.
    std::vector<std::vector<std::size_t>> per_model;
    /// Models with at least one instance, ascending.
    std::vector<std::size_t> live;
  };
  std::unordered_map<std::int64_t, ComponentIndex> by_component_;
  std::vector<std::size_t> candidates_;
  std::vector<std::size_t> targets_;
  std::vector<Event> next_;
  std::map<CallKey, std::vector<std::size_t>> suppressed_open_;
  std::unordered_map<std::int64_t, std::string> component_classes_;

  std::size_t events_in_ = 0;
  std::size_t events_out_ = 0;
  std::size_t suppressed_ = 0;
  std::size_t inserted_ = 0;
  std::array<std::size_t, 3> fired_by_source_{};
};

/// Validates `models` against `config.catalog` and builds a session. Throws
/// InvalidConfig for unknown active model names and UnvalidatedModel for
/// models with validation errors.
Session new_session(std::vector<EnforcementModel> models, SessionConfig config);

/// Same checks as new_session; the result can back many sessions.
std::shared_ptr<const Enforcer> deploy(std::vector<EnforcementModel> models, SessionConfig config);

/// One-shot helper: runs a whole trace through a fresh session.
std::pair<Trace, EnforcementReport> enforce_trace(const std::vector<EnforcementModel>& models,
                                                  const SessionConfig& config,
                                                  const Trace& trace);

}  // namespace enforcekit
