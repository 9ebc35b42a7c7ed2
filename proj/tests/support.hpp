#pragma once

// Shared fixtures and independent oracles for the test binaries.

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "enforcekit/acceptor.hpp"
#include "enforcekit/catalog.hpp"
#include "enforcekit/engine.hpp"
#include "enforcekit/io.hpp"
#include "enforcekit/model.hpp"
#include "enforcekit/sim.hpp"
#include "enforcekit/validate.hpp"

#ifndef ENFORCEKIT_DATA_DIR
#error "ENFORCEKIT_DATA_DIR must point at the data directory"
#endif
#ifndef ENFORCEKIT_GOLDEN_DIR
#error "ENFORCEKIT_GOLDEN_DIR must point at the golden directory"
#endif

namespace testing_support {

namespace ek = enforcekit;

inline std::filesystem::path data_dir() { return ENFORCEKIT_DATA_DIR; }
inline std::filesystem::path golden_dir() { return ENFORCEKIT_GOLDEN_DIR; }

inline const ek::ApiCatalog& android_catalog() {
  static const ek::ApiCatalog cat = ek::load_catalog(data_dir() / "catalog.android.json");
  return cat;
}

inline const ek::ApiCatalog& demo_catalog() {
  static const ek::ApiCatalog cat = ek::load_catalog(data_dir() / "catalog.demo.json");
  return cat;
}

inline ek::EnforcementModel model_file(const std::string& name) {
  return ek::load_model(data_dir() / "models" / name);
}

struct CorpusModel {
  ek::ManifestModel entry;
  ek::EnforcementModel model;
};

inline const std::vector<CorpusModel>& corpus_models() {
  static const std::vector<CorpusModel> models = [] {
    std::vector<CorpusModel> out;
    const auto manifest = ek::load_manifest(data_dir() / "corpus" / "manifest.json");
    for (const auto& m : manifest.models) {
      out.push_back({m, ek::load_model(data_dir() / "models" / m.file)});
    }
    return out;
  }();
  return models;
}

inline ek::SessionConfig config_for(const ek::ApiCatalog& catalog) {
  ek::SessionConfig c;
  c.catalog = catalog;
  return c;
}

constexpr std::int64_t kComponent = 1;
constexpr std::int64_t kResource = 2;

/// Concrete event for a symbol: lifecycle symbols target the component,
/// everything else the single resource.
inline ek::Event symbol_event(const ek::ActionSignature& sig, const ek::EnforcementModel& m,
                              const ek::ClassHierarchy& h) {
  ek::Event ev;
  ev.phase = sig.phase;
  ev.class_name = sig.class_name;
  ev.method_name = sig.method_name;
  ev.component_id = kComponent;
  const bool lifecycle = h.is_subclass(sig.class_name, m.lifecycle_object);
  ev.receiver_id = lifecycle ? kComponent : kResource;
  ev.source = lifecycle && sig.method_name.rfind("on", 0) == 0 ? ek::Source::Framework : ek::Source::App;
  return ev;
}

/// The guard signatures of a model, deduplicated, in first-use order.
inline std::vector<ek::ActionSignature> guard_alphabet(const ek::EnforcementModel& m) {
  std::vector<ek::ActionSignature> out;
  for (const auto& t : m.transitions) {
    for (const auto& sig : ek::guard_signatures(t.intercepted)) {
      if (std::find(out.begin(), out.end(), sig) == out.end()) out.push_back(sig);
    }
  }
  return out;
}

/// Guard signatures plus one unrelated call on the governed API and one
/// unrelated lifecycle callback, when the catalog offers them.
inline std::vector<ek::ActionSignature> brute_force_alphabet(const ek::EnforcementModel& m,
                                                             const ek::ApiCatalog& catalog) {
  auto out = guard_alphabet(m);
  auto used = [&](const std::string& cls, const std::string& method) {
    return std::any_of(out.begin(), out.end(),
                       [&](const ek::ActionSignature& s) { return s.class_name == cls && s.method_name == method; });
  };
  for (const auto& method : catalog.visible_methods(m.api)) {
    if (used(m.api, method) || method.rfind("on", 0) == 0) continue;
    out.push_back({ek::Phase::BeforeCall, m.api, method});
    break;
  }
  if (m.lifecycle_object != m.api) {
    for (const auto& method : catalog.visible_methods(m.lifecycle_object)) {
      if (used(m.lifecycle_object, method) || method.rfind("on", 0) != 0) continue;
      if (method == "onCreate" || method == "onDestroy") continue;
      out.push_back({ek::Phase::AfterCall, m.lifecycle_object, method});
      break;
    }
  }
  return out;
}

/// Prefix-closed legality filter for component lifecycles. It only
/// constrains traces when the alphabet can bring the component to the
/// foreground; otherwise every sequence is legal.
class LifecycleLegality {
 public:
  LifecycleLegality(const ek::EnforcementModel& m, const ek::ClassHierarchy& h,
                    const std::vector<ek::ActionSignature>& alphabet)
      : model_(m), hierarchy_(h) {
    service_ = h.is_subclass(m.lifecycle_object, "android.app.Service");
    const bool activity = h.is_subclass(m.lifecycle_object, "android.app.Activity");
    for (const auto& sig : alphabet) {
      if (!h.is_subclass(sig.class_name, m.lifecycle_object)) continue;
      if (sig.method_name == "onCreate" || (activity && sig.method_name == "onResume")) active_ = true;
    }
    active_ = active_ && (activity || service_);
  }

  bool active() const { return active_; }

  enum class Life { Dead, Created, Resumed, Paused };

  /// Returns the next lifecycle state, or nullopt if `ev` is illegal here.
  std::optional<Life> next(Life s, const ek::Event& ev) const {
    if (!active_) return s;
    const bool lifecycle = hierarchy_.is_subclass(ev.class_name, model_.lifecycle_object);
    if (!lifecycle) {
      if (s == Life::Created || s == Life::Resumed) return s;
      return std::nullopt;
    }
    const auto& m = ev.method_name;
    if (m == "onCreate") {
      if (ev.phase == ek::Phase::BeforeCall) return s == Life::Dead ? std::optional(Life::Created) : std::nullopt;
      return s == Life::Created ? std::optional(s) : std::nullopt;
    }
    if (m == "onDestroy") return s == Life::Dead ? std::nullopt : std::optional(Life::Dead);
    if (service_) return s == Life::Dead ? std::nullopt : std::optional(s);
    if (m == "onResume") {
      if (ev.phase == ek::Phase::BeforeCall) {
        return (s == Life::Created || s == Life::Paused) ? std::optional(Life::Resumed) : std::nullopt;
      }
      return s == Life::Resumed ? std::optional(s) : std::nullopt;
    }
    if (m == "onPause") {
      if (ev.phase == ek::Phase::AfterCall) return s == Life::Resumed ? std::optional(Life::Paused) : std::nullopt;
      return s == Life::Resumed ? std::optional(s) : std::nullopt;
    }
    return s == Life::Dead ? std::nullopt : std::optional(s);
  }

 private:
  const ek::EnforcementModel& model_;
  const ek::ClassHierarchy& hierarchy_;
  bool active_ = false;
  bool service_ = false;
};

struct EnumerationStats {
  std::size_t total = 0;  ///< all sequences of length <= max_len
  std::size_t legal = 0;  ///< sequences visited
};

/// Depth-first enumeration of every trace of length 0..max_len over
/// `alphabet`, pruning illegal prefixes. `visit` sees each legal trace.
inline EnumerationStats for_each_trace(const ek::EnforcementModel& m, const ek::ClassHierarchy& h,
                                       const std::vector<ek::ActionSignature>& alphabet, std::size_t max_len,
                                       const std::function<void(const ek::Trace&)>& visit) {
  EnumerationStats stats;
  std::size_t power = 1;
  for (std::size_t k = 0; k <= max_len; ++k) {
    stats.total += power;
    power *= alphabet.size();
  }
  LifecycleLegality legality(m, h, alphabet);
  std::vector<ek::Event> events;
  for (const auto& sig : alphabet) events.push_back(symbol_event(sig, m, h));
  ek::Trace trace;
  std::function<void(LifecycleLegality::Life)> dfs = [&](LifecycleLegality::Life life) {
    ++stats.legal;
    visit(trace);
    if (trace.size() == max_len) return;
    for (const auto& ev : events) {
      auto next = legality.next(life, ev);
      if (!next) continue;
      trace.push_back(ev);
      dfs(*next);
      trace.pop_back();
    }
  };
  dfs(LifecycleLegality::Life::Dead);
  return stats;
}

inline ek::Trace run_session(const std::shared_ptr<const ek::Enforcer>& enforcer, const ek::Trace& trace,
                             ek::EnforcementReport* report = nullptr) {
  ek::Session session(enforcer);
  auto out = session.run(trace);
  if (report) *report = session.finalize();
  return out;
}

/// Direct interpretation of an edit automaton for a single component and
/// resource, written independently of the engine. Special operations are
/// not supported.
struct ReferenceStep {
  ek::Phase phase;
  std::string class_name;
  std::string method_name;
  ek::Source source;
  bool operator==(const ReferenceStep&) const = default;
};

inline std::vector<ReferenceStep> reference_enforce(const ek::EnforcementModel& m, const ek::ClassHierarchy& h,
                                                    const ek::Trace& trace) {
  std::string state;
  for (const auto& s : m.states) {
    if (s.initial) state = s.id;
  }
  std::map<std::pair<std::string, std::string>, int> dropped_calls;
  std::vector<ReferenceStep> out;
  auto sig_matches = [&](const ek::ActionSignature& sig, const ek::Event& ev) {
    return sig.phase == ev.phase && sig.method_name == ev.method_name && h.is_subclass(ev.class_name, sig.class_name);
  };
  auto in_alphabet = [&](const ek::Event& ev, const std::vector<ek::ActionSignature>& extra) {
    if (h.is_subclass(ev.class_name, m.lifecycle_object) || h.is_subclass(ev.class_name, m.api)) return true;
    for (const auto& sig : extra) {
      if (h.is_subclass(ev.class_name, sig.class_name)) return true;
    }
    return false;
  };
  for (const auto& ev : trace) {
    const auto call = std::make_pair(ev.class_name, ev.method_name);
    if (ev.phase == ek::Phase::AfterCall && dropped_calls[call] > 0) {
      --dropped_calls[call];
      continue;
    }
    const ek::Transition* fired = nullptr;
    for (const auto& t : m.transitions) {
      if (t.from != state) continue;
      bool hit = false;
      if (const auto* exact = std::get_if<ek::ExactGuard>(&t.intercepted)) {
        hit = sig_matches(exact->signature, ev);
      } else {
        const auto& any = std::get<ek::AnyExceptGuard>(t.intercepted);
        hit = in_alphabet(ev, any.exclude) &&
              std::none_of(any.exclude.begin(), any.exclude.end(),
                           [&](const ek::ActionSignature& s) { return sig_matches(s, ev); });
      }
      if (hit) {
        fired = &t;
        break;
      }
    }
    if (!fired) {
      out.push_back({ev.phase, ev.class_name, ev.method_name, ev.source});
      continue;
    }
    state = fired->to;
    bool original_kept = false;
    for (const auto& action : fired->outputs) {
      if (const auto* emit = std::get_if<ek::EmitAction>(&action)) {
        if (!original_kept && sig_matches(emit->signature, ev)) {
          out.push_back({ev.phase, ev.class_name, ev.method_name, ev.source});
          original_kept = true;
        } else {
          out.push_back({emit->signature.phase, emit->signature.class_name, emit->signature.method_name,
                         ek::Source::Enforcer});
        }
      } else if (std::holds_alternative<ek::EmitBoundAction>(action)) {
        out.push_back({ev.phase, ev.class_name, ev.method_name, original_kept ? ek::Source::Enforcer : ev.source});
        original_kept = true;
      } else {
        throw std::logic_error("reference interpreter has no special operations");
      }
    }
    if (!original_kept && ev.phase == ek::Phase::BeforeCall) ++dropped_calls[call];
  }
  return out;
}

inline std::vector<ReferenceStep> project(const ek::Trace& trace) {
  std::vector<ReferenceStep> out;
  for (const auto& ev : trace) out.push_back({ev.phase, ev.class_name, ev.method_name, ev.source});
  return out;
}

inline bool accepted(const std::vector<ek::PolicyParams>& policies, const ek::ClassHierarchy& h,
                     const ek::Trace& trace) {
  return ek::accepts_all(policies, h, trace);
}

}  // namespace testing_support
