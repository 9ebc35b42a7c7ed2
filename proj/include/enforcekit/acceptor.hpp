#pragma once

// Policy acceptors: the independent oracle deciding whether a trace
// satisfies a usage policy. They never consult the engine.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "enforcekit/model.hpp"

namespace enforcekit {

enum class PolicyTemplate { InvokeWhenCallback, ReplaceWith, DoNotInvoke };

std::string to_string(PolicyTemplate t);
PolicyTemplate parse_policy_template(const std::string& text);

/// A class-qualified method, e.g. android.hardware.Camera.open.
struct MethodRef {
  std::string class_name;
  std::string method_name;

  bool matches(const Event& ev, const ClassHierarchy& hierarchy) const;
  bool operator==(const MethodRef&) const = default;
};

MethodRef parse_method_ref(const std::string& text);
std::string to_string(const MethodRef& ref);

struct PolicyParams {
  PolicyTemplate kind = PolicyTemplate::InvokeWhenCallback;
  MethodRef method_a;
  MethodRef method_b;
  std::optional<MethodRef> callback;
};

PolicyParams policy_from_json(const nlohmann::json& node);
nlohmann::ordered_json policy_to_json(const PolicyParams& p);

/// Streaming acceptor. Feed events with `step`; once rejected it stays
/// rejected.
class PolicyAcceptor {
 public:
  PolicyAcceptor(PolicyParams params, ClassHierarchy hierarchy);

  void step(const Event& ev);
  bool accepting() const { return !violation_; }
  /// 0-based index of the first offending event.
  std::optional<std::size_t> violation() const { return violation_; }
  void reset();

  const PolicyParams& params() const { return params_; }

 private:
  PolicyParams params_;
  ClassHierarchy hierarchy_;
  std::size_t position_ = 0;
  std::optional<std::size_t> violation_;
  // InvokeWhenCallback: open obligations per (component, receiver).
  std::set<std::pair<std::int64_t, std::int64_t>> owed_;
  // DoNotInvoke: components that have invoked methodA.
  std::set<std::int64_t> armed_;
};

/// Validates the template parameters (BadTemplateParams) and builds the
/// acceptor. Methods must exist in `hierarchy`.
PolicyAcceptor derive_acceptor(const PolicyParams& params, const ClassHierarchy& hierarchy);

/// True iff every acceptor accepts the whole trace.
bool accepts_all(const std::vector<PolicyParams>& policies, const ClassHierarchy& hierarchy,
                 const Trace& trace);

}  // namespace enforcekit
