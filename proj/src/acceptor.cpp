#include "enforcekit/acceptor.hpp"

#include <cstdint>

namespace enforcekit {

std::string to_string(PolicyTemplate t) {
  switch (t) {
    case PolicyTemplate::InvokeWhenCallback: return "InvokeWhenCallback";
    case PolicyTemplate::ReplaceWith: return "ReplaceWith";
    case PolicyTemplate::DoNotInvoke: return "DoNotInvoke";
  }
  return "?";
}

PolicyTemplate parse_policy_template(const std::string& text) {
  if (text == "InvokeWhenCallback") return PolicyTemplate::InvokeWhenCallback;
  if (text == "ReplaceWith") return PolicyTemplate::ReplaceWith;
  if (text == "DoNotInvoke") return PolicyTemplate::DoNotInvoke;
  throw Error("BadTemplateParams", "unknown policy template '" + text + "'");
}

bool MethodRef::matches(const Event& ev, const ClassHierarchy& hierarchy) const {
  return ev.method_name == method_name && hierarchy.is_subclass(ev.class_name, class_name);
}

MethodRef parse_method_ref(const std::string& text) {
  auto dot = text.rfind('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == text.size()) {
    throw Error("BadTemplateParams", "expected Class.method, got '" + text + "'");
  }
  MethodRef ref{text.substr(0, dot), text.substr(dot + 1)};
  if (!is_dotted_name(ref.class_name) || !is_identifier(ref.method_name)) {
    throw Error("BadTemplateParams", "malformed method reference '" + text + "'");
  }
  return ref;
}

std::string to_string(const MethodRef& ref) { return ref.class_name + "." + ref.method_name; }

PolicyParams policy_from_json(const nlohmann::json& node) {
  try {
    PolicyParams p;
    p.kind = parse_policy_template(node.at("template").get<std::string>());
    p.method_a = parse_method_ref(node.at("methodA").get<std::string>());
    p.method_b = parse_method_ref(node.at("methodB").get<std::string>());
    if (node.contains("callback") && !node.at("callback").is_null()) {
      p.callback = parse_method_ref(node.at("callback").get<std::string>());
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error("BadTemplateParams", std::string("policy: ") + e.what());
  }
}

nlohmann::ordered_json policy_to_json(const PolicyParams& p) {
  nlohmann::ordered_json node;
  node["template"] = to_string(p.kind);
  node["methodA"] = to_string(p.method_a);
  node["methodB"] = to_string(p.method_b);
  if (p.callback) node["callback"] = to_string(*p.callback);
  return node;
}

PolicyAcceptor::PolicyAcceptor(PolicyParams params, ClassHierarchy hierarchy)
    : params_(std::move(params)), hierarchy_(std::move(hierarchy)) {}

void PolicyAcceptor::reset() {
  position_ = 0;
  violation_.reset();
  owed_.clear();
  armed_.clear();
}

void PolicyAcceptor::step(const Event& ev) {
  const std::size_t at = position_++;
  if (violation_) return;
  auto reject = [&] { violation_ = at; };

  switch (params_.kind) {
    case PolicyTemplate::InvokeWhenCallback:
      if (ev.phase == Phase::AfterCall && params_.method_a.matches(ev, hierarchy_)) {
        owed_.insert({ev.component_id, ev.receiver_id});
      }
      if (ev.phase == Phase::BeforeCall && params_.method_b.matches(ev, hierarchy_)) {
        owed_.erase({ev.component_id, ev.receiver_id});
      }
      if (ev.phase == Phase::AfterCall && params_.callback->matches(ev, hierarchy_)) {
        auto it = owed_.lower_bound({ev.component_id, INT64_MIN});
        if (it != owed_.end() && it->first == ev.component_id) reject();
      }
      break;
    case PolicyTemplate::ReplaceWith:
      if (ev.phase == Phase::BeforeCall && params_.method_a.matches(ev, hierarchy_)) reject();
      break;
    case PolicyTemplate::DoNotInvoke:
      if (ev.phase != Phase::BeforeCall) break;
      if (params_.method_b.matches(ev, hierarchy_) && armed_.count(ev.component_id)) reject();
      if (params_.method_a.matches(ev, hierarchy_)) armed_.insert(ev.component_id);
      break;
  }
}

PolicyAcceptor derive_acceptor(const PolicyParams& params, const ClassHierarchy& hierarchy) {
  const bool needs_callback = params.kind == PolicyTemplate::InvokeWhenCallback;
  if (needs_callback != params.callback.has_value()) {
    throw Error("BadTemplateParams", needs_callback ? "InvokeWhenCallback requires a callback"
                                                    : to_string(params.kind) + " takes no callback");
  }
  std::vector<const MethodRef*> refs{&params.method_a, &params.method_b};
  if (params.callback) refs.push_back(&*params.callback);
  for (const auto* ref : refs) {
    if (!hierarchy.contains(ref->class_name)) {
      throw Error("BadTemplateParams", "unknown class " + ref->class_name);
    }
  }
  return PolicyAcceptor(params, hierarchy);
}

bool accepts_all(const std::vector<PolicyParams>& policies, const ClassHierarchy& hierarchy,
                 const Trace& trace) {
  for (const auto& p : policies) {
    auto acceptor = derive_acceptor(p, hierarchy);
    for (const auto& ev : trace) {
      acceptor.step(ev);
      if (!acceptor.accepting()) return false;
    }
  }
  return true;
}

}  // namespace enforcekit
