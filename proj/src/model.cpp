#include "enforcekit/model.hpp"

#include <algorithm>
#include <sstream>

namespace enforcekit {

std::string_view to_string(Phase phase) {
  return phase == Phase::BeforeCall ? "before" : "after";
}

std::string_view to_string(Source source) {
  switch (source) {
    case Source::App:
      return "app";
    case Source::Enforcer:
      return "enforcer";
    case Source::Framework:
      return "framework";
  }
  return "app";
}

namespace {

bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c == '$';
}

bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }

}  // namespace

bool is_identifier(std::string_view text) {
  if (text == "<init>" || text == "<clinit>") return true;
  if (text.empty() || !is_ident_start(text.front())) return false;
  return std::all_of(text.begin(), text.end(), is_ident_char);
}

bool is_dotted_name(std::string_view text) {
  if (text.empty()) return false;
  std::size_t start = 0;
  while (true) {
    auto dot = text.find('.', start);
    auto part = text.substr(start, dot == std::string_view::npos ? std::string_view::npos
                                                                  : dot - start);
    if (part == "<init>" || part == "<clinit>" || !is_identifier(part)) return false;
    if (dot == std::string_view::npos) return true;
    start = dot + 1;
  }
}

ActionSignature parse_signature(std::string_view text) {
  auto hash = text.find('#');
  if (hash == std::string_view::npos) {
    throw Error("MalformedSignature",
                "missing before#/after# prefix in '" + std::string(text) + "'");
  }
  auto prefix = text.substr(0, hash);
  ActionSignature sig;
  if (prefix == "before") {
    sig.phase = Phase::BeforeCall;
  } else if (prefix == "after") {
    sig.phase = Phase::AfterCall;
  } else {
    throw Error("MalformedSignature", "unknown phase prefix '" + std::string(prefix) + "'");
  }
  auto qualified = text.substr(hash + 1);
  auto dot = qualified.rfind('.');
  if (dot == std::string_view::npos) {
    throw Error("MalformedSignature",
                "expected <class>.<method> in '" + std::string(text) + "'");
  }
  auto cls = qualified.substr(0, dot);
  auto method = qualified.substr(dot + 1);
  if (!is_dotted_name(cls)) {
    throw Error("MalformedSignature", "bad class name in '" + std::string(text) + "'");
  }
  if (!is_identifier(method)) {
    throw Error("MalformedSignature", "bad method name in '" + std::string(text) + "'");
  }
  sig.class_name = std::string(cls);
  sig.method_name = std::string(method);
  return sig;
}

std::string to_string(const ActionSignature& sig) {
  std::string out(to_string(sig.phase));
  out += '#';
  out += sig.class_name;
  out += '.';
  out += sig.method_name;
  return out;
}

void ClassHierarchy::add_class(const std::string& name,
                               const std::optional<std::string>& parent) {
  auto it = parents_.find(name);
  if (it != parents_.end()) {
    if (it->second != parent) {
      throw Error("HierarchyConflict", "class " + name + " redeclared with another parent");
    }
    return;
  }
  parents_.emplace(name, parent);
}

bool ClassHierarchy::contains(std::string_view name) const {
  return parents_.find(name) != parents_.end();
}

std::optional<std::string> ClassHierarchy::parent_of(std::string_view name) const {
  auto it = parents_.find(name);
  if (it == parents_.end()) return std::nullopt;
  return it->second;
}

bool ClassHierarchy::is_subclass(std::string_view name, std::string_view ancestor) const {
  // Bounded walk: catalogs are validated acyclic, but guard anyway.
  std::string_view current = name;
  for (std::size_t depth = 0; depth <= parents_.size(); ++depth) {
    auto it = parents_.find(current);
    if (it == parents_.end()) return false;
    if (current == ancestor) return true;
    if (!it->second) return false;
    current = *it->second;
  }
  return false;
}

std::string describe(const Event& ev) {
  std::ostringstream out;
  out << to_string(ev.phase) << '#' << ev.class_name << '.' << ev.method_name << '@'
      << ev.receiver_id;
  if (ev.source == Source::Enforcer) out << "[enforcer]";
  return out.str();
}

bool signature_matches(const ActionSignature& sig, const Event& ev,
                       const ClassHierarchy& hierarchy) {
  if (!hierarchy.contains(ev.class_name)) {
    throw Error("UnknownClass", "class not in hierarchy: " + ev.class_name);
  }
  return sig.phase == ev.phase && sig.method_name == ev.method_name &&
         hierarchy.is_subclass(ev.class_name, sig.class_name);
}

std::optional<std::string> guard_binder(const Guard& guard) {
  if (const auto* any = std::get_if<AnyExceptGuard>(&guard)) return any->binder;
  return std::nullopt;
}

std::vector<ActionSignature> guard_signatures(const Guard& guard) {
  if (const auto* exact = std::get_if<ExactGuard>(&guard)) return {exact->signature};
  return std::get<AnyExceptGuard>(guard).exclude;
}

std::optional<Binding> guard_matches(const Guard& guard, const Event& ev,
                                     const ClassHierarchy& hierarchy) {
  if (const auto* exact = std::get_if<ExactGuard>(&guard)) {
    if (signature_matches(exact->signature, ev, hierarchy)) return Binding{};
    return std::nullopt;
  }
  const auto& any = std::get<AnyExceptGuard>(guard);
  for (const auto& sig : any.exclude) {
    if (signature_matches(sig, ev, hierarchy)) return std::nullopt;
  }
  return Binding{any.binder};
}

const std::set<std::string, std::less<>>& special_operations() {
  static const std::set<std::string, std::less<>> names{"resume"};
  return names;
}

const std::string& EnforcementModel::initial_state() const {
  const State* found = nullptr;
  for (const auto& st : states) {
    if (!st.initial) continue;
    if (found) throw Error("MultipleInitialStates", "model " + name + " has two initial states");
    found = &st;
  }
  if (!found) throw Error("MissingInitialState", "model " + name + " has no initial state");
  return found->id;
}

bool EnforcementModel::has_state(std::string_view id) const {
  return std::any_of(states.begin(), states.end(), [&](const State& s) { return s.id == id; });
}

bool EnforcementModel::uses_special(std::string_view special) const {
  for (const auto& t : transitions) {
    for (const auto& out : t.outputs) {
      if (const auto* sp = std::get_if<SpecialAction>(&out); sp && sp->name == special) {
        return true;
      }
    }
  }
  return false;
}

}  // namespace enforcekit
