#include "enforcekit/validate.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <sstream>

namespace enforcekit {

bool ValidationReport::has_error(const std::string& code) const {
  return std::any_of(errors.begin(), errors.end(), [&](const Finding& f) { return f.code == code; });
}

bool ValidationReport::has_warning(const std::string& code) const {
  return std::any_of(warnings.begin(), warnings.end(),
                     [&](const Finding& f) { return f.code == code; });
}

namespace {

std::string transition_loc(std::size_t index) {
  return "transitions[" + std::to_string(index) + "]";
}

class Checker {
 public:
  Checker(const EnforcementModel& model, const ApiCatalog& catalog)
      : model_(model), catalog_(catalog), hierarchy_(catalog.hierarchy()) {}

  ValidationReport run() {
    check_header();
    check_states();
    for (std::size_t i = 0; i < model_.transitions.size(); ++i) check_transition(i);
    check_reachability();
    check_overlaps();
    return std::move(report_);
  }

 private:
  void error(std::string code, std::string location, std::string message) {
    report_.errors.push_back({std::move(code), std::move(location), std::move(message)});
  }
  void warning(std::string code, std::string location, std::string message) {
    report_.warnings.push_back({std::move(code), std::move(location), std::move(message)});
  }

  void check_header() {
    if (!is_identifier(model_.name)) error("BadName", "name", "model name must be an identifier");
    for (const auto& [field, cls] : {std::pair{"lifecycleObject", &model_.lifecycle_object},
                                     std::pair{"api", &model_.api}}) {
      if (!catalog_.find(*cls)) error("UnknownClass", field, "class not in catalog: " + *cls);
    }
  }

  void check_states() {
    std::set<std::string> seen;
    int initial = 0;
    for (const auto& st : model_.states) {
      if (!seen.insert(st.id).second) error("DuplicateState", "states", "duplicate state " + st.id);
      initial += st.initial ? 1 : 0;
    }
    if (initial == 0) error("MissingInitialState", "states", "no initial state declared");
    if (initial > 1) error("MultipleInitialStates", "states", "more than one initial state");
  }

  // Returns false if the signature refers to something the catalog lacks.
  bool check_signature(const ActionSignature& sig, const std::string& loc) {
    if (!catalog_.find(sig.class_name)) {
      error("UnknownClass", loc, "class not in catalog: " + sig.class_name);
      return false;
    }
    if (!catalog_.has_method(sig.class_name, sig.method_name)) {
      error("UnknownMethod", loc, "no method " + sig.method_name + " on " + sig.class_name);
      return false;
    }
    return true;
  }

  void check_intercepted(const ActionSignature& sig, const std::string& loc) {
    if (!check_signature(sig, loc)) return;
    if (!hierarchy_.is_subclass(sig.class_name, model_.lifecycle_object) &&
        !hierarchy_.is_subclass(sig.class_name, model_.api)) {
      error("ForeignClass", loc,
            sig.class_name + " is neither the lifecycle object nor the governed API");
    }
  }

  void check_transition(std::size_t index) {
    const auto& t = model_.transitions[index];
    const auto loc = transition_loc(index);
    if (!model_.has_state(t.from)) error("DanglingStateRef", loc + ".from", "unknown state " + t.from);
    if (!model_.has_state(t.to)) error("DanglingStateRef", loc + ".to", "unknown state " + t.to);

    std::optional<std::string> binder;
    if (const auto* exact = std::get_if<ExactGuard>(&t.intercepted)) {
      check_intercepted(exact->signature, loc + ".intercepted");
    } else {
      const auto& any = std::get<AnyExceptGuard>(t.intercepted);
      if (any.exclude.empty()) {
        error("EmptyExclusion", loc + ".intercepted", "anyExcept needs at least one exclusion");
      }
      std::set<ActionSignature> unique;
      for (std::size_t k = 0; k < any.exclude.size(); ++k) {
        const auto& sig = any.exclude[k];
        check_intercepted(sig, loc + ".intercepted.exclude[" + std::to_string(k) + "]");
        if (!unique.insert(sig).second) {
          error("DuplicateExclusion", loc + ".intercepted", "repeated " + to_string(sig));
        }
      }
      if (any.binder && !is_identifier(*any.binder)) {
        error("BadBinder", loc + ".intercepted.binder", "binder must be an identifier");
      }
      binder = any.binder;
    }

    for (std::size_t k = 0; k < t.outputs.size(); ++k) {
      const auto oloc = loc + ".outputs[" + std::to_string(k) + "]";
      const auto& out = t.outputs[k];
      if (const auto* emit = std::get_if<EmitAction>(&out)) {
        check_signature(emit->signature, oloc);
      } else if (const auto* bound = std::get_if<EmitBoundAction>(&out)) {
        if (!binder || *binder != bound->variable) {
          error("UnboundVariable", oloc, "variable '" + bound->variable + "' is not bound by the guard");
        }
      } else {
        const auto& special = std::get<SpecialAction>(out);
        if (!special_operations().count(special.name)) {
          error("UnknownSpecial", oloc, "unknown special operation '" + special.name + "'");
        }
      }
    }
  }

  void check_reachability() {
    std::string initial;
    for (const auto& st : model_.states) {
      if (st.initial) {
        initial = st.id;
        break;
      }
    }
    if (initial.empty()) return;
    std::set<std::string> reached{initial};
    std::deque<std::string> queue{initial};
    while (!queue.empty()) {
      auto s = queue.front();
      queue.pop_front();
      for (const auto& t : model_.transitions) {
        if (t.from == s && reached.insert(t.to).second) queue.push_back(t.to);
      }
    }
    for (const auto& st : model_.states) {
      if (!reached.count(st.id)) warning("UnreachableState", "states", "state " + st.id + " is unreachable");
    }
  }

  void check_overlaps() {
    if (!report_.errors.empty()) return;
    const auto alphabet = catalog_alphabet(model_, catalog_);
    std::map<std::string, std::vector<std::size_t>> by_state;
    for (std::size_t i = 0; i < model_.transitions.size(); ++i) {
      by_state[model_.transitions[i].from].push_back(i);
    }
    for (const auto& [state, indices] : by_state) {
      std::set<std::pair<std::size_t, std::size_t>> reported;
      for (const auto& sig : alphabet) {
        Event ev;
        ev.phase = sig.phase;
        ev.class_name = sig.class_name;
        ev.method_name = sig.method_name;
        std::vector<std::size_t> hits;
        for (auto i : indices) {
          if (guard_matches(model_.transitions[i].intercepted, ev, hierarchy_)) hits.push_back(i);
        }
        for (std::size_t a = 0; a < hits.size(); ++a) {
          for (std::size_t b = a + 1; b < hits.size(); ++b) {
            if (!reported.insert({hits[a], hits[b]}).second) continue;
            warning("OverlappingGuards", "state " + state,
                    transition_loc(hits[a]) + " and " + transition_loc(hits[b]) +
                        " both match " + to_string(sig) + "; the first declared wins");
          }
        }
      }
    }
  }

  const EnforcementModel& model_;
  const ApiCatalog& catalog_;
  ClassHierarchy hierarchy_;
  ValidationReport report_;
};

}  // namespace

std::vector<ActionSignature> catalog_alphabet(const EnforcementModel& model,
                                              const ApiCatalog& catalog) {
  std::set<std::string> classes{model.lifecycle_object, model.api};
  for (const auto& t : model.transitions) {
    for (const auto& sig : guard_signatures(t.intercepted)) classes.insert(sig.class_name);
  }
  std::vector<ActionSignature> out;
  for (const auto& cls : classes) {
    if (!catalog.find(cls)) continue;
    for (const auto& method : catalog.visible_methods(cls)) {
      out.push_back({Phase::BeforeCall, cls, method});
      out.push_back({Phase::AfterCall, cls, method});
    }
  }
  return out;
}

ValidationReport validate_model(const EnforcementModel& model, const ApiCatalog& catalog) {
  return Checker(model, catalog).run();
}

nlohmann::ordered_json report_to_json(const ValidationReport& report) {
  auto list = [](const std::vector<Finding>& findings) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& f : findings) {
      arr.push_back({{"code", f.code}, {"location", f.location}, {"message", f.message}});
    }
    return arr;
  };
  nlohmann::ordered_json doc;
  doc["deployable"] = report.deployable();
  doc["errors"] = list(report.errors);
  doc["warnings"] = list(report.warnings);
  return doc;
}

std::string format_report(const ValidationReport& report) {
  std::ostringstream out;
  for (const auto& f : report.errors) out << "error   " << f.code << " at " << f.location << ": " << f.message << '\n';
  for (const auto& f : report.warnings) out << "warning " << f.code << " at " << f.location << ": " << f.message << '\n';
  out << (report.deployable() ? "model is deployable" : "model is NOT deployable") << " ("
      << report.errors.size() << " errors, " << report.warnings.size() << " warnings)\n";
  return out.str();
}

}  // namespace enforcekit
