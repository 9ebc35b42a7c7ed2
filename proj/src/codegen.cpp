#include "enforcekit/codegen.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "enforcekit/io.hpp"
#include "enforcekit/validate.hpp"

namespace enforcekit {

namespace {

const char* const kEntry = R"(package enforcekit.generated;

import java.util.ArrayList;
import java.util.HashMap;
import java.util.List;
import java.util.Map;

import de.robv.android.xposed.IXposedHookLoadPackage;
import de.robv.android.xposed.XC_MethodHook;
import de.robv.android.xposed.XposedHelpers;
import de.robv.android.xposed.callbacks.XC_LoadPackage.LoadPackageParam;

public class ${MODULE} implements IXposedHookLoadPackage {
    private static final String LIFECYCLE_CLASS = "${LIFECYCLE}";
    private static final String API_CLASS = "${API}";
    private static boolean doNotAlterExecution = false;
    private final List<String> targetPackages = new ArrayList<>();

    @Override
    public void handleLoadPackage(final LoadPackageParam lpparam) throws Throwable {
)";

const char* const kIdentityCheck = R"(        // check app identity
        if (!targetPackages.contains(lpparam.packageName)) {
            return;
        }
)";

const char* const kDataClass = R"(        // inject data classes
        class EnforcerState {
            int state = ${INITIAL};
            Object resource;
        }
        final Map<Object, List<EnforcerState>> currentStates = new HashMap<>();
        final Map<Object, Object> resource2lifeCycleObject = new HashMap<>();
)";

const char* const kResumeClass = R"(        class ResumeStore {
            final List<String> methods = new ArrayList<>();
            final List<Object[]> arguments = new ArrayList<>();
            boolean held = false;
            boolean forcedRelease = false;

            void record(String method, Object[] args) {
                if (!held) {
                    methods.clear();
                    arguments.clear();
                }
                methods.add(method);
                arguments.add(args);
                held = true;
                forcedRelease = false;
            }

            void resume(EnforcerState enforcer) {
                if (held || !forcedRelease) {
                    return;
                }
                for (int i = 0; i < methods.size(); i++) {
                    enforcer.resource = XposedHelpers.callMethod(enforcer.resource, methods.get(i), arguments.get(i));
                }
                held = true;
                forcedRelease = false;
            }
        }
        final Map<EnforcerState, ResumeStore> resumeStores = new HashMap<>();
)";

const char* const kHookBlock = R"(        // hooking class ${CLASS}
        final Class<?> ${VAR} = XposedHelpers.findClass("${CLASS}", lpparam.classLoader);
)";

const char* const kWrapperOpen = R"(        XposedHelpers.findAndHookMethod(${VAR}, "${METHOD}", new XC_MethodHook() {
)";

const char* const kBeforeWrapper = R"(            @Override
            protected void beforeHookedMethod(MethodHookParam param) throws Throwable {
                if (doNotAlterExecution) {
                    return;
                }
                final Object lifeCycleObject = ${OWNER};
                for (EnforcerState enforcer : currentStates.getOrDefault(lifeCycleObject, new ArrayList<>())) {
${SWITCH}
                }
            }
)";

const char* const kAfterWrapper = R"(            @Override
            protected void afterHookedMethod(MethodHookParam param) throws Throwable {
                if (doNotAlterExecution) {
                    return;
                }
                final Object lifeCycleObject = ${OWNER};
                for (EnforcerState enforcer : currentStates.getOrDefault(lifeCycleObject, new ArrayList<>())) {
${SWITCH}
                }
            }
)";

const char* const kWrapperClose = "        });\n";

const char* const kTrailer = R"(    }
}
)";

std::string simple_name(const std::string& cls) {
  auto dot = cls.rfind('.');
  return dot == std::string::npos ? cls : cls.substr(dot + 1);
}

std::string class_var(const std::string& cls) {
  auto simple = simple_name(cls);
  if (!simple.empty()) simple[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(simple[0])));
  return simple + "Class";
}

std::string indent_block(const std::string& text, const std::string& pad) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line)) {
    out += line.empty() ? "" : pad + line;
    out += '\n';
  }
  if (!out.empty()) out.pop_back();
  return out;
}

std::size_t state_index(const EnforcementModel& m, const std::string& id) {
  for (std::size_t i = 0; i < m.states.size(); ++i) {
    if (m.states[i].id == id) return i;
  }
  return 0;
}

Event probe(const ActionSignature& sig) {
  Event ev;
  ev.phase = sig.phase;
  ev.class_name = sig.class_name;
  ev.method_name = sig.method_name;
  return ev;
}

// Xposed bindings for the platform-neutral placeholders.
std::string bind_xposed(const EnforcementModel& m, const ClassHierarchy& hierarchy,
                        const std::string& key, const std::string& arg) {
  if (key == "STATE_VAR") return "enforcer.state";
  if (key == "SET_STATE") return "enforcer.state = " + arg + ";";
  if (key == "PASS") return "// proceed with the intercepted call";
  if (key == "SUPPRESS") return "param.setResult(null);";
  if (key == "RESUME") return "resumeStores.get(enforcer).resume(enforcer);";
  if (key == "EMIT_BOUND") return "XposedHelpers.callMethod(param.thisObject, param.method.getName(), param.args);";
  if (key == "EMIT") {
    auto sig = parse_signature(arg);
    const bool lifecycle = hierarchy.is_subclass(sig.class_name, m.lifecycle_object);
    const std::string target = lifecycle ? "lifeCycleObject" : "enforcer.resource";
    return "doNotAlterExecution = true; XposedHelpers.callMethod(" + target + ", \"" +
           sig.method_name + "\"); doNotAlterExecution = false;";
  }
  throw Error("UnsupportedProfile", "no binding for placeholder " + key);
}

class Emitter {
 public:
  void open(const std::string& name) {
    close();
    current_ = SectionSpan{name, line_ + 1, line_};
  }
  void write(const std::string& text) {
    for (char c : text) {
      if (c == '\n') ++line_;
    }
    text_ += text;
  }
  GeneratedModule finish() {
    close();
    return {std::move(text_), std::move(index_)};
  }

 private:
  void close() {
    if (!current_) return;
    current_->last_line = line_;
    index_.push_back(*current_);
    current_.reset();
  }

  std::string text_;
  std::size_t line_ = 0;
  std::optional<SectionSpan> current_;
  std::vector<SectionSpan> index_;
};

std::string render(const char* tmpl, const std::map<std::string, std::string>& values) {
  return substitute(tmpl, [&](const std::string& key, const std::string&) {
    auto it = values.find(key);
    if (it == values.end()) throw Error("UnsupportedProfile", "template slot lacks value for " + key);
    return it->second;
  });
}

GeneratedModule generate_xposed(const EnforcementModel& m, const TargetProfile& p,
                                const ApiCatalog& catalog) {
  const auto hierarchy = catalog.hierarchy();
  const auto slot = [&](const char* name) { return p.templates.at(name).c_str(); };
  Emitter out;

  out.open("entry");
  out.write(render(slot("entry"), {{"MODULE", m.name}, {"LIFECYCLE", m.lifecycle_object}, {"API", m.api}}));
  out.open("identity-check");
  out.write(slot("identity-check"));

  if (!m.transitions.empty()) {
    out.open("data-classes");
    out.write(render(slot("data-class"),
                     {{"INITIAL", std::to_string(state_index(m, m.initial_state()))}}));
    if (m.uses_special("resume")) out.write(slot("resume-class"));
  }

  for (const auto& [cls, sigs] : hooked_signatures(m, catalog)) {
    out.open("hook:" + simple_name(cls));
    const auto var = class_var(cls);
    out.write(render(slot("hook-block"), {{"CLASS", cls}, {"VAR", var}}));
    const bool lifecycle = hierarchy.is_subclass(cls, m.lifecycle_object);
    const std::string owner = lifecycle ? "param.thisObject" : "resource2lifeCycleObject.get(param.thisObject)";
    std::set<std::string> methods;
    for (const auto& sig : sigs) methods.insert(sig.method_name);
    for (const auto& method : methods) {
      out.write(render(slot("wrapper-open"), {{"VAR", var}, {"METHOD", method}}));
      for (Phase phase : {Phase::BeforeCall, Phase::AfterCall}) {
        ActionSignature sig{phase, cls, method};
        if (std::find(sigs.begin(), sigs.end(), sig) == sigs.end()) continue;
        auto neutral = transition_switch(m, sig, hierarchy);
        auto bound = substitute(neutral, [&](const std::string& key, const std::string& arg) {
          return bind_xposed(m, hierarchy, key, arg);
        });
        out.write(render(slot(phase == Phase::BeforeCall ? "before-wrapper" : "after-wrapper"),
                         {{"OWNER", owner}, {"SWITCH", indent_block(bound, "                    ")}}));
      }
      out.write(slot("wrapper-close"));
    }
  }
  out.write(slot("trailer"));
  return out.finish();
}

GeneratedModule generate_simscript(const EnforcementModel& m, const ApiCatalog& catalog) {
  const auto hierarchy = catalog.hierarchy();
  nlohmann::ordered_json doc;
  doc["format"] = "simscript/1";
  const auto base = model_to_json(m);
  for (const auto& [key, value] : base.items()) doc[key] = value;

  nlohmann::ordered_json dispatch = nlohmann::ordered_json::object();
  for (const auto& st : m.states) {
    auto rows = nlohmann::ordered_json::array();
    for (const auto& t : m.transitions) {
      if (t.from != st.id) continue;
      nlohmann::ordered_json row;
      row["on"] = guard_to_json(t.intercepted);
      row["to"] = t.to;
      row["outputs"] = nlohmann::ordered_json::array();
      for (const auto& o : t.outputs) row["outputs"].push_back(output_to_json(o));
      rows.push_back(std::move(row));
    }
    dispatch[st.id] = std::move(rows);
  }
  doc["dispatch"] = std::move(dispatch);

  nlohmann::ordered_json switches = nlohmann::ordered_json::object();
  for (const auto& [cls, sigs] : hooked_signatures(m, catalog)) {
    for (const auto& sig : sigs) switches[to_string(sig)] = transition_switch(m, sig, hierarchy);
  }
  doc["switch"] = std::move(switches);

  GeneratedModule g;
  g.source_text = doc.dump(2) + "\n";
  auto lines = static_cast<std::size_t>(std::count(g.source_text.begin(), g.source_text.end(), '\n'));
  g.section_index.push_back({"simscript", 1, lines});
  return g;
}

}  // namespace

TargetProfile profile_by_name(const std::string& name) {
  TargetProfile p;
  if (name == "xposed-java") {
    p.name = ProfileName::XposedJava;
    p.templates = {{"entry", kEntry},
                   {"identity-check", kIdentityCheck},
                   {"data-class", kDataClass},
                   {"resume-class", kResumeClass},
                   {"hook-block", kHookBlock},
                   {"wrapper-open", kWrapperOpen},
                   {"before-wrapper", kBeforeWrapper},
                   {"after-wrapper", kAfterWrapper},
                   {"wrapper-close", kWrapperClose},
                   {"trailer", kTrailer}};
    return p;
  }
  if (name == "simscript") {
    p.name = ProfileName::SimScript;
    p.templates = {{"entry", "format"},          {"identity-check", "name"},
                   {"data-class", "states"},     {"resume-class", "states"},
                   {"hook-block", "dispatch"},   {"wrapper-open", "switch"},
                   {"before-wrapper", "switch"}, {"after-wrapper", "switch"},
                   {"wrapper-close", "switch"},  {"trailer", ""}};
    return p;
  }
  throw Error("UnsupportedProfile", "unknown profile '" + name + "' (expected xposed-java or simscript)");
}

std::string profile_label(ProfileName name) {
  return name == ProfileName::XposedJava ? "xposed-java" : "simscript";
}

std::string output_file_name(const EnforcementModel& m, ProfileName profile) {
  return profile == ProfileName::XposedJava ? m.name + ".xposed-java.txt" : m.name + ".simscript.json";
}

std::string substitute(const std::string& text,
                       const std::function<std::string(const std::string&, const std::string&)>& bind) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (true) {
    auto start = text.find("${", pos);
    if (start == std::string::npos) break;
    auto end = text.find('}', start);
    if (end == std::string::npos) break;
    out.append(text, pos, start - pos);
    std::string body = text.substr(start + 2, end - start - 2);
    std::string arg;
    if (auto colon = body.find(':'); colon != std::string::npos) {
      arg = body.substr(colon + 1);
      body.resize(colon);
    }
    out += bind(body, arg);
    pos = end + 1;
  }
  out.append(text, pos, std::string::npos);
  return out;
}

std::vector<std::pair<std::string, std::vector<ActionSignature>>> hooked_signatures(
    const EnforcementModel& m, const ApiCatalog& catalog) {
  const auto hierarchy = catalog.hierarchy();
  std::vector<std::string> classes;
  bool wildcard = false;
  for (const auto& t : m.transitions) {
    wildcard = wildcard || std::holds_alternative<AnyExceptGuard>(t.intercepted);
    for (const auto& sig : guard_signatures(t.intercepted)) {
      if (std::find(classes.begin(), classes.end(), sig.class_name) == classes.end()) {
        classes.push_back(sig.class_name);
      }
    }
  }
  auto rank = [&](const std::string& cls) {
    if (hierarchy.is_subclass(cls, m.api)) return 0;
    if (hierarchy.is_subclass(cls, m.lifecycle_object)) return 1;
    return 2;
  };
  std::stable_sort(classes.begin(), classes.end(),
                   [&](const std::string& a, const std::string& b) { return rank(a) < rank(b); });

  std::vector<std::pair<std::string, std::vector<ActionSignature>>> out;
  for (const auto& cls : classes) {
    std::vector<ActionSignature> sigs;
    auto consider = [&](const ActionSignature& sig) {
      if (std::find(sigs.begin(), sigs.end(), sig) != sigs.end()) return;
      for (const auto& t : m.transitions) {
        if (guard_matches(t.intercepted, probe(sig), hierarchy)) {
          sigs.push_back(sig);
          return;
        }
      }
    };
    for (const auto& t : m.transitions) {
      for (const auto& sig : guard_signatures(t.intercepted)) {
        if (sig.class_name == cls) consider(sig);
      }
    }
    if (wildcard && catalog.find(cls)) {
      for (const auto& method : catalog.visible_methods(cls)) {
        consider({Phase::BeforeCall, cls, method});
        consider({Phase::AfterCall, cls, method});
      }
    }
    out.emplace_back(cls, std::move(sigs));
  }
  return out;
}

std::string transition_switch(const EnforcementModel& m, const ActionSignature& sig,
                              const ClassHierarchy& hierarchy) {
  const Event ev = probe(sig);
  std::ostringstream out;
  out << "switch (${STATE_VAR}) {\n";
  for (std::size_t s = 0; s < m.states.size(); ++s) {
    const Transition* fired = nullptr;
    for (const auto& t : m.transitions) {
      if (t.from == m.states[s].id && guard_matches(t.intercepted, ev, hierarchy)) {
        fired = &t;
        break;
      }
    }
    if (!fired) continue;
    out << "    case " << s << ": // " << to_string(sig) << " in state " << m.states[s].id
        << " -> " << fired->to << "\n";
    bool passed = false;
    for (const auto& action : fired->outputs) {
      if (const auto* emit = std::get_if<EmitAction>(&action)) {
        if (!passed && signature_matches(emit->signature, ev, hierarchy)) {
          out << "        ${PASS}\n";
          passed = true;
        } else {
          out << "        ${EMIT:" << to_string(emit->signature) << "}\n";
        }
      } else if (const auto* bound = std::get_if<EmitBoundAction>(&action)) {
        if (!passed) {
          out << "        ${PASS}\n";
          passed = true;
        } else {
          out << "        ${EMIT_BOUND:" << bound->variable << "}\n";
        }
      } else {
        out << "        ${RESUME}\n";
      }
    }
    if (!passed) out << "        ${SUPPRESS}\n";
    out << "        ${SET_STATE:" << state_index(m, fired->to) << "}\n";
    out << "        break;\n";
  }
  out << "    default:\n        break;\n}\n";
  return out.str();
}

GeneratedModule generate(const EnforcementModel& m, const TargetProfile& p, const ApiCatalog& catalog) {
  auto report = validate_model(m, catalog);
  if (!report.deployable()) {
    throw Error("UnvalidatedModel", "model " + m.name + " has validation errors: " + report.errors.front().code);
  }
  if (p.name == ProfileName::SimScript) return generate_simscript(m, catalog);
  return generate_xposed(m, p, catalog);
}

std::vector<std::string> section_report(const GeneratedModule& g) {
  std::vector<std::string> names;
  for (const auto& s : g.section_index) names.push_back(s.name);
  return names;
}

EnforcementModel load_simscript(const nlohmann::json& doc) {
  EnforcementModel m;
  try {
    m.name = doc.at("name").get<std::string>();
    m.lifecycle_object = doc.at("lifecycleObject").get<std::string>();
    m.api = doc.at("api").get<std::string>();
    for (const auto& st : doc.at("states")) {
      m.states.push_back(State{st.at("id").get<std::string>(), st.value("initial", false)});
    }
    const auto& dispatch = doc.at("dispatch");
    for (const auto& st : m.states) {
      for (const auto& row : dispatch.at(st.id)) {
        Transition t;
        t.from = st.id;
        t.to = row.at("to").get<std::string>();
        t.intercepted = guard_from_json(row.at("on"));
        for (const auto& o : row.at("outputs")) t.outputs.push_back(output_from_json(o));
        m.transitions.push_back(std::move(t));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("ParseError", std::string("simscript schema: ") + e.what());
  }
  return m;
}

}  // namespace enforcekit
