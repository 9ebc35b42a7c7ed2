#include "enforcekit/io.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

namespace enforcekit {

namespace {

std::string location_of(const std::string& text, std::size_t byte) {
  std::size_t line = 1, column = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return std::to_string(line) + ":" + std::to_string(column);
}

std::string id_of(const nlohmann::json& node) {
  if (node.is_string()) return node.get<std::string>();
  if (node.is_number_integer()) return std::to_string(node.get<long long>());
  throw Error("ParseError", "state id must be a string or integer");
}

ActionSignature signature_field(const nlohmann::json& node) {
  try {
    return parse_signature(node.get<std::string>());
  } catch (const Error& e) {
    throw Error("ParseError", e.what());
  }
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("IoError", "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("IoError", "cannot write " + path.string());
  out << text;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::string text = read_text_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("ParseError",
                path.string() + ":" + location_of(text, e.byte) + ": " + e.what());
  }
}

Guard guard_from_json(const nlohmann::json& node) {
  const auto kind = node.at("kind").get<std::string>();
  if (kind == "exact") return ExactGuard{signature_field(node.at("signature"))};
  if (kind == "anyExcept") {
    AnyExceptGuard g;
    for (const auto& sig : node.at("exclude")) g.exclude.push_back(signature_field(sig));
    if (node.contains("binder") && !node.at("binder").is_null()) {
      g.binder = node.at("binder").get<std::string>();
    }
    return g;
  }
  throw Error("ParseError", "unknown guard kind '" + kind + "'");
}

OutputAction output_from_json(const nlohmann::json& node) {
  const auto kind = node.at("kind").get<std::string>();
  auto value = node.at("value").get<std::string>();
  if (kind == "emit") return EmitAction{signature_field(node.at("value"))};
  if (kind == "emitBound") return EmitBoundAction{value};
  if (kind == "special") {
    const std::string prefix = std::string(kEnforcerClass) + ".";
    if (value.rfind(prefix, 0) == 0) value = value.substr(prefix.size());
    return SpecialAction{value};
  }
  throw Error("ParseError", "unknown output kind '" + kind + "'");
}

nlohmann::ordered_json guard_to_json(const Guard& guard) {
  nlohmann::ordered_json node;
  if (const auto* exact = std::get_if<ExactGuard>(&guard)) {
    node["kind"] = "exact";
    node["signature"] = to_string(exact->signature);
    return node;
  }
  const auto& any = std::get<AnyExceptGuard>(guard);
  node["kind"] = "anyExcept";
  node["exclude"] = nlohmann::ordered_json::array();
  for (const auto& sig : any.exclude) node["exclude"].push_back(to_string(sig));
  if (any.binder) node["binder"] = *any.binder;
  return node;
}

nlohmann::ordered_json output_to_json(const OutputAction& action) {
  nlohmann::ordered_json node;
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, EmitAction>) {
          node["kind"] = "emit";
          node["value"] = to_string(a.signature);
        } else if constexpr (std::is_same_v<T, EmitBoundAction>) {
          node["kind"] = "emitBound";
          node["value"] = a.variable;
        } else {
          node["kind"] = "special";
          node["value"] = a.name;
        }
      },
      action);
  return node;
}

EnforcementModel model_from_json(const nlohmann::json& doc) {
  EnforcementModel m;
  try {
    m.name = doc.at("name").get<std::string>();
    m.lifecycle_object = doc.at("lifecycleObject").get<std::string>();
    m.api = doc.at("api").get<std::string>();
    for (const auto& st : doc.at("states")) {
      m.states.push_back(State{id_of(st.at("id")), st.value("initial", false)});
    }
    for (const auto& t : doc.at("transitions")) {
      Transition tr;
      tr.from = id_of(t.at("from"));
      tr.to = id_of(t.at("to"));
      tr.intercepted = guard_from_json(t.at("intercepted"));
      for (const auto& out : t.at("outputs")) tr.outputs.push_back(output_from_json(out));
      m.transitions.push_back(std::move(tr));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("ParseError", std::string("model schema: ") + e.what());
  }
  int initial = 0;
  for (const auto& st : m.states) initial += st.initial ? 1 : 0;
  if (initial > 1) {
    throw Error("ParseError", "model " + m.name + " declares " + std::to_string(initial) +
                                  " initial states");
  }
  return m;
}

nlohmann::ordered_json model_to_json(const EnforcementModel& model) {
  nlohmann::ordered_json doc;
  doc["name"] = model.name;
  doc["lifecycleObject"] = model.lifecycle_object;
  doc["api"] = model.api;
  doc["states"] = nlohmann::ordered_json::array();
  for (const auto& st : model.states) {
    doc["states"].push_back({{"id", st.id}, {"initial", st.initial}});
  }
  doc["transitions"] = nlohmann::ordered_json::array();
  for (const auto& t : model.transitions) {
    nlohmann::ordered_json node;
    node["from"] = t.from;
    node["to"] = t.to;
    node["intercepted"] = guard_to_json(t.intercepted);
    node["outputs"] = nlohmann::ordered_json::array();
    for (const auto& out : t.outputs) node["outputs"].push_back(output_to_json(out));
    doc["transitions"].push_back(std::move(node));
  }
  return doc;
}

EnforcementModel load_model(const std::filesystem::path& path) {
  auto doc = read_json_file(path);
  try {
    return model_from_json(doc);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void store_model(const EnforcementModel& model, const std::filesystem::path& path) {
  write_text_file(path, model_to_json(model).dump(2) + "\n");
}

Event event_from_json(const nlohmann::json& node) {
  Event ev;
  const auto phase = node.at("phase").get<std::string>();
  if (phase == "before") {
    ev.phase = Phase::BeforeCall;
  } else if (phase == "after") {
    ev.phase = Phase::AfterCall;
  } else {
    throw Error("ParseError", "unknown phase '" + phase + "'");
  }
  ev.class_name = node.at("class").get<std::string>();
  ev.method_name = node.at("method").get<std::string>();
  if (!is_dotted_name(ev.class_name) || !is_identifier(ev.method_name)) {
    throw Error("ParseError", "bad class or method name");
  }
  ev.receiver_id = node.at("receiver").get<std::int64_t>();
  ev.component_id = node.at("component").get<std::int64_t>();
  for (const auto& arg : node.value("args", nlohmann::json::array())) {
    if (arg.is_string()) {
      ev.args.emplace_back(arg.get<std::string>());
    } else if (arg.is_boolean()) {
      ev.args.emplace_back(arg.get<bool>());
    } else if (arg.is_number_integer()) {
      ev.args.emplace_back(arg.get<std::int64_t>());
    } else {
      throw Error("ParseError", "event args must be strings, integers or booleans");
    }
  }
  const auto source = node.value("source", std::string("app"));
  if (source == "app") {
    ev.source = Source::App;
  } else if (source == "enforcer") {
    ev.source = Source::Enforcer;
  } else if (source == "framework") {
    ev.source = Source::Framework;
  } else {
    throw Error("ParseError", "unknown source '" + source + "'");
  }
  return ev;
}

nlohmann::ordered_json event_to_json(const Event& ev) {
  nlohmann::ordered_json node;
  node["phase"] = std::string(to_string(ev.phase));
  node["class"] = ev.class_name;
  node["method"] = ev.method_name;
  node["receiver"] = ev.receiver_id;
  node["component"] = ev.component_id;
  node["args"] = nlohmann::ordered_json::array();
  for (const auto& arg : ev.args) {
    std::visit([&](const auto& v) { node["args"].push_back(v); }, arg);
  }
  node["source"] = std::string(to_string(ev.source));
  return node;
}

void check_well_formed(const Trace& trace) {
  std::map<std::tuple<std::int64_t, std::string, std::string>, int> open;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& ev = trace[i];
    auto key = std::make_tuple(ev.receiver_id, ev.class_name, ev.method_name);
    if (ev.phase == Phase::BeforeCall) {
      ++open[key];
    } else if (auto it = open.find(key); it != open.end() && it->second > 0) {
      --it->second;
    } else {
      throw Error("IllFormedTrace", "event " + std::to_string(i + 1) + " (" + describe(ev) +
                                        ") has no matching BeforeCall");
    }
  }
}

Trace parse_trace(std::istream& in, const std::string& origin) {
  Trace trace;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      trace.push_back(event_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error("ParseError", origin + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error("ParseError", origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  check_well_formed(trace);
  return trace;
}

Trace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("IoError", "cannot open " + path.string());
  return parse_trace(in, path.string());
}

std::string format_trace(const Trace& trace) {
  std::string out;
  for (const auto& ev : trace) {
    out += event_to_json(ev).dump();
    out += '\n';
  }
  return out;
}

void store_trace(const Trace& trace, const std::filesystem::path& path) {
  write_text_file(path, format_trace(trace));
}

}  // namespace enforcekit
