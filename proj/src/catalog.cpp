#include "enforcekit/catalog.hpp"

#include <fstream>
#include <sstream>

#include "enforcekit/io.hpp"

namespace enforcekit {

std::string_view to_string(ResourceKind kind) {
  switch (kind) {
    case ResourceKind::Exclusive:
      return "exclusive";
    case ResourceKind::Shared:
      return "shared";
    case ResourceKind::None:
      return "none";
  }
  return "none";
}

ApiCatalog::ApiCatalog(std::map<std::string, ClassInfo, std::less<>> classes)
    : classes_(std::move(classes)) {
  check_acyclic();
}

const ClassInfo* ApiCatalog::find(std::string_view name) const {
  auto it = classes_.find(name);
  return it == classes_.end() ? nullptr : &it->second;
}

bool ApiCatalog::has_method(std::string_view class_name, std::string_view method) const {
  const ClassInfo* info = find(class_name);
  for (std::size_t depth = 0; info && depth <= classes_.size(); ++depth) {
    if (info->methods.count(method)) return true;
    info = info->parent ? find(*info->parent) : nullptr;
  }
  return false;
}

std::set<std::string, std::less<>> ApiCatalog::visible_methods(std::string_view class_name) const {
  std::set<std::string, std::less<>> out;
  const ClassInfo* info = find(class_name);
  for (std::size_t depth = 0; info && depth <= classes_.size(); ++depth) {
    out.insert(info->methods.begin(), info->methods.end());
    info = info->parent ? find(*info->parent) : nullptr;
  }
  return out;
}

const ClassInfo* ApiCatalog::resource_info(std::string_view class_name) const {
  const ClassInfo* info = find(class_name);
  for (std::size_t depth = 0; info && depth <= classes_.size(); ++depth) {
    if (info->resource_kind != ResourceKind::None) return info;
    info = info->parent ? find(*info->parent) : nullptr;
  }
  return nullptr;
}

ClassHierarchy ApiCatalog::hierarchy() const {
  ClassHierarchy h;
  for (const auto& [name, info] : classes_) h.add_class(name, info.parent);
  return h;
}

void ApiCatalog::add(const std::string& name, ClassInfo info) {
  auto previous = classes_;
  classes_[name] = std::move(info);
  try {
    check_acyclic();
  } catch (...) {
    classes_ = std::move(previous);
    throw;
  }
}

void ApiCatalog::check_acyclic() const {
  for (const auto& [name, info] : classes_) {
    if (info.parent && !classes_.count(*info.parent)) {
      throw Error("ParseError", "class " + name + " has undeclared parent " + *info.parent);
    }
    std::string_view current = name;
    for (std::size_t steps = 0;; ++steps) {
      if (steps > classes_.size()) {
        throw Error("ParseError", "parent cycle through class " + name);
      }
      const auto& parent = classes_.find(current)->second.parent;
      if (!parent) break;
      current = *parent;
    }
  }
}

namespace {

ResourceKind parse_kind(const std::string& text) {
  if (text == "exclusive") return ResourceKind::Exclusive;
  if (text == "shared") return ResourceKind::Shared;
  if (text == "none") return ResourceKind::None;
  throw Error("ParseError", "unknown resourceKind '" + text + "'");
}

std::set<std::string, std::less<>> string_set(const nlohmann::json& node, const char* key) {
  std::set<std::string, std::less<>> out;
  if (!node.contains(key)) return out;
  for (const auto& item : node.at(key)) out.insert(item.get<std::string>());
  return out;
}

}  // namespace

ApiCatalog catalog_from_json(const nlohmann::json& doc) {
  std::map<std::string, ClassInfo, std::less<>> classes;
  try {
    for (const auto& [name, node] : doc.at("classes").items()) {
      ClassInfo info;
      info.methods = string_set(node, "methods");
      if (node.contains("parent") && !node.at("parent").is_null()) {
        info.parent = node.at("parent").get<std::string>();
      }
      if (node.contains("resourceKind")) {
        info.resource_kind = parse_kind(node.at("resourceKind").get<std::string>());
      }
      info.acquire = string_set(node, "acquire");
      info.release = string_set(node, "release");
      classes.emplace(name, std::move(info));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("ParseError", std::string("catalog schema: ") + e.what());
  }
  return ApiCatalog(std::move(classes));
}

nlohmann::ordered_json catalog_to_json(const ApiCatalog& catalog) {
  nlohmann::ordered_json classes = nlohmann::ordered_json::object();
  for (const auto& [name, info] : catalog.classes()) {
    nlohmann::ordered_json node;
    node["methods"] = std::vector<std::string>(info.methods.begin(), info.methods.end());
    node["parent"] = info.parent ? nlohmann::ordered_json(*info.parent) : nullptr;
    node["resourceKind"] = std::string(to_string(info.resource_kind));
    if (!info.acquire.empty()) {
      node["acquire"] = std::vector<std::string>(info.acquire.begin(), info.acquire.end());
    }
    if (!info.release.empty()) {
      node["release"] = std::vector<std::string>(info.release.begin(), info.release.end());
    }
    classes[name] = std::move(node);
  }
  return {{"classes", std::move(classes)}};
}

ApiCatalog load_catalog(const std::filesystem::path& path) {
  return catalog_from_json(read_json_file(path));
}

}  // namespace enforcekit
