#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include <json.hpp>

#include "enforcekit/model.hpp"

namespace enforcekit {

enum class ResourceKind { None, Exclusive, Shared };

std::string_view to_string(ResourceKind kind);

struct ClassInfo {
  std::set<std::string, std::less<>> methods;
  std::optional<std::string> parent;
  ResourceKind resource_kind = ResourceKind::None;
  // Resource protocol hints: which methods acquire and which release the
  // underlying resource. Used by the resource manager and the simulator.
  std::set<std::string, std::less<>> acquire;
  std::set<std::string, std::less<>> release;
};

/// Ground truth for method-existence checks and the class hierarchy.
class ApiCatalog {
 public:
  ApiCatalog() = default;
  explicit ApiCatalog(std::map<std::string, ClassInfo, std::less<>> classes);

  const std::map<std::string, ClassInfo, std::less<>>& classes() const { return classes_; }
  const ClassInfo* find(std::string_view name) const;

  /// Looks the method up on `class_name` and its ancestors.
  bool has_method(std::string_view class_name, std::string_view method) const;
  /// All methods visible on `class_name` (own and inherited), sorted.
  std::set<std::string, std::less<>> visible_methods(std::string_view class_name) const;

  /// Nearest ancestor-or-self carrying a resource kind other than None.
  const ClassInfo* resource_info(std::string_view class_name) const;

  ClassHierarchy hierarchy() const;

  /// Adds or replaces a class; rejects parent cycles and undeclared parents.
  void add(const std::string& name, ClassInfo info);

 private:
  void check_acyclic() const;

  std::map<std::string, ClassInfo, std::less<>> classes_;
};

ApiCatalog catalog_from_json(const nlohmann::json& doc);
nlohmann::ordered_json catalog_to_json(const ApiCatalog& catalog);
ApiCatalog load_catalog(const std::filesystem::path& path);

}  // namespace enforcekit
