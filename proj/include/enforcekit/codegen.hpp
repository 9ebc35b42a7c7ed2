#pragma once

// Module generator. The transition logic is rendered once as a
// platform-neutral switch with ${...} placeholders; each profile supplies
// the scaffolding and the placeholder bindings.

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "enforcekit/catalog.hpp"
#include "enforcekit/model.hpp"

namespace enforcekit {

enum class ProfileName { XposedJava, SimScript };

struct TargetProfile {
  ProfileName name = ProfileName::XposedJava;
  /// Scaffolding fragments keyed by slot: entry, identity-check,
  /// data-class, hook-block, before-wrapper, after-wrapper, trailer.
  std::map<std::string, std::string> templates;
};

/// "xposed-java" or "simscript". Throws UnsupportedProfile otherwise.
TargetProfile profile_by_name(const std::string& name);
std::string profile_label(ProfileName name);

struct SectionSpan {
  std::string name;
  std::size_t first_line = 0;  ///< 1-based, inclusive
  std::size_t last_line = 0;   ///< inclusive
};

struct GeneratedModule {
  std::string source_text;
  std::vector<SectionSpan> section_index;
};

/// Throws UnvalidatedModel if `m` has validation errors against `catalog`.
GeneratedModule generate(const EnforcementModel& m, const TargetProfile& p, const ApiCatalog& catalog);

std::vector<std::string> section_report(const GeneratedModule& g);

/// `<name>.xposed-java.txt` or `<name>.simscript.json`.
std::string output_file_name(const EnforcementModel& m, ProfileName profile);

/// Platform-neutral switch text for one hooked signature, one case per state
/// in which some transition fires on it.
std::string transition_switch(const EnforcementModel& m, const ActionSignature& sig,
                              const ClassHierarchy& hierarchy);

/// Signatures the generated module hooks, grouped by class in hook order.
std::vector<std::pair<std::string, std::vector<ActionSignature>>> hooked_signatures(
    const EnforcementModel& m, const ApiCatalog& catalog);

/// Rebuilds a model from a SimScript document's dispatch annotation.
EnforcementModel load_simscript(const nlohmann::json& doc);

/// Replaces every ${KEY} or ${KEY:arg} placeholder via `bind(key, arg)`.
std::string substitute(const std::string& text,
                       const std::function<std::string(const std::string&, const std::string&)>& bind);

}  // namespace enforcekit
