#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "enforcekit/catalog.hpp"
#include "enforcekit/model.hpp"

namespace enforcekit {

struct Finding {
  std::string code;
  std::string location;
  std::string message;

  bool operator==(const Finding&) const = default;
};

struct ValidationReport {
  std::vector<Finding> errors;
  std::vector<Finding> warnings;

  bool deployable() const { return errors.empty(); }
  bool has_error(const std::string& code) const;
  bool has_warning(const std::string& code) const;

  bool operator==(const ValidationReport&) const = default;
};

/// Error codes: MissingInitialState, MultipleInitialStates, DuplicateState,
/// DanglingStateRef, UnknownClass, UnknownMethod, ForeignClass,
/// EmptyExclusion, DuplicateExclusion, BadBinder, UnboundVariable,
/// UnknownSpecial, BadName.
/// Warning codes: OverlappingGuards, UnreachableState.
ValidationReport validate_model(const EnforcementModel& model, const ApiCatalog& catalog);

nlohmann::ordered_json report_to_json(const ValidationReport& report);
std::string format_report(const ValidationReport& report);

/// Concrete events (both phases, every visible catalog method) over the
/// classes a model can refer to. Used for guard-overlap analysis.
std::vector<ActionSignature> catalog_alphabet(const EnforcementModel& model,
                                              const ApiCatalog& catalog);

}  // namespace enforcekit
