#pragma once

// JSON encodings for enforcement models and JSONL encodings for traces.

#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "enforcekit/model.hpp"

namespace enforcekit {

/// Reads and parses a JSON file. Syntax errors are reported as ParseError
/// carrying `path:line:column`.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

/// Decodes a model document. Rejects schema violations, malformed
/// signatures and more than one initial state. A missing initial state and
/// dangling state references are left for validate_model to report.
EnforcementModel model_from_json(const nlohmann::json& doc);
nlohmann::ordered_json model_to_json(const EnforcementModel& model);

EnforcementModel load_model(const std::filesystem::path& path);
void store_model(const EnforcementModel& model, const std::filesystem::path& path);

nlohmann::ordered_json guard_to_json(const Guard& guard);
nlohmann::ordered_json output_to_json(const OutputAction& action);
Guard guard_from_json(const nlohmann::json& node);
OutputAction output_from_json(const nlohmann::json& node);

Event event_from_json(const nlohmann::json& node);
nlohmann::ordered_json event_to_json(const Event& ev);

/// Throws IllFormedTrace if an AfterCall has no pending BeforeCall with the
/// same (receiver, class, method).
void check_well_formed(const Trace& trace);

Trace parse_trace(std::istream& in, const std::string& origin = "<trace>");
Trace load_trace(const std::filesystem::path& path);
std::string format_trace(const Trace& trace);
void store_trace(const Trace& trace, const std::filesystem::path& path);

}  // namespace enforcekit
