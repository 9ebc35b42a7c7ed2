#pragma once

// Core value types: action signatures, guards, transitions, enforcement
// models and the events they consume.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace enforcekit {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

enum class Phase { BeforeCall, AfterCall };

std::string_view to_string(Phase phase);

/// Name of the pseudo-class that hosts enforcer-side operations (`e.resume`).
inline constexpr std::string_view kEnforcerClass = "e";

/// `before#<class>.<method>` or `after#<class>.<method>`.
struct ActionSignature {
  Phase phase = Phase::BeforeCall;
  std::string class_name;
  std::string method_name;

  auto operator<=>(const ActionSignature&) const = default;
};

ActionSignature parse_signature(std::string_view text);
std::string to_string(const ActionSignature& sig);

/// True when `text` is a non-empty identifier (`<init>` and `<clinit>` are
/// accepted as method identifiers).
bool is_identifier(std::string_view text);
bool is_dotted_name(std::string_view text);

/// Single-inheritance class graph used to resolve subclass matches.
class ClassHierarchy {
 public:
  /// Registers `name`; re-declaring with a different parent throws.
  void add_class(const std::string& name,
                 const std::optional<std::string>& parent = std::nullopt);

  bool contains(std::string_view name) const;
  std::optional<std::string> parent_of(std::string_view name) const;

  /// Reflexive: a class is a subclass of itself. Unknown classes are never
  /// subclasses of anything.
  bool is_subclass(std::string_view name, std::string_view ancestor) const;

  const std::map<std::string, std::optional<std::string>, std::less<>>& classes() const {
    return parents_;
  }

 private:
  std::map<std::string, std::optional<std::string>, std::less<>> parents_;
};

enum class Source { App, Enforcer, Framework };

std::string_view to_string(Source source);

using Scalar = std::variant<std::string, std::int64_t, bool>;

struct Event {
  Phase phase = Phase::BeforeCall;
  std::string class_name;
  std::string method_name;
  /// 0 is reserved for static calls.
  std::int64_t receiver_id = 0;
  std::int64_t component_id = 0;
  std::vector<Scalar> args;
  Source source = Source::App;

  bool operator==(const Event&) const = default;
};

using Trace = std::vector<Event>;

/// Short human form, e.g. `after#android.hardware.Camera.open@7`.
std::string describe(const Event& ev);

bool signature_matches(const ActionSignature& sig, const Event& ev,
                       const ClassHierarchy& hierarchy);

struct ExactGuard {
  ActionSignature signature;
  bool operator==(const ExactGuard&) const = default;
};

struct AnyExceptGuard {
  std::vector<ActionSignature> exclude;
  std::optional<std::string> binder;
  bool operator==(const AnyExceptGuard&) const = default;
};

using Guard = std::variant<ExactGuard, AnyExceptGuard>;

/// Name bound by the guard, if any.
std::optional<std::string> guard_binder(const Guard& guard);

/// Every signature mentioned by the guard (the exact one or the exclusions).
std::vector<ActionSignature> guard_signatures(const Guard& guard);

struct Binding {
  std::optional<std::string> name;
};

/// Returns a binding on match. For AnyExcept guards the binding names the
/// guard's binder (the bound value is always the matched event).
std::optional<Binding> guard_matches(const Guard& guard, const Event& ev,
                                     const ClassHierarchy& hierarchy);

struct EmitAction {
  ActionSignature signature;
  bool operator==(const EmitAction&) const = default;
};

struct EmitBoundAction {
  std::string variable;
  bool operator==(const EmitBoundAction&) const = default;
};

struct SpecialAction {
  std::string name;
  bool operator==(const SpecialAction&) const = default;
};

using OutputAction = std::variant<EmitAction, EmitBoundAction, SpecialAction>;

/// The registered special operations.
const std::set<std::string, std::less<>>& special_operations();

struct Transition {
  std::string from;
  std::string to;
  Guard intercepted;
  std::vector<OutputAction> outputs;

  bool operator==(const Transition&) const = default;
};

struct State {
  std::string id;
  bool initial = false;
  bool operator==(const State&) const = default;
};

struct EnforcementModel {
  std::string name;
  std::string lifecycle_object;
  std::string api;
  std::vector<State> states;
  std::vector<Transition> transitions;

  /// Id of the unique initial state; throws if there is not exactly one.
  const std::string& initial_state() const;
  bool has_state(std::string_view id) const;
  bool uses_special(std::string_view name) const;

  bool operator==(const EnforcementModel&) const = default;
};

}  // namespace enforcekit
