#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace asb::alia {

struct SourcePos {
  int line = 0;
  int col = 0;
};

// Token classes: `[A-Z][A-Z0-9_]*` is an SUT placeholder, `[a-z][A-Za-z0-9_]*`
// a runtime variable, anything else is a literal (quoted when it would
// otherwise collide with one of the first two).
enum class ValueKind { placeholder, variable, literal };

bool is_placeholder_token(std::string_view s);
bool is_variable_token(std::string_view s);
ValueKind classify_token(std::string_view s);

struct ArgValue {
  ValueKind kind = ValueKind::literal;
  std::string text;
  SourcePos pos;

  bool operator==(const ArgValue& o) const { return kind == o.kind && text == o.text; }
};

struct PatternCall {
  std::string pattern;
  std::vector<std::pair<std::string, ArgValue>> args;  // ordered key -> value
  SourcePos pos;

  const ArgValue* find_arg(std::string_view key) const;
  // The mandatory `type` argument, empty if absent.
  std::string type_value() const;

  bool operator==(const PatternCall& o) const { return pattern == o.pattern && args == o.args; }
};

struct ActionStep {
  std::string step;
  std::optional<std::string> binds;
  PatternCall call;
  SourcePos pos;

  bool operator==(const ActionStep& o) const {
    return step == o.step && binds == o.binds && call == o.call;
  }
};

enum class ConditionKind { bound, can_message, output };

struct ConditionEntry {
  std::string step;
  ConditionKind kind = ConditionKind::bound;
  std::string name;   // bound: variable/placeholder; can_message: placeholder; output: step ref
  std::string regex;  // output only
  SourcePos pos;

  bool operator==(const ConditionEntry& o) const {
    return step == o.step && kind == o.kind && name == o.name && regex == o.regex;
  }
};

struct AttackScenario {
  std::string name;
  std::vector<ConditionEntry> preConditions;
  std::vector<ActionStep> actions;
  std::vector<ConditionEntry> postConditions;

  bool operator==(const AttackScenario& o) const {
    return name == o.name && preConditions == o.preConditions && actions == o.actions &&
           postConditions == o.postConditions;
  }
};

enum class ParseErrorKind { syntax, duplicate_step, unknown_section };

class ParseError : public std::runtime_error {
 public:
  ParseError(ParseErrorKind kind, SourcePos pos, const std::string& msg);
  ParseErrorKind kind() const { return kind_; }
  SourcePos pos() const { return pos_; }

 private:
  ParseErrorKind kind_;
  SourcePos pos_;
};

enum class Severity { warning, error };

struct Diagnostic {
  Severity severity = Severity::error;
  std::string message;
  SourcePos pos;
};

// Syntax only; semantic invariants (dataflow, dangling step references) are
// validate_scenario's job so that programmatically built ASTs get the same
// checks.
AttackScenario parse_scenario(std::string_view text);

std::vector<Diagnostic> validate_scenario(const AttackScenario& s);

// Canonical text; parse_scenario(print_scenario(s)) is structurally equal
// to s for any scenario that validates without errors.
std::string print_scenario(const AttackScenario& s);

std::string to_string(Severity s);

}  // namespace asb::alia
