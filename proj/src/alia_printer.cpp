#include "asb/alia.hpp"

#include <cctype>
#include <sstream>

namespace asb::alia {

namespace {

// '#' is deliberately unsafe: it would start a comment on reparse.
bool bare_safe(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
    if (!ok) return false;
  }
  return true;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out.push_back(c);
    }
  }
  out += "\"";
  return out;
}

std::string print_value(const ArgValue& v) {
  switch (v.kind) {
    case ValueKind::placeholder:
    case ValueKind::variable:
      return v.text;
    case ValueKind::literal:
      // A literal must not reparse as a placeholder or variable.
      if (bare_safe(v.text) && classify_token(v.text) == ValueKind::literal) return v.text;
      return quote(v.text);
  }
  return v.text;
}

void print_condition(std::ostringstream& os, const ConditionEntry& c) {
  os << "  " << c.step << ": ";
  switch (c.kind) {
    case ConditionKind::bound:
      os << c.name;
      break;
    case ConditionKind::can_message:
      os << "CAN_MESSAGE(" << c.name << ")";
      break;
    case ConditionKind::output:
      os << "OUTPUT(";
      if (bare_safe(c.name))
        os << c.name;
      else
        os << quote(c.name);
      os << ", " << quote(c.regex) << ")";
      break;
  }
  os << "\n";
}

}  // namespace

std::string print_scenario(const AttackScenario& s) {
  std::ostringstream os;
  if (!s.name.empty()) os << "# scenario: " << s.name << "\n";
  os << "PreConditions:\n";
  for (const auto& c : s.preConditions) print_condition(os, c);
  os << "Actions:\n";
  for (const auto& a : s.actions) {
    os << "  " << a.step << ": ";
    if (a.binds) os << *a.binds << " = ";
    os << a.call.pattern << "(";
    bool first = true;
    for (const auto& [k, v] : a.call.args) {
      if (!first) os << ", ";
      first = false;
      os << k << ":" << print_value(v);
    }
    os << ")\n";
  }
  os << "PostConditions:\n";
  for (const auto& c : s.postConditions) print_condition(os, c);
  return os.str();
}

}  // namespace asb::alia
