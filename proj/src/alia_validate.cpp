#include "asb/alia.hpp"

#include <map>
#include <regex>
#include <set>

namespace asb::alia {

std::vector<Diagnostic> validate_scenario(const AttackScenario& s) {
  std::vector<Diagnostic> out;
  auto error = [&](const std::string& msg, SourcePos pos) {
    out.push_back({Severity::error, msg, pos});
  };
  auto warning = [&](const std::string& msg, SourcePos pos) {
    out.push_back({Severity::warning, msg, pos});
  };

  std::set<std::string> step_names;
  for (const auto& a : s.actions) {
    if (!step_names.insert(a.step).second)
      error("duplicate action step '" + a.step + "'", a.pos);
  }

  for (const auto* conds : {&s.preConditions, &s.postConditions}) {
    for (const auto& c : *conds) {
      if (!step_names.count(c.step))
        error("condition references step '" + c.step + "' absent from actions", c.pos);
      if (c.kind == ConditionKind::can_message && !is_placeholder_token(c.name))
        error("CAN_MESSAGE argument '" + c.name + "' is not a placeholder", c.pos);
      if (c.kind == ConditionKind::output) {
        try {
          std::regex re(c.regex);
        } catch (const std::regex_error&) {
          error("OUTPUT regular expression does not compile: " + c.regex, c.pos);
        }
        if (!step_names.count(c.name))
          error("OUTPUT references step '" + c.name + "' absent from actions", c.pos);
      }
    }
  }

  // Single forward pass over actions: reads must see an earlier binding.
  std::set<std::string> bound;
  for (const auto& a : s.actions) {
    if (!a.call.find_arg("type")) error("call to '" + a.call.pattern + "' has no type argument", a.call.pos);
    for (const auto& [key, val] : a.call.args) {
      if (val.kind == ValueKind::variable && !bound.count(val.text))
        error("variable '" + val.text + "' read but not bound by an earlier action", val.pos);
    }
    if (a.binds) {
      if (!is_variable_token(*a.binds))
        error("bind name '" + *a.binds + "' is not a runtime variable", a.pos);
      if (!bound.insert(*a.binds).second)
        warning("variable '" + *a.binds + "' rebound; previous value is shadowed", a.pos);
    }
  }

  return out;
}

}  // namespace asb::alia
