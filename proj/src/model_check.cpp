#include <deque>
#include <map>
#include <sstream>

#include "asb/model.hpp"

namespace asb::model {

namespace {

void check_property_refs(const StateMachine& m, const Property& p) {
  switch (p.form) {
    case PropertyForm::never_reach:
      for (const auto& s : p.states)
        if (!m.states.count(s)) throw ModelError("property " + p.name + ": unknown state " + s);
      break;
    case PropertyForm::never_output:
      if (!m.outputs.count(p.outSymbol))
        throw ModelError("property " + p.name + ": unknown output symbol " + p.outSymbol);
      break;
    case PropertyForm::never_output_without_prior_input:
      if (!m.outputs.count(p.outSymbol))
        throw ModelError("property " + p.name + ": unknown output symbol " + p.outSymbol);
      if (!m.inputs.count(p.inSymbol))
        throw ModelError("property " + p.name + ": unknown input symbol " + p.inSymbol);
      break;
  }
}

}  // namespace

std::optional<Counterexample> check_property(const StateMachine& m, const Property& p) {
  check_property_refs(m, p);

  // Explicit-state BFS on the machine (times a 2-state monitor for the
  // armed/unarmed form). Defined transitions only: implicit self-loops emit
  // null and reach nothing new.
  using Node = std::pair<std::string, bool>;  // (state, monitor armed)
  const bool monitored = p.form == PropertyForm::never_output_without_prior_input;

  if (p.form == PropertyForm::never_reach && p.states.count(m.initial))
    return Counterexample{p, {}, m.initial, ""};

  std::map<Node, std::vector<std::string>> path;
  std::deque<Node> queue;
  Node start{m.initial, false};
  path[start] = {};
  queue.push_back(start);
  while (!queue.empty()) {
    Node cur = queue.front();
    queue.pop_front();
    for (const auto& input : m.inputs) {
      auto it = m.transitions.find({cur.first, input});
      if (it == m.transitions.end()) continue;
      const auto& [output, next_state] = it->second;
      std::vector<std::string> trace = path[cur];
      trace.push_back(input);

      switch (p.form) {
        case PropertyForm::never_reach:
          if (p.states.count(next_state)) return Counterexample{p, trace, next_state, output};
          break;
        case PropertyForm::never_output:
          if (output == p.outSymbol) return Counterexample{p, trace, next_state, output};
          break;
        case PropertyForm::never_output_without_prior_input:
          if (output == p.outSymbol && !cur.second)
            return Counterexample{p, trace, next_state, output};
          break;
      }

      bool armed = monitored && (cur.second || input == p.inSymbol);
      Node next{next_state, armed};
      if (!path.count(next)) {
        path[next] = trace;
        queue.push_back(next);
      }
    }
  }
  return std::nullopt;
}

std::vector<Property> parse_properties(std::string_view text) {
  std::vector<Property> out;
  std::istringstream is{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    std::string line = raw;
    for (size_t i = 0; i < line.size(); ++i)
      if (line[i] == '#' && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
        line = line.substr(0, i);
        break;
      }
    std::istringstream ls(line);
    std::string kw;
    if (!(ls >> kw)) continue;
    auto fail = [&](const std::string& msg) -> void {
      throw ModelError("properties:" + std::to_string(line_no) + ": " + msg);
    };
    if (kw != "property") fail("expected 'property'");
    Property p;
    std::string form;
    if (!(ls >> p.name >> form)) fail("expected: property <name> <form> ...");
    if (form == "NEVER_REACH") {
      p.form = PropertyForm::never_reach;
      std::string states;
      if (!(ls >> states)) fail("NEVER_REACH expects a comma-separated state list");
      size_t start = 0;
      while (start <= states.size()) {
        auto comma = states.find(',', start);
        std::string s = states.substr(
            start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!s.empty()) p.states.insert(s);
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      if (p.states.empty()) fail("NEVER_REACH expects at least one state");
    } else if (form == "NEVER_OUTPUT") {
      p.form = PropertyForm::never_output;
      if (!(ls >> p.outSymbol)) fail("NEVER_OUTPUT expects an output symbol");
    } else if (form == "NEVER_OUTPUT_WITHOUT_PRIOR_INPUT") {
      p.form = PropertyForm::never_output_without_prior_input;
      if (!(ls >> p.outSymbol >> p.inSymbol))
        fail("NEVER_OUTPUT_WITHOUT_PRIOR_INPUT expects <outSym> <inSym>");
    } else {
      fail("unknown property form '" + form + "'");
    }
    std::string extra;
    if (ls >> extra) fail("unexpected trailing token '" + extra + "'");
    out.push_back(std::move(p));
  }
  return out;
}

std::string print_property(const Property& p) {
  std::ostringstream os;
  os << "property " << p.name << " ";
  switch (p.form) {
    case PropertyForm::never_reach: {
      os << "NEVER_REACH ";
      bool first = true;
      for (const auto& s : p.states) {
        if (!first) os << ",";
        first = false;
        os << s;
      }
      break;
    }
    case PropertyForm::never_output:
      os << "NEVER_OUTPUT " << p.outSymbol;
      break;
    case PropertyForm::never_output_without_prior_input:
      os << "NEVER_OUTPUT_WITHOUT_PRIOR_INPUT " << p.outSymbol << " " << p.inSymbol;
      break;
  }
  return os.str();
}

SliceResult security_slice(const StateMachine& m, const std::vector<SliceFinding>& findings) {
  SliceResult result;
  result.machine = m;

  // component -> states carrying that component tag
  std::map<std::string, std::set<std::string>> by_component;
  for (const auto& [state, tags] : m.tags) {
    for (const auto& t : tags) {
      constexpr std::string_view kPrefix = "component=";
      if (t.substr(0, kPrefix.size()) == kPrefix)
        by_component[t.substr(kPrefix.size())].insert(state);
    }
  }

  std::set<std::string> unsafe;
  std::map<std::string, std::set<std::string>> unsafe_groups;  // component -> states
  std::set<std::string> seen_components;
  for (const auto& f : findings) {
    if (!seen_components.insert(f.component).second) continue;
    auto it = by_component.find(f.component);
    if (it == by_component.end()) {
      result.unmatchedComponents.push_back(f.component);
      continue;
    }
    for (const auto& s : it->second) {
      unsafe.insert(s);
      result.machine.tags[s].insert("unsafe");
    }
    unsafe_groups[f.component] = it->second;
  }

  if (unsafe.empty()) return result;

  // Forward reachability from initial.
  std::set<std::string> reachable{m.initial};
  std::deque<std::string> queue{m.initial};
  while (!queue.empty()) {
    auto cur = queue.front();
    queue.pop_front();
    for (const auto& [key, val] : m.transitions) {
      if (key.first != cur || reachable.count(val.second)) continue;
      reachable.insert(val.second);
      queue.push_back(val.second);
    }
  }
  // Backward reachability to any unsafe state.
  std::set<std::string> coreachable = unsafe;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& [key, val] : m.transitions) {
      if (coreachable.count(val.second) && !coreachable.count(key.first)) {
        coreachable.insert(key.first);
        changed = true;
      }
    }
  }

  std::set<std::string> keep;
  for (const auto& s : m.states)
    if (reachable.count(s) && coreachable.count(s)) keep.insert(s);
  keep.insert(m.initial);

  StateMachine sliced;
  sliced.name = m.name + "-slice";
  sliced.initial = m.initial;
  sliced.states = keep;
  for (const auto& [key, val] : m.transitions) {
    if (!keep.count(key.first) || !keep.count(val.second)) continue;
    sliced.transitions[key] = val;
    sliced.inputs.insert(key.second);
    if (!val.first.empty()) sliced.outputs.insert(val.first);
  }
  for (const auto& s : keep) {
    auto it = result.machine.tags.find(s);
    if (it != result.machine.tags.end()) sliced.tags[s] = it->second;
  }
  result.machine = std::move(sliced);

  for (const auto& [component, states] : unsafe_groups) {
    Property p;
    p.name = "unsafe-" + component;
    p.form = PropertyForm::never_reach;
    for (const auto& s : states)
      if (keep.count(s)) p.states.insert(s);
    if (!p.states.empty()) result.properties.push_back(std::move(p));
  }
  return result;
}

}  // namespace asb::model
