#include <fstream>
#include <sstream>

#include "asb/model.hpp"

namespace asb::model {

std::pair<std::string, std::string> StateMachine::step(const std::string& state,
                                                       const std::string& input) const {
  auto it = transitions.find({state, input});
  if (it == transitions.end()) return {"", state};
  return it->second;
}

std::vector<std::string> StateMachine::run(const std::vector<std::string>& word) const {
  std::vector<std::string> out;
  std::string s = initial;
  for (const auto& in : word) {
    auto [o, next] = step(s, in);
    out.push_back(o);
    s = next;
  }
  return out;
}

namespace {

// '#' begins a comment only at the start of the line or after whitespace, so
// tokens like 5A1#11 survive.
std::string strip_fsm_comment(const std::string& line) {
  for (size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '#' && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t'))
      return line.substr(0, i);
  }
  return line;
}

std::vector<std::string> tokens(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string t;
  while (is >> t) out.push_back(t);
  return out;
}

}  // namespace

StateMachine parse_fsm(std::string_view text) {
  StateMachine m;
  m.name.clear();
  bool have_initial = false;
  std::istringstream is{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    auto toks = tokens(strip_fsm_comment(raw));
    if (toks.empty()) continue;
    const std::string& kw = toks[0];
    auto fail = [&](const std::string& msg) -> void {
      throw ModelError("fsm:" + std::to_string(line_no) + ": " + msg);
    };
    if (kw == "machine") {
      if (toks.size() != 2) fail("machine expects one name");
      m.name = toks[1];
    } else if (kw == "initial") {
      if (toks.size() != 2) fail("initial expects one state");
      m.initial = toks[1];
      m.states.insert(toks[1]);
      have_initial = true;
    } else if (kw == "state") {
      if (toks.size() < 2) fail("state expects an id");
      m.states.insert(toks[1]);
      for (size_t i = 2; i < toks.size(); ++i) {
        constexpr std::string_view kTag = "tag:";
        if (toks[i].substr(0, kTag.size()) != kTag) fail("state attributes must be tag:k=v");
        m.tags[toks[1]].insert(toks[i].substr(kTag.size()));
      }
    } else if (kw == "trans") {
      if (toks.size() != 6 || toks[3] != "/") fail("trans expects: src input / output dst");
      const std::string& src = toks[1];
      const std::string& input = toks[2];
      std::string output = toks[4] == "-" ? "" : toks[4];
      const std::string& dst = toks[5];
      if (m.transitions.count({src, input}))
        fail("duplicate transition (" + src + ", " + input + ")");
      m.states.insert(src);
      m.states.insert(dst);
      m.inputs.insert(input);
      if (!output.empty()) m.outputs.insert(output);
      m.transitions[{src, input}] = {output, dst};
    } else {
      fail("unknown keyword '" + kw + "'");
    }
  }
  if (m.name.empty()) m.name = "machine";
  if (!have_initial) throw ModelError("fsm: missing initial state");
  if (!m.states.count(m.initial)) throw ModelError("fsm: initial state not declared");
  return m;
}

std::string print_fsm(const StateMachine& m) {
  std::ostringstream os;
  os << "machine " << m.name << "\n";
  os << "initial " << m.initial << "\n";
  for (const auto& s : m.states) {
    os << "state " << s;
    auto it = m.tags.find(s);
    if (it != m.tags.end())
      for (const auto& t : it->second) os << " tag:" << t;
    os << "\n";
  }
  for (const auto& [key, val] : m.transitions) {
    os << "trans " << key.first << " " << key.second << " / "
       << (val.first.empty() ? "-" : val.first) << " " << val.second << "\n";
  }
  return os.str();
}

StateMachine load_fsm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open FSM file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_fsm(text);
}

StateMachine derive_machine(const FlowGraph& g, const std::vector<InterfaceDecl>& interfaces) {
  StateMachine m;
  m.name = "twin";
  std::set<std::string> node_ids;
  std::vector<std::string> entries;
  for (const auto& n : g.nodes) {
    node_ids.insert(n.id);
    m.states.insert(n.id);
    if (!n.component.empty()) m.tags[n.id].insert("component=" + n.component);
    if (n.kind == "entry") entries.push_back(n.id);
  }
  for (const auto& e : g.edges) {
    if (!node_ids.count(e.from) || !node_ids.count(e.to))
      throw ModelError("flow edge references missing node " +
                       (node_ids.count(e.from) ? e.to : e.from));
    if (m.transitions.count({e.from, e.trigger}))
      throw ModelError("nondeterministic flow at (" + e.from + ", " + e.trigger + ")");
    m.transitions[{e.from, e.trigger}] = {e.effect, e.to};
    m.inputs.insert(e.trigger);
    if (!e.effect.empty()) m.outputs.insert(e.effect);
  }
  if (entries.empty()) throw ModelError("flow graph has no entry node");

  std::set<std::string> iface_kinds;
  for (const auto& i : interfaces) iface_kinds.insert(i.kind);
  auto interface_triggered = [&](const std::string& trigger) {
    auto dot = trigger.find('.');
    return iface_kinds.count(trigger.substr(0, dot));
  };

  if (entries.size() == 1) {
    m.initial = entries.front();
  } else {
    // Synthetic environment state fanning out to every entry node on that
    // node's interface-triggered edges.
    const std::string env = "env";
    if (node_ids.count(env)) throw ModelError("flow graph reserves state id 'env'");
    m.states.insert(env);
    m.initial = env;
    for (const auto& entry : entries) {
      for (const auto& e : g.edges) {
        if (e.from != entry || !interface_triggered(e.trigger)) continue;
        if (m.transitions.count({env, e.trigger}))
          throw ModelError("nondeterministic flow at (env, " + e.trigger + ")");
        m.transitions[{env, e.trigger}] = {"", entry};
        m.inputs.insert(e.trigger);
      }
    }
  }
  return m;
}

}  // namespace asb::model
