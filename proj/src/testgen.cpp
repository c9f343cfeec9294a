#include "asb/testgen.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "asb/canframe.hpp"
#include "json.hpp"

namespace asb::testgen {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string fmt_duration(double d) {
  ordered_json j = d;
  return j.dump();
}

ordered_json extract_json(const catalog::ExtractSpec& e) {
  return {{"var", e.var}, {"pattern", e.pattern}, {"group", e.group}};
}

std::vector<std::string> var_references(const std::string& text) {
  std::vector<std::string> out;
  size_t i = 0;
  while ((i = text.find("${", i)) != std::string::npos) {
    auto close = text.find('}', i + 2);
    if (close == std::string::npos) break;
    out.push_back(text.substr(i + 2, close - i - 2));
    i = close + 1;
  }
  return out;
}

// Single-pass ${NAME} substitution; substituted text is not re-expanded.
std::string substitute(const std::string& text,
                       const std::function<std::optional<std::string>(const std::string&)>& lookup) {
  std::string out;
  size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '$' && i + 1 < text.size() && text[i + 1] == '{') {
      auto close = text.find('}', i + 2);
      if (close != std::string::npos) {
        std::string name = text.substr(i + 2, close - i - 2);
        if (auto v = lookup(name)) {
          out += *v;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(text[i]);
    ++i;
  }
  return out;
}

std::string regex_escape(const std::string& s) {
  static const std::string special = R"(\^$.|?*+()[]{})";
  std::string out;
  for (char c : s) {
    if (special.find(c) != std::string::npos) out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

}  // namespace

std::string testcase_to_json(const ExecutableTestCase& tc) {
  ordered_json j;
  j["id"] = tc.id;
  j["sutId"] = tc.sutId;
  j["steps"] = ordered_json::array();
  for (const auto& s : tc.steps) {
    ordered_json sj;
    sj["step"] = s.step;
    sj["requires"] = s.requires_;
    sj["tool"] = s.tool;
    sj["parameters"] = s.parameters;
    sj["environment"] = s.environment;
    sj["duration_s"] = s.duration_s;
    if (s.extract) sj["extract"] = extract_json(*s.extract);
    j["steps"].push_back(sj);
  }
  ordered_json conds = ordered_json::array();
  for (const auto& c : tc.oracle) conds.push_back({{"step", c.step}, {"rule", c.rule}});
  j["oracle"] = {{"conditions", conds}};
  return j.dump(2) + "\n";
}

ExecutableTestCase testcase_from_json(const std::string& json_text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(json_text);
  } catch (const ordered_json::parse_error& e) {
    throw TestgenError(TestgenError::Kind::format, e.what());
  }
  ExecutableTestCase tc;
  try {
    tc.id = doc.at("id").get<std::string>();
    tc.sutId = doc.at("sutId").get<std::string>();
    for (const auto& sj : doc.at("steps")) {
      CommandStep s;
      s.step = sj.at("step").get<std::string>();
      for (const auto& r : sj.value("requires", ordered_json::array()))
        s.requires_.push_back(r.get<std::string>());
      s.tool = sj.at("tool").get<std::string>();
      for (const auto& p : sj.at("parameters")) s.parameters.push_back(p.get<std::string>());
      s.environment = sj.value("environment", "local");
      s.duration_s = sj.value("duration_s", 0.0);
      if (sj.contains("extract")) {
        catalog::ExtractSpec e;
        e.var = sj["extract"].at("var").get<std::string>();
        e.pattern = sj["extract"].at("pattern").get<std::string>();
        e.group = sj["extract"].value("group", 1);
        s.extract = e;
      }
      tc.steps.push_back(std::move(s));
    }
    if (doc.contains("oracle"))
      for (const auto& c : doc["oracle"].value("conditions", ordered_json::array()))
        tc.oracle.push_back({c.at("step").get<std::string>(), c.at("rule").get<std::string>()});
  } catch (const ordered_json::exception& e) {
    throw TestgenError(TestgenError::Kind::format, e.what());
  }
  return tc;
}

ExecutableTestCase concretize(const alia::AttackScenario& s, const catalog::SutRecord& r,
                              const catalog::Catalog& cat) {
  ExecutableTestCase tc;
  tc.id = (s.name.empty() ? "scenario" : s.name) + "@" + r.sutId;
  tc.sutId = r.sutId;

  auto symbol_value = [&](const std::string& placeholder) -> std::string {
    return catalog::resolve_symbol(r, placeholder).value;  // throws UnknownSymbol
  };

  // Arg keys resolve to the call's argument values; placeholders resolve to
  // SUT symbols; anything else must be a runtime variable and stays ${var}.
  auto value_text = [&](const alia::ArgValue& v) -> std::string {
    switch (v.kind) {
      case alia::ValueKind::placeholder: return symbol_value(v.text);
      case alia::ValueKind::variable: return "${" + v.text + "}";
      case alia::ValueKind::literal: return v.text;
    }
    return v.text;
  };

  std::set<std::string> bound;  // extract vars bound by earlier steps
  for (const auto& action : s.actions) {
    const auto& tpl =
        catalog::resolve_tool(cat, r.sutId, action.call.pattern, action.call.type_value());

    CommandStep step;
    step.step = action.step;
    step.tool = tpl.tool;
    step.duration_s = tpl.defaultDuration_s;

    for (const auto& p : tpl.params) {
      step.parameters.push_back(substitute(p, [&](const std::string& name) -> std::optional<std::string> {
        if (alia::is_placeholder_token(name)) return symbol_value(name);
        if (const alia::ArgValue* arg = action.call.find_arg(name)) return value_text(*arg);
        return std::nullopt;  // plain runtime variable, left for the engine
      }));
    }

    // A call that hands a shell variable over runs inside that session.
    if (const alia::ArgValue* shell = action.call.find_arg("shell");
        shell && shell->kind == alia::ValueKind::variable)
      step.environment = "session:${" + shell->text + "}";

    if (action.binds && tpl.extract) {
      catalog::ExtractSpec e = *tpl.extract;
      e.var = *action.binds;
      step.extract = e;
    } else if (tpl.extract) {
      step.extract = tpl.extract;
    }

    // requires = declared preconditions, then variables the step reads.
    for (const auto& pre : s.preConditions)
      if (pre.step == action.step && pre.kind == alia::ConditionKind::bound)
        step.requires_.push_back(pre.name);
    auto need = [&](const std::string& var) {
      if (std::find(step.requires_.begin(), step.requires_.end(), var) == step.requires_.end())
        step.requires_.push_back(var);
    };
    for (const auto& p : step.parameters)
      for (const auto& name : var_references(p))
        if (alia::is_variable_token(name)) need(name);
    for (const auto& name : var_references(step.environment)) need(name);

    // Static dataflow over extract bindings: reads must be satisfiable.
    for (const auto& name : step.requires_) {
      if (!alia::is_variable_token(name)) continue;
      if (!bound.count(name))
        throw TestgenError(TestgenError::Kind::unbound_variable,
                           "variable " + name + " read by step '" + action.step +
                               "' is never bound by an earlier extract");
    }
    if (step.extract) bound.insert(step.extract->var);
    tc.steps.push_back(std::move(step));
  }

  for (const auto& post : s.postConditions) {
    OracleCondition cond;
    cond.step = post.step;
    switch (post.kind) {
      case alia::ConditionKind::bound:
        cond.rule = "BOUND(" + post.name + ")";
        break;
      case alia::ConditionKind::can_message: {
        const auto& binding = catalog::resolve_symbol(r, post.name);
        auto frame = can::normalize_frame(binding.value);
        if (!frame)
          throw TestgenError(TestgenError::Kind::format,
                             post.name + " does not hold CAN frame text");
        cond.rule = "CAN_SEEN(" + *frame + ", " + fmt_duration(cat.canSeenWindow_s) + ")";
        break;
      }
      case alia::ConditionKind::output: {
        std::string escaped;
        for (char c : post.regex) {
          if (c == '\\' || c == '"') escaped.push_back('\\');
          escaped.push_back(c);
        }
        cond.rule = "OUTPUT_MATCHES(" + post.name + ", \"" + escaped + "\")";
        break;
      }
    }
    tc.oracle.push_back(std::move(cond));
  }
  return tc;
}

MappingDb parse_mapping(const std::string& json_text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(json_text);
  } catch (const ordered_json::parse_error& e) {
    throw TestgenError(TestgenError::Kind::format, e.what());
  }
  MappingDb db;
  try {
    const ordered_json cweMap = doc.value("cweMap", ordered_json::object());
    for (const auto& [cwe, byIface] : cweMap.items())
      for (const auto& [iface, entry] : byIface.items())
        db.cweMap[cwe][iface] = {entry.at("template").get<std::string>(),
                                 entry.value("post", "")};
    const ordered_json inputMap = doc.value("inputMap", ordered_json::object());
    for (const auto& [prefix, entry] : inputMap.items())
      db.inputMap[prefix] = {entry.at("pattern").get<std::string>(),
                             entry.value("environment", "local")};
    const ordered_json outputMap = doc.value("outputMap", ordered_json::object());
    for (const auto& [prefix, rule] : outputMap.items())
      db.outputMap[prefix] = rule.get<std::string>();
  } catch (const ordered_json::exception& e) {
    throw TestgenError(TestgenError::Kind::format, e.what());
  }
  return db;
}

MappingDb load_mapping(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TestgenError(TestgenError::Kind::format, "cannot open mapping file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_mapping(text);
}

FindingsToDsl scenarios_from_findings(const std::vector<twin::Finding>& findings,
                                      const MappingDb& mapping) {
  FindingsToDsl out;
  int seq = 0;
  for (const auto& f : findings) {
    const CweMapEntry* entry = nullptr;
    auto cit = mapping.cweMap.find(f.cwe);
    if (cit != mapping.cweMap.end()) {
      auto iit = cit->second.find(f.interfaceKind);
      if (iit != cit->second.end()) entry = &iit->second;
    }
    if (!entry) {
      out.unmapped.push_back({f.vulnId, f.cwe, f.interfaceKind});
      continue;
    }
    std::ostringstream text;
    text << "# scenario: " << f.vulnId << "-" << f.interfaceKind << "-" << seq++ << "\n";
    text << "PreConditions:\n";
    text << "Actions:\n";
    text << "  attack: " << entry->actionTemplate << "\n";
    text << "PostConditions:\n";
    if (!entry->post.empty()) text << "  attack: " << entry->post << "\n";
    alia::AttackScenario scenario = alia::parse_scenario(text.str());
    for (const auto& d : alia::validate_scenario(scenario))
      if (d.severity == alia::Severity::error)
        throw TestgenError(TestgenError::Kind::format,
                           "mapping entry for " + f.cwe + "/" + f.interfaceKind +
                               " yields an invalid scenario: " + d.message);
    out.scenarios.push_back(std::move(scenario));
  }
  return out;
}

namespace {

// Longest matching prefix in the input map.
const InputMapEntry* lookup_input(const MappingDb& mapping, const std::string& base) {
  const InputMapEntry* best = nullptr;
  size_t best_len = 0;
  for (const auto& [prefix, entry] : mapping.inputMap) {
    if (base.rfind(prefix, 0) == 0 && prefix.size() >= best_len) {
      best = &entry;
      best_len = prefix.size();
    }
  }
  return best;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '-');
  return out;
}

}  // namespace

ExecutableTestCase testcase_from_trace(const std::vector<std::string>& trace,
                                       const catalog::SutRecord& r, const catalog::Catalog& cat,
                                       const MappingDb& mapping, const model::StateMachine& machine,
                                       const std::string& id) {
  ExecutableTestCase tc;
  tc.id = id;
  tc.sutId = r.sutId;

  int idx = 0;
  for (const auto& symbol : trace) {
    auto colon = symbol.find(':');
    std::string base = symbol.substr(0, colon);
    std::string payload = colon == std::string::npos ? "" : symbol.substr(colon + 1);

    const InputMapEntry* entry = lookup_input(mapping, base);
    if (!entry)
      throw TestgenError(TestgenError::Kind::unmappable_input, "unmappable input " + symbol);
    const auto& tpl = catalog::resolve_tool_key(cat, r.sutId, entry->patternKey);

    CommandStep step;
    step.step = "t" + std::to_string(idx++) + "-" + sanitize(base);
    step.tool = tpl.tool;
    step.duration_s = tpl.defaultDuration_s;
    step.environment = entry->environment;
    for (const auto& p : tpl.params) {
      step.parameters.push_back(substitute(p, [&](const std::string& name) -> std::optional<std::string> {
        if (alia::is_placeholder_token(name))
          return catalog::resolve_symbol(r, name).value;
        if (name == "payload") return payload;
        return std::nullopt;
      }));
    }
    step.extract = tpl.extract;
    for (const auto& p : step.parameters)
      for (const auto& name : var_references(p))
        if (alia::is_variable_token(name)) step.requires_.push_back(name);
    for (const auto& name : var_references(step.environment))
      if (std::find(step.requires_.begin(), step.requires_.end(), name) == step.requires_.end())
        step.requires_.push_back(name);
    tc.steps.push_back(std::move(step));
  }

  if (!trace.empty()) {
    auto outputs = machine.run(trace);
    const std::string& final_output = outputs.back();
    if (!final_output.empty()) {
      auto colon = final_output.find(':');
      std::string base = final_output.substr(0, colon);
      std::string payload = colon == std::string::npos ? "" : final_output.substr(colon + 1);
      const std::string& final_step = tc.steps.back().step;

      std::string rule;
      const std::string* best = nullptr;
      size_t best_len = 0;
      for (const auto& [prefix, tmpl] : mapping.outputMap) {
        if (final_output.rfind(prefix, 0) == 0 && prefix.size() >= best_len) {
          best = &tmpl;
          best_len = prefix.size();
        }
      }
      if (best) {
        rule = substitute(*best, [&](const std::string& name) -> std::optional<std::string> {
          if (name == "payload") return payload;
          if (name == "step") return final_step;
          if (name == "window") return fmt_duration(cat.canSeenWindow_s);
          return std::nullopt;
        });
      } else if (base == "can.frame" && !payload.empty()) {
        auto frame = can::normalize_frame(payload);
        if (!frame)
          throw TestgenError(TestgenError::Kind::format,
                             "output symbol carries invalid frame text: " + final_output);
        rule = "CAN_SEEN(" + *frame + ", " + fmt_duration(cat.canSeenWindow_s) + ")";
      } else {
        rule = "OUTPUT_MATCHES(" + final_step + ", \"" + regex_escape(final_output) + "\")";
      }
      tc.oracle.push_back({final_step, rule});
    }
  }
  return tc;
}

std::vector<std::string> fuzz_corpus_from_counterexample(const model::Counterexample& c, int n,
                                                         std::uint64_t seed) {
  std::string encoded;
  for (const auto& input : c.trace) encoded += input + "\n";

  std::vector<std::string> corpus;
  corpus.push_back(encoded);
  if (c.trace.empty() || n <= 0) return corpus;

  // Payload region of the final input: bytes after its first ':', or the
  // whole symbol when it has none.
  const std::string& final_input = c.trace.back();
  size_t final_start = encoded.size() - final_input.size() - 1;
  auto colon = final_input.find(':');
  size_t region_off = final_start + (colon == std::string::npos ? 0 : colon + 1);
  size_t region_len = colon == std::string::npos ? final_input.size() : final_input.size() - colon - 1;
  if (region_len == 0) {
    region_off = final_start;
    region_len = final_input.size();
  }

  for (int i = 1; i <= n; ++i) {
    std::seed_seq sq{static_cast<std::uint64_t>(seed), static_cast<std::uint64_t>(i)};
    std::mt19937_64 rng(sq);
    std::uint64_t bit = rng() % (region_len * 8);
    std::string mutated = encoded;
    mutated[region_off + bit / 8] ^= static_cast<char>(1u << (bit % 8));
    corpus.push_back(std::move(mutated));
  }
  return corpus;
}

}  // namespace asb::testgen
