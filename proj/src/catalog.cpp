#include "asb/catalog.hpp"

#include <fstream>
#include <regex>
#include <set>

#include "asb/alia.hpp"
#include "asb/canframe.hpp"
#include "json.hpp"

namespace asb::catalog {

using nlohmann::json;

std::optional<SymbolKind> symbol_kind_from(std::string_view name) {
  if (name == "can_frame") return SymbolKind::can_frame;
  if (name == "bt_interface") return SymbolKind::bt_interface;
  if (name == "host") return SymbolKind::host;
  if (name == "port") return SymbolKind::port;
  if (name == "payload") return SymbolKind::payload;
  if (name == "string") return SymbolKind::string_;
  return std::nullopt;
}

std::string to_string(SymbolKind k) {
  switch (k) {
    case SymbolKind::can_frame: return "can_frame";
    case SymbolKind::bt_interface: return "bt_interface";
    case SymbolKind::host: return "host";
    case SymbolKind::port: return "port";
    case SymbolKind::payload: return "payload";
    case SymbolKind::string_: return "string";
  }
  return "string";
}

const SutRecord* Catalog::find_sut(std::string_view sutId) const {
  for (const auto& s : suts)
    if (s.sutId == sutId) return &s;
  return nullptr;
}

namespace {

[[noreturn]] void invariant_error(const std::string& record, const std::string& field,
                                  const std::string& msg) {
  throw CatalogError(CatalogErrorKind::invariant, record + "." + field + ": " + msg);
}

// Collects the names referenced as ${NAME} in a parameter string.
std::vector<std::string> references(const std::string& param) {
  std::vector<std::string> out;
  size_t i = 0;
  while ((i = param.find("${", i)) != std::string::npos) {
    auto close = param.find('}', i + 2);
    if (close == std::string::npos) break;
    out.push_back(param.substr(i + 2, close - i - 2));
    i = close + 1;
  }
  return out;
}

ExtractSpec parse_extract(const json& j, const std::string& where) {
  ExtractSpec e;
  e.var = j.at("var").get<std::string>();
  e.pattern = j.at("pattern").get<std::string>();
  e.group = j.value("group", 1);
  if (!alia::is_variable_token(e.var))
    invariant_error(where, "extract.var", "'" + e.var + "' is not a runtime variable name");
  if (e.group < 1) invariant_error(where, "extract.group", "group must be >= 1");
  std::regex re;
  try {
    re = std::regex(e.pattern);
  } catch (const std::regex_error& ex) {
    invariant_error(where, "extract.pattern", std::string("does not compile: ") + ex.what());
  }
  if (static_cast<int>(re.mark_count()) < e.group)
    invariant_error(where, "extract.pattern",
                    "has fewer capture groups than extract.group");
  return e;
}

ToolTemplate parse_template(const std::string& key, const json& j, const std::string& where) {
  ToolTemplate t;
  t.patternKey = key;
  t.tool = j.at("tool").get<std::string>();
  for (const auto& p : j.at("params")) t.params.push_back(p.get<std::string>());
  t.defaultDuration_s = j.value("defaultDuration_s", 0.0);
  if (t.defaultDuration_s < 0) invariant_error(where, "defaultDuration_s", "must be >= 0");
  if (j.contains("extract")) t.extract = parse_extract(j.at("extract"), where);
  for (const auto& p : t.params) {
    for (const auto& name : references(p)) {
      if (!alia::is_placeholder_token(name) && !alia::is_variable_token(name))
        invariant_error(where, "params",
                        "${" + name + "} is neither a placeholder nor a runtime variable");
    }
  }
  return t;
}

SymbolBinding parse_symbol(const std::string& name, const json& j, const std::string& where) {
  SymbolBinding b;
  auto kind = symbol_kind_from(j.at("kind").get<std::string>());
  if (!kind) invariant_error(where, name + ".kind", "unknown kind");
  b.kind = *kind;
  b.value = j.at("value").get<std::string>();
  if (b.kind == SymbolKind::can_frame) {
    auto frame = can::normalize_frame(b.value);
    if (!frame) invariant_error(where, name, "'" + b.value + "' is not CAN frame text");
    b.value = *frame;  // dots stripped, hex uppercased
  } else if (b.kind == SymbolKind::port) {
    int port = 0;
    try {
      size_t used = 0;
      port = std::stoi(b.value, &used);
      if (used != b.value.size()) port = 0;
    } catch (...) {
      port = 0;
    }
    if (port < 1 || port > 65535) invariant_error(where, name, "port must be in 1..65535");
  }
  return b;
}

// Placeholder references must close over declared symbols; runtime variables
// are resolved later by the execution engine.
void check_reference_closure(const ToolTemplate& t, const std::set<std::string>& symbols,
                             const std::string& where) {
  for (const auto& p : t.params) {
    for (const auto& name : references(p)) {
      if (alia::is_placeholder_token(name) && !symbols.count(name))
        invariant_error(where, "params", "${" + name + "} names no declared symbol");
    }
  }
}

}  // namespace

Catalog parse_catalog(const std::string& json_text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw CatalogError(CatalogErrorKind::format, origin + ": " + e.what());
  }
  Catalog cat;
  try {
    cat.canSeenWindow_s = doc.value("canSeenWindow_s", 10.0);
    std::set<std::string> all_symbols;
    std::set<std::string> ids;
    for (const auto& s : doc.at("suts")) {
      SutRecord r;
      r.sutId = s.at("sutId").get<std::string>();
      if (r.sutId.empty()) invariant_error("sut", "sutId", "must be non-empty");
      if (!ids.insert(r.sutId).second)
        invariant_error(r.sutId, "sutId", "duplicate SUT id");
      const json symbols = s.value("symbols", json::object());
      for (const auto& [name, sym] : symbols.items()) {
        if (!alia::is_placeholder_token(name))
          invariant_error(r.sutId, "symbols", "'" + name + "' is not a placeholder token");
        r.symbols.emplace(name, parse_symbol(name, sym, r.sutId));
        all_symbols.insert(name);
      }
      const json overrides = s.value("toolOverrides", json::object());
      for (const auto& [key, tpl] : overrides.items())
        r.toolOverrides.emplace(key, parse_template(key, tpl, r.sutId + "/" + key));
      cat.suts.push_back(std::move(r));
    }
    for (const auto& [key, tpl] : doc.at("patterns").items())
      cat.patterns.emplace(key, parse_template(key, tpl, "patterns/" + key));

    for (const auto& r : cat.suts) {
      std::set<std::string> own;
      for (const auto& [name, unused] : r.symbols) own.insert(name);
      for (const auto& [key, t] : r.toolOverrides)
        check_reference_closure(t, own, r.sutId + "/" + key);
    }
    for (const auto& [key, t] : cat.patterns)
      check_reference_closure(t, all_symbols, "patterns/" + key);
  } catch (const json::exception& e) {
    throw CatalogError(CatalogErrorKind::format, origin + ": " + e.what());
  }
  return cat;
}

Catalog load_catalog(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CatalogError(CatalogErrorKind::io, "cannot open catalog file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_catalog(text, path);
}

const SymbolBinding& resolve_symbol(const SutRecord& r, const std::string& placeholder) {
  auto it = r.symbols.find(placeholder);
  if (it == r.symbols.end())
    throw CatalogError(CatalogErrorKind::unknown_symbol,
                       "unknown symbol " + placeholder + " for SUT " + r.sutId);
  return it->second;
}

const ToolTemplate& resolve_tool_key(const Catalog& c, const std::string& sutId,
                                     const std::string& patternKey) {
  if (const SutRecord* r = c.find_sut(sutId)) {
    auto it = r->toolOverrides.find(patternKey);
    if (it != r->toolOverrides.end()) return it->second;
  }
  auto it = c.patterns.find(patternKey);
  if (it == c.patterns.end())
    throw CatalogError(CatalogErrorKind::unknown_pattern, "unknown pattern " + patternKey);
  return it->second;
}

const ToolTemplate& resolve_tool(const Catalog& c, const std::string& sutId,
                                 const std::string& patternName, const std::string& type) {
  return resolve_tool_key(c, sutId, patternName + "/" + type);
}

}  // namespace asb::catalog
