#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace asb::catalog {

enum class SymbolKind { can_frame, bt_interface, host, port, payload, string_ };

std::optional<SymbolKind> symbol_kind_from(std::string_view name);
std::string to_string(SymbolKind k);

struct SymbolBinding {
  SymbolKind kind = SymbolKind::string_;
  std::string value;  // can_frame values are stored normalized
};

struct ExtractSpec {
  std::string var;
  std::string pattern;
  int group = 1;
};

struct ToolTemplate {
  std::string patternKey;  // "patternName/type"
  std::string tool;
  std::vector<std::string> params;  // may contain ${NAME} references
  double defaultDuration_s = 0;
  std::optional<ExtractSpec> extract;
};

struct SutRecord {
  std::string sutId;
  std::map<std::string, SymbolBinding> symbols;
  std::map<std::string, ToolTemplate> toolOverrides;
};

struct Catalog {
  std::vector<SutRecord> suts;
  std::map<std::string, ToolTemplate> patterns;
  double canSeenWindow_s = 10.0;

  const SutRecord* find_sut(std::string_view sutId) const;
};

enum class CatalogErrorKind { io, format, invariant, unknown_symbol, unknown_pattern };

class CatalogError : public std::runtime_error {
 public:
  CatalogError(CatalogErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  CatalogErrorKind kind() const { return kind_; }

 private:
  CatalogErrorKind kind_;
};

// Parses and validates a catalog document; any invariant violation aborts the
// load with the offending record and field in the message.
Catalog load_catalog(const std::string& path);
Catalog parse_catalog(const std::string& json_text, const std::string& origin = "<string>");

const SymbolBinding& resolve_symbol(const SutRecord& r, const std::string& placeholder);

// Per-SUT override wins over the shared pattern library.
const ToolTemplate& resolve_tool(const Catalog& c, const std::string& sutId,
                                 const std::string& patternName, const std::string& type);
const ToolTemplate& resolve_tool_key(const Catalog& c, const std::string& sutId,
                                     const std::string& patternKey);

}  // namespace asb::catalog
