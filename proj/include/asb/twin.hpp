#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "asb/model.hpp"

namespace asb::twin {

struct BomEntry {
  std::string name;
  std::string version;
  std::optional<std::int64_t> offset;
  std::string signatureId;  // empty when not produced by a scan

  bool operator==(const BomEntry& o) const {
    return name == o.name && version == o.version && offset == o.offset &&
           signatureId == o.signatureId;
  }
};

struct Signature {
  std::string signatureId;
  std::string componentName;
  std::string version;
  std::string pattern;  // raw bytes, length >= 8
};

struct VulnRecord {
  std::string vulnId;
  std::string componentName;
  std::string lo, hi;  // inclusive version range
  std::string cwe;
  std::string interfaceKind;
};

struct Finding {
  std::string vulnId;
  std::string cwe;
  BomEntry bomEntry;
  std::string interfaceKind;
};

struct CyberDigitalTwin {
  std::string twinId;
  std::vector<BomEntry> bom;
  std::vector<model::InterfaceDecl> interfaces;
  std::string osName;
  std::map<std::string, std::string> osSettings;
  std::map<std::string, std::string> kernelConfig;
  std::map<std::string, std::string> securityConfig;
  std::vector<std::string> memoryMap;
  std::vector<std::pair<std::string, std::string>> credentials;  // user -> secretHash
  std::vector<std::string> firewallRules;
  std::vector<std::string> frameworks;
  std::vector<std::string> apis;
  std::map<std::string, std::string> appConfig;
  std::vector<std::string> cryptoMechanisms;
  std::vector<std::string> cryptoKeys;
  model::FlowGraph flowGraph;
};

class TwinError : public std::runtime_error {
 public:
  enum class Kind { io, format, invariant, bad_signature, version };
  TwinError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Exact-substring signature scan. Matches are reported in ascending offset
// order (ties by signatureId) with duplicate (name, version) collapsed to the
// first offset. chunk_size > 0 scans in parallel chunks overlapping by the
// longest pattern minus one; the result is identical to the single-pass scan.
std::vector<BomEntry> scan_firmware(std::string_view blob, const std::vector<Signature>& db,
                                    std::size_t chunk_size = 0);

struct MatchResult {
  std::vector<Finding> findings;
  std::vector<std::string> versionParseFailures;  // "component version" strings, skipped
};

MatchResult match_vulnerabilities(const std::vector<BomEntry>& bom,
                                  const std::vector<VulnRecord>& vulnDb);

struct Policy {
  std::string path;  // dotted path, [*] or [key] selects list elements
  std::string op;    // exists | eq | version_ge
  std::string value;
};

struct PolicyViolation {
  std::string path;    // concrete path (list indices resolved)
  std::string reason;
  std::string actual;
};

std::vector<PolicyViolation> check_policies(const CyberDigitalTwin& twin,
                                            const std::vector<Policy>& policies);

struct AssembledTwin {
  CyberDigitalTwin twin;
  std::vector<std::string> conflicts;  // "name: file version -> scan version"
};

// Merges the scan BOM into the twin file's declared BOM; the scan wins on
// version conflicts. All twin invariants are checked.
AssembledTwin assemble_twin(const std::vector<BomEntry>& scanBom,
                            const std::string& twin_json_text);

CyberDigitalTwin parse_twin(const std::string& json_text);
CyberDigitalTwin load_twin(const std::string& path);
std::string twin_to_json(const CyberDigitalTwin& twin);

std::vector<Signature> load_signature_db(const std::string& path);
std::vector<Signature> parse_signature_db(const std::string& json_text);
std::vector<VulnRecord> load_vuln_db(const std::string& path);
std::vector<VulnRecord> parse_vuln_db(const std::string& json_text);
std::vector<Policy> parse_policies(const std::string& json_text);

}  // namespace asb::twin
