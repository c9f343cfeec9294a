#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "asb/alia.hpp"
#include "asb/catalog.hpp"
#include "asb/model.hpp"
#include "asb/twin.hpp"

namespace asb::testgen {

struct CommandStep {
  std::string step;
  std::vector<std::string> requires_;  // placeholders or runtime variables
  std::string tool;
  std::vector<std::string> parameters;
  std::string environment = "local";  // "local" | "session:${var}"
  double duration_s = 0;
  std::optional<catalog::ExtractSpec> extract;
};

struct OracleCondition {
  std::string step;
  std::string rule;
};

struct ExecutableTestCase {
  std::string id;
  std::string sutId;
  std::vector<CommandStep> steps;
  std::vector<OracleCondition> oracle;
};

std::string testcase_to_json(const ExecutableTestCase& tc);
ExecutableTestCase testcase_from_json(const std::string& json_text);

class TestgenError : public std::runtime_error {
 public:
  enum class Kind { unknown_symbol, unknown_pattern, unbound_variable, unmappable_input, format };
  TestgenError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Fuses an abstract scenario with one SUT's data. Placeholders are replaced
// by symbol values, runtime variables stay as ${var}; preconditions plus the
// variables a step actually reads become `requires`; postconditions become
// the oracle block (CAN_MESSAGE concretized to CAN_SEEN with the catalog's
// observation window).
ExecutableTestCase concretize(const alia::AttackScenario& s, const catalog::SutRecord& r,
                              const catalog::Catalog& cat);

// --- Mapping database (findings -> DSL, trace symbols -> tool steps) ---------
struct CweMapEntry {
  std::string actionTemplate;  // ALIA action body, e.g. "shell = exploit(...)"
  std::string post;            // ALIA condition body for the same step
};

struct InputMapEntry {
  std::string patternKey;
  std::string environment = "local";
};

struct MappingDb {
  // cwe -> interface kind -> entry
  std::map<std::string, std::map<std::string, CweMapEntry>> cweMap;
  // input-symbol prefix -> entry (longest prefix wins)
  std::map<std::string, InputMapEntry> inputMap;
  // output-symbol prefix -> oracle rule template with ${payload}/${step}/${window}
  std::map<std::string, std::string> outputMap;
};

MappingDb parse_mapping(const std::string& json_text);
MappingDb load_mapping(const std::string& path);

struct UnmappedFinding {
  std::string vulnId;
  std::string cwe;
  std::string interfaceKind;
};

struct FindingsToDsl {
  std::vector<alia::AttackScenario> scenarios;
  std::vector<UnmappedFinding> unmapped;
};

// One scenario per finding with a (CWE, interface kind) mapping entry;
// findings without one are listed, never dropped.
FindingsToDsl scenarios_from_findings(const std::vector<twin::Finding>& findings,
                                      const MappingDb& mapping);

// One command step per trace input; the oracle asserts the observable of the
// trace's final transition output on `machine`.
ExecutableTestCase testcase_from_trace(const std::vector<std::string>& trace,
                                       const catalog::SutRecord& r, const catalog::Catalog& cat,
                                       const MappingDb& mapping, const model::StateMachine& machine,
                                       const std::string& id);

// Element 0 is the exact trace encoding (input symbols, one per line);
// elements 1..n flip exactly one bit of the final input's payload, chosen by
// a PRNG seeded with (seed, index). Bit-for-bit reproducible.
std::vector<std::string> fuzz_corpus_from_counterexample(const model::Counterexample& c, int n,
                                                         std::uint64_t seed);

}  // namespace asb::testgen
