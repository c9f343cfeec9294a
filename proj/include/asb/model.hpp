#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace asb::model {

// Deterministic Mealy machine. The completeness convention makes behavior
// total: an undefined (state, input) pair acts as a self-loop emitting the
// null output. Null output is spelled "-" in the text format and is the empty
// string in memory.
struct StateMachine {
  std::string name = "machine";
  std::set<std::string> states;
  std::string initial;
  std::set<std::string> inputs;
  std::set<std::string> outputs;  // non-null output alphabet
  std::map<std::pair<std::string, std::string>, std::pair<std::string, std::string>>
      transitions;  // (state, input) -> (output, next); output "" is null
  std::map<std::string, std::set<std::string>> tags;

  // One step under the completeness convention.
  std::pair<std::string, std::string> step(const std::string& state,
                                           const std::string& input) const;
  // Output word for an input word, starting at initial.
  std::vector<std::string> run(const std::vector<std::string>& word) const;

  bool operator==(const StateMachine& o) const {
    return states == o.states && initial == o.initial && inputs == o.inputs &&
           outputs == o.outputs && transitions == o.transitions && tags == o.tags &&
           name == o.name;
  }
};

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- FSM text format -------------------------------------------------------
// Line based; `#` at the start of a line or after whitespace begins a comment
// (symbols may contain '#', e.g. CAN frame payloads).
//   machine <name>
//   initial <state>
//   state <id> [tag:k=v ...]
//   trans <src> <input> / <output|-> <dst>
StateMachine parse_fsm(std::string_view text);
std::string print_fsm(const StateMachine& m);
StateMachine load_fsm(const std::string& path);

// --- Derivation from a twin flow graph --------------------------------------
struct FlowNode {
  std::string id;
  std::string component;  // empty when absent
  std::string kind;       // entry | block | sink
};
struct FlowEdge {
  std::string from, to;
  std::string trigger;
  std::string effect;  // empty = null
};
struct FlowGraph {
  std::vector<FlowNode> nodes;
  std::vector<FlowEdge> edges;
};

struct InterfaceDecl {
  std::string kind;  // can | bt | gps | eth | other
  std::string id;
};

StateMachine derive_machine(const FlowGraph& g, const std::vector<InterfaceDecl>& interfaces);

// --- Mutation ----------------------------------------------------------------
enum class MutOp { CTT, CTO, DTR, ATR };

std::string to_string(MutOp op);
std::optional<MutOp> mut_op_from(std::string_view name);

struct Mutant {
  MutOp op = MutOp::CTT;
  std::string state, input;  // locus
  std::string change;        // operator-specific description
  StateMachine machine;
};

// All first-order mutants in deterministic (operator, state, input, change)
// order.
std::vector<Mutant> enumerate_mutants(const StateMachine& m, const std::set<MutOp>& ops);

// Shortest input word whose output sequences differ between m and the mutant
// (ties broken by lexicographic input order); nullopt when the mutant is
// observably equivalent.
std::optional<std::vector<std::string>> distinguishing_test(const StateMachine& m,
                                                            const StateMachine& mutant);

// --- Model checking ----------------------------------------------------------
enum class PropertyForm { never_reach, never_output, never_output_without_prior_input };

struct Property {
  std::string name;
  PropertyForm form = PropertyForm::never_reach;
  std::set<std::string> states;     // never_reach
  std::string outSymbol, inSymbol;  // never_output / never_output_without_prior_input
};

struct Counterexample {
  Property property;
  std::vector<std::string> trace;
  std::string finalState;
  std::string finalOutput;  // "" = null
};

// nullopt = property holds. Counterexamples are shortest (BFS) and replay on
// the machine to the claimed violation.
std::optional<Counterexample> check_property(const StateMachine& m, const Property& p);

std::vector<Property> parse_properties(std::string_view text);
std::string print_property(const Property& p);

// --- Security slice ----------------------------------------------------------
struct SliceFinding {
  std::string component;
  std::string label;  // e.g. the vuln id, used in the property name
};

struct SliceResult {
  StateMachine machine;  // unsafe-tagged, restricted to reachable/co-reachable states
  std::vector<Property> properties;
  std::vector<std::string> unmatchedComponents;
};

SliceResult security_slice(const StateMachine& m, const std::vector<SliceFinding>& findings);

// --- Distance & ranking -------------------------------------------------------
inline constexpr std::uint64_t kUnreachable = std::numeric_limits<std::uint64_t>::max();

std::uint64_t interface_distance(const StateMachine& m, const std::string& state);
std::uint64_t interface_distance(const StateMachine& m, const std::string& state,
                                 const std::string& input);

// Ascending by locus distance, stable for equal distances, unreachable last.
std::vector<Mutant> rank_mutants(std::vector<Mutant> mutants, const StateMachine& m);

}  // namespace asb::model
