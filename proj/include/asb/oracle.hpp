#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "asb/netline.hpp"

namespace asb::oracle {

enum class EventSource { can, tool, binding };

struct Event {
  std::int64_t timestamp_ms = 0;
  EventSource source = EventSource::tool;
  std::string step;     // tool events; empty otherwise
  std::string payload;  // can: frame text; tool: stdout chunk; binding: "var=value"
};

// Rule grammar:
//   rule    := unary ('AND' unary)*
//   unary   := 'NOT' unary | primary
//   primary := BOUND(name) | CAN_SEEN(frame, window_s) |
//              OUTPUT_MATCHES(step, "regex") | '(' rule ')'
struct Rule;
using RulePtr = std::shared_ptr<const Rule>;

struct Rule {
  enum class Kind { bound, can_seen, output_matches, not_, and_ };
  Kind kind = Kind::bound;
  std::string name;          // bound: variable; output_matches: step
  std::string frame;         // can_seen, normalized
  std::int64_t window_ms = 0;  // can_seen
  std::string regex;         // output_matches
  RulePtr lhs, rhs;          // not_: lhs; and_: both
};

class RuleSyntaxError : public std::runtime_error {
 public:
  RuleSyntaxError(size_t pos, const std::string& msg)
      : std::runtime_error("col " + std::to_string(pos + 1) + ": " + msg), pos_(pos) {}
  size_t pos() const { return pos_; }

 private:
  size_t pos_;
};

class MissingAnchor : public std::runtime_error {
 public:
  explicit MissingAnchor(const std::string& step)
      : std::runtime_error("no start anchor for step '" + step + "'"), step_(step) {}
  const std::string& step() const { return step_; }

 private:
  std::string step_;
};

RulePtr parse_rule(const std::string& text);

struct Condition {
  std::string step;
  std::string ruleText;
  RulePtr rule;
};

struct RuleSet {
  std::vector<Condition> conditions;
};

RuleSet parse_rules(const std::vector<std::pair<std::string, std::string>>& conditions);

struct ConditionVerdict {
  std::string step;
  std::string rule;
  bool met = false;
  std::optional<Event> evidence;
};

struct Verdict {
  std::vector<ConditionVerdict> perCondition;
  bool insecure = false;  // INSECURE iff at least one condition MET

  std::string aggregate() const { return insecure ? "INSECURE" : "SECURE"; }
};

// Merges event streams (stable by timestamp, ties can < tool < binding) and
// evaluates every condition on the merged snapshot. `anchors` holds each
// step's start timestamp; CAN_SEEN windows are closed: a frame at exactly
// anchor + window is MET.
Verdict evaluate(const RuleSet& rules, std::vector<Event> events,
                 const std::map<std::string, std::int64_t>& anchors);

// Tails a simulated CAN bus; every `FRAME <ID>#<HEX>` line becomes a can
// event stamped at receipt. Malformed lines are counted, not fatal.
class CanSubscriber {
 public:
  CanSubscriber() = default;
  ~CanSubscriber();

  bool connect(const std::string& host, int port);
  void stop();
  std::vector<Event> events() const;
  int malformed_count() const;

 private:
  void read_loop();

  mutable std::mutex mu_;
  std::vector<Event> events_;
  int malformed_ = 0;
  net::LineClient client_;
  std::thread thread_;
  std::atomic<bool> running_{false};
};

}  // namespace asb::oracle
