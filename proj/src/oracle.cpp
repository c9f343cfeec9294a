#include "asb/oracle.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <regex>

#include "asb/canframe.hpp"

namespace asb::oracle {

namespace {

class RuleParser {
 public:
  explicit RuleParser(const std::string& text) : text_(text) {}

  RulePtr parse() {
    auto r = parse_and();
    skip_ws();
    if (i_ < text_.size()) fail("unexpected trailing text");
    return r;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) { throw RuleSyntaxError(i_, msg); }

  void skip_ws() {
    while (i_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[i_]))) ++i_;
  }

  bool consume_word(std::string_view w) {
    skip_ws();
    if (text_.compare(i_, w.size(), w) != 0) return false;
    size_t end = i_ + w.size();
    if (end < text_.size() &&
        (std::isalnum(static_cast<unsigned char>(text_[end])) || text_[end] == '_'))
      return false;
    i_ = end;
    return true;
  }

  void expect(char c) {
    skip_ws();
    if (i_ >= text_.size() || text_[i_] != c) fail(std::string("expected '") + c + "'");
    ++i_;
  }

  std::string bare_token() {
    skip_ws();
    size_t start = i_;
    while (i_ < text_.size()) {
      char c = text_[i_];
      if (c == ',' || c == '(' || c == ')' || std::isspace(static_cast<unsigned char>(c))) break;
      ++i_;
    }
    if (i_ == start) fail("expected a token");
    return text_.substr(start, i_ - start);
  }

  std::string quoted_string() {
    skip_ws();
    if (i_ >= text_.size() || text_[i_] != '"') fail("expected a quoted string");
    ++i_;
    std::string out;
    while (true) {
      if (i_ >= text_.size()) fail("unterminated string");
      char c = text_[i_++];
      if (c == '"') break;
      if (c == '\\' && i_ < text_.size() && (text_[i_] == '"' || text_[i_] == '\\')) {
        out.push_back(text_[i_++]);
      } else {
        out.push_back(c);
      }
    }
    return out;
  }

  RulePtr parse_and() {
    RulePtr lhs = parse_unary();
    while (consume_word("AND")) {
      auto node = std::make_shared<Rule>();
      node->kind = Rule::Kind::and_;
      node->lhs = lhs;
      node->rhs = parse_unary();
      lhs = node;
    }
    return lhs;
  }

  RulePtr parse_unary() {
    if (consume_word("NOT")) {
      auto node = std::make_shared<Rule>();
      node->kind = Rule::Kind::not_;
      node->lhs = parse_unary();
      return node;
    }
    return parse_primary();
  }

  RulePtr parse_primary() {
    skip_ws();
    if (i_ < text_.size() && text_[i_] == '(') {
      ++i_;
      auto r = parse_and();
      expect(')');
      return r;
    }
    auto node = std::make_shared<Rule>();
    if (consume_word("BOUND")) {
      node->kind = Rule::Kind::bound;
      expect('(');
      node->name = bare_token();
      expect(')');
    } else if (consume_word("CAN_SEEN")) {
      node->kind = Rule::Kind::can_seen;
      expect('(');
      std::string frame = bare_token();
      auto normalized = can::normalize_frame(frame);
      if (!normalized) fail("'" + frame + "' is not CAN frame text");
      node->frame = *normalized;
      expect(',');
      std::string window = bare_token();
      double w = 0;
      try {
        size_t used = 0;
        w = std::stod(window, &used);
        if (used != window.size()) w = 0;
      } catch (...) {
        w = 0;
      }
      if (w <= 0) fail("window must be a positive number of seconds");
      node->window_ms = static_cast<std::int64_t>(std::llround(w * 1000.0));
      expect(')');
    } else if (consume_word("OUTPUT_MATCHES")) {
      node->kind = Rule::Kind::output_matches;
      expect('(');
      skip_ws();
      node->name = (i_ < text_.size() && text_[i_] == '"') ? quoted_string() : bare_token();
      expect(',');
      node->regex = quoted_string();
      try {
        std::regex re(node->regex);
      } catch (const std::regex_error&) {
        fail("regular expression does not compile");
      }
      expect(')');
    } else {
      fail("expected BOUND, CAN_SEEN, OUTPUT_MATCHES, NOT or '('");
    }
    return node;
  }

  const std::string& text_;
  size_t i_ = 0;
};

struct EvalContext {
  const std::vector<Event>& events;
  const std::map<std::string, std::int64_t>& anchors;
  std::string conditionStep;
  const Event* evidence = nullptr;
};

bool eval_rule(const Rule& r, EvalContext& ctx) {
  switch (r.kind) {
    case Rule::Kind::bound: {
      for (const auto& e : ctx.events) {
        if (e.source != EventSource::binding) continue;
        auto eq = e.payload.find('=');
        if (eq == std::string::npos) continue;
        if (e.payload.substr(0, eq) == r.name && eq + 1 < e.payload.size()) {
          ctx.evidence = &e;
          return true;
        }
      }
      return false;
    }
    case Rule::Kind::can_seen: {
      auto it = ctx.anchors.find(ctx.conditionStep);
      if (it == ctx.anchors.end()) throw MissingAnchor(ctx.conditionStep);
      std::int64_t lo = it->second;
      std::int64_t hi = lo + r.window_ms;  // closed window
      for (const auto& e : ctx.events) {
        if (e.source != EventSource::can) continue;
        if (e.timestamp_ms < lo || e.timestamp_ms > hi) continue;
        auto frame = can::normalize_frame(e.payload);
        if (frame && *frame == r.frame) {
          ctx.evidence = &e;
          return true;
        }
      }
      return false;
    }
    case Rule::Kind::output_matches: {
      std::string stdout_text;
      for (const auto& e : ctx.events)
        if (e.source == EventSource::tool && e.step == r.name) stdout_text += e.payload;
      std::regex re(r.regex);
      return std::regex_search(stdout_text, re);
    }
    case Rule::Kind::not_:
      return !eval_rule(*r.lhs, ctx);
    case Rule::Kind::and_:
      return eval_rule(*r.lhs, ctx) && eval_rule(*r.rhs, ctx);
  }
  return false;
}

}  // namespace

RulePtr parse_rule(const std::string& text) { return RuleParser(text).parse(); }

RuleSet parse_rules(const std::vector<std::pair<std::string, std::string>>& conditions) {
  RuleSet rs;
  for (const auto& [step, text] : conditions)
    rs.conditions.push_back({step, text, parse_rule(text)});
  return rs;
}

Verdict evaluate(const RuleSet& rules, std::vector<Event> events,
                 const std::map<std::string, std::int64_t>& anchors) {
  auto source_rank = [](EventSource s) {
    switch (s) {
      case EventSource::can: return 0;
      case EventSource::tool: return 1;
      case EventSource::binding: return 2;
    }
    return 3;
  };
  std::stable_sort(events.begin(), events.end(), [&](const Event& a, const Event& b) {
    if (a.timestamp_ms != b.timestamp_ms) return a.timestamp_ms < b.timestamp_ms;
    return source_rank(a.source) < source_rank(b.source);
  });

  Verdict v;
  for (const auto& c : rules.conditions) {
    EvalContext ctx{events, anchors, c.step, nullptr};
    bool met = eval_rule(*c.rule, ctx);
    ConditionVerdict cv;
    cv.step = c.step;
    cv.rule = c.ruleText;
    cv.met = met;
    if (ctx.evidence) cv.evidence = *ctx.evidence;
    v.perCondition.push_back(std::move(cv));
    if (met) v.insecure = true;
  }
  return v;
}

CanSubscriber::~CanSubscriber() { stop(); }

bool CanSubscriber::connect(const std::string& host, int port) {
  if (!client_.connect(host, port)) return false;
  running_ = true;
  thread_ = std::thread([this] { read_loop(); });
  return true;
}

void CanSubscriber::read_loop() {
  while (running_) {
    auto line = client_.recv_line(200);
    if (!line) {
      if (!client_.connected()) break;
      continue;
    }
    auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::system_clock::now().time_since_epoch())
                   .count();
    constexpr std::string_view kFrame = "FRAME ";
    std::lock_guard lock(mu_);
    if (line->rfind(kFrame, 0) == 0) {
      auto frame = can::normalize_frame(line->substr(kFrame.size()));
      if (frame) {
        events_.push_back({now, EventSource::can, "", *frame});
        continue;
      }
    }
    ++malformed_;
  }
}

void CanSubscriber::stop() {
  if (!running_.exchange(false)) return;
  client_.close();
  if (thread_.joinable()) thread_.join();
}

std::vector<Event> CanSubscriber::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

int CanSubscriber::malformed_count() const {
  std::lock_guard lock(mu_);
  return malformed_;
}

}  // namespace asb::oracle
