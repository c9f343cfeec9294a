#include "asb/alia.hpp"

#include <cctype>
#include <set>
#include <sstream>

namespace asb::alia {

bool is_placeholder_token(std::string_view s) {
  if (s.empty() || s[0] < 'A' || s[0] > 'Z') return false;
  for (char c : s)
    if (!(std::isupper(static_cast<unsigned char>(c)) ||
          std::isdigit(static_cast<unsigned char>(c)) || c == '_'))
      return false;
  return true;
}

bool is_variable_token(std::string_view s) {
  if (s.empty() || s[0] < 'a' || s[0] > 'z') return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  return true;
}

ValueKind classify_token(std::string_view s) {
  if (is_placeholder_token(s)) return ValueKind::placeholder;
  if (is_variable_token(s)) return ValueKind::variable;
  return ValueKind::literal;
}

const ArgValue* PatternCall::find_arg(std::string_view key) const {
  for (const auto& [k, v] : args)
    if (k == key) return &v;
  return nullptr;
}

std::string PatternCall::type_value() const {
  const ArgValue* v = find_arg("type");
  return v ? v->text : std::string{};
}

ParseError::ParseError(ParseErrorKind kind, SourcePos pos, const std::string& msg)
    : std::runtime_error(std::to_string(pos.line) + ":" + std::to_string(pos.col) + ": " + msg),
      kind_(kind),
      pos_(pos) {}

std::string to_string(Severity s) { return s == Severity::error ? "error" : "warning"; }

namespace {

// Cursor over one entry body with positions carried from the source line.
class LineCursor {
 public:
  LineCursor(std::string_view text, int line, int col0)
      : text_(text), line_(line), col0_(col0) {}

  SourcePos pos() const { return {line_, col0_ + static_cast<int>(i_)}; }
  bool eof() const { return i_ >= text_.size(); }
  char peek() const { return eof() ? '\0' : text_[i_]; }
  void advance() { ++i_; }

  void skip_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) advance();
  }

  [[noreturn]] void fail(const std::string& expected) const {
    throw ParseError(ParseErrorKind::syntax, pos(), "expected " + expected);
  }

  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("'") + c + "'");
    advance();
  }

  bool try_consume(char c) {
    skip_ws();
    if (peek() != c) return false;
    advance();
    return true;
  }

  // A bare token: anything up to whitespace or a structural character.
  std::string bare_token() {
    skip_ws();
    size_t start = i_;
    while (!eof()) {
      char c = peek();
      if (c == ' ' || c == '\t' || c == ',' || c == '(' || c == ')' || c == ':' || c == '"') break;
      advance();
    }
    return std::string(text_.substr(start, i_ - start));
  }

  std::string quoted_string() {
    skip_ws();
    if (peek() != '"') fail("a quoted string");
    advance();
    std::string out;
    while (true) {
      if (eof()) fail("closing '\"'");
      char c = peek();
      advance();
      if (c == '"') break;
      if (c == '\\') {
        if (eof()) fail("escape character");
        char e = peek();
        advance();
        switch (e) {
          case '"': out.push_back('"'); break;
          case '\\': out.push_back('\\'); break;
          case 'n': out.push_back('\n'); break;
          case 't': out.push_back('\t'); break;
          default: fail("a valid escape (\\\" \\\\ \\n \\t)");
        }
      } else {
        out.push_back(c);
      }
    }
    return out;
  }

 private:
  std::string_view text_;
  size_t i_ = 0;
  int line_;
  int col0_;
};

ArgValue parse_value(LineCursor& cur) {
  cur.skip_ws();
  ArgValue v;
  v.pos = cur.pos();
  if (cur.peek() == '"') {
    v.kind = ValueKind::literal;
    v.text = cur.quoted_string();
    return v;
  }
  std::string tok = cur.bare_token();
  if (tok.empty()) cur.fail("an argument value");
  v.kind = classify_token(tok);
  v.text = tok;
  return v;
}

PatternCall parse_call(LineCursor& cur) {
  PatternCall call;
  cur.skip_ws();
  call.pos = cur.pos();
  call.pattern = cur.bare_token();
  if (call.pattern.empty()) cur.fail("a pattern name");
  cur.expect('(');
  if (!cur.try_consume(')')) {
    while (true) {
      cur.skip_ws();
      SourcePos kpos = cur.pos();
      std::string key = cur.bare_token();
      if (key.empty()) cur.fail("an argument key");
      // Listing-style `key value` (single space) is accepted and normalized
      // to `key:value`.
      if (!cur.try_consume(':')) cur.skip_ws();
      ArgValue val = parse_value(cur);
      for (const auto& [k, unused] : call.args)
        if (k == key)
          throw ParseError(ParseErrorKind::syntax, kpos, "duplicate argument '" + key + "'");
      call.args.emplace_back(key, std::move(val));
      if (cur.try_consume(')')) break;
      if (!cur.try_consume(',')) cur.fail("',' or ')'");
    }
  }
  cur.skip_ws();
  if (!cur.eof()) cur.fail("end of entry");
  return call;
}

ActionStep parse_action_body(const std::string& step, LineCursor& cur, SourcePos entry_pos) {
  ActionStep a;
  a.step = step;
  a.pos = entry_pos;

  // Lookahead for `var =` without committing the cursor.
  LineCursor probe = cur;
  std::string head = probe.bare_token();
  if (!head.empty() && probe.try_consume('=')) {
    if (!is_variable_token(head))
      throw ParseError(ParseErrorKind::syntax, entry_pos,
                       "bind name '" + head + "' must be a runtime variable");
    a.binds = head;
    cur = probe;
  }
  a.call = parse_call(cur);
  return a;
}

ConditionEntry parse_condition_body(const std::string& step, LineCursor& cur, SourcePos entry_pos) {
  ConditionEntry c;
  c.step = step;
  c.pos = entry_pos;
  cur.skip_ws();
  if (cur.peek() == '"') {
    cur.fail("a condition (BOUND, CAN_MESSAGE, OUTPUT or a bare name)");
  }
  std::string tok = cur.bare_token();
  if (tok.empty()) cur.fail("a condition");
  if (cur.try_consume('(')) {
    if (tok == "CAN_MESSAGE") {
      c.kind = ConditionKind::can_message;
      std::string arg = cur.bare_token();
      if (!is_placeholder_token(arg)) cur.fail("a placeholder inside CAN_MESSAGE(...)");
      c.name = arg;
      cur.expect(')');
    } else if (tok == "BOUND") {
      c.kind = ConditionKind::bound;
      std::string arg = cur.bare_token();
      if (classify_token(arg) == ValueKind::literal) cur.fail("a name inside BOUND(...)");
      c.name = arg;
      cur.expect(')');
    } else if (tok == "OUTPUT") {
      c.kind = ConditionKind::output;
      cur.skip_ws();
      c.name = cur.peek() == '"' ? cur.quoted_string() : cur.bare_token();
      if (c.name.empty()) cur.fail("a step reference inside OUTPUT(...)");
      cur.expect(',');
      c.regex = cur.quoted_string();
      cur.expect(')');
    } else {
      throw ParseError(ParseErrorKind::syntax, entry_pos,
                       "unknown condition '" + tok + "' (BOUND, CAN_MESSAGE or OUTPUT)");
    }
  } else {
    if (classify_token(tok) == ValueKind::literal)
      throw ParseError(ParseErrorKind::syntax, entry_pos,
                       "condition name '" + tok + "' is neither a placeholder nor a variable");
    c.kind = ConditionKind::bound;
    c.name = tok;
  }
  cur.skip_ws();
  if (!cur.eof()) cur.fail("end of entry");
  return c;
}

// Strips a trailing comment. `#` starts a comment except inside quotes.
std::string strip_comment(std::string_view line) {
  std::string out;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (c == '"' ) quoted = !quoted;
    if (c == '\\' && quoted && i + 1 < line.size()) {
      out.push_back(c);
      out.push_back(line[++i]);
      continue;
    }
    if (c == '#' && !quoted) break;
    out.push_back(c);
  }
  return out;
}

bool blank(std::string_view s) {
  return s.find_first_not_of(" \t\r") == std::string_view::npos;
}

std::string_view trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

AttackScenario parse_scenario(std::string_view text) {
  AttackScenario scenario;
  enum class Section { none, pre, actions, post } section = Section::none;
  bool seen_pre = false, seen_actions = false, seen_post = false;
  std::set<std::string> action_names;

  int line_no = 0;
  size_t start = 0;
  while (start <= text.size()) {
    size_t end = text.find('\n', start);
    std::string_view raw = text.substr(
        start, end == std::string_view::npos ? text.size() - start : end - start);
    ++line_no;
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;

    // Scenario name rides in a comment so the section grammar stays fixed.
    std::string_view t = trim(raw);
    if (!t.empty() && t[0] == '#') {
      std::string_view rest = trim(t.substr(1));
      constexpr std::string_view kNameTag = "scenario:";
      if (rest.substr(0, kNameTag.size()) == kNameTag && scenario.name.empty())
        scenario.name = std::string(trim(rest.substr(kNameTag.size())));
      continue;
    }

    std::string stripped = strip_comment(raw);
    if (blank(stripped)) continue;

    bool at_col0 = stripped[0] != ' ' && stripped[0] != '\t';
    if (at_col0) {
      std::string_view header = trim(stripped);
      if (header == "PreConditions:") {
        if (seen_pre)
          throw ParseError(ParseErrorKind::syntax, {line_no, 1}, "duplicate PreConditions section");
        if (seen_actions || seen_post)
          throw ParseError(ParseErrorKind::syntax, {line_no, 1},
                           "PreConditions must come before Actions and PostConditions");
        seen_pre = true;
        section = Section::pre;
      } else if (header == "Actions:") {
        if (seen_actions)
          throw ParseError(ParseErrorKind::syntax, {line_no, 1}, "duplicate Actions section");
        if (!seen_pre || seen_post)
          throw ParseError(ParseErrorKind::syntax, {line_no, 1},
                           "Actions must come after PreConditions");
        seen_actions = true;
        section = Section::actions;
      } else if (header == "PostConditions:") {
        if (seen_post)
          throw ParseError(ParseErrorKind::syntax, {line_no, 1},
                           "duplicate PostConditions section");
        if (!seen_actions)
          throw ParseError(ParseErrorKind::syntax, {line_no, 1},
                           "PostConditions must come after Actions");
        seen_post = true;
        section = Section::post;
      } else {
        std::string name(header.substr(0, header.find(':')));
        throw ParseError(ParseErrorKind::unknown_section, {line_no, 1},
                         "unknown section '" + name + "'");
      }
      continue;
    }

    if (section == Section::none)
      throw ParseError(ParseErrorKind::syntax, {line_no, 1}, "entry before any section header");

    auto colon = stripped.find(':');
    if (colon == std::string::npos)
      throw ParseError(ParseErrorKind::syntax, {line_no, 1}, "expected 'stepName: body'");
    std::string step(trim(std::string_view(stripped).substr(0, colon)));
    if (step.empty())
      throw ParseError(ParseErrorKind::syntax, {line_no, 1}, "empty step name");
    SourcePos entry_pos{line_no, 1};
    LineCursor cur(std::string_view(stripped).substr(colon + 1), line_no,
                   static_cast<int>(colon) + 2);

    switch (section) {
      case Section::pre:
        scenario.preConditions.push_back(parse_condition_body(step, cur, entry_pos));
        break;
      case Section::actions: {
        if (!action_names.insert(step).second)
          throw ParseError(ParseErrorKind::duplicate_step, entry_pos,
                           "duplicate action step '" + step + "'");
        scenario.actions.push_back(parse_action_body(step, cur, entry_pos));
        break;
      }
      case Section::post:
        scenario.postConditions.push_back(parse_condition_body(step, cur, entry_pos));
        break;
      case Section::none:
        break;
    }
  }

  if (!seen_pre || !seen_actions || !seen_post)
    throw ParseError(ParseErrorKind::syntax, {line_no, 1},
                     "missing section header (PreConditions/Actions/PostConditions)");
  return scenario;
}

}  // namespace asb::alia
