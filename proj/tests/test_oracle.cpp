#include "asb/oracle.hpp"
#include "doctest.h"

using namespace asb;
using oracle::Event;
using oracle::EventSource;

namespace {

oracle::RuleSet rules_of(std::initializer_list<std::pair<std::string, std::string>> conds) {
  return oracle::parse_rules(std::vector<std::pair<std::string, std::string>>(conds));
}

}  // namespace

TEST_CASE("rule grammar") {
  CHECK(oracle::parse_rule("BOUND(shell)")->kind == oracle::Rule::Kind::bound);
  auto seen = oracle::parse_rule("CAN_SEEN(5a1#11.22, 10)");
  CHECK(seen->frame == "5A1#1122");  // normalized
  CHECK(seen->window_ms == 10000);
  auto andnot = oracle::parse_rule("BOUND(a) AND NOT CAN_SEEN(1#00, 2.5)");
  CHECK(andnot->kind == oracle::Rule::Kind::and_);
  CHECK(andnot->rhs->kind == oracle::Rule::Kind::not_);
  CHECK(oracle::parse_rule("OUTPUT_MATCHES(scan, \"TARGET=(\\\\S+)\")")->kind ==
        oracle::Rule::Kind::output_matches);

  CHECK_THROWS_AS(oracle::parse_rule("CAN_SEEN(xyz, 10)"), oracle::RuleSyntaxError);
  CHECK_THROWS_AS(oracle::parse_rule("CAN_SEEN(1#00, 0)"), oracle::RuleSyntaxError);
  CHECK_THROWS_AS(oracle::parse_rule("CAN_SEEN(1#00, -3)"), oracle::RuleSyntaxError);
  CHECK_THROWS_AS(oracle::parse_rule("HAVE(x)"), oracle::RuleSyntaxError);
  CHECK_THROWS_AS(oracle::parse_rule("BOUND(x) garbage"), oracle::RuleSyntaxError);
  CHECK_THROWS_AS(oracle::parse_rule("OUTPUT_MATCHES(s, \"(\")"), oracle::RuleSyntaxError);
}

TEST_CASE("listing-1 style evaluation") {
  auto rs = rules_of({{"BT-Exploiting", "BOUND(shell)"},
                      {"can_attack", "CAN_SEEN(5A1#1122334455667788, 10)"}});
  std::map<std::string, std::int64_t> anchors{{"BT-Exploiting", 1000}, {"can_attack", 5000}};

  std::vector<Event> events{
      {2000, EventSource::binding, "BT-Exploiting", "shell=tok1"},
      {8000, EventSource::can, "", "5A1#1122334455667788"},
  };
  auto v = oracle::evaluate(rs, events, anchors);
  REQUIRE(v.perCondition.size() == 2);
  CHECK(v.perCondition[0].met);
  CHECK(v.perCondition[1].met);
  CHECK(v.insecure);
  CHECK(v.aggregate() == "INSECURE");
  REQUIRE(v.perCondition[1].evidence.has_value());
  CHECK(v.perCondition[1].evidence->timestamp_ms == 8000);

  auto empty = oracle::evaluate(rs, {}, anchors);
  CHECK_FALSE(empty.insecure);
  CHECK(empty.aggregate() == "SECURE");
}

TEST_CASE("CAN_SEEN window is closed at anchor+window") {
  auto rs = rules_of({{"s", "CAN_SEEN(1#00, 10)"}});
  std::map<std::string, std::int64_t> anchors{{"s", 1000}};

  auto at = [&](std::int64_t ts) {
    return oracle::evaluate(rs, {{ts, EventSource::can, "", "1#00"}}, anchors).perCondition[0].met;
  };
  CHECK(at(11000));        // exactly anchor + window
  CHECK_FALSE(at(11001));  // one millisecond late
  CHECK_FALSE(at(999));    // before the step started
  CHECK(at(1000));
}

TEST_CASE("missing anchor raises, omitted-but-anchored steps do not") {
  auto rs = rules_of({{"ghost", "CAN_SEEN(1#00, 10)"}});
  CHECK_THROWS_AS(oracle::evaluate(rs, {}, {}), oracle::MissingAnchor);
  std::map<std::string, std::int64_t> anchors{{"ghost", 0}};
  CHECK_FALSE(oracle::evaluate(rs, {}, anchors).perCondition[0].met);
}

TEST_CASE("BOUND requires a non-empty value") {
  auto rs = rules_of({{"s", "BOUND(shell)"}});
  CHECK_FALSE(oracle::evaluate(rs, {{0, EventSource::binding, "", "shell="}}, {})
                  .perCondition[0].met);
  CHECK(oracle::evaluate(rs, {{0, EventSource::binding, "", "shell=x"}}, {})
            .perCondition[0].met);
  CHECK_FALSE(oracle::evaluate(rs, {{0, EventSource::binding, "", "other=x"}}, {})
                  .perCondition[0].met);
}

TEST_CASE("OUTPUT_MATCHES concatenates a step's stdout") {
  auto rs = rules_of({{"scan", "OUTPUT_MATCHES(scan, \"TARGET=sim-ecu-01\")"}});
  std::vector<Event> events{
      {0, EventSource::tool, "scan", "TARGET=sim-"},
      {1, EventSource::tool, "scan", "ecu-01\n"},
      {2, EventSource::tool, "other", "TARGET=decoy"},
  };
  CHECK(oracle::evaluate(rs, events, {}).perCondition[0].met);
  auto miss = rules_of({{"other", "OUTPUT_MATCHES(other, \"TARGET=sim\")"}});
  CHECK_FALSE(oracle::evaluate(miss, events, {}).perCondition[0].met);
}

TEST_CASE("NOT and AND evaluate at finalization") {
  auto rs = rules_of({{"s", "BOUND(a) AND NOT BOUND(b)"}});
  CHECK(oracle::evaluate(rs, {{0, EventSource::binding, "", "a=1"}}, {}).perCondition[0].met);
  CHECK_FALSE(oracle::evaluate(rs,
                               {{0, EventSource::binding, "", "a=1"},
                                {1, EventSource::binding, "", "b=1"}},
                               {})
                  .perCondition[0].met);
}

TEST_CASE("aggregate law over all 2^4 outcome combinations") {
  // four BOUND conditions toggled via binding events
  auto rs = rules_of({{"s1", "BOUND(v0)"},
                      {"s2", "BOUND(v1)"},
                      {"s3", "BOUND(v2)"},
                      {"s4", "BOUND(v3)"}});
  for (int mask = 0; mask < 16; ++mask) {
    std::vector<Event> events;
    for (int i = 0; i < 4; ++i)
      if (mask & (1 << i))
        events.push_back({i, EventSource::binding, "", "v" + std::to_string(i) + "=x"});
    auto v = oracle::evaluate(rs, events, {});
    int met = 0;
    for (int i = 0; i < 4; ++i) {
      CHECK(v.perCondition[i].met == ((mask >> i) & 1));
      met += v.perCondition[i].met;
    }
    CHECK(v.insecure == (met >= 1));
  }
}

TEST_CASE("monotonicity: extending the log never retracts a positive verdict") {
  auto rs = rules_of({{"s", "BOUND(a)"}, {"s", "CAN_SEEN(1#00, 10)"}});
  std::map<std::string, std::int64_t> anchors{{"s", 0}};
  std::vector<Event> log{
      {1, EventSource::binding, "", "a=1"},
      {2, EventSource::can, "", "1#00"},
      {3, EventSource::can, "", "2#00"},
      {4, EventSource::tool, "s", "noise"},
  };
  for (size_t prefix = 0; prefix <= log.size(); ++prefix) {
    auto before = oracle::evaluate(
        rs, std::vector<Event>(log.begin(), log.begin() + prefix), anchors);
    for (size_t longer = prefix; longer <= log.size(); ++longer) {
      auto after = oracle::evaluate(
          rs, std::vector<Event>(log.begin(), log.begin() + longer), anchors);
      for (size_t i = 0; i < before.perCondition.size(); ++i)
        if (before.perCondition[i].met) CHECK(after.perCondition[i].met);
    }
  }
}

TEST_CASE("determinism: merge order is stable under source ties") {
  auto rs = rules_of({{"s", "BOUND(a)"}});
  std::vector<Event> a{{5, EventSource::binding, "", "a=1"}, {5, EventSource::can, "", "1#00"}};
  std::vector<Event> b{{5, EventSource::can, "", "1#00"}, {5, EventSource::binding, "", "a=1"}};
  auto va = oracle::evaluate(rs, a, {});
  auto vb = oracle::evaluate(rs, b, {});
  CHECK(va.perCondition[0].met == vb.perCondition[0].met);
  CHECK(va.insecure == vb.insecure);
}
