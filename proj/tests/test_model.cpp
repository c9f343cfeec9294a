#include <filesystem>

#include "asb/model.hpp"
#include "asb/twin.hpp"
#include "asb/util.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace asb;
using model::MutOp;
using model::StateMachine;

namespace {

std::string fixture_path(const std::string& name) {
  return std::string(ASB_FIXTURE_DIR) + "/" + name;
}

StateMachine reference() { return model::load_fsm(fixture_path("fsm/reference.fsm")); }

const std::set<MutOp> kAllOps{MutOp::CTT, MutOp::CTO, MutOp::DTR, MutOp::ATR};

}  // namespace

TEST_CASE("fsm parse/print round-trips over the corpus") {
  namespace fs = std::filesystem;
  int count = 0;
  for (const auto& entry : fs::directory_iterator(fixture_path("fsm"))) {
    CAPTURE(entry.path().string());
    auto text = util::read_file(entry.path().string());
    REQUIRE(text.has_value());
    auto first = model::parse_fsm(*text);
    auto printed = model::print_fsm(first);
    auto second = model::parse_fsm(printed);
    CHECK(first == second);
    CHECK(model::print_fsm(second) == printed);
    ++count;
  }
  CHECK(count >= 10);
}

TEST_CASE("fsm format corners") {
  auto m = model::parse_fsm("machine m\ninitial a\nstate a\ntrans a x#y / out#1 a\n");
  CHECK(m.inputs.count("x#y"));  // '#' inside tokens is not a comment
  CHECK(m.outputs.count("out#1"));

  CHECK_THROWS_AS(model::parse_fsm("machine m\nstate a\n"), model::ModelError);  // no initial
  CHECK_THROWS_AS(model::parse_fsm("machine m\ninitial a\ntrans a x / y a\ntrans a x / z a\n"),
                  model::ModelError);  // duplicate (state, input)
  CHECK_THROWS_AS(model::parse_fsm("machine m\ninitial a\nbogus a\n"), model::ModelError);
}

TEST_CASE("derive_machine from the demo twin flow graph") {
  auto t = twin::load_twin(fixture_path("twin-demo.json"));
  auto m = model::derive_machine(t.flowGraph, t.interfaces);
  CHECK(m.states.size() == 3);
  CHECK(m.initial == "n_bt");  // single entry node, no synthetic env state
  CHECK(m.transitions.size() == 4);
  CHECK(m.inputs.size() == 3);
  CHECK(m.tags.at("n_sh").count("component=OpenSSL"));

  // matches the FSM fixture that drives the simulator
  auto file = model::load_fsm(fixture_path("fsm/demo.fsm"));
  CHECK(m.transitions == file.transitions);
  CHECK(m.initial == file.initial);
}

TEST_CASE("derive_machine corners") {
  model::FlowGraph g;
  g.nodes.push_back({"only", "", "entry"});
  auto m = model::derive_machine(g, {{"bt", "bt0"}});
  CHECK(m.states.size() == 1);
  CHECK(m.transitions.empty());
  CHECK(m.initial == "only");

  model::FlowGraph nondet;
  nondet.nodes.push_back({"n0", "", "entry"});
  nondet.nodes.push_back({"n1", "", "block"});
  nondet.edges.push_back({"n0", "n0", "bt.exploit", ""});
  nondet.edges.push_back({"n0", "n1", "bt.exploit", ""});
  CHECK_THROWS_AS(model::derive_machine(nondet, {{"bt", "bt0"}}), model::ModelError);

  model::FlowGraph noentry;
  noentry.nodes.push_back({"n0", "", "block"});
  CHECK_THROWS_AS(model::derive_machine(noentry, {}), model::ModelError);

  // two entry nodes get a synthetic env initial with interface fan-out
  model::FlowGraph twoentry;
  twoentry.nodes.push_back({"e1", "", "entry"});
  twoentry.nodes.push_back({"e2", "", "entry"});
  twoentry.edges.push_back({"e1", "e1", "bt.pair", "bt.ok"});
  twoentry.edges.push_back({"e2", "e2", "can.recv", ""});
  auto env = model::derive_machine(twoentry, {{"bt", "bt0"}, {"can", "can0"}});
  CHECK(env.initial == "env");
  CHECK(env.states.size() == 3);
  CHECK(env.step("env", "bt.pair").second == "e1");
  CHECK(env.step("env", "can.recv").second == "e2");
}

TEST_CASE("mutant enumeration matches the single-edit oracle on the reference machine") {
  auto m = reference();
  REQUIRE(m.states.size() == 3);
  REQUIRE(m.inputs.size() == 2);
  REQUIRE(m.outputs.size() == 2);
  REQUIRE(m.transitions.size() == 4);

  auto counts = testsupport::enumerate_single_edits(m);
  CHECK(counts.retarget == 8);
  CHECK(counts.reoutput == 8);
  CHECK(counts.removed == 4);
  CHECK(counts.added == 18);
  CHECK(counts.total() == 38);

  auto mutants = model::enumerate_mutants(m, kAllOps);
  CHECK(mutants.size() == counts.total());

  size_t ctt = 0, cto = 0, dtr = 0, atr = 0;
  for (const auto& mut : mutants) {
    switch (mut.op) {
      case MutOp::CTT: ++ctt; break;
      case MutOp::CTO: ++cto; break;
      case MutOp::DTR: ++dtr; break;
      case MutOp::ATR: ++atr; break;
    }
    CHECK(testsupport::transition_diff(m, mut.machine) == 1);
  }
  CHECK(ctt == 8);
  CHECK(cto == 8);
  CHECK(dtr == 4);
  CHECK(atr == 18);

  // deterministic order and pairwise-distinct machines
  auto again = model::enumerate_mutants(m, kAllOps);
  for (size_t i = 0; i < mutants.size(); ++i) CHECK(mutants[i].machine == again[i].machine);
  for (size_t i = 0; i < mutants.size(); ++i)
    for (size_t j = i + 1; j < mutants.size(); ++j)
      CHECK_FALSE(mutants[i].machine == mutants[j].machine);
}

TEST_CASE("mutant enumeration corners") {
  StateMachine empty;
  empty.states = {"a"};
  empty.initial = "a";
  CHECK(model::enumerate_mutants(empty, {MutOp::CTT, MutOp::CTO, MutOp::DTR}).empty());

  auto only_dtr = model::enumerate_mutants(reference(), {MutOp::DTR});
  CHECK(only_dtr.size() == 4);
  for (const auto& mut : only_dtr)
    CHECK(testsupport::transition_diff(reference(), mut.machine) == 1);
}

TEST_CASE("distinguishing tests: output difference at depth zero") {
  auto m = reference();
  auto mutants = model::enumerate_mutants(m, {MutOp::CTO});
  // find the CTO mutant touching (s0, bt.exploit)
  const model::Mutant* found = nullptr;
  for (const auto& mut : mutants)
    if (mut.state == "s0" && mut.input == "bt.exploit") {
      found = &mut;
      break;
    }
  REQUIRE(found);
  auto trace = model::distinguishing_test(m, found->machine);
  REQUIRE(trace.has_value());
  CHECK(*trace == std::vector<std::string>{"bt.exploit"});
}

TEST_CASE("retargeting an unreachable transition is equivalent") {
  StateMachine m;
  m.states = {"p", "q", "r"};
  m.initial = "p";
  m.inputs = {"a"};
  m.outputs = {"x"};
  m.transitions[{"p", "a"}] = {"x", "p"};
  m.transitions[{"q", "a"}] = {"x", "q"};  // q unreachable

  StateMachine mut = m;
  mut.transitions[{"q", "a"}] = {"x", "r"};
  CHECK_FALSE(model::distinguishing_test(m, mut).has_value());
}

TEST_CASE("kill suite: traces are shortest and equivalence verdicts are exhaustive") {
  auto m = reference();
  size_t bound = m.states.size() * m.states.size();  // |S|^2 = 9
  auto mutants = model::enumerate_mutants(m, kAllOps);
  size_t killable = 0, equivalent = 0;
  for (const auto& mut : mutants) {
    CAPTURE(to_string(mut.op) + " " + mut.state + " " + mut.input + " " + mut.change);
    auto trace = model::distinguishing_test(m, mut.machine);
    auto oracle_diff = testsupport::exhaustive_difference(m, mut.machine, bound);
    if (trace) {
      ++killable;
      REQUIRE(oracle_diff.has_value());
      CHECK(trace->size() == oracle_diff->size());  // shortest
      CHECK(*trace == *oracle_diff);                // and lexicographically least
      CHECK(m.run(*trace) != mut.machine.run(*trace));  // replay witnesses the difference
    } else {
      ++equivalent;
      CHECK_FALSE(oracle_diff.has_value());
    }
  }
  CHECK(killable + equivalent == 38);
  CHECK(equivalent > 0);  // ATR includes implicit-behavior re-encodings
}

TEST_CASE("check_property: chain counterexample and pass case") {
  auto chain = model::parse_fsm(
      "machine c\ninitial s0\nstate s0\nstate s1\nstate s2\n"
      "trans s0 a / x s1\ntrans s1 b / y s2\n");
  model::Property p;
  p.name = "nr";
  p.form = model::PropertyForm::never_reach;
  p.states = {"s2"};
  auto cex = model::check_property(chain, p);
  REQUIRE(cex.has_value());
  CHECK(cex->trace == std::vector<std::string>{"a", "b"});
  CHECK(cex->finalState == "s2");
  CHECK(cex->finalOutput == "y");

  auto cut = chain;
  cut.transitions.erase({"s1", "b"});
  CHECK_FALSE(model::check_property(cut, p).has_value());

  model::Property bad;
  bad.name = "bad";
  bad.form = model::PropertyForm::never_reach;
  bad.states = {"nope"};
  CHECK_THROWS_AS(model::check_property(chain, bad), model::ModelError);
}

TEST_CASE("check_property: never-output and armed-monitor forms on the demo machine") {
  auto m = model::load_fsm(fixture_path("fsm/demo.fsm"));

  model::Property no_frame;
  no_frame.name = "no-forged-frame";
  no_frame.form = model::PropertyForm::never_output;
  no_frame.outSymbol = "can.frame:5A1#1122334455667788";
  auto cex = model::check_property(m, no_frame);
  REQUIRE(cex.has_value());
  CHECK(cex->trace == std::vector<std::string>{"bt.exploit", "sh.exec"});
  CHECK(cex->finalOutput == no_frame.outSymbol);

  model::Property guarded;
  guarded.name = "frame-needs-exploit";
  guarded.form = model::PropertyForm::never_output_without_prior_input;
  guarded.outSymbol = no_frame.outSymbol;
  guarded.inSymbol = "bt.exploit";
  CHECK_FALSE(model::check_property(m, guarded).has_value());

  // flip the guard: scanning never precedes the frame on this machine
  model::Property wrong_guard = guarded;
  wrong_guard.inSymbol = "bt.scan";
  auto violated = model::check_property(m, wrong_guard);
  REQUIRE(violated.has_value());
  CHECK(violated->trace == std::vector<std::string>{"bt.exploit", "sh.exec"});
}

TEST_CASE("checker agrees with the exhaustive oracle on random machines") {
  std::mt19937_64 rng(2024);
  for (int round = 0; round < 25; ++round) {
    auto m = testsupport::random_machine(rng, 10, 3);
    auto reach = testsupport::reachable_states(m);
    auto outs = testsupport::reachable_outputs(m);

    // NEVER_REACH on a random subset
    model::Property p;
    p.name = "nr";
    p.form = model::PropertyForm::never_reach;
    for (const auto& s : m.states)
      if (rng() % 3 == 0) p.states.insert(s);
    if (p.states.empty()) p.states.insert(*m.states.rbegin());

    bool reachable = false;
    for (const auto& s : p.states) reachable |= reach.count(s) > 0;
    auto cex = model::check_property(m, p);
    CHECK(cex.has_value() == reachable);
    if (cex && !cex->trace.empty()) {
      // replay: the trace ends in a flagged state, and it is shortest
      std::string state = m.initial;
      for (const auto& in : cex->trace) state = m.step(state, in).second;
      CHECK(state == cex->finalState);
      CHECK(p.states.count(state));
      auto shortest = testsupport::exhaustive_violation(m, p, cex->trace.size());
      REQUIRE(shortest.has_value());
      CHECK(shortest->size() == cex->trace.size());
    }

    // NEVER_OUTPUT on each declared output symbol
    for (const auto& out : m.outputs) {
      model::Property q;
      q.name = "no";
      q.form = model::PropertyForm::never_output;
      q.outSymbol = out;
      auto qcex = model::check_property(m, q);
      CHECK(qcex.has_value() == (outs.count(out) > 0));
      if (qcex) {
        auto replayed = m.run(qcex->trace);
        REQUIRE(!replayed.empty());
        CHECK(replayed.back() == out);
      }
    }
  }
}

TEST_CASE("security_slice tags unsafe states and emits reach properties") {
  auto m = model::load_fsm(fixture_path("fsm/demo.fsm"));
  auto slice = model::security_slice(m, {{"OpenSSL", "CVE-2017-0781"}});
  CHECK(slice.machine.tags.at("n_sh").count("unsafe"));
  REQUIRE(slice.properties.size() == 1);
  CHECK(slice.properties[0].form == model::PropertyForm::never_reach);
  CHECK(slice.properties[0].states == std::set<std::string>{"n_sh"});
  // n_can cannot reach the unsafe state, so the slice drops it
  CHECK_FALSE(slice.machine.states.count("n_can"));
  CHECK(slice.machine.states.count("n_bt"));

  auto cex = model::check_property(slice.machine, slice.properties[0]);
  REQUIRE(cex.has_value());
  CHECK(cex->trace == std::vector<std::string>{"bt.exploit"});

  auto none = model::security_slice(m, {});
  CHECK(none.properties.empty());
  CHECK(none.machine == m);

  auto unmatched = model::security_slice(m, {{"ghostlib", "CVE-0"}});
  CHECK(unmatched.properties.empty());
  REQUIRE(unmatched.unmatchedComponents.size() == 1);
  CHECK(unmatched.unmatchedComponents[0] == "ghostlib");
}

TEST_CASE("interface_distance and ranking") {
  auto m = model::load_fsm(fixture_path("fsm/demo.fsm"));
  CHECK(model::interface_distance(m, "n_bt") == 0);
  CHECK(model::interface_distance(m, "n_sh") == 1);
  CHECK(model::interface_distance(m, "n_bt", "bt.exploit") == 1);
  CHECK(model::interface_distance(m, "n_sh", "sh.exec") == 2);

  auto orphan = model::load_fsm(fixture_path("fsm/orphan.fsm"));
  CHECK(model::interface_distance(orphan, "q") == model::kUnreachable);
  CHECK(model::interface_distance(orphan, "q", "a") == model::kUnreachable);

  // ranking: ascending by locus distance, stable, unreachable last
  auto mutants = model::enumerate_mutants(orphan, {MutOp::CTO});
  REQUIRE(mutants.size() >= 2);
  auto ranked = model::rank_mutants(mutants, orphan);
  REQUIRE(!ranked.empty());
  CHECK(ranked.front().state == "p");
  CHECK(ranked.back().state == "q");

  auto demo_mutants = model::enumerate_mutants(m, {MutOp::DTR});
  auto demo_ranked = model::rank_mutants(demo_mutants, m);
  std::uint64_t last = 0;
  for (const auto& mut : demo_ranked) {
    auto d = model::interface_distance(m, mut.state, mut.input);
    CHECK(d >= last);
    last = d;
  }
  // equal distances keep enumeration order
  std::vector<const model::Mutant*> first_layer;
  for (const auto& mut : demo_ranked)
    if (model::interface_distance(m, mut.state, mut.input) == 1) first_layer.push_back(&mut);
  for (size_t i = 1; i < first_layer.size(); ++i)
    CHECK(first_layer[i - 1]->change <= first_layer[i]->change);
}

TEST_CASE("properties parse and print") {
  auto props = model::parse_properties(
      "# comment\n"
      "property a NEVER_REACH s1,s2\n"
      "property b NEVER_OUTPUT can.frame:5A1#11\n"
      "property c NEVER_OUTPUT_WITHOUT_PRIOR_INPUT out in\n");
  REQUIRE(props.size() == 3);
  CHECK(props[0].states == std::set<std::string>{"s1", "s2"});
  CHECK(model::print_property(props[0]) == "property a NEVER_REACH s1,s2");
  CHECK(model::print_property(props[1]) == "property b NEVER_OUTPUT can.frame:5A1#11");
  CHECK_THROWS_AS(model::parse_properties("property x BOGUS y\n"), model::ModelError);
}
