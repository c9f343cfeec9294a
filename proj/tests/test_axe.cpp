#include "asb/axe.hpp"
#include "asb/sim.hpp"
#include "asb/util.hpp"
#include "doctest.h"
#include "httplib.h"
#include "json.hpp"

using namespace asb;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string fixture_path(const std::string& name) {
  return std::string(ASB_FIXTURE_DIR) + "/" + name;
}

struct Bench {
  std::unique_ptr<sim::Simulator> sut;
  std::unique_ptr<axe::AxeService> engine;
  std::unique_ptr<httplib::Client> http;

  explicit Bench(bool vulnerable = true) {
    sim::SimConfig scfg;
    scfg.btPort = 0;
    scfg.canPort = 0;
    scfg.vulnerable = vulnerable;
    scfg.canBeaconPeriod_ms = 10000;
    sut = sim::run_simulator(scfg, fixture_path("fsm/demo.fsm"));

    axe::AxeConfig acfg;
    acfg.sim_bt_port = sut->bt_port();
    acfg.sim_can_port = sut->can_port();
    acfg.process_allowlist = {"echo", "sleep", "sh"};
    engine = std::make_unique<axe::AxeService>(acfg);
    REQUIRE(engine->start());
    http = std::make_unique<httplib::Client>("127.0.0.1", engine->port());
  }

  ~Bench() {
    engine->stop();
    sut->stop();
  }

  ordered_json wait_done(const std::string& id, int timeout_ms = 30000) {
    auto deadline = util::now_ms() + timeout_ms;
    for (;;) {
      auto res = http->Get(("/api/v1/executions/" + id).c_str());
      REQUIRE(res);
      REQUIRE(res->status == 200);
      auto j = ordered_json::parse(res->body);
      auto status = j.at("status").get<std::string>();
      if (status == "done" || status == "error") return j;
      REQUIRE(util::now_ms() < deadline);
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  }
};

std::string demo_testcase_json() {
  auto cat = catalog::load_catalog(fixture_path("catalog-demo.json"));
  auto text = util::read_file(fixture_path("listing1.alia"));
  REQUIRE(text.has_value());
  auto scenario = alia::parse_scenario(*text);
  return testgen::testcase_to_json(testgen::concretize(scenario, cat.suts[0], cat));
}

}  // namespace

TEST_CASE("resolve_placeholders: shadowing and single pass") {
  std::map<std::string, std::string> bindings{{"target", "sim-ecu-01"}};
  std::map<std::string, std::string> cfg{{"BT_IF", "sim:bt"}, {"target", "other"}};

  CHECK(axe::resolve_placeholders({"--iface", "${BT_IF}"}, {}, cfg) ==
        std::vector<std::string>{"--iface", "sim:bt"});
  CHECK(axe::resolve_placeholders({"${target}"}, bindings, cfg) ==
        std::vector<std::string>{"sim-ecu-01"});
  CHECK_THROWS(axe::resolve_placeholders({"${nope}"}, bindings, cfg));

  // substituted text is not re-expanded
  std::map<std::string, std::string> sneaky{{"a", "${b}"}, {"b", "x"}};
  CHECK(axe::resolve_placeholders({"${a}"}, sneaky, {}) == std::vector<std::string>{"${b}"});
}

TEST_CASE("config names must be placeholder tokens") {
  CHECK(axe::AxeService::valid_config_name("BT_IF"));
  CHECK_FALSE(axe::AxeService::valid_config_name("bt_if"));
  CHECK_FALSE(axe::AxeService::valid_config_name(""));
  CHECK_FALSE(axe::AxeService::valid_config_name("Bt"));
}

TEST_CASE("submission: schema errors 400, unknown tools 422") {
  Bench bench;
  auto r1 = bench.http->Post("/api/v1/testcases", "{}", "application/json");
  REQUIRE(r1);
  CHECK(r1->status == 400);

  ordered_json tc{{"id", "x"},
                  {"sutId", "demo-hu"},
                  {"steps", ordered_json::array({ordered_json{{"step", "s1"},
                                                              {"requires", ordered_json::array()},
                                                              {"tool", "metasploit"},
                                                              {"parameters", ordered_json::array()},
                                                              {"environment", "local"},
                                                              {"duration_s", 1}}})},
                  {"oracle", ordered_json{{"conditions", ordered_json::array()}}}};
  auto r2 = bench.http->Post("/api/v1/testcases", tc.dump(), "application/json");
  REQUIRE(r2);
  CHECK(r2->status == 422);

  auto r3 = bench.http->Get("/api/v1/executions/exec-999");
  REQUIRE(r3);
  CHECK(r3->status == 404);
}

TEST_CASE("config endpoint validates names and only affects later submissions") {
  Bench bench;
  auto ok = bench.http->Put("/api/v1/config", R"({"BT_IF":"sim:bt"})", "application/json");
  REQUIRE(ok);
  CHECK(ok->status == 200);
  auto bad = bench.http->Put("/api/v1/config", R"({"bt_if":"x"})", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  auto noop = bench.http->Put("/api/v1/config", "{}", "application/json");
  REQUIRE(noop);
  CHECK(noop->status == 200);
}

TEST_CASE("full demo run against the vulnerable simulator") {
  Bench bench;
  REQUIRE(bench.http->Put("/api/v1/config", R"({"BT_IF":"sim:bt"})", "application/json")->status ==
          200);

  auto res = bench.http->Post("/api/v1/testcases", demo_testcase_json(), "application/json");
  REQUIRE(res);
  REQUIRE(res->status == 202);
  auto id = ordered_json::parse(res->body).at("executionId").get<std::string>();

  auto snapshot = bench.wait_done(id);
  CHECK(snapshot.at("status") == "done");
  auto& steps = snapshot.at("stepResults");
  REQUIRE(steps.size() == 4);
  CHECK(steps[0].at("status") == "OK");
  CHECK(steps[0].at("boundVars").at("target") == "sim-ecu-01");
  CHECK(steps[1].at("status") == "OK");
  CHECK(steps[2].at("status") == "OK");
  CHECK(steps[3].at("status") == "OK");
  CHECK(snapshot.at("bindings").contains("shell"));

  // ordering and non-overlap
  std::int64_t last_end = 0;
  for (size_t i = 0; i < steps.size(); ++i) {
    CHECK(steps[i].at("startedAt").get<std::int64_t>() >= last_end);
    last_end = steps[i].at("endedAt").get<std::int64_t>();
  }

  // sessions endpoint lists the reverse shell
  auto sessions = ordered_json::parse(bench.http->Get("/api/v1/sessions")->body);
  CHECK(sessions.at("sessions").size() == 1);

  // idempotent reads: byte-identical bodies
  auto a = bench.http->Get(("/api/v1/executions/" + id).c_str());
  auto b = bench.http->Get(("/api/v1/executions/" + id).c_str());
  CHECK(a->body == b->body);
}

TEST_CASE("unmet preconditions omit, failed extracts fail, dependents omit") {
  Bench bench(false);  // patched simulator
  // BT_IF is deliberately absent from the config.
  auto res = bench.http->Post("/api/v1/testcases", demo_testcase_json(), "application/json");
  REQUIRE(res);
  REQUIRE(res->status == 202);
  auto id = ordered_json::parse(res->body).at("executionId").get<std::string>();
  auto snapshot = bench.wait_done(id);
  auto& steps = snapshot.at("stepResults");
  REQUIRE(steps.size() == 4);
  // scan requires BT_IF: not in config, not bound -> OMITTED
  CHECK(steps[0].at("status") == "OMITTED");
  CHECK(steps[0].at("stdout") == "");
  // exploit requires target (bound only by the omitted scan) -> OMITTED
  CHECK(steps[1].at("status") == "OMITTED");
  CHECK(steps[2].at("status") == "OMITTED");
  CHECK(steps[3].at("status") == "OMITTED");
}

TEST_CASE("patched simulator: exploit fails, dependent steps omitted") {
  Bench bench(false);
  REQUIRE(bench.http->Put("/api/v1/config", R"({"BT_IF":"sim:bt"})", "application/json")->status ==
          200);
  auto res = bench.http->Post("/api/v1/testcases", demo_testcase_json(), "application/json");
  REQUIRE(res->status == 202);
  auto id = ordered_json::parse(res->body).at("executionId").get<std::string>();
  auto snapshot = bench.wait_done(id);
  auto& steps = snapshot.at("stepResults");
  REQUIRE(steps.size() == 4);
  CHECK(steps[0].at("status") == "OK");      // scan still works
  CHECK(steps[1].at("status") == "FAILED");  // DENIED, extract finds no session
  CHECK(steps[2].at("status") == "OK");      // local install has no unmet requirement
  CHECK(steps[3].at("status") == "OMITTED"); // shell never bound
}

TEST_CASE("session environment with an unbound variable fails the step") {
  Bench bench;
  ordered_json tc{
      {"id", "sess"},
      {"sutId", "demo-hu"},
      {"steps", ordered_json::array({ordered_json{{"step", "s1"},
                                                  {"requires", ordered_json::array()},
                                                  {"tool", "sim-shell-exec"},
                                                  {"parameters", ordered_json::array({"x"})},
                                                  {"environment", "session:${shell}"},
                                                  {"duration_s", 1}}})}};
  auto res = bench.http->Post("/api/v1/testcases", tc.dump(), "application/json");
  REQUIRE(res->status == 202);
  auto id = ordered_json::parse(res->body).at("executionId").get<std::string>();
  auto snapshot = bench.wait_done(id);
  CHECK(snapshot.at("stepResults")[0].at("status") == "FAILED");
  CHECK(snapshot.at("stepResults")[0].at("error").get<std::string>().find("session") !=
        std::string::npos);
}

TEST_CASE("duration bound holds for a runaway local process") {
  Bench bench;
  ordered_json tc{
      {"id", "dur"},
      {"sutId", "demo-hu"},
      {"steps",
       ordered_json::array(
           {ordered_json{{"step", "quick"},
                         {"requires", ordered_json::array()},
                         {"tool", "local-process"},
                         {"parameters", ordered_json::array({"echo", "hi"})},
                         {"environment", "local"},
                         {"duration_s", 5}},
            ordered_json{{"step", "stuck"},
                         {"requires", ordered_json::array()},
                         {"tool", "local-process"},
                         {"parameters", ordered_json::array({"sleep", "30"})},
                         {"environment", "local"},
                         {"duration_s", 1}}})}};
  auto res = bench.http->Post("/api/v1/testcases", tc.dump(), "application/json");
  REQUIRE(res->status == 202);
  auto id = ordered_json::parse(res->body).at("executionId").get<std::string>();
  auto snapshot = bench.wait_done(id);
  auto& steps = snapshot.at("stepResults");
  REQUIRE(steps.size() == 2);
  CHECK(steps[0].at("status") == "OK");
  CHECK(steps[0].at("stdout").get<std::string>().find("hi") != std::string::npos);

  // killed at the deadline, well inside duration + 2s grace
  auto started = steps[1].at("startedAt").get<std::int64_t>();
  auto ended = steps[1].at("endedAt").get<std::int64_t>();
  CHECK(ended - started <= 1000 + 2000);
  CHECK(steps[1].at("exitCode").get<int>() == -1);

  // allowlist is enforced
  ordered_json evil{
      {"id", "evil"},
      {"sutId", "demo-hu"},
      {"steps", ordered_json::array({ordered_json{{"step", "nope"},
                                                  {"requires", ordered_json::array()},
                                                  {"tool", "local-process"},
                                                  {"parameters", ordered_json::array({"rm", "-rf", "/tmp/x"})},
                                                  {"environment", "local"},
                                                  {"duration_s", 1}}})}};
  auto res2 = bench.http->Post("/api/v1/testcases", evil.dump(), "application/json");
  REQUIRE(res2->status == 202);
  auto id2 = ordered_json::parse(res2->body).at("executionId").get<std::string>();
  auto snap2 = bench.wait_done(id2);
  CHECK(snap2.at("stepResults")[0].at("status") == "FAILED");
}
