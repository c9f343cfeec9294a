#include <cstdio>
#include <filesystem>

#include "asb/campaign.hpp"
#include "asb/sim.hpp"
#include "asb/axe.hpp"
#include "asb/util.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace asb;
using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string fixture_path(const std::string& name) {
  return std::string(ASB_FIXTURE_DIR) + "/" + name;
}

struct Rig {
  std::unique_ptr<sim::Simulator> sut;
  std::unique_ptr<axe::AxeService> engine;

  explicit Rig(bool vulnerable) {
    sim::SimConfig scfg;
    scfg.btPort = 0;
    scfg.canPort = 0;
    scfg.vulnerable = vulnerable;
    scfg.canBeaconPeriod_ms = 200;
    sut = sim::run_simulator(scfg, fixture_path("fsm/demo.fsm"));

    axe::AxeConfig acfg;
    acfg.sim_bt_port = sut->bt_port();
    acfg.sim_can_port = sut->can_port();
    engine = std::make_unique<axe::AxeService>(acfg);
    REQUIRE(engine->start());
  }

  campaign::CampaignConfig cfg() const {
    campaign::CampaignConfig c;
    c.axe_port = engine->port();
    c.sim_can_port = sut->can_port();
    auto cat = catalog::load_catalog(fixture_path("catalog-demo.json"));
    for (const auto& [name, binding] : cat.suts[0].symbols) c.globalConfig[name] = binding.value;
    return c;
  }

  ~Rig() {
    engine->stop();
    sut->stop();
  }
};

campaign::CampaignCase listing1_case() {
  auto cat = catalog::load_catalog(fixture_path("catalog-demo.json"));
  auto text = util::read_file(fixture_path("listing1.alia"));
  REQUIRE(text.has_value());
  auto scenario = alia::parse_scenario(*text);
  return {"static-dsl", testgen::concretize(scenario, cat.suts[0], cat)};
}

}  // namespace

TEST_CASE("campaign against the vulnerable simulator is INSECURE on both conditions") {
  Rig rig(true);
  auto report = campaign::run_campaign("demo", {listing1_case()}, rig.cfg());
  REQUIRE(report.testCases.size() == 1);
  const auto& run = report.testCases[0];
  CHECK(run.origin == "static-dsl");
  REQUIRE(run.verdict.perCondition.size() == 2);
  CHECK(run.verdict.perCondition[0].met);  // BOUND(shell)
  CHECK(run.verdict.perCondition[1].met);  // CAN_SEEN(...)
  CHECK(run.verdict.aggregate() == "INSECURE");
  for (const auto& s : run.steps) CHECK(s.status == "OK");
}

TEST_CASE("campaign against the patched simulator is SECURE with the documented step chain") {
  Rig rig(false);
  auto report = campaign::run_campaign("demo", {listing1_case()}, rig.cfg());
  REQUIRE(report.testCases.size() == 1);
  const auto& run = report.testCases[0];
  CHECK(run.verdict.aggregate() == "SECURE");
  for (const auto& c : run.verdict.perCondition) CHECK_FALSE(c.met);
  REQUIRE(run.steps.size() == 4);
  CHECK(run.steps[0].status == "OK");
  CHECK(run.steps[1].status == "FAILED");
  CHECK(run.steps[3].status == "OMITTED");
}

TEST_CASE("campaign report JSON is complete") {
  Rig rig(true);
  auto report = campaign::run_campaign("demo", {listing1_case(), listing1_case()}, rig.cfg());
  CHECK(report.testCases.size() == 2);
  auto j = ordered_json::parse(campaign::report_to_json(report));
  CHECK(j.at("campaignId") == "demo");
  CHECK(j.at("testCases").size() == 2);
  CHECK(j.at("toolVersions").contains("asb"));
  CHECK(j.at("timings").at("wall_ms").get<std::int64_t>() >= 0);
}

TEST_CASE("unreachable engine raises before any report exists") {
  campaign::CampaignConfig cfg;
  cfg.axe_port = 1;  // nothing listens there
  CHECK_THROWS_AS(campaign::run_campaign("x", {listing1_case()}, cfg),
                  campaign::CampaignError);
}
