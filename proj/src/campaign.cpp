#include "asb/campaign.hpp"

#include <mutex>
#include <thread>

#include "asb/util.hpp"
#include "httplib.h"
#include "json.hpp"

namespace asb::campaign {

using ordered_json = nlohmann::ordered_json;

namespace {

struct ExecutionOutcome {
  std::string executionId;
  std::map<std::string, std::int64_t> anchors;
  std::vector<oracle::Event> events;  // tool + binding events
  std::vector<StepSummary> steps;
};

ExecutionOutcome run_one(const testgen::ExecutableTestCase& tc, const CampaignConfig& cfg) {
  // One client per execution; the instance is not safe for concurrent use.
  httplib::Client http(cfg.axe_host, cfg.axe_port);
  http.set_connection_timeout(5);
  http.set_read_timeout(30);

  testgen::ExecutableTestCase stripped = tc;
  stripped.oracle.clear();  // the oracle block goes to the verdict engine, not the AXE

  auto res = http.Post("/api/v1/testcases", testgen::testcase_to_json(stripped),
                       "application/json");
  if (!res) throw CampaignError("execution engine unreachable");
  if (res->status != 202)
    throw CampaignError("submission rejected (" + std::to_string(res->status) + "): " + res->body);

  ExecutionOutcome out;
  out.executionId = ordered_json::parse(res->body).at("executionId").get<std::string>();

  std::int64_t deadline = util::now_ms() + cfg.exec_timeout_ms;
  ordered_json snapshot;
  for (;;) {
    auto get = http.Get(("/api/v1/executions/" + out.executionId).c_str());
    if (!get || get->status != 200) throw CampaignError("cannot fetch execution snapshot");
    snapshot = ordered_json::parse(get->body);
    std::string status = snapshot.at("status").get<std::string>();
    if (status == "done" || status == "error") break;
    if (util::now_ms() > deadline)
      throw CampaignError("execution " + out.executionId + " timed out");
    std::this_thread::sleep_for(std::chrono::milliseconds(cfg.poll_interval_ms));
  }

  for (const auto& r : snapshot.value("stepResults", ordered_json::array())) {
    std::string step = r.at("step").get<std::string>();
    std::int64_t started = r.at("startedAt").get<std::int64_t>();
    std::int64_t ended = r.at("endedAt").get<std::int64_t>();
    out.anchors[step] = started;
    out.steps.push_back({step, r.at("status").get<std::string>()});
    std::string stdout_text = r.value("stdout", "");
    if (!stdout_text.empty())
      out.events.push_back({ended, oracle::EventSource::tool, step, stdout_text});
    const ordered_json bound = r.value("boundVars", ordered_json::object());
    for (const auto& [var, value] : bound.items())
      out.events.push_back(
          {ended, oracle::EventSource::binding, step, var + "=" + value.get<std::string>()});
  }
  return out;
}

}  // namespace

CampaignReport run_campaign(const std::string& campaignId, const std::vector<CampaignCase>& cases,
                            const CampaignConfig& cfg) {
  CampaignReport report;
  report.campaignId = campaignId;
  report.startedAt = util::now_ms();
  report.toolVersions["asb"] = "0.1.0";

  {
    httplib::Client http(cfg.axe_host, cfg.axe_port);
    http.set_connection_timeout(5);
    http.set_read_timeout(30);
    ordered_json body = ordered_json::object();
    for (const auto& [k, v] : cfg.globalConfig) body[k] = v;
    auto res = http.Put("/api/v1/config", body.dump(), "application/json");
    if (!res) throw CampaignError("execution engine unreachable");
    if (res->status != 200) throw CampaignError("config rejected: " + res->body);
  }

  oracle::CanSubscriber subscriber;
  bool monitoring = cfg.sim_can_port > 0 &&
                    subscriber.connect(cfg.sim_can_host, cfg.sim_can_port);

  report.testCases.resize(cases.size());
  auto run_case = [&](size_t idx) {
    const auto& c = cases[idx];
    ExecutionOutcome outcome = run_one(c.testCase, cfg);
    TestCaseRun run;
    run.id = c.testCase.id;
    run.origin = c.origin;
    run.executionId = outcome.executionId;
    run.steps = outcome.steps;

    std::vector<std::pair<std::string, std::string>> conds;
    for (const auto& oc : c.testCase.oracle) conds.emplace_back(oc.step, oc.rule);
    auto rules = oracle::parse_rules(conds);
    std::vector<oracle::Event> events = outcome.events;
    if (monitoring) {
      auto canEvents = subscriber.events();
      events.insert(events.end(), canEvents.begin(), canEvents.end());
    }
    run.verdict = oracle::evaluate(rules, std::move(events), outcome.anchors);
    report.testCases[idx] = std::move(run);
  };

  if (cfg.parallel <= 1) {
    for (size_t i = 0; i < cases.size(); ++i) run_case(i);
  } else {
    // Concurrent submissions; every execution owns its own sessions so they
    // stay disjoint by construction.
    std::exception_ptr failure;
    std::mutex failure_mu;
    size_t next = 0;
    while (next < cases.size()) {
      size_t batch = std::min<size_t>(cfg.parallel, cases.size() - next);
      std::vector<std::thread> threads;
      for (size_t k = 0; k < batch; ++k) {
        threads.emplace_back([&, idx = next + k] {
          try {
            run_case(idx);
          } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
          }
        });
      }
      for (auto& t : threads) t.join();
      next += batch;
    }
    if (failure) std::rethrow_exception(failure);
  }

  if (monitoring) subscriber.stop();
  report.endedAt = util::now_ms();
  return report;
}

std::string report_to_json(const CampaignReport& report) {
  ordered_json j;
  j["campaignId"] = report.campaignId;
  j["testCases"] = ordered_json::array();
  for (const auto& run : report.testCases) {
    ordered_json rj;
    rj["id"] = run.id;
    rj["origin"] = run.origin;
    rj["executionId"] = run.executionId;
    ordered_json verdict;
    verdict["perCondition"] = ordered_json::array();
    for (const auto& c : run.verdict.perCondition)
      verdict["perCondition"].push_back(
          {{"step", c.step}, {"rule", c.rule}, {"result", c.met ? "MET" : "UNMET"}});
    verdict["aggregate"] = run.verdict.aggregate();
    rj["verdict"] = verdict;
    rj["steps"] = ordered_json::array();
    for (const auto& s : run.steps) rj["steps"].push_back({{"step", s.step}, {"status", s.status}});
    j["testCases"].push_back(rj);
  }
  j["timings"] = {{"startedAt", report.startedAt},
                  {"endedAt", report.endedAt},
                  {"wall_ms", report.endedAt - report.startedAt}};
  ordered_json tools = ordered_json::object();
  for (const auto& [k, v] : report.toolVersions) tools[k] = v;
  j["toolVersions"] = tools;
  return j.dump(2) + "\n";
}

}  // namespace asb::campaign
