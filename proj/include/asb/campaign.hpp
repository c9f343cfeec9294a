#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "asb/oracle.hpp"
#include "asb/testgen.hpp"

namespace asb::campaign {

struct CampaignConfig {
  std::string axe_host = "127.0.0.1";
  int axe_port = 0;
  std::string sim_can_host = "127.0.0.1";
  int sim_can_port = 0;
  std::map<std::string, std::string> globalConfig;  // pushed to the engine first
  int parallel = 1;
  std::int64_t poll_interval_ms = 25;
  std::int64_t exec_timeout_ms = 120000;
};

struct StepSummary {
  std::string step;
  std::string status;
};

struct TestCaseRun {
  std::string id;
  std::string origin;  // static-dsl | findings-dsl | mutation | model-check
  std::string executionId;
  oracle::Verdict verdict;
  std::vector<StepSummary> steps;
};

struct CampaignReport {
  std::string campaignId;
  std::vector<TestCaseRun> testCases;
  std::int64_t startedAt = 0;
  std::int64_t endedAt = 0;
  std::map<std::string, std::string> toolVersions;
};

class CampaignError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CampaignCase {
  std::string origin;
  testgen::ExecutableTestCase testCase;
};

// Pushes the global config, subscribes to the CAN bus, submits every test
// case (oracle block stripped), waits for completion and judges the recorded
// events against each case's oracle block. Throws CampaignError when the
// engine is unreachable; no partial report escapes.
CampaignReport run_campaign(const std::string& campaignId, const std::vector<CampaignCase>& cases,
                            const CampaignConfig& cfg);

std::string report_to_json(const CampaignReport& report);

}  // namespace asb::campaign
