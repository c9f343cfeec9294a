#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "asb/netline.hpp"
#include "asb/testgen.hpp"

namespace asb::axe {

enum class StepStatus { OK, OMITTED, FAILED };

std::string to_string(StepStatus s);

struct StepResult {
  std::string step;
  StepStatus status = StepStatus::OK;
  std::string stdout_text;
  int exitCode = 0;
  std::map<std::string, std::string> boundVars;
  std::int64_t startedAt = 0;
  std::int64_t endedAt = 0;
  std::string error;  // diagnostic, empty on OK/OMITTED
};

enum class ExecStatus { pending, running, done, error };

std::string to_string(ExecStatus s);

struct AxeConfig {
  std::string listen_host = "127.0.0.1";
  int listen_port = 0;  // 0 = ephemeral
  std::string sim_bt_host = "127.0.0.1";
  int sim_bt_port = 7301;
  std::string sim_can_host = "127.0.0.1";
  int sim_can_port = 7302;
  // Programs the generic local-process adapter may launch.
  std::set<std::string> process_allowlist;
  std::int64_t grace_ms = 2000;
};

struct AdapterResult {
  std::string stdout_text;
  int exitCode = 0;
};

class Session {
 public:
  Session(std::string id, std::string createdByStep) : id_(std::move(id)), createdByStep_(std::move(createdByStep)) {}
  const std::string& id() const { return id_; }
  const std::string& createdByStep() const { return createdByStep_; }

  // At most one in-flight command per session.
  std::mutex mu;
  net::LineClient transport;

 private:
  std::string id_;
  std::string createdByStep_;
};

struct AdapterContext {
  std::vector<std::string> params;
  std::int64_t duration_ms = 0;
  const AxeConfig* cfg = nullptr;
  Session* session = nullptr;  // non-null when environment is session:${var}
};

// A tool adapter; the registry maps the test case's `tool` name to one.
class Adapter {
 public:
  virtual ~Adapter() = default;
  virtual AdapterResult run(const AdapterContext& ctx) = 0;
};

using AdapterFactory = std::function<std::unique_ptr<Adapter>()>;

struct Execution {
  std::string executionId;
  testgen::ExecutableTestCase testCase;  // oracle block stripped
  ExecStatus status = ExecStatus::pending;
  std::vector<StepResult> stepResults;
  std::map<std::string, std::string> bindings;
  std::map<std::string, std::string> cfgSnapshot;
};

// Substitutes ${name} from bindings first, then cfg; single pass, no
// re-expansion. Throws std::runtime_error on an unresolved name.
std::vector<std::string> resolve_placeholders(const std::vector<std::string>& params,
                                              const std::map<std::string, std::string>& bindings,
                                              const std::map<std::string, std::string>& cfg);

// The execution engine: accepts test-case JSON over HTTP, runs steps
// sequentially through tool adapters, manages shell sessions and collects
// output.
//
//   POST /api/v1/testcases        202 {"executionId": ...} | 400 | 422
//   GET  /api/v1/executions/{id}  200 snapshot | 404
//   PUT  /api/v1/config           200 | 400
//   GET  /api/v1/sessions         200
class AxeService {
 public:
  explicit AxeService(AxeConfig cfg);
  ~AxeService();

  bool start();
  void stop();
  int port() const;

  // Direct (in-process) surface; the HTTP handlers are thin wrappers.
  std::string submit(const testgen::ExecutableTestCase& tc);  // throws on unknown tool
  std::optional<std::string> execution_snapshot_json(const std::string& id) const;
  bool put_config(const std::map<std::string, std::string>& entries);
  std::string sessions_json() const;
  void wait_all();

  static bool valid_config_name(const std::string& name);

 private:
  class Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace asb::axe
