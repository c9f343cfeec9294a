#include "asb/axe.hpp"

#include <algorithm>
#include <regex>

#include "asb/alia.hpp"
#include "asb/util.hpp"
#include "httplib.h"
#include "json.hpp"

namespace asb::axe {

using ordered_json = nlohmann::ordered_json;

std::string to_string(StepStatus s) {
  switch (s) {
    case StepStatus::OK: return "OK";
    case StepStatus::OMITTED: return "OMITTED";
    case StepStatus::FAILED: return "FAILED";
  }
  return "FAILED";
}

std::string to_string(ExecStatus s) {
  switch (s) {
    case ExecStatus::pending: return "pending";
    case ExecStatus::running: return "running";
    case ExecStatus::done: return "done";
    case ExecStatus::error: return "error";
  }
  return "error";
}

std::vector<std::string> resolve_placeholders(const std::vector<std::string>& params,
                                              const std::map<std::string, std::string>& bindings,
                                              const std::map<std::string, std::string>& cfg) {
  std::vector<std::string> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    std::string resolved;
    size_t i = 0;
    while (i < p.size()) {
      if (p[i] == '$' && i + 1 < p.size() && p[i + 1] == '{') {
        auto close = p.find('}', i + 2);
        if (close != std::string::npos) {
          std::string name = p.substr(i + 2, close - i - 2);
          auto bit = bindings.find(name);
          if (bit != bindings.end()) {
            resolved += bit->second;  // bindings shadow cfg
          } else {
            auto cit = cfg.find(name);
            if (cit == cfg.end())
              throw std::runtime_error("unresolved placeholder ${" + name + "}");
            resolved += cit->second;
          }
          i = close + 1;
          continue;
        }
      }
      resolved.push_back(p[i]);
      ++i;
    }
    out.push_back(std::move(resolved));
  }
  return out;
}

std::unique_ptr<Adapter> make_adapter(const std::string& tool);  // axe_adapters.cpp
bool known_adapter(const std::string& tool);

class AxeService::Impl {
 public:
  explicit Impl(AxeConfig cfg) : cfg_(std::move(cfg)) {}

  ~Impl() { stop(); }

  bool start() {
    server_.Post("/api/v1/testcases",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   handle_submit(req, res);
                 });
    server_.Get(R"(/api/v1/executions/([^/]+))",
                [this](const httplib::Request& req, httplib::Response& res) {
                  auto body = execution_snapshot_json(req.matches[1]);
                  if (!body) {
                    res.status = 404;
                    res.set_content(R"({"error":"unknown execution"})", "application/json");
                    return;
                  }
                  res.status = 200;
                  res.set_content(*body, "application/json");
                });
    server_.Put("/api/v1/config",
                [this](const httplib::Request& req, httplib::Response& res) {
                  handle_config(req, res);
                });
    server_.Get("/api/v1/sessions",
                [this](const httplib::Request&, httplib::Response& res) {
                  res.status = 200;
                  res.set_content(sessions_json(), "application/json");
                });

    port_ = server_.bind_to_any_port(cfg_.listen_host, cfg_.listen_port);
    if (port_ <= 0) return false;
    server_thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return true;
  }

  void stop() {
    if (stopped_.exchange(true)) return;
    server_.stop();
    if (server_thread_.joinable()) server_thread_.join();
    wait_all();
  }

  int port() const { return port_; }

  std::string submit(const testgen::ExecutableTestCase& tc) {
    for (const auto& s : tc.steps)
      if (!known_adapter(s.tool)) throw std::runtime_error("unknown tool adapter: " + s.tool);

    auto exec = std::make_shared<Execution>();
    {
      std::lock_guard lock(mu_);
      exec->executionId = "exec-" + std::to_string(++exec_counter_);
      exec->testCase = tc;
      exec->testCase.oracle.clear();  // the oracle block never reaches the engine
      exec->cfgSnapshot = global_config_;
      executions_[exec->executionId] = exec;
    }
    {
      std::lock_guard lock(workers_mu_);
      workers_.emplace_back([this, exec] { run_execution(*exec); });
    }
    return exec->executionId;
  }

  void wait_all() {
    std::vector<std::thread> ws;
    {
      std::lock_guard lock(workers_mu_);
      ws.swap(workers_);
    }
    for (auto& w : ws)
      if (w.joinable()) w.join();
  }

  std::optional<std::string> execution_snapshot_json(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = executions_.find(id);
    if (it == executions_.end()) return std::nullopt;
    const Execution& e = *it->second;
    ordered_json j;
    j["executionId"] = e.executionId;
    j["testCaseId"] = e.testCase.id;
    j["status"] = to_string(e.status);
    j["stepResults"] = ordered_json::array();
    for (const auto& r : e.stepResults) {
      ordered_json rj;
      rj["step"] = r.step;
      rj["status"] = to_string(r.status);
      rj["stdout"] = r.stdout_text;
      rj["exitCode"] = r.exitCode;
      rj["boundVars"] = ordered_json::object();
      for (const auto& [k, v] : r.boundVars) rj["boundVars"][k] = v;
      rj["startedAt"] = r.startedAt;
      rj["endedAt"] = r.endedAt;
      if (!r.error.empty()) rj["error"] = r.error;
      j["stepResults"].push_back(rj);
    }
    j["bindings"] = ordered_json::object();
    for (const auto& [k, v] : e.bindings) j["bindings"][k] = v;
    return j.dump(2);
  }

  bool put_config(const std::map<std::string, std::string>& entries) {
    for (const auto& [name, unused] : entries)
      if (!AxeService::valid_config_name(name)) return false;
    std::lock_guard lock(mu_);
    for (const auto& [name, value] : entries) global_config_[name] = value;
    return true;
  }

  std::string sessions_json() const {
    std::lock_guard lock(mu_);
    ordered_json j;
    j["sessions"] = ordered_json::array();
    for (const auto& [token, session] : sessions_)
      j["sessions"].push_back(
          {{"sessionId", token}, {"createdByStep", session->createdByStep()}});
    return j.dump(2);
  }

 private:
  void handle_submit(const httplib::Request& req, httplib::Response& res) {
    testgen::ExecutableTestCase tc;
    try {
      tc = testgen::testcase_from_json(req.body);
      std::set<std::string> names;
      for (const auto& s : tc.steps) {
        if (!names.insert(s.step).second)
          throw testgen::TestgenError(testgen::TestgenError::Kind::format,
                                      "duplicate step name " + s.step);
        if (s.duration_s < 0)
          throw testgen::TestgenError(testgen::TestgenError::Kind::format,
                                      "negative duration_s");
        if (s.environment != "local" && s.environment.rfind("session:${", 0) != 0)
          throw testgen::TestgenError(testgen::TestgenError::Kind::format,
                                      "bad environment " + s.environment);
      }
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(ordered_json{{"error", e.what()}}.dump(), "application/json");
      return;
    }
    for (const auto& s : tc.steps) {
      if (!known_adapter(s.tool)) {
        res.status = 422;
        res.set_content(ordered_json{{"error", "unknown tool adapter: " + s.tool}}.dump(),
                        "application/json");
        return;
      }
    }
    std::string id = submit(tc);
    res.status = 202;
    res.set_content(ordered_json{{"executionId", id}}.dump(), "application/json");
  }

  void handle_config(const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> entries;
    try {
      auto doc = ordered_json::parse(req.body);
      if (!doc.is_object()) throw std::runtime_error("config body must be an object");
      for (const auto& [k, v] : doc.items()) entries[k] = v.get<std::string>();
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(ordered_json{{"error", e.what()}}.dump(), "application/json");
      return;
    }
    if (!put_config(entries)) {
      res.status = 400;
      res.set_content(R"({"error":"config names must be placeholder tokens"})",
                      "application/json");
      return;
    }
    res.status = 200;
    res.set_content(R"({"ok":true})", "application/json");
  }

  void run_execution(Execution& exec) {
    {
      std::lock_guard lock(mu_);
      exec.status = ExecStatus::running;
    }
    for (const auto& step : exec.testCase.steps) {
      StepResult result = execute_step(step, exec);
      std::lock_guard lock(mu_);
      exec.stepResults.push_back(result);
      for (const auto& [k, v] : result.boundVars) exec.bindings[k] = v;
    }
    std::lock_guard lock(mu_);
    exec.status = ExecStatus::done;
  }

  StepResult execute_step(const testgen::CommandStep& step, Execution& exec) {
    StepResult r;
    r.step = step.step;
    r.startedAt = util::now_ms();

    std::map<std::string, std::string> bindings, cfg;
    {
      std::lock_guard lock(mu_);
      bindings = exec.bindings;
      cfg = exec.cfgSnapshot;
    }

    // Unmet precondition => the step is skipped, not failed.
    for (const auto& name : step.requires_) {
      if (!bindings.count(name) && !cfg.count(name)) {
        r.status = StepStatus::OMITTED;
        r.endedAt = util::now_ms();
        return r;
      }
    }

    AdapterContext ctx;
    ctx.cfg = &cfg_;
    ctx.duration_ms = static_cast<std::int64_t>(step.duration_s * 1000.0);
    try {
      ctx.params = resolve_placeholders(step.parameters, bindings, cfg);
    } catch (const std::exception& e) {
      r.status = StepStatus::FAILED;
      r.exitCode = -1;
      r.error = e.what();
      r.endedAt = util::now_ms();
      return r;
    }

    std::shared_ptr<Session> session;
    if (step.environment != "local") {
      // session:${var}
      std::string var;
      constexpr std::string_view kPrefix = "session:${";
      if (step.environment.rfind(kPrefix, 0) == 0 && step.environment.back() == '}')
        var = step.environment.substr(kPrefix.size(),
                                      step.environment.size() - kPrefix.size() - 1);
      auto bit = bindings.find(var);
      std::lock_guard lock(mu_);
      auto sit = bit == bindings.end() ? sessions_.end() : sessions_.find(bit->second);
      if (sit == sessions_.end()) {
        r.status = StepStatus::FAILED;
        r.exitCode = -1;
        r.error = "unknown session for environment " + step.environment;
        r.endedAt = util::now_ms();
        return r;
      }
      session = sit->second;
    }

    AdapterResult ar;
    try {
      auto adapter = make_adapter(step.tool);
      if (session) {
        std::lock_guard slock(session->mu);
        ctx.session = session.get();
        ar = adapter->run(ctx);
      } else {
        ar = adapter->run(ctx);
      }
    } catch (const std::exception& e) {
      r.status = StepStatus::FAILED;
      r.exitCode = -1;
      r.error = std::string("adapter error: ") + e.what();
      r.endedAt = util::now_ms();
      return r;
    }

    r.stdout_text = ar.stdout_text;
    r.exitCode = ar.exitCode;

    // A reverse shell announces itself on stdout; register its transport.
    std::smatch sm;
    static const std::regex session_re("SESSION (\\S+)");
    if (std::regex_search(r.stdout_text, sm, session_re)) {
      auto s = std::make_shared<Session>(sm[1].str(), step.step);
      if (s->transport.connect(cfg_.sim_bt_host, cfg_.sim_bt_port)) {
        std::lock_guard lock(mu_);
        sessions_[s->id()] = s;
      }
    }

    if (ar.exitCode != 0) {
      r.status = StepStatus::FAILED;
      r.endedAt = util::now_ms();
      return r;
    }

    if (step.extract) {
      std::regex re(step.extract->pattern);
      std::smatch m;
      if (std::regex_search(r.stdout_text, m, re) &&
          static_cast<int>(m.size()) > step.extract->group) {
        r.boundVars[step.extract->var] = m[step.extract->group].str();
      } else {
        r.status = StepStatus::FAILED;
        r.exitCode = r.exitCode == 0 ? 1 : r.exitCode;
        r.error = "extract pattern did not match";
        r.endedAt = util::now_ms();
        return r;
      }
    }

    r.status = StepStatus::OK;
    r.endedAt = util::now_ms();
    return r;
  }

  AxeConfig cfg_;
  httplib::Server server_;
  std::thread server_thread_;
  std::atomic<bool> stopped_{false};
  int port_ = 0;

  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Execution>> executions_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, std::string> global_config_;
  int exec_counter_ = 0;

  std::mutex workers_mu_;
  std::vector<std::thread> workers_;
};

AxeService::AxeService(AxeConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}
AxeService::~AxeService() = default;

bool AxeService::start() { return impl_->start(); }
void AxeService::stop() { impl_->stop(); }
int AxeService::port() const { return impl_->port(); }
std::string AxeService::submit(const testgen::ExecutableTestCase& tc) { return impl_->submit(tc); }
std::optional<std::string> AxeService::execution_snapshot_json(const std::string& id) const {
  return impl_->execution_snapshot_json(id);
}
bool AxeService::put_config(const std::map<std::string, std::string>& entries) {
  return impl_->put_config(entries);
}
std::string AxeService::sessions_json() const { return impl_->sessions_json(); }
void AxeService::wait_all() { impl_->wait_all(); }

bool AxeService::valid_config_name(const std::string& name) {
  return alia::is_placeholder_token(name);
}

}  // namespace asb::axe
