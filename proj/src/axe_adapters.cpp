#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstring>
#include <sstream>

#include "asb/axe.hpp"
#include "asb/canframe.hpp"
#include "asb/netline.hpp"
#include "asb/util.hpp"

namespace asb::axe {

namespace {

std::string flag_value(const std::vector<std::string>& params, std::string_view flag,
                       const std::string& fallback = "") {
  for (size_t i = 0; i + 1 < params.size(); ++i)
    if (params[i] == flag) return params[i + 1];
  return fallback;
}

int reply_timeout(const AdapterContext& ctx) {
  // The collection window caps how long we wait for the reply line.
  return static_cast<int>(std::max<std::int64_t>(ctx.duration_ms, 250));
}

// One request/response against the simulator's BT port.
class BtLineAdapter : public Adapter {
 public:
  AdapterResult run(const AdapterContext& ctx) override {
    net::LineClient client;
    if (!client.connect(ctx.cfg->sim_bt_host, ctx.cfg->sim_bt_port))
      throw std::runtime_error("cannot reach simulator BT port");
    if (!client.send_line(request(ctx))) throw std::runtime_error("send failed");
    auto reply = client.recv_line(reply_timeout(ctx));
    if (!reply) throw std::runtime_error("no reply from simulator");
    AdapterResult r;
    r.stdout_text = *reply + "\n";
    r.exitCode = reply->rfind("ERR", 0) == 0 ? 1 : 0;
    return r;
  }

 protected:
  virtual std::string request(const AdapterContext& ctx) = 0;
};

class BtScanAdapter : public BtLineAdapter {
 protected:
  std::string request(const AdapterContext&) override { return "SCAN"; }
};

class ExploitAdapter : public BtLineAdapter {
 protected:
  std::string request(const AdapterContext& ctx) override {
    std::string type = flag_value(ctx.params, "--type", "blueborne");
    std::string target = flag_value(ctx.params, "--target", "unknown");
    return "EXPLOIT " + type + " " + target;
  }
};

// Local stand-in for dropping an attack script on the target; emits the
// handle the next step picks up via extract.
class InstallScriptAdapter : public Adapter {
 public:
  AdapterResult run(const AdapterContext& ctx) override {
    std::string kind = flag_value(ctx.params, "--kind", "payload");
    return {"SCRIPT=" + kind + ".sh\n", 0};
  }
};

// Pipes a command line into an established reverse-shell session.
class ShellExecAdapter : public Adapter {
 public:
  AdapterResult run(const AdapterContext& ctx) override {
    if (!ctx.session) throw std::runtime_error("sim-shell-exec requires a session environment");
    std::string cmd;
    for (const auto& p : ctx.params) {
      if (!cmd.empty()) cmd += " ";
      cmd += p;
    }
    auto& transport = ctx.session->transport;
    if (!transport.connected()) throw std::runtime_error("session transport closed");
    if (!transport.send_line("EXEC " + ctx.session->id() + " " + util::base64_encode(cmd)))
      throw std::runtime_error("send failed");
    auto reply = transport.recv_line(reply_timeout(ctx));
    if (!reply) throw std::runtime_error("no reply from session");
    AdapterResult r;
    constexpr std::string_view kOut = "OUT ";
    if (reply->rfind(kOut, 0) == 0) {
      auto decoded = util::base64_decode(reply->substr(kOut.size()));
      r.stdout_text = (decoded ? *decoded : "") + "\n";
      r.exitCode = 0;
    } else {
      r.stdout_text = *reply + "\n";
      r.exitCode = 1;
    }
    return r;
  }
};

class CanSendAdapter : public Adapter {
 public:
  AdapterResult run(const AdapterContext& ctx) override {
    std::string frame_text = flag_value(ctx.params, "--frame");
    auto frame = can::normalize_frame(frame_text);
    if (!frame) throw std::runtime_error("bad --frame value: " + frame_text);
    net::LineClient client;
    if (!client.connect(ctx.cfg->sim_can_host, ctx.cfg->sim_can_port))
      throw std::runtime_error("cannot reach simulator CAN port");
    if (!client.send_line("SEND " + *frame)) throw std::runtime_error("send failed");
    // The bus only talks back on error.
    auto reply = client.recv_line(150);
    AdapterResult r;
    if (reply && reply->rfind("ERR", 0) == 0) {
      r.stdout_text = *reply + "\n";
      r.exitCode = 1;
    } else {
      r.stdout_text = "sent " + *frame + "\n";
      r.exitCode = 0;
    }
    return r;
  }
};

// Generic local process runner behind an explicit allowlist. Output is
// collected until exit or the duration deadline, then the process is killed.
class LocalProcessAdapter : public Adapter {
 public:
  AdapterResult run(const AdapterContext& ctx) override {
    if (ctx.params.empty()) throw std::runtime_error("local-process: no program given");
    const std::string& program = ctx.params[0];
    if (!ctx.cfg->process_allowlist.count(program))
      throw std::runtime_error("local-process: '" + program + "' is not allowlisted");

    int pipefd[2];
    if (::pipe(pipefd) != 0) throw std::runtime_error("pipe failed");
    pid_t pid = ::fork();
    if (pid < 0) {
      ::close(pipefd[0]);
      ::close(pipefd[1]);
      throw std::runtime_error("fork failed");
    }
    if (pid == 0) {
      ::dup2(pipefd[1], STDOUT_FILENO);
      ::dup2(pipefd[1], STDERR_FILENO);
      ::close(pipefd[0]);
      ::close(pipefd[1]);
      std::vector<char*> argv;
      for (const auto& p : ctx.params) argv.push_back(const_cast<char*>(p.c_str()));
      argv.push_back(nullptr);
      ::execvp(argv[0], argv.data());
      _exit(127);
    }
    ::close(pipefd[1]);

    AdapterResult r;
    std::int64_t deadline = util::now_ms() + ctx.duration_ms;
    bool exited = false;
    int status = 0;
    for (;;) {
      std::int64_t left = deadline - util::now_ms();
      struct pollfd pfd{pipefd[0], POLLIN, 0};
      int rc = ::poll(&pfd, 1, static_cast<int>(std::max<std::int64_t>(0, std::min<std::int64_t>(left, 100))));
      if (rc > 0) {
        char buf[4096];
        ssize_t n = ::read(pipefd[0], buf, sizeof buf);
        if (n > 0) {
          r.stdout_text.append(buf, static_cast<size_t>(n));
          continue;
        }
        break;  // EOF: child closed stdout
      }
      if (util::now_ms() >= deadline) {
        ::kill(pid, SIGKILL);
        break;
      }
      pid_t done = ::waitpid(pid, &status, WNOHANG);
      if (done == pid) {
        exited = true;
        // Drain whatever is left without blocking.
        char buf[4096];
        ssize_t n;
        while ((n = ::read(pipefd[0], buf, sizeof buf)) > 0)
          r.stdout_text.append(buf, static_cast<size_t>(n));
        break;
      }
    }
    ::close(pipefd[0]);
    if (!exited) ::waitpid(pid, &status, 0);
    r.exitCode = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
  }
};

}  // namespace

bool known_adapter(const std::string& tool) {
  return tool == "sim-btscan" || tool == "sim-exploit" || tool == "sim-install-script" ||
         tool == "sim-shell-exec" || tool == "sim-can-send" || tool == "local-process";
}

std::unique_ptr<Adapter> make_adapter(const std::string& tool) {
  if (tool == "sim-btscan") return std::make_unique<BtScanAdapter>();
  if (tool == "sim-exploit") return std::make_unique<ExploitAdapter>();
  if (tool == "sim-install-script") return std::make_unique<InstallScriptAdapter>();
  if (tool == "sim-shell-exec") return std::make_unique<ShellExecAdapter>();
  if (tool == "sim-can-send") return std::make_unique<CanSendAdapter>();
  if (tool == "local-process") return std::make_unique<LocalProcessAdapter>();
  throw std::runtime_error("unknown tool adapter: " + tool);
}

}  // namespace asb::axe
