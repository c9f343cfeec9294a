#include "asb/sim.hpp"

#include <unistd.h>

#include <sstream>

#include "asb/canframe.hpp"
#include "asb/util.hpp"

namespace asb::sim {

namespace {

bool has_prefix(const std::string& s, std::string_view prefix) {
  return s.rfind(prefix, 0) == 0;
}

std::string payload_of(const std::string& symbol) {
  auto colon = symbol.find(':');
  return colon == std::string::npos ? "" : symbol.substr(colon + 1);
}

}  // namespace

Simulator::Simulator(SimConfig cfg, model::StateMachine machine)
    : cfg_(std::move(cfg)), machine_(std::move(machine)), state_(machine_.initial) {}

Simulator::~Simulator() { stop(); }

bool Simulator::start() {
  if (cfg_.btPort != 0 && cfg_.btPort == cfg_.canPort) return false;
  if (cfg_.canBeaconPeriod_ms <= 0) return false;
  if (!bt_server_.start(cfg_.host, cfg_.btPort, [this](int fd) { handle_bt(fd); })) return false;
  if (!can_server_.start(cfg_.host, cfg_.canPort, [this](int fd) { handle_can(fd); })) {
    bt_server_.stop();
    return false;
  }
  running_ = true;
  beacon_thread_ = std::thread([this] { beacon_loop(); });
  return true;
}

void Simulator::stop() {
  if (!running_.exchange(false)) return;
  if (beacon_thread_.joinable()) beacon_thread_.join();
  bt_server_.stop();
  can_server_.stop();
}

std::string Simulator::current_state() const {
  std::lock_guard lock(fsm_mu_);
  return state_;
}

std::string Simulator::new_session() {
  std::ostringstream os;
  os << "s-" << ++session_counter_ << "-" << ::getpid();
  sessions_[os.str()] = true;
  return os.str();
}

Simulator::Effects Simulator::apply_input(const std::string& input) {
  // Caller holds fsm_mu_.
  auto [output, next] = machine_.step(state_, input);
  state_ = next;
  Effects fx;
  fx.output = output;
  if (has_prefix(output, "can.frame:")) {
    auto frame = can::normalize_frame(payload_of(output));
    if (frame) fx.frames.push_back(*frame);
  }
  return fx;
}

void Simulator::broadcast(const std::string& frame, int sender_fd) {
  std::lock_guard lock(bus_mu_);
  for (int fd : can_clients_) {
    if (fd == sender_fd) continue;
    net::write_all(fd, "FRAME " + frame + "\n");
  }
}

void Simulator::beacon_loop() {
  auto frame = can::normalize_frame(cfg_.beaconFrame);
  int elapsed = 0;
  while (running_) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    elapsed += 20;
    if (elapsed < cfg_.canBeaconPeriod_ms) continue;
    elapsed = 0;
    if (frame) broadcast(*frame, -1);
  }
}

void Simulator::handle_bt(int fd) {
  net::FdLineReader reader(fd);
  while (running_) {
    auto line = reader.next_line(200);
    if (!line) {
      if (reader.closed()) break;
      continue;
    }
    std::istringstream is(*line);
    std::string cmd;
    is >> cmd;
    std::string reply;
    std::vector<std::string> frames;

    std::unique_lock lock(fsm_mu_);
    if (cmd == "SCAN") {
      auto fx = apply_input("bt.scan");
      frames = fx.frames;
      reply = has_prefix(fx.output, "bt.target:") ? "TARGET=" + payload_of(fx.output) : "NONE";
    } else if (cmd == "PROBE") {
      auto fx = apply_input("bt.probe");
      frames = fx.frames;
      if (has_prefix(fx.output, "bt.vulnerable:"))
        reply = "VULNERABLE " + payload_of(fx.output);
      else if (fx.output == "bt.safe")
        reply = "SAFE";
      else
        reply = cfg_.vulnerable ? "VULNERABLE blueborne" : "SAFE";
    } else if (cmd == "EXPLOIT") {
      std::string type, target;
      is >> type >> target;
      if (type.empty()) {
        reply = "ERR unknown-command";
      } else if (!cfg_.vulnerable) {
        reply = "DENIED";  // patched firmware: no transition happens
      } else {
        auto fx = apply_input("bt.exploit");
        frames = fx.frames;
        reply = fx.output == "bt.session" ? "SESSION " + new_session() : "DENIED";
      }
    } else if (cmd == "EXEC") {
      std::string token, b64;
      is >> token >> b64;
      auto it = sessions_.find(token);
      if (it == sessions_.end() || !it->second) {
        reply = "ERR no-session";
      } else {
        auto fx = apply_input("sh.exec");
        frames = fx.frames;
        std::string out;
        if (!fx.frames.empty())
          out = "sent " + fx.frames.front();
        else if (has_prefix(fx.output, "sh.out:"))
          out = payload_of(fx.output);
        reply = "OUT " + util::base64_encode(out);
      }
    } else if (cmd == "STEP") {
      std::string symbol;
      is >> symbol;
      if (symbol.empty()) {
        reply = "ERR unknown-command";
      } else {
        auto fx = apply_input(symbol);
        frames = fx.frames;
        reply = "SYM " + (fx.output.empty() ? std::string("-") : fx.output);
      }
    } else {
      reply = "ERR unknown-command";
    }
    lock.unlock();

    for (const auto& f : frames) broadcast(f, -1);
    if (!net::write_all(fd, reply + "\n")) break;
  }
  ::close(fd);
}

void Simulator::handle_can(int fd) {
  {
    std::lock_guard lock(bus_mu_);
    can_clients_.insert(fd);
  }
  net::FdLineReader reader(fd);
  while (running_) {
    auto line = reader.next_line(200);
    if (!line) {
      if (reader.closed()) break;
      continue;
    }
    constexpr std::string_view kSend = "SEND ";
    if (line->rfind(kSend, 0) == 0) {
      auto frame = can::normalize_frame(line->substr(kSend.size()));
      if (!frame) {
        net::write_all(fd, "ERR bad-frame\n");
        continue;
      }
      broadcast(*frame, fd);
    } else if (!line->empty()) {
      net::write_all(fd, "ERR unknown-command\n");
    }
  }
  {
    std::lock_guard lock(bus_mu_);
    can_clients_.erase(fd);
  }
  ::close(fd);
}

std::unique_ptr<Simulator> run_simulator(const SimConfig& cfg, const std::string& fsmSpecPath) {
  model::StateMachine machine = model::load_fsm(fsmSpecPath);  // throws on spec errors
  auto sim = std::make_unique<Simulator>(cfg, std::move(machine));
  if (!sim->start()) throw SimError("cannot bind simulator ports");
  return sim;
}

}  // namespace asb::sim
