#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "asb/model.hpp"
#include "asb/netline.hpp"

namespace asb::sim {

struct SimConfig {
  std::string host = "127.0.0.1";
  int btPort = 7301;   // 0 binds an ephemeral port
  int canPort = 7302;  // 0 binds an ephemeral port
  bool vulnerable = true;
  int canBeaconPeriod_ms = 500;
  std::string beaconFrame = "1A0#00";
};

class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// FSM-driven SUT stand-in. Two line-oriented TCP services:
//
//   BT port:  SCAN                  -> TARGET=<id> | NONE
//             PROBE                 -> VULNERABLE <name> | SAFE
//             EXPLOIT <type> <id>   -> SESSION <token> | DENIED
//             EXEC <token> <b64>    -> OUT <b64> | ERR no-session
//             STEP <inputSymbol>    -> SYM <output|->      (model-level hook,
//                                      bypasses the vulnerable gate)
//   CAN port: client->server  SEND <ID>#<HEX>
//             server->client  FRAME <ID>#<HEX>
//
// Protocol inputs map to FSM input symbols (bt.scan, bt.probe, bt.exploit,
// sh.exec); FSM outputs map to protocol effects: bt.target:<id>, bt.none,
// bt.vulnerable:<name>, bt.safe, bt.session, bt.denied, sh.out:<text> and
// can.frame:<frame> (broadcast on the CAN bus). All transitions are
// serialized so the machine's determinism carries over to the wire.
class Simulator {
 public:
  Simulator(SimConfig cfg, model::StateMachine machine);
  ~Simulator();

  bool start();
  void stop();

  int bt_port() const { return bt_server_.port(); }
  int can_port() const { return can_server_.port(); }
  std::string current_state() const;

 private:
  struct Effects {
    std::string output;               // raw output symbol ("" = null)
    std::vector<std::string> frames;  // CAN frames to broadcast
  };

  void handle_bt(int fd);
  void handle_can(int fd);
  Effects apply_input(const std::string& input);
  void broadcast(const std::string& frame, int sender_fd);
  void beacon_loop();
  std::string new_session();

  SimConfig cfg_;
  model::StateMachine machine_;

  mutable std::mutex fsm_mu_;
  std::string state_;
  std::map<std::string, bool> sessions_;
  int session_counter_ = 0;

  std::mutex bus_mu_;
  std::set<int> can_clients_;

  net::LineServer bt_server_;
  net::LineServer can_server_;
  std::thread beacon_thread_;
  std::atomic<bool> running_{false};
};

// Loads the FSM spec and starts both listeners; throws SimError on a spec or
// bind failure.
std::unique_ptr<Simulator> run_simulator(const SimConfig& cfg, const std::string& fsmSpecPath);

}  // namespace asb::sim
