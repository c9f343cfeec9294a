#include <unistd.h>

#include <random>

#include "asb/model.hpp"
#include "asb/netline.hpp"
#include "asb/oracle.hpp"
#include "asb/sim.hpp"
#include "asb/util.hpp"
#include "doctest.h"

using namespace asb;

namespace {

std::string fixture_path(const std::string& name) {
  return std::string(ASB_FIXTURE_DIR) + "/" + name;
}

sim::SimConfig test_config(bool vulnerable = true) {
  sim::SimConfig cfg;
  cfg.btPort = 0;
  cfg.canPort = 0;
  cfg.vulnerable = vulnerable;
  cfg.canBeaconPeriod_ms = 10000;  // keep the bus quiet unless a test wants beacons
  return cfg;
}

std::string ask(net::LineClient& c, const std::string& line) {
  REQUIRE(c.send_line(line));
  auto reply = c.recv_line(2000);
  REQUIRE(reply.has_value());
  return *reply;
}

}  // namespace

TEST_CASE("vulnerable demo simulator: scan, exploit, exec") {
  auto sim = sim::run_simulator(test_config(), fixture_path("fsm/demo.fsm"));
  net::LineClient bt;
  REQUIRE(bt.connect("127.0.0.1", sim->bt_port()));

  CHECK(ask(bt, "SCAN") == "TARGET=sim-ecu-01");
  CHECK(ask(bt, "PROBE") == "VULNERABLE blueborne");

  auto session_reply = ask(bt, "EXPLOIT blueborne sim-ecu-01");
  REQUIRE(session_reply.rfind("SESSION ", 0) == 0);
  std::string token = session_reply.substr(8);

  net::LineClient can;
  REQUIRE(can.connect("127.0.0.1", sim->can_port()));

  auto out = ask(bt, "EXEC " + token + " " + util::base64_encode("run can-dos.sh"));
  REQUIRE(out.rfind("OUT ", 0) == 0);
  auto decoded = util::base64_decode(out.substr(4));
  REQUIRE(decoded.has_value());
  CHECK(*decoded == "sent 5A1#1122334455667788");

  auto frame = can.recv_line(2000);
  REQUIRE(frame.has_value());
  CHECK(*frame == "FRAME 5A1#1122334455667788");

  // two sequential execs, two broadcasts, in order
  ask(bt, "EXEC " + token + " " + util::base64_encode("again"));
  auto frame2 = can.recv_line(2000);
  REQUIRE(frame2.has_value());
  CHECK(*frame2 == "FRAME 5A1#1122334455667788");

  CHECK(ask(bt, "EXEC bogus-token " + util::base64_encode("x")) == "ERR no-session");
  CHECK(ask(bt, "FLY") == "ERR unknown-command");
}

TEST_CASE("patched simulator denies the exploit but still scans") {
  auto sim = sim::run_simulator(test_config(false), fixture_path("fsm/demo.fsm"));
  net::LineClient bt;
  REQUIRE(bt.connect("127.0.0.1", sim->bt_port()));
  CHECK(ask(bt, "SCAN") == "TARGET=sim-ecu-01");
  CHECK(ask(bt, "PROBE") == "SAFE");
  CHECK(ask(bt, "EXPLOIT blueborne sim-ecu-01") == "DENIED");
  CHECK(sim->current_state() == "n_bt");  // no transition happened
}

TEST_CASE("CAN bus: frame fan-out to everyone but the sender") {
  auto sim = sim::run_simulator(test_config(), fixture_path("fsm/demo.fsm"));
  net::LineClient a, b, c;
  REQUIRE(a.connect("127.0.0.1", sim->can_port()));
  REQUIRE(b.connect("127.0.0.1", sim->can_port()));
  REQUIRE(c.connect("127.0.0.1", sim->can_port()));

  REQUIRE(a.send_line("SEND 5A1#11.22"));
  auto rb = b.recv_line(2000);
  auto rc = c.recv_line(2000);
  REQUIRE(rb.has_value());
  REQUIRE(rc.has_value());
  CHECK(*rb == "FRAME 5A1#1122");
  CHECK(*rc == "FRAME 5A1#1122");
  CHECK_FALSE(a.recv_line(150).has_value());  // sender stays silent

  REQUIRE(a.send_line("SEND nothex"));
  auto err = a.recv_line(2000);
  REQUIRE(err.has_value());
  CHECK(*err == "ERR bad-frame");
  CHECK_FALSE(b.recv_line(100).has_value());  // error goes to the sender only

  // per-sender ordering
  for (int i = 0; i < 10; ++i) REQUIRE(a.send_line("SEND 10#0" + std::to_string(i % 10)));
  for (int i = 0; i < 10; ++i) {
    auto f = b.recv_line(2000);
    REQUIRE(f.has_value());
    CHECK(*f == "FRAME 10#0" + std::to_string(i % 10));
  }
}

TEST_CASE("beacon frame shows up periodically") {
  auto cfg = test_config();
  cfg.canBeaconPeriod_ms = 60;
  cfg.beaconFrame = "1A0#00";
  auto sim = sim::run_simulator(cfg, fixture_path("fsm/demo.fsm"));
  oracle::CanSubscriber sub;
  REQUIRE(sub.connect("127.0.0.1", sim->can_port()));
  std::this_thread::sleep_for(std::chrono::milliseconds(400));
  sub.stop();
  auto events = sub.events();
  CHECK(events.size() >= 3);
  for (const auto& e : events) CHECK(e.payload == "1A0#00");
}

TEST_CASE("subscriber counts malformed lines instead of dying") {
  net::LineServer server;
  REQUIRE(server.start("127.0.0.1", 0, [](int fd) {
    net::write_all(fd, "FRAME 1#00\nGARBAGE LINE\nFRAME not-a-frame\nFRAME 2#FF\n");
    ::close(fd);
  }));
  oracle::CanSubscriber sub;
  REQUIRE(sub.connect("127.0.0.1", server.port()));
  std::this_thread::sleep_for(std::chrono::milliseconds(300));
  sub.stop();
  server.stop();
  auto events = sub.events();
  REQUIRE(events.size() == 2);
  CHECK(events[0].payload == "1#00");
  CHECK(events[1].payload == "2#FF");
  CHECK(sub.malformed_count() == 2);
}

TEST_CASE("conformance: random walks over STEP match the model") {
  auto machine = model::load_fsm(fixture_path("fsm/reference.fsm"));
  auto sim = sim::run_simulator(test_config(), fixture_path("fsm/reference.fsm"));
  std::vector<std::string> inputs(machine.inputs.begin(), machine.inputs.end());

  std::mt19937_64 rng(4242);
  int words = 0;
  net::LineClient bt;
  REQUIRE(bt.connect("127.0.0.1", sim->bt_port()));
  for (int round = 0; round < 1000; ++round) {
    size_t len = 1 + rng() % 4;
    std::vector<std::string> word;
    for (size_t i = 0; i < len; ++i) word.push_back(inputs[rng() % inputs.size()]);

    // fresh simulator state per word: restart via a new simulator is slow, so
    // walk the model in lockstep from the simulator's current state instead
    std::string state = sim->current_state();
    for (const auto& in : word) {
      auto reply = ask(bt, "STEP " + in);
      auto [expected_out, next] = machine.step(state, in);
      std::string expected = "SYM " + (expected_out.empty() ? "-" : expected_out);
      CHECK(reply == expected);
      state = next;
    }
    CHECK(sim->current_state() == state);
    ++words;
  }
  CHECK(words == 1000);
}
