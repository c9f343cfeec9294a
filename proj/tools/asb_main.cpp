#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "asb/alia.hpp"
#include "asb/axe.hpp"
#include "asb/campaign.hpp"
#include "asb/catalog.hpp"
#include "asb/model.hpp"
#include "asb/oracle.hpp"
#include "asb/sim.hpp"
#include "asb/testgen.hpp"
#include "asb/twin.hpp"
#include "asb/util.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

// Exit-code contract: 0 success, 1 environment/IO failure, 2 input-content
// failure.
constexpr int kOk = 0;
constexpr int kEnvError = 1;
constexpr int kInputError = 2;

volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }

std::string slurp_or_die(const std::string& path) {
  auto text = asb::util::read_file(path);
  if (!text) throw std::system_error(ENOENT, std::generic_category(), path);
  return *text;
}

int report_input_error(const std::string& what) {
  std::cerr << "error: " << what << "\n";
  return kInputError;
}

int report_env_error(const std::string& what) {
  std::cerr << "error: " << what << "\n";
  return kEnvError;
}

struct CompileArgs {
  std::string scenario_file, catalog_file, sut, out;
};

int cmd_compile(const CompileArgs& a) {
  std::string text;
  asb::catalog::Catalog cat;
  try {
    text = slurp_or_die(a.scenario_file);
    cat = asb::catalog::load_catalog(a.catalog_file);
  } catch (const asb::catalog::CatalogError& e) {
    if (e.kind() == asb::catalog::CatalogErrorKind::io) return report_env_error(e.what());
    return report_input_error(e.what());
  } catch (const std::system_error& e) {
    return report_env_error(e.what());
  }

  const auto* sut = cat.find_sut(a.sut);
  if (!sut) return report_input_error("unknown SUT '" + a.sut + "' in catalog");

  asb::alia::AttackScenario scenario;
  try {
    scenario = asb::alia::parse_scenario(text);
  } catch (const asb::alia::ParseError& e) {
    std::cerr << a.scenario_file << ":" << e.what() << "\n";
    return kInputError;
  }
  if (scenario.name.empty()) scenario.name = fs::path(a.scenario_file).stem().string();

  auto diagnostics = asb::alia::validate_scenario(scenario);
  bool errors = false;
  for (const auto& d : diagnostics) {
    std::cerr << a.scenario_file << ":" << d.pos.line << ":" << d.pos.col << ": "
              << asb::alia::to_string(d.severity) << ": " << d.message << "\n";
    errors |= d.severity == asb::alia::Severity::error;
  }
  if (errors) return kInputError;

  asb::testgen::ExecutableTestCase tc;
  try {
    tc = asb::testgen::concretize(scenario, *sut, cat);
  } catch (const std::exception& e) {
    return report_input_error(e.what());
  }
  std::string out_path = a.out.empty() ? a.scenario_file + ".testcase.json" : a.out;
  if (!asb::util::write_file(out_path, asb::testgen::testcase_to_json(tc)))
    return report_env_error("cannot write " + out_path);
  std::cout << out_path << "\n";
  return kOk;
}

struct AnalyzeArgs {
  std::string firmware, sigdb, vulndb, twin_file;
  std::string out_twin, out_findings;
};

ordered_json findings_json(const std::vector<asb::twin::Finding>& findings,
                           const std::vector<std::string>& skipped) {
  ordered_json j;
  j["findings"] = ordered_json::array();
  for (const auto& f : findings) {
    ordered_json fj;
    fj["vulnId"] = f.vulnId;
    fj["cwe"] = f.cwe;
    fj["component"] = {{"name", f.bomEntry.name}, {"version", f.bomEntry.version}};
    if (f.bomEntry.offset) fj["component"]["offset"] = *f.bomEntry.offset;
    fj["interfaceKind"] = f.interfaceKind;
    j["findings"].push_back(fj);
  }
  j["versionParseFailures"] = skipped;
  return j;
}

std::vector<asb::twin::Finding> findings_from_json(const std::string& text) {
  std::vector<asb::twin::Finding> out;
  auto doc = ordered_json::parse(text);
  for (const auto& fj : doc.at("findings")) {
    asb::twin::Finding f;
    f.vulnId = fj.at("vulnId").get<std::string>();
    f.cwe = fj.at("cwe").get<std::string>();
    f.bomEntry.name = fj.at("component").at("name").get<std::string>();
    f.bomEntry.version = fj.at("component").value("version", "");
    f.interfaceKind = fj.at("interfaceKind").get<std::string>();
    out.push_back(std::move(f));
  }
  return out;
}

int cmd_analyze(const AnalyzeArgs& a) {
  std::string blob, twin_text;
  std::vector<asb::twin::Signature> sigdb;
  std::vector<asb::twin::VulnRecord> vulndb;
  try {
    blob = slurp_or_die(a.firmware);
    twin_text = slurp_or_die(a.twin_file);
  } catch (const std::system_error& e) {
    return report_env_error(e.what());
  }
  try {
    sigdb = asb::twin::load_signature_db(a.sigdb);
    vulndb = asb::twin::load_vuln_db(a.vulndb);
  } catch (const asb::twin::TwinError& e) {
    if (e.kind() == asb::twin::TwinError::Kind::io) return report_env_error(e.what());
    return report_input_error(e.what());
  }

  try {
    auto scanBom = asb::twin::scan_firmware(blob, sigdb);
    auto assembled = asb::twin::assemble_twin(scanBom, twin_text);
    auto match = asb::twin::match_vulnerabilities(assembled.twin.bom, vulndb);

    std::string out_twin = a.out_twin.empty() ? a.twin_file + ".assembled.json" : a.out_twin;
    std::string out_findings =
        a.out_findings.empty() ? a.twin_file + ".findings.json" : a.out_findings;
    if (!asb::util::write_file(out_twin, asb::twin::twin_to_json(assembled.twin)))
      return report_env_error("cannot write " + out_twin);
    if (!asb::util::write_file(
            out_findings, findings_json(match.findings, match.versionParseFailures).dump(2) + "\n"))
      return report_env_error("cannot write " + out_findings);
    for (const auto& c : assembled.conflicts)
      std::cerr << "bom conflict (scan wins): " << c << "\n";
    std::cout << out_twin << "\n" << out_findings << "\n";
    return kOk;
  } catch (const asb::twin::TwinError& e) {
    return report_input_error(e.what());
  }
}

struct GenArgs {
  std::string twin_file, findings_file, strategy, out_dir;
  std::string catalog_file, sut, mapping_file, properties_file;
  std::uint64_t seed = 1;
  int fuzz_count = 8;
};

int cmd_gen(const GenArgs& a) {
  asb::twin::CyberDigitalTwin twin;
  std::vector<asb::twin::Finding> findings;
  asb::catalog::Catalog cat;
  asb::testgen::MappingDb mapping;
  try {
    twin = asb::twin::load_twin(a.twin_file);
    if (!a.findings_file.empty()) findings = findings_from_json(slurp_or_die(a.findings_file));
    cat = asb::catalog::load_catalog(a.catalog_file);
    mapping = asb::testgen::load_mapping(a.mapping_file);
  } catch (const std::system_error& e) {
    return report_env_error(e.what());
  } catch (const std::exception& e) {
    return report_input_error(e.what());
  }
  const auto* sut = cat.find_sut(a.sut);
  if (!sut) return report_input_error("unknown SUT '" + a.sut + "' in catalog");

  std::error_code ec;
  fs::create_directories(fs::path(a.out_dir) / "scenarios", ec);
  fs::create_directories(fs::path(a.out_dir) / "testcases", ec);
  fs::create_directories(fs::path(a.out_dir) / "seeds", ec);
  if (ec) return report_env_error("cannot create output directories under " + a.out_dir);

  ordered_json gen_report;
  gen_report["strategy"] = a.strategy;

  auto write_testcase = [&](const std::string& name,
                            const asb::testgen::ExecutableTestCase& tc) -> bool {
    auto path = fs::path(a.out_dir) / "testcases" / (name + ".json");
    return asb::util::write_file(path.string(), asb::testgen::testcase_to_json(tc));
  };

  try {
    if (a.strategy == "dsl") {
      auto result = asb::testgen::scenarios_from_findings(findings, mapping);
      gen_report["scenarios"] = ordered_json::array();
      gen_report["unmapped"] = ordered_json::array();
      int idx = 0;
      for (const auto& scenario : result.scenarios) {
        std::string name = "dsl-" + std::to_string(idx++) + "-" + scenario.name;
        auto spath = fs::path(a.out_dir) / "scenarios" / (name + ".alia");
        if (!asb::util::write_file(spath.string(), asb::alia::print_scenario(scenario)))
          return report_env_error("cannot write " + spath.string());
        auto tc = asb::testgen::concretize(scenario, *sut, cat);
        if (!write_testcase(name, tc)) return report_env_error("cannot write test case " + name);
        gen_report["scenarios"].push_back(name);
      }
      for (const auto& u : result.unmapped)
        gen_report["unmapped"].push_back(
            {{"vulnId", u.vulnId}, {"cwe", u.cwe}, {"interfaceKind", u.interfaceKind}});
    } else if (a.strategy == "mutation") {
      auto machine = asb::model::derive_machine(twin.flowGraph, twin.interfaces);
      auto mutants = asb::model::enumerate_mutants(
          machine, {asb::model::MutOp::CTT, asb::model::MutOp::CTO, asb::model::MutOp::DTR,
                    asb::model::MutOp::ATR});
      mutants = asb::model::rank_mutants(std::move(mutants), machine);
      gen_report["mutants"] = static_cast<int>(mutants.size());
      gen_report["killable"] = 0;
      gen_report["equivalent"] = 0;
      int idx = 0;
      for (const auto& mutant : mutants) {
        auto trace = asb::model::distinguishing_test(machine, mutant.machine);
        if (!trace) {
          gen_report["equivalent"] = gen_report["equivalent"].get<int>() + 1;
          continue;
        }
        gen_report["killable"] = gen_report["killable"].get<int>() + 1;
        char buf[16];
        std::snprintf(buf, sizeof buf, "%03d", idx++);
        std::string name = "mut-" + std::string(buf) + "-" + asb::model::to_string(mutant.op);
        auto tc = asb::testgen::testcase_from_trace(*trace, *sut, cat, mapping, machine, name);
        if (!write_testcase(name, tc)) return report_env_error("cannot write test case " + name);
      }
    } else if (a.strategy == "modelcheck") {
      auto machine = asb::model::derive_machine(twin.flowGraph, twin.interfaces);
      std::vector<asb::model::SliceFinding> sliceFindings;
      for (const auto& f : findings) sliceFindings.push_back({f.bomEntry.name, f.vulnId});
      auto slice = asb::model::security_slice(machine, sliceFindings);
      auto properties = slice.properties;
      if (!a.properties_file.empty()) {
        auto extra = asb::model::parse_properties(slurp_or_die(a.properties_file));
        properties.insert(properties.end(), extra.begin(), extra.end());
      }
      gen_report["properties"] = ordered_json::array();
      gen_report["unmatchedComponents"] = slice.unmatchedComponents;
      int idx = 0;
      for (const auto& p : properties) {
        // Slice-derived properties run on the slice; file-supplied ones on
        // the full machine.
        const auto& target =
            idx < static_cast<int>(slice.properties.size()) ? slice.machine : machine;
        auto cex = asb::model::check_property(target, p);
        ordered_json pj;
        pj["property"] = asb::model::print_property(p);
        if (!cex) {
          pj["result"] = "Pass";
        } else {
          pj["result"] = "Violated";
          pj["trace"] = cex->trace;
          std::string name = "mc-" + std::to_string(idx) + "-" + p.name;
          if (!cex->trace.empty()) {
            auto tc =
                asb::testgen::testcase_from_trace(cex->trace, *sut, cat, mapping, target, name);
            if (!write_testcase(name, tc))
              return report_env_error("cannot write test case " + name);
            pj["testCase"] = name;
          }
          auto corpus = asb::testgen::fuzz_corpus_from_counterexample(*cex, a.fuzz_count, a.seed);
          for (size_t s = 0; s < corpus.size(); ++s) {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%04zu", s);
            auto seed_path = fs::path(a.out_dir) / "seeds" / (name + "-" + buf + ".bin");
            if (!asb::util::write_file(seed_path.string(), corpus[s]))
              return report_env_error("cannot write seed " + seed_path.string());
          }
          pj["seeds"] = static_cast<int>(corpus.size());
        }
        gen_report["properties"].push_back(pj);
        ++idx;
      }
    } else {
      return report_input_error("unknown strategy '" + a.strategy + "' (dsl|mutation|modelcheck)");
    }
  } catch (const std::exception& e) {
    return report_input_error(e.what());
  }

  auto report_path = fs::path(a.out_dir) / "gen-report.json";
  if (!asb::util::write_file(report_path.string(), gen_report.dump(2) + "\n"))
    return report_env_error("cannot write " + report_path.string());
  std::cout << report_path.string() << "\n";
  return kOk;
}

struct RunArgs {
  std::string campaign_dir, axe_url, sim_can, catalog_file, sut, out;
  int parallel = 1;
};

std::string origin_of(const std::string& filename) {
  if (filename.rfind("mut-", 0) == 0) return "mutation";
  if (filename.rfind("mc-", 0) == 0) return "model-check";
  if (filename.rfind("dsl-", 0) == 0) return "findings-dsl";
  return "static-dsl";
}

int cmd_run(const RunArgs& a) {
  asb::campaign::CampaignConfig cfg;
  auto axe = asb::net::parse_hostport(a.axe_url);
  if (!axe) return report_input_error("--axe-url expects host:port");
  cfg.axe_host = axe->host;
  cfg.axe_port = axe->port;
  if (!a.sim_can.empty()) {
    auto can = asb::net::parse_hostport(a.sim_can);
    if (!can) return report_input_error("--sim-can expects host:port");
    cfg.sim_can_host = can->host;
    cfg.sim_can_port = can->port;
  }
  cfg.parallel = a.parallel;

  if (!a.catalog_file.empty()) {
    try {
      auto cat = asb::catalog::load_catalog(a.catalog_file);
      const auto* sut = cat.find_sut(a.sut);
      if (!sut) return report_input_error("unknown SUT '" + a.sut + "' in catalog");
      for (const auto& [name, binding] : sut->symbols) cfg.globalConfig[name] = binding.value;
    } catch (const asb::catalog::CatalogError& e) {
      if (e.kind() == asb::catalog::CatalogErrorKind::io) return report_env_error(e.what());
      return report_input_error(e.what());
    }
  }

  fs::path dir = fs::path(a.campaign_dir) / "testcases";
  if (!fs::exists(dir)) return report_env_error("no testcases directory under " + a.campaign_dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::vector<asb::campaign::CampaignCase> cases;
  for (const auto& f : files) {
    try {
      auto tc = asb::testgen::testcase_from_json(slurp_or_die(f.string()));
      cases.push_back({origin_of(f.filename().string()), std::move(tc)});
    } catch (const std::exception& e) {
      return report_input_error(f.string() + ": " + e.what());
    }
  }

  try {
    auto report = asb::campaign::run_campaign(fs::path(a.campaign_dir).filename().string(), cases,
                                              cfg);
    std::string out = a.out.empty() ? (fs::path(a.campaign_dir) / "report.json").string() : a.out;
    if (!asb::util::write_file(out, asb::campaign::report_to_json(report)))
      return report_env_error("cannot write " + out);
    bool insecure = false;
    for (const auto& run : report.testCases) {
      std::cout << run.id << ": " << run.verdict.aggregate() << "\n";
      insecure |= run.verdict.insecure;
    }
    std::cout << out << "\n";
    (void)insecure;
    return kOk;
  } catch (const asb::campaign::CampaignError& e) {
    return report_env_error(e.what());
  }
}

struct SimArgs {
  std::string fsm_file;
  std::string bt = "127.0.0.1:7301";
  std::string can = "127.0.0.1:7302";
  bool patched = false;
  int beacon_period_ms = 500;
  std::string beacon_frame = "1A0#00";
};

int cmd_sim(const SimArgs& a) {
  asb::sim::SimConfig cfg;
  auto bt = asb::net::parse_hostport(a.bt);
  auto can = asb::net::parse_hostport(a.can);
  if (!bt || !can) return report_input_error("--bt/--can expect host:port");
  cfg.host = bt->host;
  cfg.btPort = bt->port;
  cfg.canPort = can->port;
  cfg.vulnerable = !a.patched;
  cfg.canBeaconPeriod_ms = a.beacon_period_ms;
  cfg.beaconFrame = a.beacon_frame;
  try {
    auto sim = asb::sim::run_simulator(cfg, a.fsm_file);
    std::cout << "sim-sut listening bt=" << cfg.host << ":" << sim->bt_port()
              << " can=" << cfg.host << ":" << sim->can_port()
              << (cfg.vulnerable ? " (vulnerable)" : " (patched)") << "\n";
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    sim->stop();
    return kOk;
  } catch (const asb::model::ModelError& e) {
    return report_input_error(e.what());
  } catch (const asb::sim::SimError& e) {
    return report_env_error(e.what());
  }
}

struct AxeArgs {
  std::string listen = "127.0.0.1:8080";
  std::string sim_bt = "127.0.0.1:7301";
  std::string sim_can = "127.0.0.1:7302";
  std::vector<std::string> allow;
};

int cmd_axe(const AxeArgs& a) {
  asb::axe::AxeConfig cfg;
  auto listen = asb::net::parse_hostport(a.listen);
  auto bt = asb::net::parse_hostport(a.sim_bt);
  auto can = asb::net::parse_hostport(a.sim_can);
  if (!listen || !bt || !can) return report_input_error("bad host:port flag");
  cfg.listen_host = listen->host;
  cfg.listen_port = listen->port;
  cfg.sim_bt_host = bt->host;
  cfg.sim_bt_port = bt->port;
  cfg.sim_can_host = can->host;
  cfg.sim_can_port = can->port;
  cfg.process_allowlist.insert(a.allow.begin(), a.allow.end());

  asb::axe::AxeService service(cfg);
  if (!service.start()) return report_env_error("cannot bind " + a.listen);
  std::cout << "axe listening on " << cfg.listen_host << ":" << service.port() << "\n";
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  service.stop();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Automotive security test bench: compile attack scenarios, analyze firmware "
               "twins, generate and execute test campaigns"};
  app.require_subcommand(1);

  CompileArgs compile_args;
  auto* compile = app.add_subcommand("compile", "Compile an attack scenario into a test case");
  compile->add_option("scenario", compile_args.scenario_file, "ALIA scenario file")->required();
  compile->add_option("--catalog", compile_args.catalog_file, "SUT catalog JSON")->required();
  compile->add_option("--sut", compile_args.sut, "SUT id")->required();
  compile->add_option("--out", compile_args.out, "Output test-case JSON path");

  AnalyzeArgs analyze_args;
  auto* analyze = app.add_subcommand("analyze", "Derive a digital twin and findings from firmware");
  analyze->add_option("firmware", analyze_args.firmware, "Firmware blob")->required();
  analyze->add_option("--sigdb", analyze_args.sigdb, "Signature DB JSON")->required();
  analyze->add_option("--vulndb", analyze_args.vulndb, "Vulnerability DB JSON")->required();
  analyze->add_option("--twin", analyze_args.twin_file, "Twin file JSON")->required();
  analyze->add_option("--out-twin", analyze_args.out_twin, "Assembled twin output path");
  analyze->add_option("--out-findings", analyze_args.out_findings, "Findings output path");

  GenArgs gen_args;
  auto* gen = app.add_subcommand("gen", "Generate test cases from a twin");
  gen->add_option("--twin", gen_args.twin_file, "Assembled twin JSON")->required();
  gen->add_option("--findings", gen_args.findings_file, "Findings JSON");
  gen->add_option("--strategy", gen_args.strategy, "dsl | mutation | modelcheck")->required();
  gen->add_option("--out", gen_args.out_dir, "Campaign output directory")->required();
  gen->add_option("--catalog", gen_args.catalog_file, "SUT catalog JSON")->required();
  gen->add_option("--sut", gen_args.sut, "SUT id")->required();
  gen->add_option("--mapping", gen_args.mapping_file, "Mapping DB JSON")->required();
  gen->add_option("--properties", gen_args.properties_file, "Extra property file");
  gen->add_option("--seed", gen_args.seed, "PRNG seed for fuzz corpora");
  gen->add_option("--fuzz-count", gen_args.fuzz_count, "Mutated seeds per counterexample");

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Execute a campaign and judge verdicts");
  run->add_option("campaign", run_args.campaign_dir, "Campaign directory")->required();
  run->add_option("--axe-url", run_args.axe_url, "Execution engine host:port")->required();
  run->add_option("--sim-can", run_args.sim_can, "Simulator CAN host:port");
  run->add_option("--catalog", run_args.catalog_file, "Catalog for global config push");
  run->add_option("--sut", run_args.sut, "SUT id");
  run->add_option("--parallel", run_args.parallel, "Concurrent executions");
  run->add_option("--out", run_args.out, "Report output path");

  SimArgs sim_args;
  auto* simcmd = app.add_subcommand("sim", "Run the simulated SUT");
  simcmd->add_option("--fsm", sim_args.fsm_file, "FSM spec file")->required();
  simcmd->add_option("--bt", sim_args.bt, "BT listen host:port");
  simcmd->add_option("--can", sim_args.can, "CAN listen host:port");
  simcmd->add_flag("--patched", sim_args.patched, "Deny exploit attempts");
  simcmd->add_option("--beacon-period-ms", sim_args.beacon_period_ms, "CAN beacon period");
  simcmd->add_option("--beacon-frame", sim_args.beacon_frame, "CAN beacon frame");

  AxeArgs axe_args;
  auto* axecmd = app.add_subcommand("axe", "Run the attack execution engine");
  axecmd->add_option("--listen", axe_args.listen, "Listen host:port");
  axecmd->add_option("--sim-bt", axe_args.sim_bt, "Simulator BT host:port");
  axecmd->add_option("--sim-can", axe_args.sim_can, "Simulator CAN host:port");
  axecmd->add_option("--allow", axe_args.allow, "Allowlisted local-process programs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (compile->parsed()) return cmd_compile(compile_args);
    if (analyze->parsed()) return cmd_analyze(analyze_args);
    if (gen->parsed()) return cmd_gen(gen_args);
    if (run->parsed()) return cmd_run(run_args);
    if (simcmd->parsed()) return cmd_sim(sim_args);
    if (axecmd->parsed()) return cmd_axe(axe_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kEnvError;
  }
  return kOk;
}
