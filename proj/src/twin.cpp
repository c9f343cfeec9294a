#include "asb/twin.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <future>
#include <set>
#include <thread>

#include "asb/version.hpp"
#include "json.hpp"

namespace asb::twin {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TwinError(TwinError::Kind::io, "cannot open file: " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::optional<std::string> hex_to_bytes(std::string_view hex) {
  if (hex.size() % 2 != 0) return std::nullopt;
  std::string out;
  out.reserve(hex.size() / 2);
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  for (size_t i = 0; i < hex.size(); i += 2) {
    int hi = nibble(hex[i]), lo = nibble(hex[i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out.push_back(static_cast<char>((hi << 4) | lo));
  }
  return out;
}

struct RawMatch {
  std::int64_t offset;
  const Signature* sig;
};

// Every occurrence (overlaps included) of one pattern whose start lies in
// [from, to); the match may extend past `to`, so results are independent of
// how the blob is chunked.
void scan_one(std::string_view blob, const Signature& sig, size_t from, size_t to,
              std::vector<RawMatch>& out) {
  size_t pos = from;
  while (pos < to) {
    auto hit = blob.find(sig.pattern, pos);
    if (hit == std::string_view::npos || hit >= to) break;
    out.push_back({static_cast<std::int64_t>(hit), &sig});
    pos = hit + 1;
  }
}

// Greedy left-to-right non-overlap filter, per signature.
std::vector<RawMatch> drop_overlaps(std::vector<RawMatch> matches) {
  std::sort(matches.begin(), matches.end(), [](const RawMatch& a, const RawMatch& b) {
    if (a.sig->signatureId != b.sig->signatureId) return a.sig->signatureId < b.sig->signatureId;
    return a.offset < b.offset;
  });
  std::vector<RawMatch> filtered;
  const Signature* cur = nullptr;
  std::int64_t next_free = 0;
  for (const auto& mch : matches) {
    if (mch.sig != cur) {
      cur = mch.sig;
      next_free = 0;
    }
    if (mch.offset < next_free) continue;
    filtered.push_back(mch);
    next_free = mch.offset + static_cast<std::int64_t>(mch.sig->pattern.size());
  }
  return filtered;
}

}  // namespace

std::vector<BomEntry> scan_firmware(std::string_view blob, const std::vector<Signature>& db,
                                    std::size_t chunk_size) {
  for (const auto& sig : db)
    if (sig.pattern.size() < 8)
      throw TwinError(TwinError::Kind::bad_signature,
                      "signature " + sig.signatureId + ": pattern shorter than 8 bytes");

  std::vector<RawMatch> matches;
  if (chunk_size == 0 || chunk_size >= blob.size()) {
    for (const auto& sig : db) scan_one(blob, sig, 0, blob.size(), matches);
  } else {
    size_t nchunks = (blob.size() + chunk_size - 1) / chunk_size;
    std::vector<std::future<std::vector<RawMatch>>> futures;
    for (size_t c = 0; c < nchunks; ++c) {
      size_t from = c * chunk_size;
      size_t to = std::min(blob.size(), from + chunk_size);
      futures.push_back(std::async(std::launch::async, [&blob, &db, from, to] {
        std::vector<RawMatch> local;
        for (const auto& sig : db) scan_one(blob, sig, from, to, local);
        return local;
      }));
    }
    for (auto& f : futures) {
      auto local = f.get();
      matches.insert(matches.end(), local.begin(), local.end());
    }
  }
  matches = drop_overlaps(std::move(matches));

  std::stable_sort(matches.begin(), matches.end(), [](const RawMatch& a, const RawMatch& b) {
    if (a.offset != b.offset) return a.offset < b.offset;
    return a.sig->signatureId < b.sig->signatureId;
  });

  std::vector<BomEntry> bom;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& mch : matches) {
    if (!seen.insert({mch.sig->componentName, mch.sig->version}).second) continue;
    BomEntry e;
    e.name = mch.sig->componentName;
    e.version = mch.sig->version;
    e.offset = mch.offset;
    e.signatureId = mch.sig->signatureId;
    bom.push_back(std::move(e));
  }
  return bom;
}

MatchResult match_vulnerabilities(const std::vector<BomEntry>& bom,
                                  const std::vector<VulnRecord>& vulnDb) {
  MatchResult result;
  for (const auto& entry : bom) {
    auto v = Version::parse(entry.version);
    if (!v) {
      result.versionParseFailures.push_back(entry.name + " " + entry.version);
      continue;
    }
    for (const auto& rec : vulnDb) {
      if (rec.componentName != entry.name) continue;
      auto lo = Version::parse(rec.lo);
      auto hi = Version::parse(rec.hi);
      if (!lo || !hi) {
        result.versionParseFailures.push_back(rec.vulnId + " range");
        continue;
      }
      if (*lo > *hi)
        throw TwinError(TwinError::Kind::invariant, rec.vulnId + ": range lo > hi");
      if (*v >= *lo && *v <= *hi)
        result.findings.push_back({rec.vulnId, rec.cwe, entry, rec.interfaceKind});
    }
  }
  return result;
}

namespace {

ordered_json twin_json(const CyberDigitalTwin& t);

// Resolves a dotted path with [*]/[key]/[index] selectors against a JSON
// view of the twin. Returns (concretePath, value) pairs.
void resolve_path(const ordered_json& node, const std::string& prefix, std::string_view path,
                  std::vector<std::pair<std::string, ordered_json>>& out) {
  if (path.empty()) {
    out.emplace_back(prefix, node);
    return;
  }
  auto dot = path.find('.');
  std::string_view segment = path.substr(0, dot);
  std::string_view rest = dot == std::string_view::npos ? std::string_view{} : path.substr(dot + 1);

  std::string field(segment);
  std::string selector;
  auto bracket = segment.find('[');
  if (bracket != std::string_view::npos) {
    if (segment.back() != ']') throw TwinError(TwinError::Kind::format, "bad path selector");
    field = std::string(segment.substr(0, bracket));
    selector = std::string(segment.substr(bracket + 1, segment.size() - bracket - 2));
  }

  if (!node.is_object() || !node.contains(field))
    throw TwinError(TwinError::Kind::format, "no field '" + field + "' at " + prefix);
  const ordered_json& child = node.at(field);
  std::string base = prefix.empty() ? field : prefix + "." + field;

  if (selector.empty()) {
    resolve_path(child, base, rest, out);
    return;
  }
  if (!child.is_array())
    throw TwinError(TwinError::Kind::format, base + " is not a list");
  if (selector == "*") {
    for (size_t i = 0; i < child.size(); ++i)
      resolve_path(child[i], base + "[" + std::to_string(i) + "]", rest, out);
    return;
  }
  if (!selector.empty() && std::all_of(selector.begin(), selector.end(), [](char c) {
        return std::isdigit(static_cast<unsigned char>(c));
      })) {
    size_t idx = std::stoul(selector);
    if (idx >= child.size())
      throw TwinError(TwinError::Kind::format, base + "[" + selector + "] out of range");
    resolve_path(child[idx], base + "[" + selector + "]", rest, out);
    return;
  }
  // Named selector: match an element whose name/id/user field equals it.
  for (size_t i = 0; i < child.size(); ++i) {
    const auto& elem = child[i];
    for (const char* key : {"name", "id", "user"}) {
      if (elem.is_object() && elem.contains(key) && elem.at(key) == selector) {
        resolve_path(elem, base + "[" + selector + "]", rest, out);
        return;
      }
    }
  }
  throw TwinError(TwinError::Kind::format, base + " has no element '" + selector + "'");
}

std::string json_as_string(const ordered_json& j) {
  if (j.is_string()) return j.get<std::string>();
  return j.dump();
}

}  // namespace

std::vector<PolicyViolation> check_policies(const CyberDigitalTwin& twin,
                                            const std::vector<Policy>& policies) {
  ordered_json doc = twin_json(twin);
  std::vector<PolicyViolation> violations;
  for (const auto& p : policies) {
    std::vector<std::pair<std::string, ordered_json>> hits;
    try {
      resolve_path(doc, "", p.path, hits);
    } catch (const TwinError& e) {
      violations.push_back({p.path, std::string("bad path: ") + e.what(), ""});
      continue;
    }
    for (const auto& [where, value] : hits) {
      std::string actual = json_as_string(value);
      if (p.op == "exists") {
        bool ok = !value.is_null() && !(value.is_string() && actual.empty());
        if (!ok) violations.push_back({where, "required value missing or empty", actual});
      } else if (p.op == "eq") {
        if (actual != p.value)
          violations.push_back({where, "expected '" + p.value + "'", actual});
      } else if (p.op == "version_ge") {
        auto got = Version::parse(actual);
        auto want = Version::parse(p.value);
        if (!got || !want)
          violations.push_back({where, "unparseable version", actual});
        else if (*got < *want)
          violations.push_back({where, "version below " + p.value, actual});
      } else {
        violations.push_back({where, "unknown policy op '" + p.op + "'", actual});
      }
    }
  }
  return violations;
}

namespace {

std::map<std::string, std::string> string_map(const ordered_json& j) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : j.items()) out[k] = json_as_string(v);
  return out;
}

std::vector<std::string> string_list(const ordered_json& j) {
  std::vector<std::string> out;
  for (const auto& v : j) out.push_back(json_as_string(v));
  return out;
}

ordered_json to_json_map(const std::map<std::string, std::string>& m) {
  ordered_json j = ordered_json::object();
  for (const auto& [k, v] : m) j[k] = v;
  return j;
}

ordered_json twin_json(const CyberDigitalTwin& t) {
  ordered_json j;
  j["twinId"] = t.twinId;
  j["bom"] = ordered_json::array();
  for (const auto& b : t.bom) {
    ordered_json e;
    e["name"] = b.name;
    e["version"] = b.version;
    if (b.offset) e["offset"] = *b.offset;
    if (!b.signatureId.empty()) e["signatureId"] = b.signatureId;
    j["bom"].push_back(e);
  }
  j["interfaces"] = ordered_json::array();
  for (const auto& i : t.interfaces) j["interfaces"].push_back({{"kind", i.kind}, {"id", i.id}});
  j["os"] = {{"name", t.osName}, {"settings", to_json_map(t.osSettings)}};
  j["kernelConfig"] = to_json_map(t.kernelConfig);
  j["securityConfig"] = to_json_map(t.securityConfig);
  j["memoryMap"] = t.memoryMap;
  j["credentials"] = ordered_json::array();
  for (const auto& [user, hash] : t.credentials)
    j["credentials"].push_back({{"user", user}, {"secretHash", hash}});
  j["firewallRules"] = t.firewallRules;
  j["frameworks"] = t.frameworks;
  j["apis"] = t.apis;
  j["appConfig"] = to_json_map(t.appConfig);
  j["cryptoMechanisms"] = t.cryptoMechanisms;
  j["cryptoKeys"] = t.cryptoKeys;
  ordered_json fg;
  fg["nodes"] = ordered_json::array();
  for (const auto& n : t.flowGraph.nodes) {
    ordered_json nj;
    nj["id"] = n.id;
    if (!n.component.empty()) nj["component"] = n.component;
    nj["kind"] = n.kind;
    fg["nodes"].push_back(nj);
  }
  fg["edges"] = ordered_json::array();
  for (const auto& e : t.flowGraph.edges) {
    ordered_json ej;
    ej["from"] = e.from;
    ej["to"] = e.to;
    ej["trigger"] = e.trigger;
    ej["effect"] = e.effect.empty() ? ordered_json(nullptr) : ordered_json(e.effect);
    fg["edges"].push_back(ej);
  }
  j["flowGraph"] = fg;
  return j;
}

void check_twin_invariants(const CyberDigitalTwin& t) {
  std::set<std::pair<std::string, std::string>> bom_keys;
  std::set<std::string> bom_names;
  for (const auto& b : t.bom) {
    if (!bom_keys.insert({b.name, b.version}).second)
      throw TwinError(TwinError::Kind::invariant,
                      "duplicate BOM entry " + b.name + " " + b.version);
    if (b.offset && *b.offset < 0)
      throw TwinError(TwinError::Kind::invariant, "BOM offset must be >= 0");
    bom_names.insert(b.name);
  }
  std::set<std::string> iface_ids, iface_kinds;
  for (const auto& i : t.interfaces) {
    if (!iface_ids.insert(i.id).second)
      throw TwinError(TwinError::Kind::invariant, "duplicate interface id " + i.id);
    iface_kinds.insert(i.kind);
  }
  std::set<std::string> node_ids;
  for (const auto& n : t.flowGraph.nodes) {
    if (!node_ids.insert(n.id).second)
      throw TwinError(TwinError::Kind::invariant, "duplicate flow node " + n.id);
    if (!n.component.empty() && n.component != "external" && !bom_names.count(n.component))
      throw TwinError(TwinError::Kind::invariant,
                      "flow node " + n.id + " references unknown component " + n.component);
  }
  std::map<std::string, bool> entry_has_iface_edge;
  for (const auto& n : t.flowGraph.nodes)
    if (n.kind == "entry") entry_has_iface_edge[n.id] = false;
  for (const auto& e : t.flowGraph.edges) {
    if (!node_ids.count(e.from) || !node_ids.count(e.to))
      throw TwinError(TwinError::Kind::invariant,
                      "flow edge " + e.from + "->" + e.to + " references missing node");
    auto it = entry_has_iface_edge.find(e.from);
    if (it != entry_has_iface_edge.end()) {
      auto dot = e.trigger.find('.');
      if (iface_kinds.count(e.trigger.substr(0, dot))) it->second = true;
    }
  }
  for (const auto& [node, ok] : entry_has_iface_edge)
    if (!ok)
      throw TwinError(TwinError::Kind::invariant,
                      "entry node " + node + " has no interface-triggered edge");
}

}  // namespace

CyberDigitalTwin parse_twin(const std::string& json_text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(json_text);
  } catch (const ordered_json::parse_error& e) {
    throw TwinError(TwinError::Kind::format, e.what());
  }
  CyberDigitalTwin t;
  try {
    t.twinId = doc.at("twinId").get<std::string>();
    for (const auto& b : doc.value("bom", ordered_json::array())) {
      BomEntry e;
      e.name = b.at("name").get<std::string>();
      e.version = b.at("version").get<std::string>();
      if (b.contains("offset")) e.offset = b.at("offset").get<std::int64_t>();
      e.signatureId = b.value("signatureId", "");
      t.bom.push_back(std::move(e));
    }
    for (const auto& i : doc.value("interfaces", ordered_json::array()))
      t.interfaces.push_back({i.at("kind").get<std::string>(), i.at("id").get<std::string>()});
    if (doc.contains("os")) {
      t.osName = doc["os"].value("name", "");
      t.osSettings = string_map(doc["os"].value("settings", ordered_json::object()));
    }
    t.kernelConfig = string_map(doc.value("kernelConfig", ordered_json::object()));
    t.securityConfig = string_map(doc.value("securityConfig", ordered_json::object()));
    t.memoryMap = string_list(doc.value("memoryMap", ordered_json::array()));
    for (const auto& c : doc.value("credentials", ordered_json::array()))
      t.credentials.emplace_back(c.at("user").get<std::string>(), c.value("secretHash", ""));
    t.firewallRules = string_list(doc.value("firewallRules", ordered_json::array()));
    t.frameworks = string_list(doc.value("frameworks", ordered_json::array()));
    t.apis = string_list(doc.value("apis", ordered_json::array()));
    t.appConfig = string_map(doc.value("appConfig", ordered_json::object()));
    t.cryptoMechanisms = string_list(doc.value("cryptoMechanisms", ordered_json::array()));
    t.cryptoKeys = string_list(doc.value("cryptoKeys", ordered_json::array()));
    if (doc.contains("flowGraph")) {
      for (const auto& n : doc["flowGraph"].value("nodes", ordered_json::array()))
        t.flowGraph.nodes.push_back({n.at("id").get<std::string>(), n.value("component", ""),
                                     n.value("kind", "block")});
      for (const auto& e : doc["flowGraph"].value("edges", ordered_json::array())) {
        std::string effect;
        if (e.contains("effect") && !e.at("effect").is_null())
          effect = e.at("effect").get<std::string>();
        t.flowGraph.edges.push_back({e.at("from").get<std::string>(),
                                     e.at("to").get<std::string>(),
                                     e.at("trigger").get<std::string>(), effect});
      }
    }
  } catch (const ordered_json::exception& e) {
    throw TwinError(TwinError::Kind::format, e.what());
  }
  check_twin_invariants(t);
  return t;
}

CyberDigitalTwin load_twin(const std::string& path) { return parse_twin(read_file(path)); }

std::string twin_to_json(const CyberDigitalTwin& twin) { return twin_json(twin).dump(2) + "\n"; }

AssembledTwin assemble_twin(const std::vector<BomEntry>& scanBom,
                            const std::string& twin_json_text) {
  CyberDigitalTwin base = parse_twin(twin_json_text);
  AssembledTwin out;

  std::vector<BomEntry> merged;
  std::set<std::string> scan_names;
  for (const auto& s : scanBom) {
    merged.push_back(s);
    scan_names.insert(s.name);
  }
  for (const auto& declared : base.bom) {
    if (scan_names.count(declared.name)) {
      for (const auto& s : scanBom) {
        if (s.name == declared.name && s.version != declared.version)
          out.conflicts.push_back(declared.name + ": " + declared.version + " -> " + s.version);
      }
      continue;  // scan wins
    }
    merged.push_back(declared);
  }
  base.bom = std::move(merged);
  check_twin_invariants(base);
  out.twin = std::move(base);
  return out;
}

std::vector<Signature> parse_signature_db(const std::string& json_text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(json_text);
  } catch (const ordered_json::parse_error& e) {
    throw TwinError(TwinError::Kind::format, e.what());
  }
  std::vector<Signature> out;
  try {
    for (const auto& s : doc.at("signatures")) {
      Signature sig;
      sig.signatureId = s.at("signatureId").get<std::string>();
      sig.componentName = s.at("componentName").get<std::string>();
      sig.version = s.at("version").get<std::string>();
      auto bytes = hex_to_bytes(s.at("patternHex").get<std::string>());
      if (!bytes)
        throw TwinError(TwinError::Kind::format,
                        "signature " + sig.signatureId + ": patternHex is not hex");
      sig.pattern = *bytes;
      if (sig.pattern.size() < 8)
        throw TwinError(TwinError::Kind::bad_signature,
                        "signature " + sig.signatureId + ": pattern shorter than 8 bytes");
      out.push_back(std::move(sig));
    }
  } catch (const ordered_json::exception& e) {
    throw TwinError(TwinError::Kind::format, e.what());
  }
  return out;
}

std::vector<Signature> load_signature_db(const std::string& path) {
  return parse_signature_db(read_file(path));
}

std::vector<VulnRecord> parse_vuln_db(const std::string& json_text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(json_text);
  } catch (const ordered_json::parse_error& e) {
    throw TwinError(TwinError::Kind::format, e.what());
  }
  std::vector<VulnRecord> out;
  try {
    for (const auto& v : doc.at("vulns")) {
      VulnRecord rec;
      rec.vulnId = v.at("vulnId").get<std::string>();
      rec.componentName = v.at("componentName").get<std::string>();
      rec.lo = v.at("range").at(0).get<std::string>();
      rec.hi = v.at("range").at(1).get<std::string>();
      rec.cwe = v.at("cwe").get<std::string>();
      rec.interfaceKind = v.at("interfaceKind").get<std::string>();
      out.push_back(std::move(rec));
    }
  } catch (const ordered_json::exception& e) {
    throw TwinError(TwinError::Kind::format, e.what());
  }
  return out;
}

std::vector<VulnRecord> load_vuln_db(const std::string& path) {
  return parse_vuln_db(read_file(path));
}

std::vector<Policy> parse_policies(const std::string& json_text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(json_text);
  } catch (const ordered_json::parse_error& e) {
    throw TwinError(TwinError::Kind::format, e.what());
  }
  std::vector<Policy> out;
  try {
    for (const auto& p : doc.at("policies"))
      out.push_back({p.at("path").get<std::string>(), p.at("op").get<std::string>(),
                     p.value("value", "")});
  } catch (const ordered_json::exception& e) {
    throw TwinError(TwinError::Kind::format, e.what());
  }
  return out;
}

}  // namespace asb::twin
