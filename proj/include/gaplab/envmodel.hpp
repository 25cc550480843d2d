#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gaplab/common.hpp"
#include "gaplab/version.hpp"

namespace gaplab {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct OsInfo {
  std::string name;
  std::string version;

  friend bool operator==(const OsInfo&, const OsInfo&) = default;
};

struct PortEntry {
  int number = 0;     // [1, 65535]
  std::string protocol = "tcp";  // tcp | udp
  std::string service;           // nonempty
  std::string product;
  std::string version;
  std::string banner;

  friend bool operator==(const PortEntry&, const PortEntry&) = default;
};

struct VulnerabilityTruth {
  std::string cve_id;  // CVE-YYYY-NNNN+
  std::string vulnerable_product;
  VersionRange vulnerable_version_range;
  int exposing_port = 0;
  std::string description;

  friend bool operator==(const VulnerabilityTruth&,
                         const VulnerabilityTruth&) = default;
};

struct HostProfile {
  std::string host_id;
  OsInfo os;
  std::vector<PortEntry> ports;  // stored sorted by port number
  std::vector<std::string> web_fingerprints;
  VulnerabilityTruth vulnerability;

  const PortEntry* find_port(int number) const {
    for (const auto& p : ports)
      if (p.number == number) return &p;
    return nullptr;
  }

  friend bool operator==(const HostProfile&, const HostProfile&) = default;
};

enum class RandomizerEngine { Rule, Llm };

struct Provenance {
  enum class Kind { Captured, Randomized };
  Kind kind = Kind::Captured;
  // Randomized only:
  RandomizerEngine engine = RandomizerEngine::Rule;
  std::optional<std::uint64_t> seed;       // rule engine
  std::optional<std::string> prompt_hash;  // llm engine, hex

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct EnvironmentFile {
  std::string schema_version = "1";
  HostProfile host;
  Provenance provenance;
  std::optional<std::string> parent_id;

  friend bool operator==(const EnvironmentFile&,
                         const EnvironmentFile&) = default;
};

inline bool is_cve_id(std::string_view s) {
  if (s.size() < 13 || s.substr(0, 4) != "CVE-") return false;
  for (std::size_t i = 4; i < 8; ++i)
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  if (s[8] != '-') return false;
  if (s.size() - 9 < 4) return false;
  for (std::size_t i = 9; i < s.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Invariant validation
// ---------------------------------------------------------------------------

inline void validate_profile(const HostProfile& h) {
  std::set<int> seen;
  for (const auto& p : h.ports) {
    if (p.number < 1 || p.number > 65535)
      throw InvariantError("port number out of range: " +
                           std::to_string(p.number));
    if (!seen.insert(p.number).second)
      throw InvariantError("duplicate port number: " +
                           std::to_string(p.number));
    if (p.protocol != "tcp" && p.protocol != "udp")
      throw InvariantError("unknown protocol: " + p.protocol);
    if (p.service.empty())
      throw InvariantError("empty service on port " +
                           std::to_string(p.number));
  }
  const auto& v = h.vulnerability;
  if (!is_cve_id(v.cve_id))
    throw InvariantError("cve_id does not match CVE pattern: " + v.cve_id);
  if (v.vulnerable_version_range.empty())
    throw InvariantError("empty vulnerable_version_range for " + v.cve_id);
  const PortEntry* exposing = h.find_port(v.exposing_port);
  if (exposing == nullptr)
    throw InvariantError("exposing_port " + std::to_string(v.exposing_port) +
                         " not present in ports");
  if (exposing->product != v.vulnerable_product)
    throw InvariantError("product at exposing_port (" + exposing->product +
                         ") does not match vulnerable_product (" +
                         v.vulnerable_product + ")");
}

inline void validate_environment(const EnvironmentFile& env) {
  if (env.schema_version != "1")
    throw SchemaError("unsupported schema_version: " + env.schema_version);
  validate_profile(env.host);
  if (env.provenance.kind == Provenance::Kind::Randomized &&
      !env.parent_id.has_value())
    throw InvariantError("randomized environment is missing parent_id");
}

// ---------------------------------------------------------------------------
// JSON parse / serialize. Canonical form: fixed key order, ports sorted by
// number, no superfluous whitespace variation (2-space indent). Unknown keys
// are rejected so corpora stay bit-exact.
// ---------------------------------------------------------------------------

namespace detail {

inline void expect_keys(const json& obj, std::string_view where,
                        const std::vector<std::string>& required,
                        const std::vector<std::string>& optional = {}) {
  if (!obj.is_object())
    throw SchemaError(std::string(where) + ": expected a JSON object");
  for (const auto& k : required)
    if (!obj.contains(k))
      throw SchemaError(std::string(where) + ": missing required field '" + k +
                        "'");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const std::string& k = it.key();
    if (std::find(required.begin(), required.end(), k) == required.end() &&
        std::find(optional.begin(), optional.end(), k) == optional.end())
      throw SchemaError(std::string(where) + ": unknown field '" + k + "'");
  }
}

inline std::string get_string(const json& obj, std::string_view where,
                              const std::string& key) {
  const auto& v = obj.at(key);
  if (!v.is_string())
    throw SchemaError(std::string(where) + "." + key + ": expected a string");
  return v.get<std::string>();
}

inline int get_port_number(const json& obj, std::string_view where,
                           const std::string& key) {
  const auto& v = obj.at(key);
  if (!v.is_number_integer())
    throw SchemaError(std::string(where) + "." + key + ": expected an integer");
  return v.get<int>();
}

}  // namespace detail

inline PortEntry port_from_json(const json& j, std::string_view where) {
  detail::expect_keys(
      j, where, {"number", "protocol", "service", "product", "version",
                 "banner"});
  PortEntry p;
  p.number = detail::get_port_number(j, where, "number");
  p.protocol = detail::get_string(j, where, "protocol");
  p.service = detail::get_string(j, where, "service");
  p.product = detail::get_string(j, where, "product");
  p.version = detail::get_string(j, where, "version");
  p.banner = detail::get_string(j, where, "banner");
  return p;
}

inline json port_to_json(const PortEntry& p) {
  return json{{"number", p.number},   {"protocol", p.protocol},
              {"service", p.service}, {"product", p.product},
              {"version", p.version}, {"banner", p.banner}};
}

inline VulnerabilityTruth vulnerability_from_json(const json& j,
                                                  std::string_view where) {
  detail::expect_keys(j, where,
                      {"cve_id", "vulnerable_product",
                       "vulnerable_version_range", "exposing_port",
                       "description"});
  VulnerabilityTruth v;
  v.cve_id = detail::get_string(j, where, "cve_id");
  v.vulnerable_product = detail::get_string(j, where, "vulnerable_product");
  const json& r = j.at("vulnerable_version_range");
  detail::expect_keys(r, "vulnerable_version_range", {"min", "max"});
  v.vulnerable_version_range.min =
      detail::get_string(r, "vulnerable_version_range", "min");
  v.vulnerable_version_range.max =
      detail::get_string(r, "vulnerable_version_range", "max");
  v.exposing_port = detail::get_port_number(j, where, "exposing_port");
  v.description = detail::get_string(j, where, "description");
  return v;
}

inline json vulnerability_to_json(const VulnerabilityTruth& v) {
  return json{{"cve_id", v.cve_id},
              {"vulnerable_product", v.vulnerable_product},
              {"vulnerable_version_range",
               json{{"min", v.vulnerable_version_range.min},
                    {"max", v.vulnerable_version_range.max}}},
              {"exposing_port", v.exposing_port},
              {"description", v.description}};
}

inline HostProfile host_from_json(const json& j) {
  detail::expect_keys(
      j, "host", {"host_id", "os", "ports", "web_fingerprints",
                  "vulnerability"});
  HostProfile h;
  h.host_id = detail::get_string(j, "host", "host_id");
  const json& os = j.at("os");
  detail::expect_keys(os, "host.os", {"name", "version"});
  h.os.name = detail::get_string(os, "host.os", "name");
  h.os.version = detail::get_string(os, "host.os", "version");
  const json& ports = j.at("ports");
  if (!ports.is_array()) throw SchemaError("host.ports: expected an array");
  for (const auto& pj : ports)
    h.ports.push_back(port_from_json(pj, "host.ports[]"));
  std::sort(h.ports.begin(), h.ports.end(),
            [](const PortEntry& a, const PortEntry& b) {
              return a.number < b.number;
            });
  const json& fps = j.at("web_fingerprints");
  if (!fps.is_array())
    throw SchemaError("host.web_fingerprints: expected an array");
  for (const auto& f : fps) {
    if (!f.is_string())
      throw SchemaError("host.web_fingerprints[]: expected a string");
    h.web_fingerprints.push_back(f.get<std::string>());
  }
  h.vulnerability =
      vulnerability_from_json(j.at("vulnerability"), "host.vulnerability");
  return h;
}

inline json host_to_json(const HostProfile& h) {
  json ports = json::array();
  std::vector<PortEntry> sorted = h.ports;
  std::sort(sorted.begin(), sorted.end(),
            [](const PortEntry& a, const PortEntry& b) {
              return a.number < b.number;
            });
  for (const auto& p : sorted) ports.push_back(port_to_json(p));
  return json{{"host_id", h.host_id},
              {"os", json{{"name", h.os.name}, {"version", h.os.version}}},
              {"ports", ports},
              {"web_fingerprints", h.web_fingerprints},
              {"vulnerability", vulnerability_to_json(h.vulnerability)}};
}

inline Provenance provenance_from_json(const json& j) {
  detail::expect_keys(j, "provenance", {"kind"},
                      {"engine", "seed", "prompt_hash"});
  Provenance p;
  std::string kind = detail::get_string(j, "provenance", "kind");
  if (kind == "captured") {
    p.kind = Provenance::Kind::Captured;
    if (j.contains("engine") || j.contains("seed") || j.contains("prompt_hash"))
      throw SchemaError("provenance: captured carries no engine/seed fields");
  } else if (kind == "randomized") {
    p.kind = Provenance::Kind::Randomized;
    std::string engine = detail::get_string(j, "provenance", "engine");
    if (engine == "rule") {
      p.engine = RandomizerEngine::Rule;
      if (!j.contains("seed"))
        throw SchemaError("provenance: rule-randomized requires 'seed'");
      if (!j.at("seed").is_number_unsigned())
        throw SchemaError("provenance.seed: expected an unsigned integer");
      p.seed = j.at("seed").get<std::uint64_t>();
    } else if (engine == "llm") {
      p.engine = RandomizerEngine::Llm;
      if (!j.contains("prompt_hash"))
        throw SchemaError("provenance: llm-randomized requires 'prompt_hash'");
      p.prompt_hash = detail::get_string(j, "provenance", "prompt_hash");
    } else {
      throw SchemaError("provenance.engine: unknown engine '" + engine + "'");
    }
  } else {
    throw SchemaError("provenance.kind: unknown kind '" + kind + "'");
  }
  return p;
}

inline json provenance_to_json(const Provenance& p) {
  if (p.kind == Provenance::Kind::Captured) return json{{"kind", "captured"}};
  json j{{"kind", "randomized"}};
  if (p.engine == RandomizerEngine::Rule) {
    j["engine"] = "rule";
    j["seed"] = p.seed.value_or(0);
  } else {
    j["engine"] = "llm";
    j["prompt_hash"] = p.prompt_hash.value_or("");
  }
  return j;
}

// Shape-only parse: field names and JSON types, no invariant checks. The
// randomizer's validator builds on this so it can name the broken rule.
inline EnvironmentFile parse_environment_lenient(std::string_view bytes) {
  json j;
  try {
    j = json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("invalid JSON: ") + e.what());
  }
  detail::expect_keys(j, "environment", {"schema_version", "host",
                                         "provenance"},
                      {"parent_id"});
  EnvironmentFile env;
  env.schema_version = detail::get_string(j, "environment", "schema_version");
  env.host = host_from_json(j.at("host"));
  env.provenance = provenance_from_json(j.at("provenance"));
  if (j.contains("parent_id"))
    env.parent_id = detail::get_string(j, "environment", "parent_id");
  if (env.schema_version != "1")
    throw SchemaError("unsupported schema_version: " + env.schema_version);
  return env;
}

// Parses UTF-8 JSON bytes into a fully validated EnvironmentFile; any
// invariant violation is an error, never a silent fix.
inline EnvironmentFile parse_environment(std::string_view bytes) {
  EnvironmentFile env = parse_environment_lenient(bytes);
  validate_environment(env);
  return env;
}

// Canonical serialization; serialize∘parse is the identity on valid files
// and equal inputs always produce identical bytes.
inline std::string serialize_environment(const EnvironmentFile& env) {
  json j{{"schema_version", env.schema_version},
         {"host", host_to_json(env.host)},
         {"provenance", provenance_to_json(env.provenance)}};
  if (env.parent_id.has_value()) j["parent_id"] = *env.parent_id;
  return j.dump(2) + "\n";
}

}  // namespace gaplab
