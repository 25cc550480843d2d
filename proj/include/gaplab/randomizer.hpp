#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gaplab/catalog.hpp"
#include "gaplab/common.hpp"
#include "gaplab/envmodel.hpp"
#include "gaplab/version.hpp"

namespace gaplab {

// ---------------------------------------------------------------------------
// Policy
// ---------------------------------------------------------------------------

struct RandomizationPolicy {
  bool vary_ports = true;
  int port_min = 1024;
  int port_max = 65535;
  bool vary_os_version = true;
  bool vary_service_versions = true;  // stays inside the vulnerable range
  int distractor_min = 0;
  int distractor_max = 4;
  bool vary_fingerprints = true;
  int min_fields_changed = 2;

  void validate() const {
    if (min_fields_changed < 1)
      throw InvariantError("min_fields_changed must be at least 1");
    if (distractor_min < 0 || distractor_max < distractor_min)
      throw InvariantError("bad distractor count range");
    if (port_min < 1 || port_max > 65535 || port_max < port_min)
      throw InvariantError("bad port range");
  }
};

// ---------------------------------------------------------------------------
// Field census. A variant differs from its original in the count of changed
// fields over exactly this list:
//   os.name, os.version, exposing_port, exposing_version,
//   other_ports (the non-exposing port-number set), web_fingerprints.
// ---------------------------------------------------------------------------

inline std::vector<std::string> changed_fields(const HostProfile& original,
                                               const HostProfile& variant) {
  std::vector<std::string> changed;
  if (original.os.name != variant.os.name) changed.push_back("os.name");
  if (original.os.version != variant.os.version)
    changed.push_back("os.version");
  if (original.vulnerability.exposing_port !=
      variant.vulnerability.exposing_port)
    changed.push_back("exposing_port");

  const PortEntry* po = original.find_port(original.vulnerability.exposing_port);
  const PortEntry* pv = variant.find_port(variant.vulnerability.exposing_port);
  std::string vo = po != nullptr ? po->version : "";
  std::string vv = pv != nullptr ? pv->version : "";
  if (vo != vv) changed.push_back("exposing_version");

  auto others = [](const HostProfile& h) {
    std::set<int> s;
    for (const auto& p : h.ports)
      if (p.number != h.vulnerability.exposing_port) s.insert(p.number);
    return s;
  };
  if (others(original) != others(variant)) changed.push_back("other_ports");
  if (original.web_fingerprints != variant.web_fingerprints)
    changed.push_back("web_fingerprints");
  return changed;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct ValidationReport {
  bool valid = false;
  std::vector<std::string> violations;  // rule ids
  int fields_changed = 0;
};

inline ValidationReport validate(const EnvironmentFile& variant,
                                 const EnvironmentFile& original,
                                 const RandomizationPolicy& policy) {
  ValidationReport report;
  const HostProfile& h = variant.host;

  std::set<int> seen;
  for (const auto& p : h.ports) {
    if (p.number < 1 || p.number > 65535) {
      report.violations.push_back("port-range");
      break;
    }
    if (!seen.insert(p.number).second) {
      report.violations.push_back("port-dup");
      break;
    }
  }
  for (const auto& p : h.ports)
    if (p.service.empty()) {
      report.violations.push_back("service-empty");
      break;
    }
  if (!is_cve_id(h.vulnerability.cve_id))
    report.violations.push_back("cve-pattern");
  else if (h.vulnerability.cve_id != original.host.vulnerability.cve_id)
    report.violations.push_back("cve-changed");

  const PortEntry* exposing = h.find_port(h.vulnerability.exposing_port);
  if (exposing == nullptr ||
      exposing->product != original.host.vulnerability.vulnerable_product) {
    report.violations.push_back("vp-missing");
  } else if (!original.host.vulnerability.vulnerable_version_range.contains(
                 exposing->version)) {
    report.violations.push_back("version-range");
  }
  if (variant.provenance.kind == Provenance::Kind::Randomized &&
      !variant.parent_id.has_value())
    report.violations.push_back("parent-missing");

  report.fields_changed = static_cast<int>(
      changed_fields(original.host, variant.host).size());
  report.valid = report.violations.empty() &&
                 report.fields_changed >= policy.min_fields_changed;
  return report;
}

// Byte-level entry point: anything that fails schema parsing is reported as
// a "schema" violation rather than thrown.
inline ValidationReport validate_bytes(std::string_view bytes,
                                       const EnvironmentFile& original,
                                       const RandomizationPolicy& policy);

// ---------------------------------------------------------------------------
// Rule engine
// ---------------------------------------------------------------------------

namespace detail {

struct DistractorService {
  int port;
  const char* service;
  const char* product;
  const char* version;
  const char* banner;
};

inline const std::vector<DistractorService>& distractor_services() {
  static const std::vector<DistractorService> table = {
      {22, "ssh", "OpenSSH", "8.2", "SSH-2.0-OpenSSH_8.2"},
      {21, "ftp", "vsftpd", "3.0.3", "220 (vsFTPd 3.0.3)"},
      {25, "smtp", "Postfix", "3.4.13", "220 ESMTP Postfix"},
      {3306, "mysql", "MySQL", "5.7.30", "5.7.30-0ubuntu0.18.04.1"},
      {5432, "postgresql", "PostgreSQL", "12.2", ""},
      {8081, "http", "Tomcat", "9.0.31", "Apache-Coyote/1.1"},
      {443, "http", "nginx", "1.18.0", "nginx/1.18.0"},
      {139, "netbios-ssn", "Samba", "4.11.6", ""},
      {111, "rpcbind", "rpcbind", "2.4", ""},
      {2049, "nfs", "nfsd", "3.0", ""},
  };
  return table;
}

inline const std::vector<std::string>& fingerprint_pool() {
  static const std::vector<std::string> pool = {
      "jQuery 1.12", "Bootstrap 4",   "PHP/7.4",  "nginx",
      "Font Awesome", "Google Analytics", "React", "Cloudflare"};
  return pool;
}

// Known-release tables keep OS mutations plausible; anything unknown gets a
// numeric bump.
inline std::vector<std::string> os_version_candidates(const OsInfo& os) {
  if (os.name == "Ubuntu")
    return {"14.04", "16.04", "18.04", "20.04", "22.04"};
  if (os.name == "Debian") return {"9", "10", "11", "12"};
  if (os.name == "CentOS") return {"6", "7", "8"};
  if (os.name == "Oracle Linux") return {"7", "8", "9"};
  auto comps = parse_version(os.version);
  std::vector<std::string> out;
  if (!comps.empty()) {
    for (int delta : {-1, 1, 2}) {
      long long head = static_cast<long long>(comps[0].number) + delta;
      if (head < 1) continue;
      std::string v = std::to_string(head);
      for (std::size_t i = 1; i < comps.size(); ++i)
        v += "." + std::to_string(comps[i].number);
      out.push_back(v);
    }
  }
  return out;
}

// Versions inside [min, max]: both endpoints plus interpolations at the
// first component where they differ. Everything stays inside the range by
// construction.
inline std::vector<std::string> versions_in_range(const VersionRange& range) {
  std::vector<std::string> out = {range.min};
  if (compare_versions(range.min, range.max) == 0) return out;
  out.push_back(range.max);

  auto lo = parse_version(range.min);
  auto hi = parse_version(range.max);
  std::size_t i = 0;
  while (i < lo.size() && i < hi.size() && lo[i] == hi[i]) ++i;
  if (i >= lo.size() || i >= hi.size()) return out;

  std::uint64_t lo_n = lo[i].number, hi_n = hi[i].number;
  if (hi_n <= lo_n + 1) return out;
  std::uint64_t span = hi_n - lo_n;
  std::uint64_t stride = std::max<std::uint64_t>(1, span / 24);
  for (std::uint64_t k = lo_n + 1; k < hi_n; k += stride) {
    std::string v;
    for (std::size_t j = 0; j < i; ++j) {
      v += std::to_string(lo[j].number) + lo[j].tag;
      v += ".";
    }
    v += std::to_string(k);
    for (std::size_t j = i + 1; j < lo.size(); ++j) v += ".0";
    out.push_back(std::move(v));
  }
  return out;
}

inline void replace_all(std::string& text, const std::string& from,
                        const std::string& to) {
  if (from.empty()) return;
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
}

}  // namespace detail

// Generates one internally-consistent variant; exploitability is preserved
// by construction (same CVE, vulnerable product kept at the exposing port,
// version kept inside the vulnerable range).
inline EnvironmentFile randomize_rule_once(const EnvironmentFile& env,
                                           const RandomizationPolicy& policy,
                                           std::uint64_t variant_seed,
                                           const std::string& variant_id) {
  Rng rng(variant_seed);
  HostProfile h = env.host;

  int enabled = 0;
  enabled += policy.vary_ports ? 1 : 0;
  enabled += policy.vary_os_version ? 1 : 0;
  enabled += policy.vary_service_versions ? 1 : 0;
  enabled += policy.distractor_max > 0 ? 1 : 0;
  enabled += policy.vary_fingerprints ? 1 : 0;
  if (enabled < policy.min_fields_changed)
    throw PolicyUnsatisfiableError(
        "policy enables " + std::to_string(enabled) +
        " mutable fields but requires min_fields_changed=" +
        std::to_string(policy.min_fields_changed));

  auto port_in_use = [&h](int n) { return h.find_port(n) != nullptr; };

  if (policy.vary_ports) {
    int span = policy.port_max - policy.port_min + 1;
    int fresh = h.vulnerability.exposing_port;
    do {
      fresh = policy.port_min + static_cast<int>(rng.next_index(
                                    static_cast<std::uint64_t>(span)));
    } while (fresh == h.vulnerability.exposing_port || port_in_use(fresh));
    for (auto& p : h.ports)
      if (p.number == h.vulnerability.exposing_port) p.number = fresh;
    h.vulnerability.exposing_port = fresh;
  }

  if (policy.vary_service_versions) {
    auto candidates =
        detail::versions_in_range(h.vulnerability.vulnerable_version_range);
    for (auto& p : h.ports) {
      if (p.number != h.vulnerability.exposing_port) continue;
      std::string old = p.version;
      std::vector<std::string> fresh;
      for (const auto& c : candidates)
        if (c != old) fresh.push_back(c);
      if (!fresh.empty()) {
        p.version = fresh[rng.next_index(fresh.size())];
        detail::replace_all(p.banner, old, p.version);
      }
    }
  }

  if (policy.vary_os_version) {
    auto candidates = detail::os_version_candidates(h.os);
    std::vector<std::string> fresh;
    for (const auto& c : candidates)
      if (c != h.os.version) fresh.push_back(c);
    if (!fresh.empty()) h.os.version = fresh[rng.next_index(fresh.size())];
  }

  if (policy.distractor_max > 0) {
    int span = policy.distractor_max - policy.distractor_min + 1;
    int count = policy.distractor_min +
                static_cast<int>(rng.next_index(
                    static_cast<std::uint64_t>(span)));
    const auto& table = detail::distractor_services();
    std::vector<std::size_t> order(table.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.next_index(i)]);
    int added = 0;
    for (std::size_t idx : order) {
      if (added >= count) break;
      const auto& d = table[idx];
      if (port_in_use(d.port)) continue;
      if (d.product == h.vulnerability.vulnerable_product) continue;
      PortEntry p;
      p.number = d.port;
      p.protocol = "tcp";
      p.service = d.service;
      p.product = d.product;
      p.version = d.version;
      p.banner = d.banner;
      h.ports.push_back(std::move(p));
      ++added;
    }
  }

  if (policy.vary_fingerprints) {
    const auto& pool = detail::fingerprint_pool();
    std::vector<std::string> fresh;
    for (const auto& f : pool)
      if (std::find(h.web_fingerprints.begin(), h.web_fingerprints.end(), f) ==
          h.web_fingerprints.end())
        fresh.push_back(f);
    if (h.web_fingerprints.size() >= 2 && rng.next_index(2) == 0)
      h.web_fingerprints.erase(h.web_fingerprints.begin());
    if (!fresh.empty())
      h.web_fingerprints.push_back(fresh[rng.next_index(fresh.size())]);
  }

  std::sort(h.ports.begin(), h.ports.end(),
            [](const PortEntry& a, const PortEntry& b) {
              return a.number < b.number;
            });

  EnvironmentFile out;
  out.schema_version = env.schema_version;
  std::string parent = env.host.host_id;
  h.host_id = variant_id;
  out.host = std::move(h);
  out.provenance.kind = Provenance::Kind::Randomized;
  out.provenance.engine = RandomizerEngine::Rule;
  out.provenance.seed = variant_seed;
  out.parent_id = parent;

  int changed =
      static_cast<int>(changed_fields(env.host, out.host).size());
  if (changed < policy.min_fields_changed)
    throw PolicyUnsatisfiableError(
        "policy cannot reach min_fields_changed=" +
        std::to_string(policy.min_fields_changed) + " (got " +
        std::to_string(changed) + ")");
  validate_environment(out);
  return out;
}

// Seed-deterministic batch generation; variants are pairwise distinct in at
// least one census field (enforced by host-content dedup with bounded
// reseeding).
inline std::vector<EnvironmentFile> randomize_rule(
    const EnvironmentFile& env, const RandomizationPolicy& policy, int n,
    std::uint64_t seed) {
  policy.validate();
  validate_environment(env);
  std::vector<EnvironmentFile> out;
  std::set<std::string> seen_hosts;
  for (int k = 0; k < n; ++k) {
    EnvironmentFile variant;
    bool fresh = false;
    for (std::uint64_t attempt = 0; attempt < 100 && !fresh; ++attempt) {
      std::uint64_t vseed = derive_seed(
          seed, {fnv1a64("randomize"), static_cast<std::uint64_t>(k), attempt});
      std::string vid = env.host.host_id + "-r" + std::to_string(seed) + "-" +
                        std::to_string(k);
      variant = randomize_rule_once(env, policy, vseed, vid);
      HostProfile unnamed = variant.host;
      unnamed.host_id.clear();
      fresh = seen_hosts
                  .insert(serialize_environment(EnvironmentFile{
                      "1", unnamed, Provenance{}, std::nullopt}))
                  .second;
    }
    if (!fresh)
      throw PolicyUnsatisfiableError(
          "could not generate " + std::to_string(n) +
          " pairwise-distinct variants under the policy");
    out.push_back(std::move(variant));
  }
  return out;
}

inline ValidationReport validate_bytes(std::string_view bytes,
                                       const EnvironmentFile& original,
                                       const RandomizationPolicy& policy) {
  EnvironmentFile variant;
  try {
    variant = parse_environment_lenient(bytes);
  } catch (const Error&) {
    ValidationReport report;
    report.violations.push_back("schema");
    return report;
  }
  return validate(variant, original, policy);
}

// ---------------------------------------------------------------------------
// Mutation corruptor: emits samples that each break exactly one validation
// rule, for validator soundness checks.
// ---------------------------------------------------------------------------

struct CorruptedSample {
  std::string bytes;
  std::string broken_rule;
};

inline CorruptedSample corrupt_one_rule(const EnvironmentFile& valid_variant,
                                        int which) {
  json j = json::parse(serialize_environment(valid_variant));
  CorruptedSample out;
  switch (which % 6) {
    case 0:
      j["host"].erase("os");
      out.broken_rule = "schema";
      break;
    case 1:
      j["host"]["vulnerability"]["cve_id"] = "CVE-1999-99999";
      out.broken_rule = "cve-changed";
      break;
    case 2: {
      int exposing = j["host"]["vulnerability"]["exposing_port"].get<int>();
      for (auto& p : j["host"]["ports"])
        if (p["number"].get<int>() == exposing)
          p["product"] = "definitely-not-the-vp";
      out.broken_rule = "vp-missing";
      break;
    }
    case 3: {
      int exposing = j["host"]["vulnerability"]["exposing_port"].get<int>();
      std::string beyond =
          j["host"]["vulnerability"]["vulnerable_version_range"]["max"]
              .get<std::string>() +
          ".9001";
      for (auto& p : j["host"]["ports"])
        if (p["number"].get<int>() == exposing) p["version"] = beyond;
      out.broken_rule = "version-range";
      break;
    }
    case 4: {
      json copy = j["host"]["ports"][0];
      j["host"]["ports"].push_back(copy);
      out.broken_rule = "port-dup";
      break;
    }
    default:
      j["host"]["vulnerability"]["cve_id"] = "CVE-XX";
      out.broken_rule = "cve-pattern";
      break;
  }
  out.bytes = j.dump(2);
  return out;
}

}  // namespace gaplab
