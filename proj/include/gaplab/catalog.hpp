#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaplab/common.hpp"
#include "gaplab/envmodel.hpp"
#include "gaplab/version.hpp"

namespace gaplab {

// The five scan actions are fixed; port-parameterized scans act on the set
// of ports already discovered by PortScan.
enum class ScanType {
  PortScan = 0,
  OsScan = 1,
  ServiceScan = 2,
  WebFingerprintScan = 3,
  BannerGrab = 4,
};

inline constexpr int kNumScanTypes = 5;

inline const char* scan_type_name(ScanType t) {
  switch (t) {
    case ScanType::PortScan: return "PortScan";
    case ScanType::OsScan: return "OsScan";
    case ScanType::ServiceScan: return "ServiceScan";
    case ScanType::WebFingerprintScan: return "WebFingerprintScan";
    case ScanType::BannerGrab: return "BannerGrab";
  }
  return "?";
}

struct ActionCosts {
  double scan = 1.0;
  double exploit = 5.0;

  friend bool operator==(const ActionCosts&, const ActionCosts&) = default;
};

struct ActionSpec {
  enum class Kind { Scan, Exploit };
  int action_id = 0;
  Kind kind = Kind::Scan;
  ScanType scan_type = ScanType::PortScan;  // Kind::Scan
  std::string cve_id;                       // Kind::Exploit
  double cost = 0.0;
};

// Scan actions occupy ids [0, |scans|); exploits follow in list order.
struct ActionCatalog {
  std::vector<ScanType> scans;
  std::vector<std::string> exploits;
  ActionCosts costs;

  int size() const {
    return static_cast<int>(scans.size() + exploits.size());
  }

  ActionSpec action(int action_id) const {
    if (action_id < 0 || action_id >= size())
      throw InvariantError("action_id out of range: " +
                           std::to_string(action_id));
    ActionSpec a;
    a.action_id = action_id;
    if (action_id < static_cast<int>(scans.size())) {
      a.kind = ActionSpec::Kind::Scan;
      a.scan_type = scans[static_cast<std::size_t>(action_id)];
      a.cost = costs.scan;
    } else {
      a.kind = ActionSpec::Kind::Exploit;
      a.cve_id =
          exploits[static_cast<std::size_t>(action_id) - scans.size()];
      a.cost = costs.exploit;
    }
    return a;
  }

  bool has_exploit(const std::string& cve_id) const {
    return std::find(exploits.begin(), exploits.end(), cve_id) !=
           exploits.end();
  }

  std::optional<int> exploit_action_id(const std::string& cve_id) const {
    auto it = std::find(exploits.begin(), exploits.end(), cve_id);
    if (it == exploits.end()) return std::nullopt;
    return static_cast<int>(scans.size() + (it - exploits.begin()));
  }
};

inline std::vector<ScanType> all_scan_types() {
  return {ScanType::PortScan, ScanType::OsScan, ScanType::ServiceScan,
          ScanType::WebFingerprintScan, ScanType::BannerGrab};
}

// Builds a catalog of exactly target_size actions: the five scans plus
// every ground-truth CVE plus seed-deterministic distractors sampled from
// the pool. Exploit positions are shuffled so the truth index varies with
// the seed.
inline ActionCatalog build_catalog(const std::vector<std::string>& truth_cves,
                                   const std::vector<std::string>& pool,
                                   int target_size, std::uint64_t seed,
                                   ActionCosts costs = {}) {
  ActionCatalog cat;
  cat.scans = all_scan_types();
  cat.costs = costs;

  std::vector<std::string> truth = truth_cves;
  std::sort(truth.begin(), truth.end());
  truth.erase(std::unique(truth.begin(), truth.end()), truth.end());

  const int n_exploits = target_size - kNumScanTypes;
  if (n_exploits < static_cast<int>(truth.size()))
    throw PoolTooSmallError("target_size " + std::to_string(target_size) +
                            " cannot hold " + std::to_string(truth.size()) +
                            " truth CVEs plus " +
                            std::to_string(kNumScanTypes) + " scans");

  std::set<std::string> truth_set(truth.begin(), truth.end());
  std::vector<std::string> candidates;
  std::set<std::string> seen;
  for (const auto& c : pool)
    if (!truth_set.count(c) && seen.insert(c).second) candidates.push_back(c);

  const std::size_t need =
      static_cast<std::size_t>(n_exploits) - truth.size();
  if (candidates.size() < need)
    throw PoolTooSmallError("distractor pool has " +
                            std::to_string(candidates.size()) +
                            " unique CVEs, need " + std::to_string(need));

  Rng rng(derive_seed(seed, "build_catalog"));
  // Partial Fisher-Yates: take the first `need` after seeded swaps.
  for (std::size_t i = 0; i < need; ++i) {
    std::size_t j = i + rng.next_index(candidates.size() - i);
    std::swap(candidates[i], candidates[j]);
  }

  cat.exploits = truth;
  cat.exploits.insert(cat.exploits.end(), candidates.begin(),
                      candidates.begin() + static_cast<long>(need));
  for (std::size_t i = cat.exploits.size(); i > 1; --i) {
    std::size_t j = rng.next_index(i);
    std::swap(cat.exploits[i - 1], cat.exploits[j]);
  }
  return cat;
}

// Synthetic distractor CVE ids; disjoint from the bundled real entries.
inline std::vector<std::string> make_distractor_pool(int n) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(n));
  char buf[32];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "CVE-%04d-%05d", 2008 + i % 16,
                  50000 + i);
    out.emplace_back(buf);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CVE knowledge catalog: JSON array of
// {cve_id, vulnerable_product, vulnerable_version_range, description}.
// ---------------------------------------------------------------------------

struct CveEntry {
  std::string cve_id;
  std::string vulnerable_product;
  VersionRange vulnerable_version_range;
  std::string description;

  friend bool operator==(const CveEntry&, const CveEntry&) = default;
};

struct CveCatalog {
  std::vector<CveEntry> entries;

  const CveEntry* find(const std::string& cve_id) const {
    for (const auto& e : entries)
      if (e.cve_id == cve_id) return &e;
    return nullptr;
  }

  std::vector<std::string> cve_ids() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.cve_id);
    return out;
  }
};

inline CveCatalog parse_cve_catalog(std::string_view bytes) {
  json j;
  try {
    j = json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_array()) throw SchemaError("cve catalog: expected a JSON array");
  CveCatalog cat;
  for (const auto& ej : j) {
    detail::expect_keys(ej, "cve_catalog[]",
                        {"cve_id", "vulnerable_product",
                         "vulnerable_version_range", "description"});
    CveEntry e;
    e.cve_id = detail::get_string(ej, "cve_catalog[]", "cve_id");
    if (!is_cve_id(e.cve_id))
      throw InvariantError("cve catalog: bad cve_id " + e.cve_id);
    e.vulnerable_product =
        detail::get_string(ej, "cve_catalog[]", "vulnerable_product");
    const json& r = ej.at("vulnerable_version_range");
    detail::expect_keys(r, "vulnerable_version_range", {"min", "max"});
    e.vulnerable_version_range.min =
        detail::get_string(r, "vulnerable_version_range", "min");
    e.vulnerable_version_range.max =
        detail::get_string(r, "vulnerable_version_range", "max");
    if (e.vulnerable_version_range.empty())
      throw InvariantError("cve catalog: empty version range for " + e.cve_id);
    e.description = detail::get_string(ej, "cve_catalog[]", "description");
    cat.entries.push_back(std::move(e));
  }
  return cat;
}

inline std::string serialize_cve_catalog(const CveCatalog& cat) {
  json arr = json::array();
  for (const auto& e : cat.entries)
    arr.push_back(json{
        {"cve_id", e.cve_id},
        {"vulnerable_product", e.vulnerable_product},
        {"vulnerable_version_range",
         json{{"min", e.vulnerable_version_range.min},
              {"max", e.vulnerable_version_range.max}}},
        {"description", e.description}});
  return arr.dump(2) + "\n";
}

}  // namespace gaplab
