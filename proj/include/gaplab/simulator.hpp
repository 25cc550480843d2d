#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaplab/catalog.hpp"
#include "gaplab/common.hpp"
#include "gaplab/envmodel.hpp"

namespace gaplab {

// ---------------------------------------------------------------------------
// Rewards and budgets
// ---------------------------------------------------------------------------

struct RewardSpec {
  double compromise_value = 1000.0;  // value(h) on compromise
  double info_value = 100.0;         // paid once per paying info category
  double invalid_penalty = 10.0;     // applied as -invalid_penalty

  void validate() const {
    if (!(compromise_value > info_value && info_value > 0.0))
      throw InvariantError("reward spec requires compromise > info > 0");
    if (!(invalid_penalty > 0.0))
      throw InvariantError("invalid_penalty must be positive");
  }
  friend bool operator==(const RewardSpec&, const RewardSpec&) = default;
};

struct EpisodeBudget {
  int max_steps = 100;
  int max_episodes = 500;

  void validate() const {
    if (max_steps <= 0 || max_episodes <= 0)
      throw InvariantError("episode budget fields must be positive");
  }
  friend bool operator==(const EpisodeBudget&, const EpisodeBudget&) = default;
};

// ---------------------------------------------------------------------------
// Observation: the agent's accumulated partial knowledge plus its textual
// rendering. Facts only grow within an episode; text is a pure function of
// the structured fields.
// ---------------------------------------------------------------------------

struct RevealedPort {
  int number = 0;
  std::string protocol;
  std::string service;
  bool service_detail = false;  // product+version revealed by ServiceScan
  std::string product;
  std::string version;

  friend bool operator==(const RevealedPort&, const RevealedPort&) = default;
};

struct Observation {
  bool ports_scanned = false;
  std::map<int, RevealedPort> ports;
  std::optional<OsInfo> os_known;
  bool service_scanned = false;
  bool fingerprints_scanned = false;
  std::vector<std::string> fingerprints_known;
  bool banners_scanned = false;
  std::map<int, std::string> banners_known;
  bool compromised = false;
  std::string text;
};

inline std::string render_observation(const Observation& o) {
  std::string out;
  if (o.os_known) {
    out += "os: " + o.os_known->name + " " + o.os_known->version + "\n";
  }
  for (const auto& [n, p] : o.ports) {
    out += "port " + std::to_string(n) + "/" + p.protocol + " " + p.service;
    if (p.service_detail) out += " " + p.product + " " + p.version;
    out += "\n";
  }
  for (const auto& [n, b] : o.banners_known)
    out += "banner " + std::to_string(n) + ": " + b + "\n";
  if (o.fingerprints_scanned) {
    out += "fingerprints:";
    if (o.fingerprints_known.empty()) {
      out += " none";
    } else {
      for (const auto& f : o.fingerprints_known) out += " " + f + ";";
    }
    out += "\n";
  }
  if (o.compromised) out += "compromised\n";
  return out;
}

// ---------------------------------------------------------------------------
// Step outcome and event taxonomy
// ---------------------------------------------------------------------------

enum class InfoCategory { Ports, Os, Service, Fingerprints, Banner };

struct Event {
  enum class Kind { InfoGained, Compromised, InvalidAction, NoOp };
  Kind kind = Kind::NoOp;
  std::optional<InfoCategory> category;  // InfoGained only

  friend bool operator==(const Event&, const Event&) = default;
};

inline std::string event_name(const Event& e) {
  switch (e.kind) {
    case Event::Kind::Compromised: return "compromised";
    case Event::Kind::InvalidAction: return "invalid_action";
    case Event::Kind::NoOp: return "noop";
    case Event::Kind::InfoGained: break;
  }
  switch (*e.category) {
    case InfoCategory::Ports: return "info_ports";
    case InfoCategory::Os: return "info_os";
    case InfoCategory::Service: return "info_service";
    case InfoCategory::Fingerprints: return "info_fingerprints";
    case InfoCategory::Banner: return "info_banner";
  }
  return "?";
}

// Only the critical-information chain pays: port discovery and the service
// detail needed to pinpoint the vulnerability. The other categories reveal
// state (and change the observation text) at scan cost.
inline bool category_pays(InfoCategory c) {
  return c == InfoCategory::Ports || c == InfoCategory::Service;
}

inline double event_value(const Event& e, const RewardSpec& spec) {
  switch (e.kind) {
    case Event::Kind::Compromised: return spec.compromise_value;
    case Event::Kind::InvalidAction: return -spec.invalid_penalty;
    case Event::Kind::NoOp: return -spec.invalid_penalty;
    case Event::Kind::InfoGained:
      return category_pays(*e.category) ? spec.info_value : 0.0;
  }
  return 0.0;
}

struct StepOutcome {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  Event info;
};

// ---------------------------------------------------------------------------
// Environment interface. LocalSim is the shipped backend; external tooling
// plugs in behind the same contract (adapter seam, no implementation here).
// ---------------------------------------------------------------------------

class EnvironmentBackend {
 public:
  virtual ~EnvironmentBackend() = default;
  virtual Observation reset(std::uint64_t seed) = 0;
  virtual StepOutcome step(int action_id) = 0;
  virtual const ActionCatalog& action_space() const = 0;
  virtual bool done() const = 0;
  virtual std::string target_id() const = 0;
};

class Simulation final : public EnvironmentBackend {
 public:
  Simulation(HostProfile profile, ActionCatalog catalog, RewardSpec spec = {},
             EpisodeBudget budget = {})
      : profile_(std::move(profile)),
        catalog_(std::move(catalog)),
        spec_(spec),
        budget_(budget) {
    validate_profile(profile_);
    spec_.validate();
    budget_.validate();
    if (!catalog_.has_exploit(profile_.vulnerability.cve_id))
      throw CatalogMismatchError("catalog lacks ground-truth exploit " +
                                 profile_.vulnerability.cve_id);
  }

  Observation reset(std::uint64_t seed) override {
    obs_ = Observation{};
    obs_.text = render_observation(obs_);
    step_count_ = 0;
    done_ = false;
    started_ = true;
    rng_ = Rng(derive_seed(seed, "sim"));  // reserved for stochastic backends
    return obs_;
  }

  StepOutcome step(int action_id) override {
    if (!started_) throw EpisodeFinishedError("step before reset");
    if (done_) throw EpisodeFinishedError("episode already finished");
    const ActionSpec a = catalog_.action(action_id);

    Event ev;
    if (a.kind == ActionSpec::Kind::Scan) {
      ev = apply_scan(a.scan_type);
    } else {
      ev = apply_exploit(a.cve_id);
    }

    double reward = event_value(ev, spec_) - a.cost;
    ++step_count_;
    if (ev.kind == Event::Kind::Compromised || step_count_ >= budget_.max_steps)
      done_ = true;
    obs_.text = render_observation(obs_);

    StepOutcome out;
    out.observation = obs_;
    out.reward = reward;
    out.done = done_;
    out.info = ev;
    return out;
  }

  const ActionCatalog& action_space() const override { return catalog_; }
  bool done() const override { return done_; }
  std::string target_id() const override { return profile_.host_id; }

  const Observation& observation() const { return obs_; }
  int steps_taken() const { return step_count_; }
  const RewardSpec& reward_spec() const { return spec_; }
  const EpisodeBudget& budget() const { return budget_; }

 private:
  Event apply_scan(ScanType t) {
    switch (t) {
      case ScanType::PortScan: {
        if (obs_.ports_scanned) return {Event::Kind::NoOp, {}};
        obs_.ports_scanned = true;
        for (const auto& p : profile_.ports) {
          RevealedPort r;
          r.number = p.number;
          r.protocol = p.protocol;
          r.service = p.service;
          obs_.ports[p.number] = std::move(r);
        }
        return {Event::Kind::InfoGained, InfoCategory::Ports};
      }
      case ScanType::OsScan: {
        if (obs_.os_known) return {Event::Kind::NoOp, {}};
        obs_.os_known = profile_.os;
        return {Event::Kind::InfoGained, InfoCategory::Os};
      }
      case ScanType::ServiceScan: {
        if (!obs_.ports_scanned) return {Event::Kind::InvalidAction, {}};
        if (obs_.service_scanned) return {Event::Kind::NoOp, {}};
        obs_.service_scanned = true;
        for (const auto& p : profile_.ports) {
          RevealedPort& r = obs_.ports[p.number];
          r.service_detail = true;
          r.product = p.product;
          r.version = p.version;
        }
        return {Event::Kind::InfoGained, InfoCategory::Service};
      }
      case ScanType::WebFingerprintScan: {
        if (!obs_.ports_scanned) return {Event::Kind::InvalidAction, {}};
        if (obs_.fingerprints_scanned) return {Event::Kind::NoOp, {}};
        obs_.fingerprints_scanned = true;
        obs_.fingerprints_known = profile_.web_fingerprints;
        return {Event::Kind::InfoGained, InfoCategory::Fingerprints};
      }
      case ScanType::BannerGrab: {
        if (!obs_.ports_scanned) return {Event::Kind::InvalidAction, {}};
        if (obs_.banners_scanned) return {Event::Kind::NoOp, {}};
        obs_.banners_scanned = true;
        for (const auto& p : profile_.ports)
          if (!p.banner.empty()) obs_.banners_known[p.number] = p.banner;
        return {Event::Kind::InfoGained, InfoCategory::Banner};
      }
    }
    return {Event::Kind::InvalidAction, {}};
  }

  Event apply_exploit(const std::string& cve_id) {
    const auto& truth = profile_.vulnerability;
    // Success needs the right CVE and the exposing service pinned down first.
    if (cve_id == truth.cve_id && obs_.service_scanned) {
      obs_.compromised = true;
      return {Event::Kind::Compromised, {}};
    }
    return {Event::Kind::InvalidAction, {}};
  }

  HostProfile profile_;
  ActionCatalog catalog_;
  RewardSpec spec_;
  EpisodeBudget budget_;
  Observation obs_;
  int step_count_ = 0;
  bool done_ = false;
  bool started_ = false;
  Rng rng_{0};
};

// ---------------------------------------------------------------------------
// Returns and trajectory logging
// ---------------------------------------------------------------------------

inline double episode_return(const std::vector<double>& rewards,
                             double gamma = 1.0) {
  if (rewards.empty()) throw InvariantError("empty trajectory");
  double g = 0.0;
  double scale = 1.0;
  for (double r : rewards) {
    g += scale * r;
    scale *= gamma;
  }
  return g;
}

// One JSON-lines record per step.
class TrajectoryLogger {
 public:
  explicit TrajectoryLogger(std::ostream& out) : out_(out) {}

  void log(int episode, int t, int action_id, double reward,
           const Event& event, bool done) {
    json j{{"episode", episode}, {"t", t},         {"action_id", action_id},
           {"reward", reward},   {"event", event_name(event)},
           {"done", done}};
    out_ << j.dump() << "\n";
  }

 private:
  std::ostream& out_;
};

// The shortest compromising sequence for a valid profile+catalog:
// PortScan, ServiceScan, Exploit(truth).
inline std::vector<int> three_step_solution(const HostProfile& profile,
                                            const ActionCatalog& catalog) {
  auto scan_id = [&](ScanType t) {
    for (std::size_t i = 0; i < catalog.scans.size(); ++i)
      if (catalog.scans[i] == t) return static_cast<int>(i);
    throw CatalogMismatchError("catalog lacks scan " +
                               std::string(scan_type_name(t)));
  };
  auto exploit = catalog.exploit_action_id(profile.vulnerability.cve_id);
  if (!exploit)
    throw CatalogMismatchError("catalog lacks ground-truth exploit " +
                               profile.vulnerability.cve_id);
  return {scan_id(ScanType::PortScan), scan_id(ScanType::ServiceScan),
          *exploit};
}

inline bool three_step_compromises(const HostProfile& profile,
                                   const ActionCatalog& catalog,
                                   RewardSpec spec = {},
                                   EpisodeBudget budget = {}) {
  Simulation sim(profile, catalog, spec, budget);
  sim.reset(0);
  bool compromised = false;
  for (int a : three_step_solution(profile, catalog)) {
    StepOutcome out = sim.step(a);
    compromised = out.info.kind == Event::Kind::Compromised;
    if (out.done) break;
  }
  return compromised;
}

// ---------------------------------------------------------------------------
// Real-to-Sim capture: drive a backend with a scripted scanner, then emit an
// EnvironmentFile of exactly the revealed facts. Vulnerability identity comes
// from the exploit that compromised the host plus the CVE knowledge catalog.
// ---------------------------------------------------------------------------

struct CaptureOptions {
  bool try_exploits = true;
  std::vector<ScanType> scan_plan = all_scan_types();
  int max_steps = 0;  // 0: sized to the catalog
  std::uint64_t seed = 0;
};

struct CaptureResult {
  std::optional<EnvironmentFile> env;  // present only when complete
  HostProfile observed;                // revealed facts; vulnerability may be
                                       // default-initialized when incomplete
  bool incomplete = false;
  std::vector<std::string> missing;
};

inline CaptureResult capture(EnvironmentBackend& backend,
                             const CveCatalog& knowledge,
                             const CaptureOptions& opts = {}) {
  const ActionCatalog& catalog = backend.action_space();
  const int budget = opts.max_steps > 0 ? opts.max_steps : catalog.size() + 10;

  Observation obs = backend.reset(opts.seed);
  int steps = 0;
  std::optional<std::string> compromising_cve;

  auto scan_id = [&](ScanType t) -> std::optional<int> {
    for (std::size_t i = 0; i < catalog.scans.size(); ++i)
      if (catalog.scans[i] == t) return static_cast<int>(i);
    return std::nullopt;
  };

  for (ScanType t : opts.scan_plan) {
    if (steps >= budget || backend.done()) break;
    auto id = scan_id(t);
    if (!id) continue;
    StepOutcome out = backend.step(*id);
    obs = out.observation;
    ++steps;
    if (out.done) break;
  }
  if (opts.try_exploits) {
    for (std::size_t i = 0; i < catalog.exploits.size(); ++i) {
      if (steps >= budget || backend.done()) break;
      int id = static_cast<int>(catalog.scans.size() + i);
      StepOutcome out = backend.step(id);
      obs = out.observation;
      ++steps;
      if (out.info.kind == Event::Kind::Compromised)
        compromising_cve = catalog.exploits[i];
      if (out.done) break;
    }
  }

  CaptureResult result;
  HostProfile& h = result.observed;
  h.host_id = backend.target_id();
  if (obs.os_known)
    h.os = *obs.os_known;
  else
    result.missing.push_back("os");
  for (const auto& [n, r] : obs.ports) {
    PortEntry p;
    p.number = r.number;
    p.protocol = r.protocol;
    p.service = r.service;
    p.product = r.product;
    p.version = r.version;
    auto it = obs.banners_known.find(n);
    if (it != obs.banners_known.end()) p.banner = it->second;
    h.ports.push_back(std::move(p));
  }
  if (h.ports.empty()) result.missing.push_back("ports");
  if (!obs.service_scanned) result.missing.push_back("services");
  h.web_fingerprints = obs.fingerprints_known;

  if (!compromising_cve) {
    result.missing.push_back("vulnerability");
  } else {
    const CveEntry* entry = knowledge.find(*compromising_cve);
    if (entry == nullptr) {
      result.missing.push_back("cve-knowledge:" + *compromising_cve);
    } else {
      const PortEntry* exposing = nullptr;
      for (const auto& p : h.ports)
        if (p.product == entry->vulnerable_product) {
          exposing = &p;
          break;
        }
      if (exposing == nullptr) {
        result.missing.push_back("exposing-service");
      } else {
        h.vulnerability.cve_id = entry->cve_id;
        h.vulnerability.vulnerable_product = entry->vulnerable_product;
        h.vulnerability.vulnerable_version_range =
            entry->vulnerable_version_range;
        h.vulnerability.exposing_port = exposing->number;
        h.vulnerability.description = entry->description;
      }
    }
  }

  result.incomplete = !result.missing.empty();
  if (!result.incomplete) {
    EnvironmentFile env;
    env.host = h;
    env.provenance.kind = Provenance::Kind::Captured;
    validate_environment(env);
    result.env = std::move(env);
  }
  return result;
}

}  // namespace gaplab
