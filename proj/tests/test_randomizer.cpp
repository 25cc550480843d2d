#include <doctest.h>

#include <set>

#include "gaplab/builtin_data.hpp"
#include "gaplab/randomizer.hpp"
#include "gaplab/simulator.hpp"

using namespace gaplab;

namespace {

EnvironmentFile drupal_env() { return builtin_environment(default_cve_id()); }

}  // namespace

TEST_CASE("worked example: exposing port moves off 80 with >=2 field changes") {
  EnvironmentFile env = drupal_env();
  RandomizationPolicy policy;
  auto variants = randomize_rule(env, policy, 1, 7);
  REQUIRE(variants.size() == 1);
  const EnvironmentFile& v = variants[0];
  CHECK(v.host.vulnerability.exposing_port != 80);
  CHECK(v.host.vulnerability.cve_id == "CVE-2018-7600");
  CHECK(v.parent_id == env.host.host_id);
  CHECK(v.provenance.kind == Provenance::Kind::Randomized);
  CHECK(v.provenance.engine == RandomizerEngine::Rule);
  CHECK(changed_fields(env.host, v.host).size() >= 2);

  const PortEntry* exposing = v.host.find_port(v.host.vulnerability.exposing_port);
  REQUIRE(exposing != nullptr);
  CHECK(exposing->product == "Drupal Core");
  CHECK(env.host.vulnerability.vulnerable_version_range.contains(
      exposing->version));
}

TEST_CASE("n=0 produces an empty list") {
  CHECK(randomize_rule(drupal_env(), {}, 0, 1).empty());
}

TEST_CASE("rule path is deterministic: identical bytes for identical seeds") {
  EnvironmentFile env = drupal_env();
  RandomizationPolicy policy;
  auto a = randomize_rule(env, policy, 5, 42);
  auto b = randomize_rule(env, policy, 5, 42);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(serialize_environment(a[i]) == serialize_environment(b[i]));
  auto c = randomize_rule(env, policy, 5, 43);
  CHECK(serialize_environment(a[0]) != serialize_environment(c[0]));
}

TEST_CASE("100 variants all validate and differ pairwise") {
  EnvironmentFile env = drupal_env();
  RandomizationPolicy policy;
  auto variants = randomize_rule(env, policy, 100, 11);
  REQUIRE(variants.size() == 100);
  std::set<std::string> distinct;
  for (const auto& v : variants) {
    ValidationReport report = validate(v, env, policy);
    CHECK(report.valid);
    CHECK(report.fields_changed >= policy.min_fields_changed);
    HostProfile unnamed = v.host;
    unnamed.host_id.clear();
    distinct.insert(
        serialize_environment(EnvironmentFile{"1", unnamed, {}, {}}));
  }
  CHECK(distinct.size() == variants.size());
}

TEST_CASE("every rule-engine variant remains exploitable in three steps") {
  for (const auto& entry : builtin_cve_catalog().entries) {
    EnvironmentFile env = builtin_environment(entry.cve_id);
    ActionCatalog cat = build_catalog({entry.cve_id}, make_distractor_pool(50),
                                      10, 3);
    auto variants = randomize_rule(env, {}, 5, 99);
    for (const auto& v : variants) {
      CHECK(three_step_compromises(v.host, cat));
    }
  }
}

TEST_CASE("original vs itself is invalid: nothing changed") {
  EnvironmentFile env = drupal_env();
  ValidationReport report = validate(env, env, {});
  CHECK_FALSE(report.valid);
  CHECK(report.fields_changed == 0);
  CHECK(report.violations.empty());
}

TEST_CASE("validator flags a removed vulnerable product") {
  EnvironmentFile env = drupal_env();
  EnvironmentFile v = randomize_rule(env, {}, 1, 5)[0];
  for (auto& p : v.host.ports)
    if (p.number == v.host.vulnerability.exposing_port) p.product = "nginx";
  ValidationReport report = validate(v, env, {});
  CHECK_FALSE(report.valid);
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0] == "vp-missing");
}

TEST_CASE("validator flags an out-of-range version") {
  EnvironmentFile env = drupal_env();
  EnvironmentFile v = randomize_rule(env, {}, 1, 5)[0];
  for (auto& p : v.host.ports)
    if (p.number == v.host.vulnerability.exposing_port) p.version = "9.0.0";
  ValidationReport report = validate(v, env, {});
  CHECK_FALSE(report.valid);
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0] == "version-range");
  // Range boundaries are inclusive: min and max themselves pass.
  for (auto& p : v.host.ports)
    if (p.number == v.host.vulnerability.exposing_port)
      p.version = env.host.vulnerability.vulnerable_version_range.max;
  CHECK(validate(v, env, {}).valid);
}

TEST_CASE("validator flags a changed cve id") {
  EnvironmentFile env = drupal_env();
  EnvironmentFile v = randomize_rule(env, {}, 1, 5)[0];
  v.host.vulnerability.cve_id = "CVE-2022-0543";
  ValidationReport report = validate(v, env, {});
  CHECK_FALSE(report.valid);
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0] == "cve-changed");
}

TEST_CASE("corruptor samples are rejected with the intended rule") {
  EnvironmentFile env = drupal_env();
  auto variants = randomize_rule(env, {}, 6, 17);
  RandomizationPolicy policy;
  for (int which = 0; which < 6; ++which) {
    CorruptedSample sample = corrupt_one_rule(variants[which], which);
    ValidationReport report = validate_bytes(sample.bytes, env, policy);
    CHECK_FALSE(report.valid);
    bool hit = false;
    for (const auto& rule : report.violations) hit |= rule == sample.broken_rule;
    CHECK_MESSAGE(hit, "expected rule ", sample.broken_rule, " in violations");
  }
}

TEST_CASE("validator accepts every rule-engine output (soundness corpus)") {
  EnvironmentFile env = drupal_env();
  RandomizationPolicy policy;
  auto variants = randomize_rule(env, policy, 50, 23);
  int accepted = 0;
  for (const auto& v : variants)
    accepted += validate_bytes(serialize_environment(v), env, policy).valid;
  CHECK(accepted == 50);
}

TEST_CASE("policy with too few mutable fields is unsatisfiable") {
  RandomizationPolicy policy;
  policy.vary_ports = false;
  policy.vary_os_version = false;
  policy.vary_service_versions = false;
  policy.distractor_max = 0;
  policy.vary_fingerprints = true;
  policy.min_fields_changed = 2;
  CHECK_THROWS_AS(randomize_rule(drupal_env(), policy, 1, 1),
                  PolicyUnsatisfiableError);

  policy.min_fields_changed = 0;
  CHECK_THROWS_AS(policy.validate(), InvariantError);
}

TEST_CASE("version interpolation stays inside the vulnerable range") {
  VersionRange wide{"2015.8.0", "3002.0"};
  auto versions = detail::versions_in_range(wide);
  CHECK(versions.size() >= 2);
  for (const auto& v : versions) CHECK(wide.contains(v));

  VersionRange narrow{"2.4.49", "2.4.49"};
  auto single = detail::versions_in_range(narrow);
  REQUIRE(single.size() == 1);
  CHECK(single[0] == "2.4.49");

  VersionRange drupal{"8.0.0", "8.5.0"};
  auto d = detail::versions_in_range(drupal);
  CHECK(d.size() >= 6);
  for (const auto& v : d) CHECK(drupal.contains(v));
}

TEST_CASE("singleton version range still satisfies min_fields_changed") {
  // CVE-2021-41773 pins Apache to exactly 2.4.49; the version mutator
  // no-ops but port/os/distractor/fingerprint changes still clear the bar.
  EnvironmentFile env = builtin_environment("CVE-2021-41773");
  RandomizationPolicy policy;
  auto variants = randomize_rule(env, policy, 10, 31);
  for (const auto& v : variants) {
    CHECK(validate(v, env, policy).valid);
    const PortEntry* p = v.host.find_port(v.host.vulnerability.exposing_port);
    REQUIRE(p != nullptr);
    CHECK(p->version == "2.4.49");
  }
}
