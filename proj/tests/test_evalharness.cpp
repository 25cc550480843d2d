#include <doctest.h>

#include <filesystem>

#include "gaplab/builtin_data.hpp"
#include "gaplab/evalharness.hpp"

using namespace gaplab;

namespace {

ActionCatalog small_catalog(std::vector<std::string> truth = {default_cve_id()},
                            int size = 10) {
  return build_catalog(truth, make_distractor_pool(100), size, 1);
}

// Converged policy on the default environment; actor logits sharpened so the
// sampled policy is effectively deterministic. The greedy-optimality of the
// fixture is asserted before any test relies on it.
PolicyParams optimal_params(const ActionCatalog& cat, double sharpen = 50.0) {
  static std::map<int, PolicyParams> cache;
  auto it = cache.find(cat.size());
  PolicyParams base;
  if (it != cache.end()) {
    base = it->second;
  } else {
    Simulation sim(builtin_profile(default_cve_id()), cat);
    PPOConfig cfg;
    cfg.embedder.d = 64;
    cfg.hidden = {16, 16};
    cfg.episodes = 2000;
    cfg.lr = 3e-3;
    base = train(sim, cfg, 12).params;

    Simulation probe(builtin_profile(default_cve_id()), cat);
    Observation obs = probe.reset(0);
    double g = 0.0;
    while (!probe.done()) {
      StateVector s = embed_observation(obs, cfg.embedder);
      StepOutcome step =
          probe.step(greedy_action(forward(base, s.values).logits));
      g += step.reward;
      obs = step.observation;
    }
    REQUIRE(g == 1193.0);  // fixture must be greedy-optimal
    cache[cat.size()] = base;
  }
  for (double& v : base.actor.w.data) v *= sharpen;
  for (double& v : base.actor.b) v *= sharpen;
  return base;
}

EmbedderSpec eval_embedder() {
  EmbedderSpec spec;
  spec.d = 64;
  return spec;
}

}  // namespace

TEST_CASE("pearson correlation: exact degenerate cases") {
  std::vector<double> xs = {1.0, 2.0, 3.0, 4.0};
  std::vector<double> neg = {-1.0, -2.0, -3.0, -4.0};
  CHECK(correlation(xs, xs) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(correlation(xs, neg) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK_THROWS_AS(correlation({1.0}, {1.0}), DegenerateInputError);
  CHECK_THROWS_AS(correlation({1.0, 1.0}, {1.0, 2.0}), DegenerateInputError);
  CHECK_THROWS_AS(correlation({1.0, 2.0}, {1.0}), DegenerateInputError);
}

TEST_CASE("unweighted averaging reproduces the hand-computed 450 gap") {
  CHECK(mean_of({1000.0, 900.0}) - mean_of({500.0, 500.0}) == 450.0);
}

TEST_CASE("zero_shot_eval: optimal policy earns 1193 with certain success") {
  ActionCatalog cat = small_catalog();
  PolicyParams params = optimal_params(cat);
  EvalConfig cfg;
  cfg.eval_episodes = 5;
  ZeroShotResult res =
      zero_shot_eval(params, {builtin_environment(default_cve_id())}, cat,
                     eval_embedder(), cfg);
  CHECK(res.mean_return == 1193.0);
  CHECK(res.success_rate == 1.0);
  REQUIRE(res.per_env.size() == 1);
  CHECK(res.per_env[0].successes == 5);
  CHECK(res.per_env[0].episodes == 5);
}

TEST_CASE("zero_shot_eval: greedy evaluation has zero variance") {
  ActionCatalog cat = small_catalog();
  PolicyParams params = optimal_params(cat);
  EvalConfig cfg;
  cfg.eval_episodes = 7;
  ZeroShotResult a =
      zero_shot_eval(params, {builtin_environment(default_cve_id())}, cat,
                     eval_embedder(), cfg);
  ZeroShotResult b =
      zero_shot_eval(params, {builtin_environment(default_cve_id())}, cat,
                     eval_embedder(), cfg);
  CHECK(a.mean_return == b.mean_return);
  CHECK(a.success_rate == b.success_rate);
}

TEST_CASE("success_rate is the exact integer ratio") {
  ActionCatalog cat = small_catalog();
  PolicyParams random_params =
      init_policy({64, {16, 16}, cat.size()}, 777);
  EvalConfig cfg;
  cfg.eval_episodes = 3;
  std::vector<EnvironmentFile> envs = {builtin_environment(default_cve_id())};
  auto variants = randomize_rule(envs[0], {}, 2, 5);
  envs.insert(envs.end(), variants.begin(), variants.end());

  ZeroShotResult res =
      zero_shot_eval(random_params, envs, cat, eval_embedder(), cfg);
  int successes = 0, episodes = 0;
  for (const auto& ee : res.per_env) {
    successes += ee.successes;
    episodes += ee.episodes;
  }
  CHECK(res.success_rate ==
        static_cast<double>(successes) / static_cast<double>(episodes));
  CHECK(res.success_rate >= 0.0);
  CHECK(res.success_rate <= 1.0);
}

TEST_CASE("gen_gap of any params against identical sets is exactly zero") {
  ActionCatalog cat = small_catalog();
  PolicyParams params = init_policy({64, {16, 16}, cat.size()}, 31);
  std::vector<EnvironmentFile> envs = {builtin_environment(default_cve_id())};
  auto variants = randomize_rule(envs[0], {}, 2, 9);
  envs.insert(envs.end(), variants.begin(), variants.end());
  EvalConfig cfg;
  cfg.eval_episodes = 2;
  CHECK(gen_gap(params, envs, envs, cat, eval_embedder(), cfg) == 0.0);
}

TEST_CASE("few_shot_adapt: window=1 jumpstart equals the first return") {
  ActionCatalog cat = small_catalog();
  PolicyParams params = init_policy({64, {16, 16}, cat.size()}, 3);
  PPOConfig fine;
  fine.embedder = eval_embedder();
  fine.hidden = {16, 16};
  fine.episodes = 12;
  EvalConfig cfg;
  cfg.jumpstart_window = 1;
  FewShotResult few =
      few_shot_adapt(params, builtin_environment(default_cve_id()), cat, fine,
                     cfg, 4, 0.8 * 1193.0);
  REQUIRE(few.curve.size() == 12);
  CHECK(few.jumpstart == few.curve[0].ret);
}

TEST_CASE("few_shot_adapt: an already optimal init jumpstarts at the optimum") {
  ActionCatalog cat = small_catalog();
  PolicyParams params = optimal_params(cat);
  PPOConfig fine;
  fine.embedder = eval_embedder();
  fine.hidden = {16, 16};
  fine.episodes = 10;
  fine.episodes_per_update = 10;  // no update inside the jumpstart window
  EvalConfig cfg;
  cfg.jumpstart_window = 10;
  FewShotResult few =
      few_shot_adapt(params, builtin_environment(default_cve_id()), cat, fine,
                     cfg, 4, 0.8 * 1193.0);
  CHECK(few.jumpstart == 1193.0);
}

TEST_CASE("manifest parsing: defaults, overrides, rejection") {
  Manifest m = parse_manifest(R"({"protocol": "rq1"})");
  CHECK(m.protocol == "rq1");
  CHECK(m.train_cve == "CVE-2018-7600");
  CHECK(m.catalog_size == 100);
  CHECK(m.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(m.ppo.lr == 3e-3);  // experiment default

  Manifest m2 = parse_manifest(R"({
    "protocol": "rq2",
    "train_cve": "CVE-2022-0543",
    "catalog_size": 40,
    "n_meta_envs": 4,
    "seeds": [9],
    "ppo": {"episodes": 50, "lr": 0.001},
    "eval": {"eval_episodes": 5}
  })");
  CHECK(m2.train_cve == "CVE-2022-0543");
  CHECK(m2.catalog_size == 40);
  CHECK(m2.ppo.episodes == 50);
  CHECK(m2.ppo.lr == 0.001);
  CHECK(m2.eval.eval_episodes == 5);
  CHECK(m2.finetune.episodes == 50);  // inherits ppo unless overridden

  CHECK_THROWS_AS(parse_manifest("{}"), SchemaError);
  CHECK_THROWS_AS(parse_manifest(R"({"protocol": "rq9"})"), ManifestError);
  CHECK_THROWS_AS(parse_manifest(R"({"protocol": "rq1", "bogus": 1})"),
                  SchemaError);
  CHECK_THROWS_AS(parse_manifest(R"({"protocol": "rq1", "seeds": []})"),
                  ManifestError);
  CHECK_THROWS_AS(parse_manifest("not json"), ManifestError);
}

TEST_CASE("rq1 experiment: deterministic reports and full-length curves") {
  Manifest m = parse_manifest(R"({
    "protocol": "rq1",
    "catalog_size": 10,
    "seeds": [1, 2],
    "ppo": {"episodes": 30, "embedder": {"d": 32}, "hidden": [16, 16]}
  })");
  MetricsReport a = run_experiment(m);
  MetricsReport b = run_experiment(m);

  REQUIRE(a.curves.count("train") == 1);
  REQUIRE(a.curves["train"].size() == 2);
  CHECK(a.curves["train"][0].second.size() == 30);
  CHECK(a.optimal_return == 1193.0);
  CHECK(report_to_json(a).dump() == report_to_json(b).dump());
  CHECK(curves_csv(a.curves["train"]) == curves_csv(b.curves["train"]));
  CHECK(a.first_sustained["train"].size() == 2);
}

TEST_CASE("experiment outputs land on disk and replay byte-identically") {
  namespace fs = std::filesystem;
  Manifest m = parse_manifest(R"({
    "protocol": "rq1",
    "catalog_size": 10,
    "seeds": [1],
    "ppo": {"episodes": 20, "embedder": {"d": 32}, "hidden": [16, 16]}
  })");
  fs::path dir = fs::temp_directory_path() / "gaplab-test-rq1";
  fs::remove_all(dir);

  ExperimentContext ctx = prepare_experiment(m);
  MetricsReport report = run_experiment(m);
  write_experiment_outputs(report, m, ctx, dir);

  CHECK(fs::exists(dir / "report.json"));
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(fs::exists(dir / "timing.json"));
  CHECK(fs::exists(dir / "curves-train.csv"));
  CHECK(fs::exists(dir / "envs" / "train.json"));

  std::string report_1 = detail::read_text_file(dir / "report.json");
  std::string curves_1 = detail::read_text_file(dir / "curves-train.csv");

  MetricsReport replay = run_experiment(m);
  write_experiment_outputs(replay, m, ctx, dir);
  CHECK(detail::read_text_file(dir / "report.json") == report_1);
  CHECK(detail::read_text_file(dir / "curves-train.csv") == curves_1);
  fs::remove_all(dir);
}

TEST_CASE("rq2 context generates disjoint meta and test variant sets") {
  Manifest m = parse_manifest(R"({
    "protocol": "rq2",
    "catalog_size": 10,
    "n_meta_envs": 5,
    "n_test_envs": 3
  })");
  ExperimentContext ctx = prepare_experiment(m);
  CHECK(ctx.meta_envs.size() == 5);
  CHECK(ctx.test_envs.size() == 3);
  std::set<std::string> ids;
  for (const auto& e : ctx.meta_envs) ids.insert(e.host.host_id);
  for (const auto& e : ctx.test_envs) ids.insert(e.host.host_id);
  CHECK(ids.size() == 8);
  for (const auto& e : ctx.meta_envs)
    CHECK(e.host.vulnerability.cve_id == "CVE-2018-7600");

  // All variants remain solvable with the shared catalog.
  for (const auto& e : ctx.test_envs)
    CHECK(three_step_compromises(e.host, ctx.catalog));
}

TEST_CASE("concurrent seed cells produce the same report as sequential") {
  Manifest m = parse_manifest(R"({
    "protocol": "rq1",
    "catalog_size": 10,
    "seeds": [1, 2],
    "ppo": {"episodes": 20, "embedder": {"d": 32}, "hidden": [16, 16]}
  })");
  MetricsReport sequential = run_experiment(m, 1);
  MetricsReport parallel = run_experiment(m, 2);
  CHECK(report_to_json(sequential).dump() == report_to_json(parallel).dump());
  CHECK(curves_csv(sequential.curves["train"]) ==
        curves_csv(parallel.curves["train"]));
}

TEST_CASE("rq3 requires a genuinely dissimilar transfer environment") {
  Manifest m = parse_manifest(R"({
    "protocol": "rq3",
    "transfer_cve": "CVE-2018-7600"
  })");
  CHECK_THROWS_AS(prepare_experiment(m), ManifestError);
}
