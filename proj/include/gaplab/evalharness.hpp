#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gaplab/builtin_data.hpp"
#include "gaplab/common.hpp"
#include "gaplab/config.hpp"
#include "gaplab/meta.hpp"
#include "gaplab/ppo.hpp"
#include "gaplab/randomizer.hpp"

namespace gaplab {

// ---------------------------------------------------------------------------
// Metric kernels
// ---------------------------------------------------------------------------

struct EvalConfig {
  int eval_episodes = 20;
  bool greedy = true;  // deterministic, replayable zero-shot numbers
  int jumpstart_window = 10;
  std::uint64_t sample_seed = 0;  // greedy=false only

  void validate() const {
    if (eval_episodes < 1 || jumpstart_window < 1)
      throw InvariantError("eval episode counts must be positive");
  }
};

struct EpisodeEval {
  double ret = 0.0;
  bool success = false;
  int steps = 0;
};

inline EpisodeEval run_eval_episode(EnvironmentBackend& env,
                                    const PolicyParams& params,
                                    const EmbedderSpec& embedder, bool greedy,
                                    Rng* rng, std::uint64_t reset_seed) {
  EpisodeEval out;
  Observation obs = env.reset(reset_seed);
  while (!env.done()) {
    StateVector state = embed_observation(obs, embedder);
    ForwardResult fwd = forward(params, state.values);
    int action = greedy ? greedy_action(fwd.logits)
                        : sample_action(fwd.logits, *rng).action_id;
    StepOutcome step = env.step(action);
    out.ret += step.reward;
    out.steps += 1;
    if (step.info.kind == Event::Kind::Compromised) out.success = true;
    obs = std::move(step.observation);
  }
  return out;
}

struct EnvEval {
  std::string env_id;
  double mean_return = 0.0;
  int successes = 0;
  int episodes = 0;
};

struct ZeroShotResult {
  double mean_return = 0.0;   // unweighted mean over environments
  double success_rate = 0.0;  // exact integer ratio
  std::vector<EnvEval> per_env;
};

inline ZeroShotResult zero_shot_eval(const PolicyParams& params,
                                     const std::vector<EnvironmentFile>& envs,
                                     const ActionCatalog& catalog,
                                     const EmbedderSpec& embedder,
                                     const EvalConfig& cfg,
                                     RewardSpec reward = {},
                                     EpisodeBudget budget = {}) {
  cfg.validate();
  if (envs.empty()) throw InvariantError("zero_shot_eval needs environments");
  if (params.shape.n_actions != catalog.size())
    throw ShapeMismatchError("policy head does not match catalog size");

  ZeroShotResult result;
  int successes = 0, episodes = 0;
  Rng rng(derive_seed(cfg.sample_seed, "zero-shot"));
  for (const auto& env_file : envs) {
    Simulation sim(env_file.host, catalog, reward, budget);
    EnvEval ee;
    ee.env_id = env_file.host.host_id;
    for (int e = 0; e < cfg.eval_episodes; ++e) {
      EpisodeEval ep = run_eval_episode(
          sim, params, embedder, cfg.greedy, &rng,
          static_cast<std::uint64_t>(e));
      ee.mean_return += ep.ret;
      ee.successes += ep.success ? 1 : 0;
      ee.episodes += 1;
    }
    ee.mean_return /= cfg.eval_episodes;
    successes += ee.successes;
    episodes += ee.episodes;
    result.mean_return += ee.mean_return;
    result.per_env.push_back(std::move(ee));
  }
  result.mean_return /= static_cast<double>(envs.size());
  result.success_rate = static_cast<double>(successes) / episodes;
  return result;
}

// Train-set mean return minus test-set mean return (zero-shot, Monte Carlo
// per the eval config; exact and replayable under greedy evaluation).
inline double gen_gap(const PolicyParams& params,
                      const std::vector<EnvironmentFile>& train_envs,
                      const std::vector<EnvironmentFile>& test_envs,
                      const ActionCatalog& catalog,
                      const EmbedderSpec& embedder, const EvalConfig& cfg,
                      RewardSpec reward = {}, EpisodeBudget budget = {}) {
  double train = zero_shot_eval(params, train_envs, catalog, embedder, cfg,
                                reward, budget)
                     .mean_return;
  double test = zero_shot_eval(params, test_envs, catalog, embedder, cfg,
                               reward, budget)
                    .mean_return;
  return train - test;
}

struct FewShotResult {
  std::vector<EpisodePoint> curve;
  double jumpstart = 0.0;  // mean return over the first window episodes
  double wall_time_s = 0.0;
  int first_sustained = 0;           // episode index, curve-size+1 if never
  double time_to_threshold_s = 0.0;  // wall clock until sustained (or total)
  PolicyParams params;
};

inline FewShotResult few_shot_adapt(const PolicyParams& params_init,
                                    const EnvironmentFile& env_file,
                                    const ActionCatalog& catalog,
                                    const PPOConfig& ppo_cfg,
                                    const EvalConfig& cfg, std::uint64_t seed,
                                    double sustain_threshold,
                                    RewardSpec reward = {},
                                    EpisodeBudget budget = {}) {
  cfg.validate();
  Simulation sim(env_file.host, catalog, reward, budget);
  TrainResult tr = train(sim, ppo_cfg, seed, &params_init);

  FewShotResult out;
  out.curve = std::move(tr.curve);
  out.wall_time_s = tr.wall_time_s;
  out.params = std::move(tr.params);
  int window = std::min<int>(cfg.jumpstart_window,
                             static_cast<int>(out.curve.size()));
  for (int i = 0; i < window; ++i)
    out.jumpstart += out.curve[static_cast<std::size_t>(i)].ret;
  if (window > 0) out.jumpstart /= window;

  out.first_sustained = first_sustained_episode(out.curve, sustain_threshold);
  if (out.first_sustained < static_cast<int>(out.curve.size()))
    out.time_to_threshold_s =
        out.curve[static_cast<std::size_t>(out.first_sustained)].elapsed_s;
  else
    out.time_to_threshold_s = out.wall_time_s;
  return out;
}

// Pearson correlation coefficient.
inline double correlation(const std::vector<double>& xs,
                          const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw DegenerateInputError("correlation needs two same-length series");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(ys.size());
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw DegenerateInputError("correlation is undefined at zero variance");
  return sxy / std::sqrt(sxx * syy);
}

inline double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double v : xs) s += v;
  return s / static_cast<double>(xs.size());
}

// 95% confidence half-width from independent seed means.
inline double ci95_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double m = mean_of(xs);
  double var = 0.0;
  for (double v : xs) var += (v - m) * (v - m);
  var /= static_cast<double>(xs.size() - 1);
  return 1.96 * std::sqrt(var / static_cast<double>(xs.size()));
}

// ---------------------------------------------------------------------------
// Experiment manifest
// ---------------------------------------------------------------------------

struct Manifest {
  std::string protocol;  // rq1 | rq2 | rq3
  std::string train_cve = default_cve_id();
  std::optional<std::string> train_env_path;
  std::vector<std::string> test_env_paths;  // rq2; generated when empty
  std::string transfer_cve = "CVE-2021-22205";  // rq3, k' != k
  std::optional<std::string> transfer_env_path;
  int catalog_size = 100;
  int n_meta_envs = 5;
  int n_test_envs = 3;
  std::uint64_t variants_seed = 7;
  std::uint64_t catalog_seed = 7;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  PPOConfig ppo;
  PPOConfig finetune;
  MetaConfig meta;
  EvalConfig eval;
  RandomizationPolicy randomize;
  RewardSpec reward;
  EpisodeBudget budget;
  ActionCosts costs;

  Manifest() {
    // Experiment-grade training defaults at desk scale.
    ppo.lr = 3e-3;
    finetune = ppo;
    meta.inner_lr = 0.02;
    meta.outer_lr = 0.01;
    meta.meta_iterations = 150;
    meta.inner_episodes = 10;
  }
};

inline Manifest parse_manifest(std::string_view bytes) {
  json j;
  try {
    j = json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(std::string("invalid manifest JSON: ") + e.what());
  }
  detail::expect_keys(
      j, "manifest", {"protocol"},
      {"train_cve", "train_env", "test_envs", "transfer_cve", "transfer_env",
       "catalog_size", "n_meta_envs", "n_test_envs", "variants_seed",
       "catalog_seed", "seeds", "ppo", "finetune", "meta", "eval",
       "randomize", "reward", "budget", "costs"});
  Manifest m;
  m.protocol = j.at("protocol").get<std::string>();
  if (m.protocol != "rq1" && m.protocol != "rq2" && m.protocol != "rq3")
    throw ManifestError("unknown protocol: " + m.protocol);
  m.train_cve = j.value("train_cve", m.train_cve);
  if (j.contains("train_env"))
    m.train_env_path = j.at("train_env").get<std::string>();
  if (j.contains("test_envs"))
    m.test_env_paths = j.at("test_envs").get<std::vector<std::string>>();
  m.transfer_cve = j.value("transfer_cve", m.transfer_cve);
  if (j.contains("transfer_env"))
    m.transfer_env_path = j.at("transfer_env").get<std::string>();
  m.catalog_size = j.value("catalog_size", m.catalog_size);
  m.n_meta_envs = j.value("n_meta_envs", m.n_meta_envs);
  m.n_test_envs = j.value("n_test_envs", m.n_test_envs);
  m.variants_seed = j.value("variants_seed", m.variants_seed);
  m.catalog_seed = j.value("catalog_seed", m.catalog_seed);
  if (j.contains("seeds"))
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (m.seeds.empty()) throw ManifestError("manifest needs at least one seed");
  if (j.contains("ppo")) m.ppo = ppo_from_json(j.at("ppo"));
  m.finetune = m.ppo;
  if (j.contains("finetune")) m.finetune = ppo_from_json(j.at("finetune"));
  if (j.contains("meta")) m.meta = meta_from_json(j.at("meta"));
  m.meta.embedder = m.ppo.embedder;
  if (j.contains("eval")) {
    detail::expect_keys(j.at("eval"), "eval", {},
                        {"eval_episodes", "greedy", "jumpstart_window",
                         "sample_seed"});
    m.eval.eval_episodes = j.at("eval").value("eval_episodes", 20);
    m.eval.greedy = j.at("eval").value("greedy", true);
    m.eval.jumpstart_window = j.at("eval").value("jumpstart_window", 10);
    m.eval.sample_seed = j.at("eval").value("sample_seed", 0);
    m.eval.validate();
  }
  if (j.contains("randomize")) m.randomize = policy_from_json(j.at("randomize"));
  if (j.contains("reward")) m.reward = reward_from_json(j.at("reward"));
  if (j.contains("budget")) m.budget = budget_from_json(j.at("budget"));
  if (j.contains("costs")) m.costs = costs_from_json(j.at("costs"));
  return m;
}

inline json manifest_to_json(const Manifest& m) {
  json j{{"protocol", m.protocol},
         {"train_cve", m.train_cve},
         {"transfer_cve", m.transfer_cve},
         {"catalog_size", m.catalog_size},
         {"n_meta_envs", m.n_meta_envs},
         {"n_test_envs", m.n_test_envs},
         {"variants_seed", m.variants_seed},
         {"catalog_seed", m.catalog_seed},
         {"seeds", m.seeds},
         {"ppo", ppo_to_json(m.ppo)},
         {"finetune", ppo_to_json(m.finetune)},
         {"meta", meta_to_json(m.meta)},
         {"eval",
          {{"eval_episodes", m.eval.eval_episodes},
           {"greedy", m.eval.greedy},
           {"jumpstart_window", m.eval.jumpstart_window},
           {"sample_seed", m.eval.sample_seed}}},
         {"randomize", policy_to_json(m.randomize)},
         {"reward", reward_to_json(m.reward)},
         {"budget", budget_to_json(m.budget)},
         {"costs", costs_to_json(m.costs)}};
  if (m.train_env_path) j["train_env"] = *m.train_env_path;
  if (!m.test_env_paths.empty()) j["test_envs"] = m.test_env_paths;
  if (m.transfer_env_path) j["transfer_env"] = *m.transfer_env_path;
  return j;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct MethodMetrics {
  std::string method;
  std::vector<double> gen_gaps;       // per seed
  std::vector<double> success_rates;  // per seed
  std::vector<double> jumpstarts;     // per seed
  std::vector<double> wall_times;     // per seed (timing.json only)
  std::vector<double> times_to_threshold;
};

struct MetricsReport {
  std::string protocol;
  std::map<std::string, std::pair<double, double>> per_env;  // mean, ci95
  std::vector<MethodMetrics> methods;
  // curve family -> per-seed series
  std::map<std::string,
           std::vector<std::pair<std::uint64_t, std::vector<EpisodePoint>>>>
      curves;
  std::vector<double> meta_curve;
  double pearson_r = 0.0;
  bool has_pearson = false;
  double optimal_return = 0.0;
  std::map<std::string, std::vector<int>> first_sustained;  // label -> per seed
  double training_time_s = 0.0;  // total wall clock (timing.json only)
};

namespace detail {

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  return content;
}

}  // namespace detail

// curves.csv: seed,episode,return (one file per labeled curve family).
inline std::string curves_csv(
    const std::vector<std::pair<std::uint64_t, std::vector<EpisodePoint>>>&
        per_seed) {
  std::string out = "seed,episode,return\n";
  for (const auto& [seed, curve] : per_seed)
    for (const auto& pt : curve)
      out += std::to_string(seed) + "," + std::to_string(pt.episode) + "," +
             format_double(pt.ret) + "\n";
  return out;
}

// Deterministic metrics (report.json) keep wall-clock numbers out; those go
// to timing.json so replays stay byte-identical.
inline json report_to_json(const MetricsReport& report) {
  json j{{"protocol", report.protocol}};
  if (!report.per_env.empty()) {
    json envs = json::object();
    for (const auto& [env_id, stats] : report.per_env)
      envs[env_id] = json{{"mean_return", stats.first},
                          {"ci95", stats.second}};
    j["per_env"] = std::move(envs);
  }
  if (!report.methods.empty()) {
    json methods = json::array();
    for (const auto& m : report.methods) {
      json mj{{"method", m.method}};
      if (!m.gen_gaps.empty()) {
        mj["gen_gap_per_seed"] = m.gen_gaps;
        mj["gen_gap_mean"] = mean_of(m.gen_gaps);
        mj["gen_gap_ci95"] = ci95_of(m.gen_gaps);
      }
      if (!m.success_rates.empty()) {
        mj["success_rate_per_seed"] = m.success_rates;
        mj["success_rate_mean"] = mean_of(m.success_rates);
      }
      if (!m.jumpstarts.empty()) {
        mj["jumpstart_per_seed"] = m.jumpstarts;
        mj["jumpstart_mean"] = mean_of(m.jumpstarts);
        mj["jumpstart_ci95"] = ci95_of(m.jumpstarts);
      }
      methods.push_back(std::move(mj));
    }
    j["methods"] = std::move(methods);
  }
  if (!report.meta_curve.empty()) j["meta_curve"] = report.meta_curve;
  if (report.has_pearson) j["pearson_r_jumpstart_vs_time"] = report.pearson_r;
  if (report.optimal_return != 0.0)
    j["optimal_return"] = report.optimal_return;
  if (!report.first_sustained.empty()) {
    json fs = json::object();
    for (const auto& [label, per_seed] : report.first_sustained)
      fs[label] = per_seed;
    j["first_sustained_episode"] = std::move(fs);
  }
  return j;
}

inline json timing_to_json(const MetricsReport& report) {
  json j{{"training_time_s", report.training_time_s}};
  json methods = json::object();
  for (const auto& m : report.methods) {
    if (m.wall_times.empty() && m.times_to_threshold.empty()) continue;
    json mj = json::object();
    if (!m.wall_times.empty()) {
      mj["wall_time_s_per_seed"] = m.wall_times;
      mj["wall_time_s_mean"] = mean_of(m.wall_times);
    }
    if (!m.times_to_threshold.empty()) {
      mj["time_to_threshold_s_per_seed"] = m.times_to_threshold;
      mj["time_to_threshold_s_mean"] = mean_of(m.times_to_threshold);
    }
    methods[m.method] = std::move(mj);
  }
  if (!methods.empty()) j["methods"] = std::move(methods);
  return j;
}

// ---------------------------------------------------------------------------
// Protocol driver
// ---------------------------------------------------------------------------

struct ExperimentContext {
  EnvironmentFile train_env;
  EnvironmentFile transfer_env;              // rq3
  std::vector<EnvironmentFile> meta_envs;    // generated variants
  std::vector<EnvironmentFile> test_envs;    // held-out variants
  ActionCatalog catalog;
};

// Resolves environments and the shared catalog for a manifest. Meta and
// held-out variants come from one generation pass, so they are pairwise
// distinct by construction.
inline ExperimentContext prepare_experiment(const Manifest& m) {
  ExperimentContext ctx;
  ctx.train_env = m.train_env_path
                      ? parse_environment(detail::read_text_file(*m.train_env_path))
                      : builtin_environment(m.train_cve);

  std::vector<std::string> truth = {ctx.train_env.host.vulnerability.cve_id};
  if (m.protocol == "rq3") {
    ctx.transfer_env =
        m.transfer_env_path
            ? parse_environment(detail::read_text_file(*m.transfer_env_path))
            : builtin_environment(m.transfer_cve);
    if (ctx.transfer_env.host.vulnerability.cve_id ==
        ctx.train_env.host.vulnerability.cve_id)
      throw ManifestError("rq3 transfer environment must carry a different CVE");
    truth.push_back(ctx.transfer_env.host.vulnerability.cve_id);
  }
  ctx.catalog = build_catalog(truth, make_distractor_pool(1200),
                              m.catalog_size, m.catalog_seed, m.costs);

  if (m.protocol == "rq2" || m.protocol == "rq3") {
    int want_tests = m.test_env_paths.empty() ? m.n_test_envs : 0;
    auto generated = randomize_rule(ctx.train_env, m.randomize,
                                    m.n_meta_envs + want_tests,
                                    m.variants_seed);
    ctx.meta_envs.assign(generated.begin(),
                         generated.begin() + m.n_meta_envs);
    if (want_tests > 0)
      ctx.test_envs.assign(generated.begin() + m.n_meta_envs,
                           generated.end());
    else
      for (const auto& path : m.test_env_paths)
        ctx.test_envs.push_back(
            parse_environment(detail::read_text_file(path)));
  }
  return ctx;
}

inline double optimal_return_of(const EnvironmentFile& env,
                                const ActionCatalog& catalog,
                                RewardSpec reward, EpisodeBudget budget) {
  Simulation sim(env.host, catalog, reward, budget);
  sim.reset(0);
  double total = 0.0;
  for (int a : three_step_solution(env.host, catalog))
    total += sim.step(a).reward;
  return total;
}

// Runs fn(seed) for every manifest seed, at most `jobs` in flight; results
// merge in seed order, so concurrency never changes any output.
template <typename R, typename F>
std::vector<R> map_seeds(const std::vector<std::uint64_t>& seeds, int jobs,
                         F&& fn) {
  std::vector<R> results(seeds.size());
  if (jobs <= 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) results[i] = fn(seeds[i]);
    return results;
  }
  std::size_t next = 0;
  while (next < seeds.size()) {
    std::size_t batch_end =
        std::min(seeds.size(), next + static_cast<std::size_t>(jobs));
    std::vector<std::future<R>> inflight;
    for (std::size_t i = next; i < batch_end; ++i)
      inflight.push_back(
          std::async(std::launch::async, fn, seeds[i]));
    for (std::size_t i = next; i < batch_end; ++i)
      results[i] = inflight[i - next].get();
    next = batch_end;
  }
  return results;
}

inline MetricsReport run_experiment(const Manifest& m, int jobs = 1) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentContext ctx = prepare_experiment(m);
  MetricsReport report;
  report.protocol = m.protocol;
  report.optimal_return =
      optimal_return_of(ctx.train_env, ctx.catalog, m.reward, m.budget);

  if (m.protocol == "rq1") {
    struct Rq1Cell {
      TrainResult tr;
      int sustained = 0;
    };
    double threshold = 0.8 * report.optimal_return;
    auto cells = map_seeds<Rq1Cell>(m.seeds, jobs, [&](std::uint64_t seed) {
      Simulation sim(ctx.train_env.host, ctx.catalog, m.reward, m.budget);
      Rq1Cell cell;
      cell.tr = train(sim, m.ppo, seed);
      cell.sustained = first_sustained_episode(cell.tr.curve, threshold);
      return cell;
    });
    std::vector<int> sustained;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      sustained.push_back(cells[i].sustained);
      report.curves["train"].emplace_back(m.seeds[i],
                                          std::move(cells[i].tr.curve));
    }
    report.first_sustained["train"] = std::move(sustained);
  } else if (m.protocol == "rq2") {
    struct Rq2Cell {
      std::vector<EpisodePoint> pretrain_curve;
      std::vector<double> meta_curve;
      double gap_ppo = 0.0, succ_ppo = 0.0;
      double gap_meta = 0.0, succ_meta = 0.0;
      std::vector<EnvEval> meta_test_per_env;
    };
    auto cells = map_seeds<Rq2Cell>(m.seeds, jobs, [&](std::uint64_t seed) {
      Rq2Cell cell;
      Simulation sim(ctx.train_env.host, ctx.catalog, m.reward, m.budget);
      TrainResult pre = train(sim, m.ppo, seed);
      cell.pretrain_curve = std::move(pre.curve);

      auto tasks = make_tasks(TaskSet{ctx.meta_envs}, ctx.catalog, m.reward,
                              m.budget);
      MetaTrainResult meta =
          meta_train(pre.params, tasks, m.meta, derive_seed(seed, "meta"));
      cell.meta_curve = std::move(meta.meta_curve);

      ZeroShotResult ppo_train_side = zero_shot_eval(
          pre.params, {ctx.train_env}, ctx.catalog, m.ppo.embedder, m.eval,
          m.reward, m.budget);
      ZeroShotResult ppo_test_side =
          zero_shot_eval(pre.params, ctx.test_envs, ctx.catalog,
                         m.ppo.embedder, m.eval, m.reward, m.budget);
      cell.gap_ppo = ppo_train_side.mean_return - ppo_test_side.mean_return;
      cell.succ_ppo = ppo_test_side.success_rate;

      ZeroShotResult meta_train_side = zero_shot_eval(
          meta.theta, ctx.meta_envs, ctx.catalog, m.ppo.embedder, m.eval,
          m.reward, m.budget);
      ZeroShotResult meta_test_side =
          zero_shot_eval(meta.theta, ctx.test_envs, ctx.catalog,
                         m.ppo.embedder, m.eval, m.reward, m.budget);
      cell.gap_meta = meta_train_side.mean_return - meta_test_side.mean_return;
      cell.succ_meta = meta_test_side.success_rate;
      cell.meta_test_per_env = std::move(meta_test_side.per_env);
      return cell;
    });

    MethodMetrics ppo_arm{"ppo", {}, {}, {}, {}, {}};
    MethodMetrics meta_arm{"meta", {}, {}, {}, {}, {}};
    std::map<std::string, std::vector<double>> env_returns;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      Rq2Cell& cell = cells[i];
      report.curves["pretrain"].emplace_back(m.seeds[i],
                                             std::move(cell.pretrain_curve));
      if (report.meta_curve.empty()) report.meta_curve = cell.meta_curve;
      ppo_arm.gen_gaps.push_back(cell.gap_ppo);
      ppo_arm.success_rates.push_back(cell.succ_ppo);
      meta_arm.gen_gaps.push_back(cell.gap_meta);
      meta_arm.success_rates.push_back(cell.succ_meta);
      for (const auto& ee : cell.meta_test_per_env)
        env_returns[ee.env_id].push_back(ee.mean_return);
    }
    for (const auto& [env_id, values] : env_returns)
      report.per_env[env_id] = {mean_of(values), ci95_of(values)};
    report.methods = {ppo_arm, meta_arm};
  } else if (m.protocol == "rq3") {
    double transfer_optimal =
        optimal_return_of(ctx.transfer_env, ctx.catalog, m.reward, m.budget);
    double threshold = 0.8 * transfer_optimal;
    report.optimal_return = transfer_optimal;

    struct Rq3Cell {
      std::map<std::string, FewShotResult> arms;
    };
    static const std::vector<std::string> kArms = {
        "scratch", "ppo-transfer", "jointpg-transfer", "meta-transfer"};

    auto cells = map_seeds<Rq3Cell>(m.seeds, jobs, [&](std::uint64_t seed) {
      Rq3Cell cell;
      Simulation sim(ctx.train_env.host, ctx.catalog, m.reward, m.budget);
      TrainResult pre = train(sim, m.ppo, seed);
      auto tasks = make_tasks(TaskSet{ctx.meta_envs}, ctx.catalog, m.reward,
                              m.budget);
      MetaTrainResult meta =
          meta_train(pre.params, tasks, m.meta, derive_seed(seed, "meta"));
      MetaTrainResult joint = joint_multitask_pg_train(
          pre.params, tasks, m.meta, derive_seed(seed, "joint"));
      PolicyShape shape{m.finetune.embedder.d, m.finetune.hidden,
                        ctx.catalog.size()};
      PolicyParams fresh =
          init_policy(shape, derive_seed(seed, "scratch-init"));

      auto fine_tune = [&](const PolicyParams& start,
                           const std::string& label) {
        return few_shot_adapt(start, ctx.transfer_env, ctx.catalog,
                              m.finetune, m.eval, derive_seed(seed, label),
                              threshold, m.reward, m.budget);
      };
      cell.arms["scratch"] = fine_tune(fresh, "scratch");
      cell.arms["ppo-transfer"] = fine_tune(pre.params, "ppo-transfer");
      cell.arms["jointpg-transfer"] =
          fine_tune(joint.theta, "jointpg-transfer");
      cell.arms["meta-transfer"] = fine_tune(meta.theta, "meta-transfer");
      return cell;
    });

    for (const std::string& label : kArms) {
      MethodMetrics arm{label, {}, {}, {}, {}, {}};
      std::vector<int> fs;
      for (std::size_t i = 0; i < cells.size(); ++i) {
        FewShotResult& few = cells[i].arms.at(label);
        arm.jumpstarts.push_back(few.jumpstart);
        arm.wall_times.push_back(few.wall_time_s);
        arm.times_to_threshold.push_back(few.time_to_threshold_s);
        fs.push_back(few.first_sustained);
        report.curves[label].emplace_back(m.seeds[i], std::move(few.curve));
      }
      report.first_sustained[label] = std::move(fs);
      report.methods.push_back(std::move(arm));
    }

    std::vector<double> jumpstarts, times;
    for (const auto& arm : report.methods) {
      jumpstarts.push_back(mean_of(arm.jumpstarts));
      times.push_back(mean_of(arm.times_to_threshold));
    }
    report.pearson_r = correlation(jumpstarts, times);
    report.has_pearson = true;
  } else {
    throw ManifestError("unknown protocol: " + m.protocol);
  }

  report.training_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

// Writes report.json, curves, timing.json, and the environments used.
inline void write_experiment_outputs(const MetricsReport& report,
                                     const Manifest& manifest,
                                     const ExperimentContext& ctx,
                                     const std::filesystem::path& out_dir) {
  detail::write_text_file(out_dir / "manifest.json",
                          manifest_to_json(manifest).dump(2) + "\n");
  detail::write_text_file(out_dir / "report.json",
                          report_to_json(report).dump(2) + "\n");
  detail::write_text_file(out_dir / "timing.json",
                          timing_to_json(report).dump(2) + "\n");

  for (const auto& [family, per_seed] : report.curves)
    detail::write_text_file(out_dir / ("curves-" + family + ".csv"),
                            curves_csv(per_seed));
  detail::write_text_file(out_dir / "envs" / "train.json",
                          serialize_environment(ctx.train_env));
  for (std::size_t i = 0; i < ctx.meta_envs.size(); ++i)
    detail::write_text_file(
        out_dir / "envs" / ("meta-" + std::to_string(i) + ".json"),
        serialize_environment(ctx.meta_envs[i]));
  for (std::size_t i = 0; i < ctx.test_envs.size(); ++i)
    detail::write_text_file(
        out_dir / "envs" / ("test-" + std::to_string(i) + ".json"),
        serialize_environment(ctx.test_envs[i]));
  if (manifest.protocol == "rq3")
    detail::write_text_file(out_dir / "envs" / "transfer.json",
                            serialize_environment(ctx.transfer_env));
}

}  // namespace gaplab
