#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gaplab/builtin_data.hpp"
#include "gaplab/config.hpp"
#include "gaplab/evalharness.hpp"
#include "gaplab/llm.hpp"
#include "gaplab/meta.hpp"
#include "gaplab/ppo.hpp"
#include "gaplab/randomizer.hpp"

namespace gaplab {

// Exit codes: 0 ok, 1 usage, 2 validation (including incomplete capture),
// 3 runtime failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

// ---------------------------------------------------------------------------
// RunConfig: one merged configuration for every command; file values are
// overridden by flags and the fully-resolved snapshot lands in the run
// directory, so any run replays from its own config.json.
// ---------------------------------------------------------------------------

struct RunConfig {
  int catalog_size = 100;
  std::uint64_t catalog_seed = 7;
  ActionCosts costs;
  RewardSpec reward;
  EpisodeBudget budget;
  PPOConfig ppo;
  MetaConfig meta;
  EvalConfig eval;
  RandomizationPolicy randomize;
  LlmClientConfig llm;
  std::uint64_t seed = 1;

  RunConfig() {
    const char* endpoint = std::getenv("GAP_LLM_ENDPOINT");
    if (endpoint != nullptr) llm.endpoint = endpoint;
  }
};

inline json run_config_to_json(const RunConfig& c) {
  return json{{"catalog",
               {{"size", c.catalog_size},
                {"seed", c.catalog_seed},
                {"costs", costs_to_json(c.costs)}}},
              {"reward", reward_to_json(c.reward)},
              {"budget", budget_to_json(c.budget)},
              {"ppo", ppo_to_json(c.ppo)},
              {"meta", meta_to_json(c.meta)},
              {"eval",
               {{"eval_episodes", c.eval.eval_episodes},
                {"greedy", c.eval.greedy},
                {"jumpstart_window", c.eval.jumpstart_window},
                {"sample_seed", c.eval.sample_seed}}},
              {"randomize", policy_to_json(c.randomize)},
              {"llm",
               {{"endpoint", c.llm.endpoint},
                {"model", c.llm.model},
                {"temperature", c.llm.temperature},
                {"prompt_token_limit", c.llm.prompt_token_limit}}},
              {"seed", c.seed}};
}

inline RunConfig run_config_from_json(const json& j) {
  detail::expect_keys(j, "config", {},
                      {"catalog", "reward", "budget", "ppo", "meta", "eval",
                       "randomize", "llm", "seed"});
  RunConfig c;
  if (j.contains("catalog")) {
    const json& cat = j.at("catalog");
    detail::expect_keys(cat, "catalog", {}, {"size", "seed", "costs"});
    c.catalog_size = cat.value("size", c.catalog_size);
    c.catalog_seed = cat.value("seed", c.catalog_seed);
    if (cat.contains("costs")) c.costs = costs_from_json(cat.at("costs"));
  }
  if (j.contains("reward")) c.reward = reward_from_json(j.at("reward"));
  if (j.contains("budget")) c.budget = budget_from_json(j.at("budget"));
  if (j.contains("ppo")) c.ppo = ppo_from_json(j.at("ppo"));
  if (j.contains("meta")) c.meta = meta_from_json(j.at("meta"));
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    detail::expect_keys(e, "eval", {},
                        {"eval_episodes", "greedy", "jumpstart_window",
                         "sample_seed"});
    c.eval.eval_episodes = e.value("eval_episodes", c.eval.eval_episodes);
    c.eval.greedy = e.value("greedy", c.eval.greedy);
    c.eval.jumpstart_window =
        e.value("jumpstart_window", c.eval.jumpstart_window);
    c.eval.sample_seed = e.value("sample_seed", c.eval.sample_seed);
    c.eval.validate();
  }
  if (j.contains("randomize"))
    c.randomize = policy_from_json(j.at("randomize"));
  if (j.contains("llm")) {
    const json& l = j.at("llm");
    detail::expect_keys(l, "llm", {},
                        {"endpoint", "model", "temperature",
                         "prompt_token_limit"});
    c.llm.endpoint = l.value("endpoint", c.llm.endpoint);
    c.llm.model = l.value("model", c.llm.model);
    c.llm.temperature = l.value("temperature", c.llm.temperature);
    c.llm.prompt_token_limit =
        l.value("prompt_token_limit", c.llm.prompt_token_limit);
  }
  c.seed = j.value("seed", c.seed);
  return c;
}

namespace cli_detail {

// User-supplied paths that cannot be read are usage errors (exit 1).
inline std::string read_input_file(const std::string& path) {
  try {
    return detail::read_text_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

struct CommonArgs {
  std::string env_path;
  std::string cve;
  std::string envs_dir;
  std::string config_path;
  std::string out;
  std::uint64_t seed = 1;
  bool seed_set = false;
  int actions = 0;  // 0: from config
  int jobs = 1;
};

inline RunConfig resolve_config(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty())
    cfg = run_config_from_json(json::parse(read_input_file(args.config_path)));
  if (args.seed_set) cfg.seed = args.seed;
  if (args.actions > 0) cfg.catalog_size = args.actions;
  return cfg;
}

inline EnvironmentFile load_env(const CommonArgs& args) {
  if (!args.env_path.empty())
    return parse_environment(read_input_file(args.env_path));
  if (!args.cve.empty()) return builtin_environment(args.cve);
  throw ConfigError("an environment is required: pass --env or --cve");
}

inline std::vector<EnvironmentFile> load_envs_dir(const std::string& dir) {
  // Run directories mix environment files with bookkeeping; skip the
  // reserved names so --envs-dir can point straight at a randomize run.
  static const std::set<std::string> kReserved = {
      "config.json",     "report.json",  "eval_report.json",
      "timing.json",     "summary.json", "manifest.json"};
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json")
      continue;
    if (kReserved.count(entry.path().filename().string())) continue;
    paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<EnvironmentFile> envs;
  for (const auto& p : paths)
    envs.push_back(parse_environment(read_input_file(p.string())));
  if (envs.empty())
    throw ConfigError("no .json environment files under " + dir);
  return envs;
}

inline ActionCatalog catalog_for(const RunConfig& cfg,
                                 const std::vector<std::string>& truth) {
  return build_catalog(truth, make_distractor_pool(1200), cfg.catalog_size,
                       cfg.catalog_seed, cfg.costs);
}

inline void snapshot_config(const RunConfig& cfg,
                            const std::filesystem::path& out_dir) {
  detail::write_text_file(out_dir / "config.json",
                          run_config_to_json(cfg).dump(2) + "\n");
}

inline std::string curve_csv(const std::vector<EpisodePoint>& curve) {
  std::string out = "episode,return,steps,success\n";
  for (const auto& pt : curve)
    out += std::to_string(pt.episode) + "," + format_double(pt.ret) + "," +
           std::to_string(pt.steps) + "," + (pt.success ? "1" : "0") + "\n";
  return out;
}

// Minimal static SVG line chart for report consumers.
inline std::string svg_line_chart(
    const std::string& title,
    const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  const int width = 720, height = 400, margin = 48;
  double lo = 0.0, hi = 1.0;
  std::size_t max_len = 1;
  bool first = true;
  for (const auto& [label, ys] : series) {
    (void)label;
    for (double y : ys) {
      if (first) {
        lo = hi = y;
        first = false;
      }
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
    max_len = std::max(max_len, ys.size());
  }
  if (hi == lo) hi = lo + 1.0;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b"};
  std::string svg =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
      std::to_string(width) + "\" height=\"" + std::to_string(height) +
      "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" +
      "<text x=\"" + std::to_string(width / 2) +
      "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + title +
      "</text>\n";
  int color = 0;
  double x_span = static_cast<double>(width - 2 * margin);
  double y_span = static_cast<double>(height - 2 * margin);
  for (const auto& [label, ys] : series) {
    std::string points;
    for (std::size_t i = 0; i < ys.size(); ++i) {
      double x = margin + x_span * (max_len > 1 ? static_cast<double>(i) /
                                                      (max_len - 1)
                                                : 0.0);
      double y = height - margin - y_span * (ys[i] - lo) / (hi - lo);
      points += format_double(x) + "," + format_double(y) + " ";
    }
    const char* stroke = kColors[color % 6];
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(stroke) +
           "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
    svg += "<text x=\"" + std::to_string(margin) + "\" y=\"" +
           std::to_string(margin + 16 * color) + "\" font-size=\"12\" fill=\"" +
           stroke + "\">" + label + "</text>\n";
    ++color;
  }
  svg += "<text x=\"8\" y=\"" + std::to_string(margin) +
         "\" font-size=\"11\">" + format_double(hi) + "</text>\n";
  svg += "<text x=\"8\" y=\"" + std::to_string(height - margin) +
         "\" font-size=\"11\">" + format_double(lo) + "</text>\n";
  svg += "</svg>\n";
  return svg;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline int cmd_capture(const CommonArgs& args, const std::string& scan_plan,
                       bool try_exploits, std::ostream& out,
                       std::ostream& err) {
  RunConfig cfg = resolve_config(args);
  EnvironmentFile env = load_env(args);
  ActionCatalog catalog = catalog_for(cfg, {env.host.vulnerability.cve_id});
  Simulation sim(env.host, catalog, cfg.reward,
                 EpisodeBudget{catalog.size() + 10, 1});

  CaptureOptions opts;
  opts.seed = cfg.seed;
  opts.try_exploits = try_exploits;
  if (!scan_plan.empty()) {
    opts.scan_plan.clear();
    std::string token;
    std::istringstream ss(scan_plan);
    while (std::getline(ss, token, ',')) {
      if (token == "ports")
        opts.scan_plan.push_back(ScanType::PortScan);
      else if (token == "os")
        opts.scan_plan.push_back(ScanType::OsScan);
      else if (token == "services")
        opts.scan_plan.push_back(ScanType::ServiceScan);
      else if (token == "fingerprints")
        opts.scan_plan.push_back(ScanType::WebFingerprintScan);
      else if (token == "banners")
        opts.scan_plan.push_back(ScanType::BannerGrab);
      else
        throw ConfigError("unknown scan '" + token + "' in --scan-plan");
    }
  }

  CaptureResult result = capture(sim, builtin_cve_catalog(), opts);
  if (result.incomplete) {
    err << "incomplete capture; missing:";
    for (const auto& m : result.missing) err << " " << m;
    err << "\n";
    return kExitValidation;
  }
  detail::write_text_file(args.out, serialize_environment(*result.env));
  out << "captured " << result.env->host.host_id << " -> " << args.out << "\n";
  return kExitOk;
}

inline int cmd_train(const CommonArgs& args, int episodes_override,
                     bool log_trajectories, std::ostream& out,
                     std::ostream& /*err*/) {
  RunConfig cfg = resolve_config(args);
  if (episodes_override > 0) cfg.ppo.episodes = episodes_override;
  EnvironmentFile env = load_env(args);
  ActionCatalog catalog = catalog_for(cfg, {env.host.vulnerability.cve_id});
  Simulation sim(env.host, catalog, cfg.reward, cfg.budget);

  std::filesystem::path dir(args.out);
  snapshot_config(cfg, dir);
  detail::write_text_file(dir / "envs" / "train.json",
                          serialize_environment(env));

  TrainResult result = train(sim, cfg.ppo, cfg.seed);
  detail::write_text_file(dir / "curve.csv", curve_csv(result.curve));
  detail::write_text_file(dir / "checkpoint.json",
                          serialize_policy(result.params));

  std::string stats;
  for (const auto& s : result.update_stats)
    stats += json{{"policy_loss", s.policy_loss},
                  {"value_loss", s.value_loss},
                  {"entropy", s.entropy},
                  {"clip_frac", s.clip_frac}}
                 .dump() +
             "\n";
  detail::write_text_file(dir / "stats.jsonl", stats);

  if (log_trajectories) {
    // Deterministic greedy rollout of the final policy, one record per step.
    std::ostringstream log;
    TrajectoryLogger logger(log);
    Simulation replay(env.host, catalog, cfg.reward, cfg.budget);
    Observation obs = replay.reset(cfg.seed);
    int t = 0;
    while (!replay.done()) {
      StateVector s = embed_observation(obs, cfg.ppo.embedder);
      int a = greedy_action(forward(result.params, s.values).logits);
      StepOutcome so = replay.step(a);
      logger.log(0, t++, a, so.reward, so.info, so.done);
      obs = so.observation;
    }
    detail::write_text_file(dir / "trajectories.jsonl", log.str());
  }
  detail::write_text_file(
      dir / "timing.json",
      json{{"wall_time_s", result.wall_time_s}}.dump(2) + "\n");
  out << "trained " << cfg.ppo.episodes << " episodes -> " << args.out << "\n";
  return kExitOk;
}

inline int cmd_meta_train(const CommonArgs& args,
                          const std::string& init_checkpoint,
                          std::ostream& out, std::ostream& /*err*/) {
  RunConfig cfg = resolve_config(args);
  EnvironmentFile origin = load_env(args);
  TaskSet set;
  if (!args.envs_dir.empty())
    set.environments = load_envs_dir(args.envs_dir);
  else
    set.environments = randomize_rule(origin, cfg.randomize, 5, cfg.seed);
  set.validate();
  ActionCatalog catalog = catalog_for(cfg, {set.cve_id()});

  std::filesystem::path dir(args.out);
  snapshot_config(cfg, dir);
  for (std::size_t i = 0; i < set.environments.size(); ++i)
    detail::write_text_file(
        dir / "envs" / ("task-" + std::to_string(i) + ".json"),
        serialize_environment(set.environments[i]));

  cfg.meta.embedder = cfg.ppo.embedder;
  PolicyParams theta;
  if (!init_checkpoint.empty()) {
    theta = parse_policy(read_input_file(init_checkpoint));
    if (theta.shape.n_actions != catalog.size())
      throw ConfigError("checkpoint head size does not match the catalog");
  } else {
    // Pipeline order: pre-train on the origin before meta-training.
    Simulation sim(origin.host, catalog, cfg.reward, cfg.budget);
    theta = train(sim, cfg.ppo, cfg.seed).params;
  }

  auto tasks = make_tasks(set, catalog, cfg.reward, cfg.budget);
  MetaTrainResult result =
      meta_train(theta, tasks, cfg.meta, derive_seed(cfg.seed, "meta"));

  detail::write_text_file(
      dir / "meta-checkpoint.json",
      serialize_meta_checkpoint(result.theta, static_cast<int>(tasks.size()),
                                set.cve_id(), cfg.meta));
  std::string curve = "iteration,post_adapt_return,pre_adapt_return\n";
  for (std::size_t i = 0; i < result.meta_curve.size(); ++i)
    curve += std::to_string(i) + "," + format_double(result.meta_curve[i]) +
             "," + format_double(result.pre_curve[i]) + "\n";
  detail::write_text_file(dir / "meta_curve.csv", curve);
  detail::write_text_file(
      dir / "timing.json",
      json{{"wall_time_s", result.wall_time_s}}.dump(2) + "\n");
  out << "meta-trained " << cfg.meta.meta_iterations << " iterations over "
      << tasks.size() << " tasks -> " << args.out << "\n";
  return kExitOk;
}

inline int cmd_randomize(const CommonArgs& args, int n,
                         const std::string& engine, std::ostream& out,
                         std::ostream& err) {
  RunConfig cfg = resolve_config(args);
  EnvironmentFile env = load_env(args);
  std::filesystem::path dir(args.out);

  std::vector<EnvironmentFile> variants;
  int shortfall = 0;
  if (engine == "rule") {
    variants = randomize_rule(env, cfg.randomize, n, cfg.seed);
  } else if (engine == "llm") {
    if (cfg.llm.endpoint.empty())
      throw ConfigError(
          "llm engine needs an endpoint (GAP_LLM_ENDPOINT or config)");
    const CveEntry* entry =
        builtin_cve_catalog().find(env.host.vulnerability.cve_id);
    std::string description = entry != nullptr
                                  ? entry->description
                                  : env.host.vulnerability.description;
    LlmGenerationResult gen =
        randomize_llm(env, description, n, cfg.llm, cfg.randomize);
    variants = std::move(gen.variants);
    shortfall = gen.shortfall;
  } else {
    throw ConfigError("unknown engine '" + engine + "'");
  }

  snapshot_config(cfg, dir);
  detail::write_text_file(dir / "envs" / "original.json",
                          serialize_environment(env));
  char name[32];
  for (std::size_t i = 0; i < variants.size(); ++i) {
    std::snprintf(name, sizeof(name), "variant-%03zu.json", i);
    detail::write_text_file(dir / name, serialize_environment(variants[i]));
  }
  out << "wrote " << variants.size() << " variants -> " << args.out << "\n";
  if (shortfall > 0) {
    err << "shortfall: " << shortfall << " of " << n
        << " requested variants were invalid\n";
    return kExitValidation;
  }
  return kExitOk;
}

inline int cmd_eval(const CommonArgs& args, const std::string& checkpoint,
                    const std::string& train_env_path, std::ostream& out,
                    std::ostream& /*err*/) {
  RunConfig cfg = resolve_config(args);
  PolicyParams params = parse_policy(read_input_file(checkpoint));

  std::vector<EnvironmentFile> envs;
  if (!args.envs_dir.empty())
    envs = load_envs_dir(args.envs_dir);
  else
    envs.push_back(load_env(args));
  std::vector<std::string> truth;
  for (const auto& e : envs) truth.push_back(e.host.vulnerability.cve_id);
  ActionCatalog catalog = catalog_for(cfg, truth);
  if (params.shape.n_actions != catalog.size())
    throw ConfigError("checkpoint head size does not match the catalog");

  ZeroShotResult zs = zero_shot_eval(params, envs, catalog, cfg.ppo.embedder,
                                     cfg.eval, cfg.reward, cfg.budget);
  json report{{"mean_return", zs.mean_return},
              {"success_rate", zs.success_rate}};
  json per_env = json::array();
  for (const auto& ee : zs.per_env)
    per_env.push_back(json{{"env", ee.env_id},
                           {"mean_return", ee.mean_return},
                           {"successes", ee.successes},
                           {"episodes", ee.episodes}});
  report["per_env"] = std::move(per_env);

  if (!train_env_path.empty()) {
    EnvironmentFile train_env =
        parse_environment(read_input_file(train_env_path));
    report["gen_gap"] = gen_gap(params, {train_env}, envs, catalog,
                                cfg.ppo.embedder, cfg.eval, cfg.reward,
                                cfg.budget);
  }

  std::filesystem::path dir(args.out);
  snapshot_config(cfg, dir);
  detail::write_text_file(dir / "eval_report.json", report.dump(2) + "\n");
  out << report.dump(2) << "\n";
  return kExitOk;
}

inline int cmd_experiment(const CommonArgs& args,
                          const std::string& manifest_path, std::ostream& out,
                          std::ostream& /*err*/) {
  Manifest manifest = parse_manifest(read_input_file(manifest_path));
  ExperimentContext ctx = prepare_experiment(manifest);
  MetricsReport report = run_experiment(manifest, args.jobs);
  write_experiment_outputs(report, manifest, ctx,
                           std::filesystem::path(args.out));
  out << "experiment " << manifest.protocol << " -> " << args.out << "\n";
  return kExitOk;
}

inline int cmd_report(const CommonArgs& args, const std::string& run_dir,
                      std::ostream& out, std::ostream& /*err*/) {
  namespace fs = std::filesystem;
  fs::path dir(run_dir);
  if (!fs::exists(dir))
    throw ConfigError("run directory not found: " + run_dir);
  fs::path out_dir = args.out.empty() ? dir : fs::path(args.out);

  std::vector<std::pair<std::string, std::vector<double>>> series;
  std::vector<fs::path> csvs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".csv") csvs.push_back(entry.path());
  std::sort(csvs.begin(), csvs.end());
  for (const fs::path& p : csvs) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);  // header
    bool has_seed = line.rfind("seed,", 0) == 0;
    std::map<std::string, std::vector<double>> by_seed;
    while (std::getline(in, line)) {
      std::istringstream ss(line);
      std::string a, b, c;
      std::getline(ss, a, ',');
      std::getline(ss, b, ',');
      std::getline(ss, c, ',');
      if (has_seed)
        by_seed[a].push_back(std::stod(c));
      else
        by_seed["0"].push_back(std::stod(b));
    }
    for (auto& [seed, ys] : by_seed)
      series.emplace_back(p.stem().string() + "/seed-" + seed, std::move(ys));
  }
  if (series.empty())
    throw ConfigError("no curve CSVs found under " + run_dir);
  detail::write_text_file(out_dir / "curves.svg",
                          svg_line_chart("episode returns", series));

  json summary = json::object();
  if (fs::exists(dir / "report.json"))
    summary["report"] =
        json::parse(detail::read_text_file(dir / "report.json"));
  summary["series"] = json::array();
  for (const auto& [label, ys] : series)
    summary["series"].push_back(json{{"label", label},
                                     {"points", ys.size()},
                                     {"final", ys.empty() ? 0.0 : ys.back()}});
  detail::write_text_file(out_dir / "summary.json", summary.dump(2) + "\n");
  out << "rendered " << series.size() << " series -> "
      << (out_dir / "curves.svg").string() << "\n";
  return kExitOk;
}

}  // namespace cli_detail

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run_cli(const std::vector<std::string>& args, std::ostream& out,
                   std::ostream& err) {
  using namespace cli_detail;
  CLI::App app{"gaplab: a real-to-sim-to-real autonomous pentesting lab"};
  app.require_subcommand(1);

  CommonArgs common;
  auto add_common = [&common](CLI::App* cmd, bool needs_out = true) {
    cmd->add_option("--env", common.env_path,
                    "Path to an environment JSON file");
    cmd->add_option("--cve", common.cve,
                    "Bundled environment by CVE id (e.g. CVE-2018-7600)");
    cmd->add_option("--config", common.config_path,
                    "RunConfig JSON file; flags override it");
    cmd->add_option("--seed", common.seed, "Deterministic run seed")
        ->capture_default_str()
        ->each([&common](const std::string&) { common.seed_set = true; });
    cmd->add_option("--actions", common.actions,
                    "Action catalog size |A| (100, 500, 1000, or any N)")
        ->capture_default_str();
    cmd->add_option("--jobs", common.jobs, "Max concurrent (env, seed) cells")
        ->capture_default_str();
    if (needs_out)
      cmd->add_option("--out", common.out, "Output file or run directory")
          ->required();
  };

  auto* capture = app.add_subcommand(
      "capture",
      "Drive a backend with the scripted scanner and emit an environment "
      "file");
  std::string scan_plan;
  bool no_exploits = false;
  add_common(capture);
  capture->add_option("--scan-plan", scan_plan,
                      "Comma list of ports,os,services,fingerprints,banners "
                      "(default: all)");
  capture->add_flag("--no-exploits", no_exploits,
                    "Skip the exploit sweep (vulnerability stays unknown)");

  auto* train_cmd =
      app.add_subcommand("train", "PPO policy training on one environment");
  int episodes_override = 0;
  bool log_traj = false;
  add_common(train_cmd);
  train_cmd->add_option("--episodes", episodes_override,
                        "Override the configured episode budget");
  train_cmd->add_flag("--log-trajectories", log_traj,
                      "Write a greedy-policy trajectory log (JSON lines)");

  auto* meta_cmd = app.add_subcommand(
      "meta-train", "MAML meta-training over an environment task set");
  std::string init_checkpoint;
  add_common(meta_cmd);
  meta_cmd->add_option("--envs-dir", common.envs_dir,
                       "Directory of task environment files (default: "
                       "rule-randomized variants of --env/--cve)");
  meta_cmd->add_option("--init", init_checkpoint,
                       "Pre-trained checkpoint (default: PPO pre-training)");

  auto* rand_cmd =
      app.add_subcommand("randomize", "Generate validated environment "
                                      "variants");
  int n_variants = 5;
  std::string engine = "rule";
  add_common(rand_cmd);
  rand_cmd->add_option("--n", n_variants, "Number of variants")
      ->capture_default_str();
  rand_cmd->add_option("--engine", engine, "rule or llm")
      ->capture_default_str();

  auto* eval_cmd = app.add_subcommand(
      "eval", "Zero-shot evaluation of a checkpoint on environments");
  std::string checkpoint, train_env_for_gap;
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "Policy checkpoint JSON")
      ->required();
  eval_cmd->add_option("--envs-dir", common.envs_dir,
                       "Directory of environment files to evaluate on");
  eval_cmd->add_option("--train-env", train_env_for_gap,
                       "Training environment for a generalization gap");

  auto* exp_cmd = app.add_subcommand(
      "experiment", "Run an rq1/rq2/rq3 protocol from a manifest");
  std::string manifest_path;
  add_common(exp_cmd);
  exp_cmd->add_option("--manifest", manifest_path, "Manifest JSON path")
      ->required();

  auto* report_cmd = app.add_subcommand(
      "report", "Render plots and summaries from an existing run directory");
  std::string run_dir;
  add_common(report_cmd, /*needs_out=*/false);
  report_cmd->add_option("--run", run_dir, "Run directory to render")
      ->required();
  report_cmd->add_option("--out", common.out,
                         "Output directory (default: the run directory)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    for (const auto* sub : app.get_subcommands({}))
      out << "\n" << sub->help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (capture->parsed())
      return cmd_capture(common, scan_plan, !no_exploits, out, err);
    if (train_cmd->parsed())
      return cmd_train(common, episodes_override, log_traj, out, err);
    if (meta_cmd->parsed())
      return cmd_meta_train(common, init_checkpoint, out, err);
    if (rand_cmd->parsed())
      return cmd_randomize(common, n_variants, engine, out, err);
    if (eval_cmd->parsed())
      return cmd_eval(common, checkpoint, train_env_for_gap, out, err);
    if (exp_cmd->parsed())
      return cmd_experiment(common, manifest_path, out, err);
    if (report_cmd->parsed()) return cmd_report(common, run_dir, out, err);
    err << "no subcommand\n";
    return kExitUsage;
  } catch (const SchemaError& e) {
    err << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const InvariantError& e) {
    err << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ManifestError& e) {
    err << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const PolicyUnsatisfiableError& e) {
    err << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

inline int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace gaplab
