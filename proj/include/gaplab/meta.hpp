#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gaplab/common.hpp"
#include "gaplab/envmodel.hpp"
#include "gaplab/ppo.hpp"

namespace gaplab {

struct MetaConfig {
  double inner_lr = 0.05;    // alpha, one inner policy-gradient step
  double outer_lr = 1e-3;    // beta
  int inner_episodes = 10;   // per task, both collection phases
  int meta_iterations = 100;
  double gamma = 0.99;
  double reward_scale = 100.0;
  // Per-batch advantage normalization keeps the gradient scale flat while
  // the critic baseline drifts; a disclosed deviation knob, like PPO's.
  bool normalize_advantages = true;
  EmbedderSpec embedder;

  void validate() const {
    if (!(inner_lr >= 0.0) || !(outer_lr > 0.0))
      throw InvariantError("meta learning rates must be nonnegative/positive");
    if (inner_episodes < 1 || meta_iterations < 0)
      throw InvariantError("meta episode/iteration counts out of range");
    if (reward_scale <= 0.0)
      throw InvariantError("reward_scale must be positive");
    embedder.validate();
  }
};

// A meta-training task is anything that can mint a fresh environment.
struct MetaTask {
  std::string id;
  std::function<std::unique_ptr<EnvironmentBackend>()> make;
};

// The environment-file flavored task set: all variants of one vulnerability.
struct TaskSet {
  std::vector<EnvironmentFile> environments;

  void validate() const {
    if (environments.empty()) throw InvariantError("task set is empty");
    const std::string& cve = environments.front().host.vulnerability.cve_id;
    for (const auto& env : environments)
      if (env.host.vulnerability.cve_id != cve)
        throw InvariantError("task set mixes vulnerabilities: " + cve +
                             " vs " + env.host.vulnerability.cve_id);
  }

  std::string cve_id() const {
    return environments.front().host.vulnerability.cve_id;
  }
};

inline std::vector<MetaTask> make_tasks(const TaskSet& set,
                                        const ActionCatalog& catalog,
                                        RewardSpec spec = {},
                                        EpisodeBudget budget = {}) {
  set.validate();
  std::vector<MetaTask> tasks;
  for (const auto& env : set.environments) {
    HostProfile profile = env.host;
    tasks.push_back(MetaTask{
        profile.host_id, [profile, catalog, spec, budget] {
          return std::make_unique<Simulation>(profile, catalog, spec, budget);
        }});
  }
  return tasks;
}

// ---------------------------------------------------------------------------
// Vanilla policy gradient (REINFORCE with the recorded critic values as
// baseline). This is the single inner "policy gradient step"; PPO remains the
// pre-training and fine-tuning algorithm.
// ---------------------------------------------------------------------------

struct PgSample {
  StateVector state;
  int action_id = 0;
  double advantage = 0.0;  // reward-to-go minus baseline, scaled units
  double weight = 1.0;     // 1 / n_episodes
};

inline std::vector<PgSample> build_pg_samples(
    const std::vector<Trajectory>& trajs, double gamma, double reward_scale,
    bool normalize_advantages = false) {
  std::vector<PgSample> out;
  const double w = 1.0 / static_cast<double>(trajs.size());
  for (const auto& traj : trajs) {
    double g = 0.0;
    std::vector<double> togo(traj.steps.size());
    for (std::size_t i = traj.steps.size(); i-- > 0;) {
      g = traj.steps[i].reward / reward_scale + gamma * g;
      togo[i] = g;
    }
    for (std::size_t i = 0; i < traj.steps.size(); ++i) {
      PgSample s;
      s.state = traj.steps[i].state;
      s.action_id = traj.steps[i].action_id;
      s.advantage = togo[i] - traj.steps[i].value_old;
      s.weight = w;
      out.push_back(std::move(s));
    }
  }
  if (normalize_advantages && out.size() > 1) {
    double mean = 0.0;
    for (const auto& s : out) mean += s.advantage;
    mean /= static_cast<double>(out.size());
    double var = 0.0;
    for (const auto& s : out) {
      double d = s.advantage - mean;
      var += d * d;
    }
    double sd = std::sqrt(var / static_cast<double>(out.size()));
    for (auto& s : out) s.advantage = (s.advantage - mean) / (sd + 1e-8);
  }
  return out;
}

// Surrogate whose gradient is the REINFORCE estimator; advantages are frozen.
inline double pg_batch_objective(const PolicyParams& params,
                                 const std::vector<PgSample>& samples) {
  double total = 0.0;
  for (const auto& s : samples) {
    ForwardResult out = forward(params, s.state.values);
    total += s.weight * s.advantage * log_prob_of(out.logits, s.action_id);
  }
  return total;
}

inline GradientBundle pg_batch_gradient(const PolicyParams& params,
                                        const std::vector<PgSample>& samples) {
  GradientBundle grads = GradientBundle::zeros_like(params);
  ForwardTrace trace;
  for (const auto& s : samples) {
    ForwardResult out = forward(params, s.state.values, &trace);
    std::vector<double> probs = softmax(out.logits);
    std::vector<double> dlogits(probs.size());
    double scale = s.weight * s.advantage;
    if (!std::isfinite(scale))
      throw NonFiniteLossError("non-finite policy-gradient advantage");
    for (std::size_t j = 0; j < probs.size(); ++j) {
      double indicator = (static_cast<int>(j) == s.action_id) ? 1.0 : 0.0;
      dlogits[j] = scale * (indicator - probs[j]);
    }
    backward(params, trace, dlogits, 0.0, grads);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Seed plumbing. Each (iteration, phase) pair owns an rng stream that is
// restarted per task, so identical tasks produce identical gradients and the
// alpha=0 trajectory matches the joint policy-gradient trainer bit for bit.
// ---------------------------------------------------------------------------

inline std::uint64_t inner_collect_seed(std::uint64_t seed, int iteration) {
  return derive_seed(seed, {fnv1a64("meta-adapt"),
                            static_cast<std::uint64_t>(iteration)});
}

inline std::uint64_t post_collect_seed(std::uint64_t seed, int iteration) {
  return derive_seed(seed, {fnv1a64("meta-post"),
                            static_cast<std::uint64_t>(iteration)});
}

// ---------------------------------------------------------------------------
// MAML (first-order)
// ---------------------------------------------------------------------------

struct InnerAdaptResult {
  PolicyParams phi_prime;
  std::vector<Trajectory> trajectories;  // D_i, collected under theta
  double mean_return = 0.0;              // raw, pre-adaptation
};

// One policy-gradient ascent step: phi' = theta + alpha * grad.
inline InnerAdaptResult inner_adapt(const PolicyParams& theta,
                                    EnvironmentBackend& env, double alpha,
                                    int inner_episodes, const MetaConfig& cfg,
                                    Rng& rng) {
  InnerAdaptResult result;
  result.trajectories =
      collect(env, theta, inner_episodes, cfg.embedder, rng);
  double sum = 0.0;
  for (const auto& t : result.trajectories) sum += t.raw_return();
  result.mean_return = sum / static_cast<double>(inner_episodes);
  std::vector<PgSample> samples =
      build_pg_samples(result.trajectories, cfg.gamma, cfg.reward_scale,
                       cfg.normalize_advantages);
  GradientBundle grad = pg_batch_gradient(theta, samples);
  result.phi_prime = sgd_ascent(theta, grad, alpha);
  return result;
}

struct MetaStepResult {
  PolicyParams theta;
  std::vector<double> pre_returns;   // per task, under theta
  std::vector<double> post_returns;  // per task, under phi'_i
};

// First-order MAML step over every task: adapt, re-collect with the adapted
// policy, and apply the summed post-adaptation gradients directly to theta.
inline MetaStepResult meta_step(const PolicyParams& theta,
                                const std::vector<MetaTask>& tasks,
                                const MetaConfig& cfg, std::uint64_t seed,
                                int iteration) {
  if (tasks.empty()) throw InvariantError("meta_step needs at least one task");
  GradientBundle total = GradientBundle::zeros_like(theta);
  MetaStepResult result{theta, {}, {}};

  for (const MetaTask& task : tasks) {
    std::unique_ptr<EnvironmentBackend> env = task.make();

    Rng adapt_rng(inner_collect_seed(seed, iteration));
    InnerAdaptResult inner = inner_adapt(theta, *env, cfg.inner_lr,
                                         cfg.inner_episodes, cfg, adapt_rng);
    result.pre_returns.push_back(inner.mean_return);

    Rng post_rng(post_collect_seed(seed, iteration));
    std::vector<Trajectory> post = collect(*env, inner.phi_prime,
                                           cfg.inner_episodes, cfg.embedder,
                                           post_rng);
    double sum = 0.0;
    for (const auto& t : post) sum += t.raw_return();
    result.post_returns.push_back(sum /
                                  static_cast<double>(cfg.inner_episodes));

    std::vector<PgSample> samples =
        build_pg_samples(post, cfg.gamma, cfg.reward_scale,
                         cfg.normalize_advantages);
    total.add(pg_batch_gradient(inner.phi_prime, samples));
  }

  result.theta = sgd_ascent(theta, total, cfg.outer_lr);
  return result;
}

struct MetaTrainResult {
  PolicyParams theta;
  std::vector<double> meta_curve;  // mean post-adaptation return per iteration
  std::vector<double> pre_curve;   // mean pre-adaptation return per iteration
  double wall_time_s = 0.0;
};

inline MetaTrainResult meta_train(const PolicyParams& theta_init,
                                  const std::vector<MetaTask>& tasks,
                                  const MetaConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  MetaTrainResult result;
  result.theta = theta_init;
  for (int it = 0; it < cfg.meta_iterations; ++it) {
    MetaStepResult step = meta_step(result.theta, tasks, cfg, seed, it);
    result.theta = std::move(step.theta);
    double post = 0.0, pre = 0.0;
    for (double v : step.post_returns) post += v;
    for (double v : step.pre_returns) pre += v;
    result.meta_curve.push_back(post /
                                static_cast<double>(step.post_returns.size()));
    result.pre_curve.push_back(pre /
                               static_cast<double>(step.pre_returns.size()));
  }
  result.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return result;
}

// ---------------------------------------------------------------------------
// Joint multi-task policy gradient: the alpha=0 degenerate form of the meta
// trainer, implemented independently. Consumes the same post-phase rng
// streams so the two parameter trajectories coincide bit for bit at alpha=0.
// ---------------------------------------------------------------------------

inline MetaTrainResult joint_multitask_pg_train(
    const PolicyParams& theta_init, const std::vector<MetaTask>& tasks,
    const MetaConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (tasks.empty())
    throw InvariantError("joint training needs at least one task");
  const auto t0 = std::chrono::steady_clock::now();
  MetaTrainResult result;
  result.theta = theta_init;
  for (int it = 0; it < cfg.meta_iterations; ++it) {
    GradientBundle total = GradientBundle::zeros_like(result.theta);
    double mean_return = 0.0;
    for (const MetaTask& task : tasks) {
      std::unique_ptr<EnvironmentBackend> env = task.make();
      Rng rng(post_collect_seed(seed, it));
      std::vector<Trajectory> batch = collect(*env, result.theta,
                                              cfg.inner_episodes,
                                              cfg.embedder, rng);
      for (const auto& t : batch) mean_return += t.raw_return();
      std::vector<PgSample> samples =
          build_pg_samples(batch, cfg.gamma, cfg.reward_scale,
                           cfg.normalize_advantages);
      total.add(pg_batch_gradient(result.theta, samples));
    }
    result.theta = sgd_ascent(result.theta, total, cfg.outer_lr);
    result.meta_curve.push_back(mean_return /
                                static_cast<double>(tasks.size() *
                                                    cfg.inner_episodes));
  }
  result.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return result;
}

// Meta-checkpoints reuse the policy format plus a metadata block.
inline std::string serialize_meta_checkpoint(const PolicyParams& theta,
                                             int n_tasks,
                                             const std::string& cve_id,
                                             const MetaConfig& cfg) {
  nlohmann::ordered_json meta{
      {"n_tasks", n_tasks},
      {"cve_id", cve_id},
      {"cfg",
       {{"inner_lr", cfg.inner_lr},
        {"outer_lr", cfg.outer_lr},
        {"inner_episodes", cfg.inner_episodes},
        {"meta_iterations", cfg.meta_iterations},
        {"gamma", cfg.gamma},
        {"reward_scale", cfg.reward_scale}}}};
  return serialize_policy(theta, meta);
}

}  // namespace gaplab
