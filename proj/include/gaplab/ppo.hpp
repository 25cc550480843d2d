#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gaplab/common.hpp"
#include "gaplab/encoder.hpp"
#include "gaplab/neuralnet.hpp"
#include "gaplab/simulator.hpp"

namespace gaplab {

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

struct TrajectoryStep {
  StateVector state;
  int action_id = 0;
  double reward = 0.0;  // raw, unscaled
  double log_prob_old = 0.0;
  double value_old = 0.0;
  bool done = false;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  double last_value = 0.0;  // bootstrap for truncated rollouts
  bool success = false;     // reached Compromised

  double raw_return() const {
    double g = 0.0;
    for (const auto& s : steps) g += s.reward;
    return g;
  }
};

struct PPOConfig {
  double clip_eps = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  int epochs = 4;
  int minibatch = 64;
  double lr = 3e-4;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  int episodes = 500;
  int episodes_per_update = 10;
  // Loss-only monotone transform; reported curves stay unscaled.
  double reward_scale = 100.0;
  bool normalize_advantages = true;
  EmbedderSpec embedder;
  std::vector<int> hidden = {128, 64};

  void validate() const {
    if (!(clip_eps > 0.0 && clip_eps < 1.0))
      throw InvariantError("clip_eps must lie in (0, 1)");
    if (!(gamma >= 0.0 && gamma <= 1.0))
      throw InvariantError("gamma must lie in [0, 1]");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0))
      throw InvariantError("gae_lambda must lie in [0, 1]");
    if (epochs < 1 || minibatch < 1 || episodes < 0 ||
        episodes_per_update < 1)
      throw InvariantError("ppo batch sizes must be positive");
    if (reward_scale <= 0.0)
      throw InvariantError("reward_scale must be positive");
    embedder.validate();
  }
};

// ---------------------------------------------------------------------------
// Collection
// ---------------------------------------------------------------------------

inline Trajectory collect_episode(EnvironmentBackend& env,
                                  const PolicyParams& params,
                                  const EmbedderSpec& embedder, Rng& rng) {
  Trajectory traj;
  Observation obs = env.reset(rng.next_u64());
  while (!env.done()) {
    StateVector state = embed_observation(obs, embedder);
    ForwardResult out = forward(params, state.values);
    SampledAction act = sample_action(out.logits, rng);
    StepOutcome step = env.step(act.action_id);

    TrajectoryStep ts;
    ts.state = std::move(state);
    ts.action_id = act.action_id;
    ts.reward = step.reward;
    ts.log_prob_old = act.log_prob;
    ts.value_old = out.value;
    ts.done = step.done;
    traj.steps.push_back(std::move(ts));
    if (step.info.kind == Event::Kind::Compromised) traj.success = true;
    obs = std::move(step.observation);
  }
  return traj;
}

inline std::vector<Trajectory> collect(EnvironmentBackend& env,
                                       const PolicyParams& params,
                                       int n_episodes,
                                       const EmbedderSpec& embedder,
                                       Rng& rng) {
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(n_episodes));
  for (int i = 0; i < n_episodes; ++i)
    out.push_back(collect_episode(env, params, embedder, rng));
  return out;
}

// ---------------------------------------------------------------------------
// Advantage estimation: GAE(lambda) over the recorded values,
// A_t = delta_t + gamma*lambda*A_{t+1},
// delta_t = r_t + gamma*V(s_{t+1})*(1-done_t) - V(s_t).
// Returned raw; batch-level normalization happens in the update.
// ---------------------------------------------------------------------------

struct AdvantageResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

inline AdvantageResult compute_advantages(const Trajectory& traj, double gamma,
                                          double lambda,
                                          double reward_scale = 1.0) {
  const std::size_t n = traj.steps.size();
  AdvantageResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double carry = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const TrajectoryStep& s = traj.steps[i];
    double v_next = (i + 1 < n) ? traj.steps[i + 1].value_old : traj.last_value;
    double not_done = s.done ? 0.0 : 1.0;
    double delta =
        s.reward / reward_scale + gamma * v_next * not_done - s.value_old;
    carry = delta + gamma * lambda * carry;
    out.advantages[i] = carry;
    out.returns[i] = carry + s.value_old;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Clipped-surrogate update
// ---------------------------------------------------------------------------

struct BatchSample {
  StateVector state;
  int action_id = 0;
  double log_prob_old = 0.0;
  double advantage = 0.0;
  double ret = 0.0;  // value target, scaled units
};

struct PPOStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_frac = 0.0;
  double max_initial_ratio_dev = 0.0;  // first minibatch, before any step
  int minibatches = 0;
};

// Mean objective over samples: clipped surrogate + entropy bonus - value MSE.
// Written as a maximization, matching the ascent updates.
inline double ppo_batch_objective(const PolicyParams& params,
                                  const std::vector<BatchSample>& samples,
                                  const PPOConfig& cfg) {
  double total = 0.0;
  for (const auto& s : samples) {
    ForwardResult out = forward(params, s.state.values);
    double lp = log_prob_of(out.logits, s.action_id);
    double ratio = std::exp(lp - s.log_prob_old);
    double clipped =
        std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    double surr = std::min(ratio * s.advantage, clipped * s.advantage);
    double verr = out.value - s.ret;
    total += surr - cfg.value_coef * verr * verr +
             cfg.entropy_coef * entropy(out.logits);
  }
  return total / static_cast<double>(samples.size());
}

inline GradientBundle ppo_batch_gradient(const PolicyParams& params,
                                         const std::vector<BatchSample>& samples,
                                         const PPOConfig& cfg,
                                         PPOStats* stats = nullptr) {
  GradientBundle grads = GradientBundle::zeros_like(params);
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  double surr_sum = 0.0, vloss_sum = 0.0, ent_sum = 0.0;
  int clipped_count = 0;
  double max_ratio_dev = 0.0;

  ForwardTrace trace;
  for (const auto& s : samples) {
    ForwardResult out = forward(params, s.state.values, &trace);
    std::vector<double> probs = softmax(out.logits);
    double lse = log_sum_exp(out.logits);
    double lp = out.logits[static_cast<std::size_t>(s.action_id)] - lse;
    double ratio = std::exp(lp - s.log_prob_old);
    max_ratio_dev = std::max(max_ratio_dev, std::abs(ratio - 1.0));

    double lo = 1.0 - cfg.clip_eps, hi = 1.0 + cfg.clip_eps;
    double clipped = std::clamp(ratio, lo, hi);
    double unclipped_surr = ratio * s.advantage;
    double clipped_surr = clipped * s.advantage;
    bool take_unclipped = unclipped_surr <= clipped_surr;
    double surr = take_unclipped ? unclipped_surr : clipped_surr;
    if (ratio < lo || ratio > hi) ++clipped_count;

    double h = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j)
      if (probs[j] > 0.0) h -= probs[j] * (out.logits[j] - lse);

    double verr = out.value - s.ret;
    if (!std::isfinite(surr) || !std::isfinite(verr) || !std::isfinite(h))
      throw NonFiniteLossError("non-finite loss term in minibatch sample");

    surr_sum += surr;
    vloss_sum += verr * verr;
    ent_sum += h;

    // d(objective)/dlogits for this sample.
    double dsurr_dlp = take_unclipped ? s.advantage * ratio : 0.0;
    std::vector<double> dlogits(probs.size(), 0.0);
    for (std::size_t j = 0; j < probs.size(); ++j) {
      double indicator = (static_cast<int>(j) == s.action_id) ? 1.0 : 0.0;
      double dlp_dlj = indicator - probs[j];
      double dent_dlj = -probs[j] * ((out.logits[j] - lse) + h);
      dlogits[j] =
          inv_n * (dsurr_dlp * dlp_dlj + cfg.entropy_coef * dent_dlj);
    }
    double dvalue = inv_n * (-2.0 * cfg.value_coef * verr);
    backward(params, trace, dlogits, dvalue, grads);
  }

  if (stats != nullptr) {
    stats->policy_loss = -surr_sum * inv_n;
    stats->value_loss = vloss_sum * inv_n;
    stats->entropy = ent_sum * inv_n;
    stats->clip_frac = clipped_count * inv_n;
    stats->max_initial_ratio_dev = max_ratio_dev;
  }
  return grads;
}

inline std::vector<BatchSample> build_batch(
    const std::vector<Trajectory>& trajectories, const PPOConfig& cfg) {
  std::vector<BatchSample> batch;
  for (const auto& traj : trajectories) {
    AdvantageResult adv =
        compute_advantages(traj, cfg.gamma, cfg.gae_lambda, cfg.reward_scale);
    for (std::size_t i = 0; i < traj.steps.size(); ++i) {
      BatchSample s;
      s.state = traj.steps[i].state;
      s.action_id = traj.steps[i].action_id;
      s.log_prob_old = traj.steps[i].log_prob_old;
      s.advantage = adv.advantages[i];
      s.ret = adv.returns[i];
      batch.push_back(std::move(s));
    }
  }
  if (cfg.normalize_advantages && batch.size() > 1) {
    double mean = 0.0;
    for (const auto& s : batch) mean += s.advantage;
    mean /= static_cast<double>(batch.size());
    double var = 0.0;
    for (const auto& s : batch) {
      double d = s.advantage - mean;
      var += d * d;
    }
    double sd = std::sqrt(var / static_cast<double>(batch.size()));
    for (auto& s : batch) s.advantage = (s.advantage - mean) / (sd + 1e-8);
  }
  return batch;
}

struct UpdateResult {
  PolicyParams params;
  PPOStats stats;
};

inline UpdateResult ppo_update(const PolicyParams& params,
                               const std::vector<Trajectory>& trajectories,
                               const PPOConfig& cfg, Rng& rng,
                               AdamState* adam = nullptr) {
  if (trajectories.empty())
    throw InvariantError("ppo_update needs at least one trajectory");
  std::vector<BatchSample> batch = build_batch(trajectories, cfg);

  UpdateResult result{params, {}};
  std::vector<std::size_t> order(batch.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  bool first_minibatch = true;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = rng.next_index(i);
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.minibatch)) {
      std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.minibatch));
      std::vector<BatchSample> mb;
      mb.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) mb.push_back(batch[order[k]]);

      PPOStats mb_stats;
      GradientBundle grads;
      try {
        grads = ppo_batch_gradient(result.params, mb, cfg, &mb_stats);
      } catch (const NonFiniteLossError&) {
        throw NonFiniteLossError(
            "non-finite PPO loss in epoch " + std::to_string(epoch) +
            ", minibatch at offset " + std::to_string(start));
      }
      if (first_minibatch) {
        result.stats.max_initial_ratio_dev = mb_stats.max_initial_ratio_dev;
        first_minibatch = false;
      }
      result.stats.policy_loss += mb_stats.policy_loss;
      result.stats.value_loss += mb_stats.value_loss;
      result.stats.entropy += mb_stats.entropy;
      result.stats.clip_frac += mb_stats.clip_frac;
      result.stats.minibatches += 1;

      if (adam != nullptr)
        result.params = adam_ascent(result.params, grads, cfg.lr, *adam);
      else
        result.params = sgd_ascent(result.params, grads, cfg.lr);
    }
  }
  if (result.stats.minibatches > 0) {
    double inv = 1.0 / result.stats.minibatches;
    result.stats.policy_loss *= inv;
    result.stats.value_loss *= inv;
    result.stats.entropy *= inv;
    result.stats.clip_frac *= inv;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpisodePoint {
  int episode = 0;
  double ret = 0.0;
  int steps = 0;
  bool success = false;
  double elapsed_s = 0.0;  // wall clock; excluded from deterministic reports
};

struct TrainResult {
  PolicyParams params;
  std::vector<EpisodePoint> curve;
  std::vector<PPOStats> update_stats;
  double wall_time_s = 0.0;
};

inline TrainResult train(EnvironmentBackend& env, const PPOConfig& cfg,
                         std::uint64_t seed,
                         const PolicyParams* init = nullptr) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  TrainResult result;
  if (init != nullptr) {
    result.params = *init;
    if (result.params.shape.n_actions != env.action_space().size())
      throw ShapeMismatchError("policy head does not match catalog size");
  } else {
    PolicyShape shape{cfg.embedder.d, cfg.hidden, env.action_space().size()};
    result.params = init_policy(shape, derive_seed(seed, "init"));
  }

  AdamState adam = AdamState::zeros_like(result.params);
  Rng collect_rng(derive_seed(seed, "collect"));
  Rng update_rng(derive_seed(seed, "update"));

  int done = 0;
  while (done < cfg.episodes) {
    int k = std::min(cfg.episodes_per_update, cfg.episodes - done);
    std::vector<Trajectory> batch =
        collect(env, result.params, k, cfg.embedder, collect_rng);
    for (int i = 0; i < k; ++i) {
      EpisodePoint pt;
      pt.episode = done + i;
      pt.ret = batch[static_cast<std::size_t>(i)].raw_return();
      pt.steps = static_cast<int>(batch[static_cast<std::size_t>(i)].steps.size());
      pt.success = batch[static_cast<std::size_t>(i)].success;
      pt.elapsed_s = elapsed();
      result.curve.push_back(pt);
    }
    done += k;
    UpdateResult up = ppo_update(result.params, batch, cfg, update_rng, &adam);
    result.params = std::move(up.params);
    result.update_stats.push_back(up.stats);
  }
  result.wall_time_s = elapsed();
  return result;
}

// Smallest episode index e such that every 50-episode window mean from e
// onward stays at or above the threshold; episodes+1 when never sustained.
inline int first_sustained_episode(const std::vector<EpisodePoint>& curve,
                                   double threshold, int window = 50) {
  const int n = static_cast<int>(curve.size());
  if (n < window) return n + 1;
  std::vector<double> window_means;
  for (int e = 0; e + window <= n; ++e) {
    double s = 0.0;
    for (int i = e; i < e + window; ++i)
      s += curve[static_cast<std::size_t>(i)].ret;
    window_means.push_back(s / window);
  }
  int first = n + 1;
  for (int e = static_cast<int>(window_means.size()) - 1; e >= 0; --e) {
    if (window_means[static_cast<std::size_t>(e)] >= threshold)
      first = e;
    else
      break;
  }
  return first;
}

}  // namespace gaplab
