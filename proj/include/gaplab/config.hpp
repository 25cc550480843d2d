#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "gaplab/common.hpp"
#include "gaplab/envmodel.hpp"
#include "gaplab/meta.hpp"
#include "gaplab/ppo.hpp"
#include "gaplab/randomizer.hpp"
#include "gaplab/simulator.hpp"

namespace gaplab {

// JSON bindings for every tunable block. Parsers reject unknown keys, and
// serializers emit every field so a config snapshot is self-documenting.

inline json reward_to_json(const RewardSpec& r) {
  return json{{"compromise_value", r.compromise_value},
              {"info_value", r.info_value},
              {"invalid_penalty", r.invalid_penalty}};
}

inline RewardSpec reward_from_json(const json& j) {
  detail::expect_keys(j, "reward", {},
                      {"compromise_value", "info_value", "invalid_penalty"});
  RewardSpec r;
  r.compromise_value = j.value("compromise_value", r.compromise_value);
  r.info_value = j.value("info_value", r.info_value);
  r.invalid_penalty = j.value("invalid_penalty", r.invalid_penalty);
  r.validate();
  return r;
}

inline json budget_to_json(const EpisodeBudget& b) {
  return json{{"max_steps", b.max_steps}, {"max_episodes", b.max_episodes}};
}

inline EpisodeBudget budget_from_json(const json& j) {
  detail::expect_keys(j, "budget", {}, {"max_steps", "max_episodes"});
  EpisodeBudget b;
  b.max_steps = j.value("max_steps", b.max_steps);
  b.max_episodes = j.value("max_episodes", b.max_episodes);
  b.validate();
  return b;
}

inline json costs_to_json(const ActionCosts& c) {
  return json{{"scan", c.scan}, {"exploit", c.exploit}};
}

inline ActionCosts costs_from_json(const json& j) {
  detail::expect_keys(j, "costs", {}, {"scan", "exploit"});
  ActionCosts c;
  c.scan = j.value("scan", c.scan);
  c.exploit = j.value("exploit", c.exploit);
  if (c.scan < 0.0 || c.exploit < 0.0)
    throw InvariantError("action costs must be nonnegative");
  return c;
}

inline json embedder_to_json(const EmbedderSpec& e) {
  return json{{"kind", e.kind == EmbedderSpec::Kind::Hashing ? "hashing"
                                                             : "external"},
              {"d", e.d},
              {"endpoint", e.endpoint}};
}

inline EmbedderSpec embedder_from_json(const json& j) {
  detail::expect_keys(j, "embedder", {}, {"kind", "d", "endpoint"});
  EmbedderSpec e;
  std::string kind = j.value("kind", "hashing");
  if (kind == "hashing")
    e.kind = EmbedderSpec::Kind::Hashing;
  else if (kind == "external")
    e.kind = EmbedderSpec::Kind::External;
  else
    throw SchemaError("embedder.kind: unknown kind '" + kind + "'");
  e.d = j.value("d", e.d);
  e.endpoint = j.value("endpoint", e.endpoint);
  e.validate();
  return e;
}

inline json ppo_to_json(const PPOConfig& c) {
  return json{{"clip_eps", c.clip_eps},
              {"gamma", c.gamma},
              {"gae_lambda", c.gae_lambda},
              {"epochs", c.epochs},
              {"minibatch", c.minibatch},
              {"lr", c.lr},
              {"value_coef", c.value_coef},
              {"entropy_coef", c.entropy_coef},
              {"episodes", c.episodes},
              {"episodes_per_update", c.episodes_per_update},
              {"reward_scale", c.reward_scale},
              {"normalize_advantages", c.normalize_advantages},
              {"embedder", embedder_to_json(c.embedder)},
              {"hidden", c.hidden}};
}

inline PPOConfig ppo_from_json(const json& j) {
  detail::expect_keys(
      j, "ppo", {},
      {"clip_eps", "gamma", "gae_lambda", "epochs", "minibatch", "lr",
       "value_coef", "entropy_coef", "episodes", "episodes_per_update",
       "reward_scale", "normalize_advantages", "embedder", "hidden"});
  PPOConfig c;
  c.clip_eps = j.value("clip_eps", c.clip_eps);
  c.gamma = j.value("gamma", c.gamma);
  c.gae_lambda = j.value("gae_lambda", c.gae_lambda);
  c.epochs = j.value("epochs", c.epochs);
  c.minibatch = j.value("minibatch", c.minibatch);
  c.lr = j.value("lr", c.lr);
  c.value_coef = j.value("value_coef", c.value_coef);
  c.entropy_coef = j.value("entropy_coef", c.entropy_coef);
  c.episodes = j.value("episodes", c.episodes);
  c.episodes_per_update = j.value("episodes_per_update", c.episodes_per_update);
  c.reward_scale = j.value("reward_scale", c.reward_scale);
  c.normalize_advantages =
      j.value("normalize_advantages", c.normalize_advantages);
  if (j.contains("embedder")) c.embedder = embedder_from_json(j.at("embedder"));
  if (j.contains("hidden")) c.hidden = j.at("hidden").get<std::vector<int>>();
  c.validate();
  return c;
}

inline json meta_to_json(const MetaConfig& c) {
  return json{{"inner_lr", c.inner_lr},
              {"outer_lr", c.outer_lr},
              {"inner_episodes", c.inner_episodes},
              {"meta_iterations", c.meta_iterations},
              {"gamma", c.gamma},
              {"reward_scale", c.reward_scale},
              {"normalize_advantages", c.normalize_advantages},
              {"embedder", embedder_to_json(c.embedder)}};
}

inline MetaConfig meta_from_json(const json& j) {
  detail::expect_keys(j, "meta", {},
                      {"inner_lr", "outer_lr", "inner_episodes",
                       "meta_iterations", "gamma", "reward_scale",
                       "normalize_advantages", "embedder"});
  MetaConfig c;
  c.inner_lr = j.value("inner_lr", c.inner_lr);
  c.outer_lr = j.value("outer_lr", c.outer_lr);
  c.inner_episodes = j.value("inner_episodes", c.inner_episodes);
  c.meta_iterations = j.value("meta_iterations", c.meta_iterations);
  c.gamma = j.value("gamma", c.gamma);
  c.reward_scale = j.value("reward_scale", c.reward_scale);
  c.normalize_advantages =
      j.value("normalize_advantages", c.normalize_advantages);
  if (j.contains("embedder")) c.embedder = embedder_from_json(j.at("embedder"));
  c.validate();
  return c;
}

inline json policy_to_json(const RandomizationPolicy& p) {
  return json{{"vary_ports", p.vary_ports},
              {"port_min", p.port_min},
              {"port_max", p.port_max},
              {"vary_os_version", p.vary_os_version},
              {"vary_service_versions", p.vary_service_versions},
              {"distractor_min", p.distractor_min},
              {"distractor_max", p.distractor_max},
              {"vary_fingerprints", p.vary_fingerprints},
              {"min_fields_changed", p.min_fields_changed}};
}

inline RandomizationPolicy policy_from_json(const json& j) {
  detail::expect_keys(j, "randomize", {},
                      {"vary_ports", "port_min", "port_max", "vary_os_version",
                       "vary_service_versions", "distractor_min",
                       "distractor_max", "vary_fingerprints",
                       "min_fields_changed"});
  RandomizationPolicy p;
  p.vary_ports = j.value("vary_ports", p.vary_ports);
  p.port_min = j.value("port_min", p.port_min);
  p.port_max = j.value("port_max", p.port_max);
  p.vary_os_version = j.value("vary_os_version", p.vary_os_version);
  p.vary_service_versions =
      j.value("vary_service_versions", p.vary_service_versions);
  p.distractor_min = j.value("distractor_min", p.distractor_min);
  p.distractor_max = j.value("distractor_max", p.distractor_max);
  p.vary_fingerprints = j.value("vary_fingerprints", p.vary_fingerprints);
  p.min_fields_changed = j.value("min_fields_changed", p.min_fields_changed);
  p.validate();
  return p;
}

}  // namespace gaplab
