#pragma once

// One-step scripted bandit behind the environment interface: every action
// ends the episode, only the correct "exploit" pays. Used for learning
// sanity and meta-training tests.

#include <string>

#include "gaplab/catalog.hpp"
#include "gaplab/simulator.hpp"

namespace testsupport {

inline gaplab::ActionCatalog bandit_catalog(int arms) {
  gaplab::ActionCatalog cat;
  char buf[32];
  for (int i = 0; i < arms; ++i) {
    std::snprintf(buf, sizeof(buf), "CVE-2000-%05d", 10000 + i);
    cat.exploits.emplace_back(buf);
  }
  cat.costs = {0.0, 0.0};
  return cat;
}

class BanditEnv final : public gaplab::EnvironmentBackend {
 public:
  BanditEnv(int arms, int correct, double win = 1.0, double lose = -1.0)
      : catalog_(bandit_catalog(arms)),
        correct_(correct),
        win_(win),
        lose_(lose) {}

  gaplab::Observation reset(std::uint64_t) override {
    done_ = false;
    obs_ = gaplab::Observation{};
    obs_.text = "bandit task";
    return obs_;
  }

  gaplab::StepOutcome step(int action_id) override {
    if (done_) throw gaplab::EpisodeFinishedError("bandit episode finished");
    done_ = true;
    gaplab::StepOutcome out;
    bool hit = action_id == correct_;
    obs_.compromised = hit;
    out.observation = obs_;
    out.reward = hit ? win_ : lose_;
    out.done = true;
    out.info = hit ? gaplab::Event{gaplab::Event::Kind::Compromised, {}}
                   : gaplab::Event{gaplab::Event::Kind::InvalidAction, {}};
    return out;
  }

  const gaplab::ActionCatalog& action_space() const override {
    return catalog_;
  }
  bool done() const override { return done_; }
  std::string target_id() const override {
    return "bandit-" + std::to_string(correct_);
  }

 private:
  gaplab::ActionCatalog catalog_;
  int correct_;
  double win_;
  double lose_;
  bool done_ = true;
  gaplab::Observation obs_;
};

}  // namespace testsupport
