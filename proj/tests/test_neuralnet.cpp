#include <doctest.h>

#include <cmath>
#include <vector>

#include "gaplab/neuralnet.hpp"

using namespace gaplab;

namespace {

PolicyParams random_net(PolicyShape shape, std::uint64_t seed,
                        double weight_scale = 1.0) {
  PolicyParams p = init_policy(shape, seed);
  Rng rng(derive_seed(seed, "randomize"));
  PolicyParams copy = p;
  for (double* v : param_ptrs(copy))
    *v = weight_scale * (2.0 * rng.next_real() - 1.0);
  return copy;
}

// Straight-line re-implementation of the 2-layer forward pass, kept separate
// from the library's loop on purpose.
ForwardResult straightline_forward(const PolicyParams& p,
                                   const std::vector<double>& x) {
  REQUIRE(p.trunk.size() == 2);
  std::vector<double> h1(p.trunk[0].b);
  for (int r = 0; r < p.trunk[0].w.rows; ++r) {
    for (int c = 0; c < p.trunk[0].w.cols; ++c)
      h1[r] += p.trunk[0].w.at(r, c) * x[c];
    h1[r] = std::tanh(h1[r]);
  }
  std::vector<double> h2(p.trunk[1].b);
  for (int r = 0; r < p.trunk[1].w.rows; ++r) {
    for (int c = 0; c < p.trunk[1].w.cols; ++c)
      h2[r] += p.trunk[1].w.at(r, c) * h1[c];
    h2[r] = std::tanh(h2[r]);
  }
  ForwardResult out;
  out.logits.assign(p.actor.b.begin(), p.actor.b.end());
  for (int r = 0; r < p.actor.w.rows; ++r)
    for (int c = 0; c < p.actor.w.cols; ++c)
      out.logits[r] += p.actor.w.at(r, c) * h2[c];
  out.value = p.critic.b[0];
  for (int c = 0; c < p.critic.w.cols; ++c)
    out.value += p.critic.w.at(0, c) * h2[c];
  return out;
}

}  // namespace

TEST_CASE("zero parameters produce zero outputs") {
  PolicyShape shape{4, {6, 5}, 3};
  PolicyParams p = init_policy(shape, 0);
  for (double* v : param_ptrs(p)) *v = 0.0;
  ForwardResult out = forward(p, {1.0, -2.0, 0.5, 3.0});
  for (double l : out.logits) CHECK(l == 0.0);
  CHECK(out.value == 0.0);
}

TEST_CASE("forward is pure") {
  PolicyShape shape{5, {8, 6}, 4};
  PolicyParams p = random_net(shape, 7);
  std::vector<double> x = {0.1, -0.3, 0.7, 0.0, 0.2};
  ForwardResult a = forward(p, x);
  ForwardResult b = forward(p, x);
  CHECK(a.logits == b.logits);
  CHECK(a.value == b.value);
}

TEST_CASE("forward matches a straight-line re-implementation") {
  Rng rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    PolicyShape shape{6, {9, 7}, 5};
    PolicyParams p = random_net(shape, 100 + trial);
    std::vector<double> x;
    for (int i = 0; i < 6; ++i) x.push_back(2.0 * rng.next_real() - 1.0);
    ForwardResult got = forward(p, x);
    ForwardResult want = straightline_forward(p, x);
    CHECK(got.value == doctest::Approx(want.value).epsilon(1e-12));
    for (std::size_t i = 0; i < got.logits.size(); ++i)
      CHECK(got.logits[i] == doctest::Approx(want.logits[i]).epsilon(1e-12));
  }
}

TEST_CASE("forward rejects a wrong input dimension") {
  PolicyParams p = init_policy({4, {6}, 3}, 0);
  CHECK_THROWS_AS(forward(p, {1.0, 2.0}), ShapeMismatchError);
}

TEST_CASE("uniform logits sample uniformly") {
  std::vector<double> logits(4, 0.0);
  Rng rng(2024);
  std::vector<int> counts(4, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) counts[sample_action(logits, rng).action_id]++;
  for (int c : counts)
    CHECK(std::abs(c / static_cast<double>(n) - 0.25) < 0.02);
}

TEST_CASE("empirical frequencies match softmax (chi-square)") {
  std::vector<double> logits = {1.0, 0.0, -1.0, 0.5};
  std::vector<double> p = softmax(logits);
  Rng rng(31337);
  std::vector<int> counts(4, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) counts[sample_action(logits, rng).action_id]++;
  double chi2 = 0.0;
  for (int i = 0; i < 4; ++i) {
    double expected = n * p[i];
    chi2 += (counts[i] - expected) * (counts[i] - expected) / expected;
  }
  // df=3 critical value at p=0.01.
  CHECK(chi2 < 11.345);
}

TEST_CASE("greedy takes the argmax with lowest-index tie-break") {
  CHECK(greedy_action({10.0, 0.0, 0.0}) == 0);
  CHECK(greedy_action({0.0, 3.0, 3.0}) == 1);
  CHECK(greedy_action({-1.0, -1.0, -1.0}) == 0);
}

TEST_CASE("sampled log_prob equals independently recomputed log softmax") {
  std::vector<double> logits = {0.3, -0.7, 2.0, 0.0, -3.0};
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    SampledAction s = sample_action(logits, rng);
    double z = 0.0;
    for (double l : logits) z += std::exp(l);
    double want = std::log(std::exp(logits[s.action_id]) / z);
    CHECK(s.log_prob == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("backward: gradient of squared head output") {
  // L = value^2 with a single passthrough: dL/dparam via dvalue = 2*value.
  PolicyShape shape{3, {4}, 2};
  PolicyParams p = random_net(shape, 55);
  std::vector<double> x = {0.2, -0.4, 0.9};
  ForwardTrace trace;
  ForwardResult out = forward(p, x, &trace);
  GradientBundle g = GradientBundle::zeros_like(p);
  backward(p, trace, std::vector<double>(2, 0.0), 2.0 * out.value, g);

  // Finite differences over every parameter.
  PolicyParams probe = p;
  auto ptrs = param_ptrs(probe);
  std::vector<double> analytic = flatten(g);
  const double h = 1e-6;
  for (std::size_t k = 0; k < ptrs.size(); ++k) {
    double orig = *ptrs[k];
    *ptrs[k] = orig + h;
    double up = forward(probe, x).value;
    *ptrs[k] = orig - h;
    double dn = forward(probe, x).value;
    *ptrs[k] = orig;
    double fd = (up * up - dn * dn) / (2 * h);
    CHECK(analytic[k] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("zero loss gradient means zero parameter gradient") {
  PolicyParams p = random_net({3, {4, 4}, 2}, 3);
  ForwardTrace trace;
  forward(p, {0.1, 0.2, 0.3}, &trace);
  GradientBundle g = GradientBundle::zeros_like(p);
  backward(p, trace, {0.0, 0.0}, 0.0, g);
  for (double v : flatten(g)) CHECK(v == 0.0);
}

TEST_CASE("sgd ascent arithmetic and lr=0 identity") {
  PolicyParams p = init_policy({2, {2}, 2}, 0);
  for (double* v : param_ptrs(p)) *v = 1.0;
  GradientBundle g = GradientBundle::zeros_like(p);
  g.actor.w.at(0, 0) = 2.0;
  PolicyParams q = sgd_ascent(p, g, 0.1);
  CHECK(q.actor.w.at(0, 0) == doctest::Approx(1.2));
  CHECK(q.actor.w.at(0, 1) == 1.0);

  PolicyParams same = sgd_ascent(p, g, 0.0);
  CHECK(params_bitwise_equal(same, p));
}

TEST_CASE("sgd update linearity in the gradient") {
  PolicyParams p = random_net({3, {4}, 2}, 10);
  Rng rng(77);
  // Random bundles via params-shaped scratch nets.
  PolicyParams s1 = p, s2 = p;
  for (double* v : param_ptrs(s1)) *v = rng.next_real() - 0.5;
  for (double* v : param_ptrs(s2)) *v = rng.next_real() - 0.5;
  auto to_bundle = [](const PolicyParams& src) {
    GradientBundle g;
    g.trunk = src.trunk;
    g.actor = src.actor;
    g.critic = src.critic;
    return g;
  };
  GradientBundle g1 = to_bundle(s1);
  GradientBundle g2 = to_bundle(s2);

  GradientBundle sum = GradientBundle::zeros_like(p);
  sum.add(g1);
  sum.add(g2);
  PolicyParams a = sgd_ascent(p, sum, 0.05);
  PolicyParams b = sgd_ascent(sgd_ascent(p, g1, 0.05), g2, 0.05);
  std::vector<double> fa = flatten_params(a);
  std::vector<double> fb = flatten_params(b);
  for (std::size_t i = 0; i < fa.size(); ++i)
    CHECK(fa[i] == doctest::Approx(fb[i]).epsilon(1e-12));
}

TEST_CASE("adam first step matches the hand-computed recurrence") {
  // One parameter, g=2, lr=0.1: m=0.2, v=0.004, mhat=2, vhat=4,
  // step = 0.1 * 2 / (2 + 1e-8).
  PolicyParams p = init_policy({1, {1}, 1}, 0);
  for (double* v : param_ptrs(p)) *v = 0.0;
  GradientBundle g = GradientBundle::zeros_like(p);
  for (auto& blk : g.trunk)
    for (double& v : blk.w.data) v = 2.0;

  AdamState st = AdamState::zeros_like(p);
  PolicyParams q = adam_ascent(p, g, 0.1, st);
  double expected = 0.1 * 2.0 / (std::sqrt(4.0) + 1e-8);
  CHECK(q.trunk[0].w.at(0, 0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(st.t == 1);
  // Untouched parameters keep their value (zero gradient).
  CHECK(q.actor.w.at(0, 0) == 0.0);
}

TEST_CASE("checkpoints round-trip exactly") {
  PolicyParams p = random_net({7, {5, 3}, 6}, 4242);
  std::string bytes = serialize_policy(p);
  PolicyParams q = parse_policy(bytes);
  CHECK(params_bitwise_equal(p, q));
  CHECK(q.shape == p.shape);
  CHECK(serialize_policy(q) == bytes);

  nlohmann::ordered_json meta{{"n_tasks", 5}, {"cve_id", "CVE-2018-7600"}};
  std::string with_meta = serialize_policy(p, meta);
  nlohmann::ordered_json meta_out;
  PolicyParams r = parse_policy(with_meta, &meta_out);
  CHECK(params_bitwise_equal(p, r));
  CHECK(meta_out.at("n_tasks") == 5);

  CHECK_THROWS_AS(parse_policy("{}"), SchemaError);
  CHECK_THROWS_AS(parse_policy("not json"), SchemaError);
}

TEST_CASE("init is deterministic in the seed and shapes chain") {
  PolicyShape shape{12, {8, 6}, 9};
  PolicyParams a = init_policy(shape, 5);
  PolicyParams b = init_policy(shape, 5);
  PolicyParams c = init_policy(shape, 6);
  CHECK(params_bitwise_equal(a, b));
  CHECK_FALSE(params_bitwise_equal(a, c));
  CHECK(a.trunk[0].w.rows == 8);
  CHECK(a.trunk[0].w.cols == 12);
  CHECK(a.trunk[1].w.rows == 6);
  CHECK(a.trunk[1].w.cols == 8);
  CHECK(a.actor.w.rows == 9);
  CHECK(a.actor.w.cols == 6);
  CHECK(a.critic.w.rows == 1);
  ForwardResult out = forward(a, std::vector<double>(12, 0.1));
  for (double l : out.logits) CHECK(std::isfinite(l));
}
