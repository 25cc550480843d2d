#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaplab/common.hpp"

namespace gaplab {

// Row-major dense matrix.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

struct ParamBlock {
  Matrix w;               // out x in
  std::vector<double> b;  // out
};

struct PolicyShape {
  int input_dim = 256;
  std::vector<int> hidden = {128, 64};
  int n_actions = 0;

  friend bool operator==(const PolicyShape&, const PolicyShape&) = default;
};

// Shared tanh trunk with linear actor (|A| logits) and critic (scalar) heads.
// Holds either task parameters or a meta-initialization; same substrate.
struct PolicyParams {
  PolicyShape shape;
  std::vector<ParamBlock> trunk;
  ParamBlock actor;
  ParamBlock critic;
};

// Scaled-uniform init (Glorot limits) from a pinned seed procedure; the
// actor head starts near zero so the initial policy is near-uniform.
inline PolicyParams init_policy(const PolicyShape& shape, std::uint64_t seed) {
  if (shape.input_dim <= 0 || shape.n_actions <= 0 || shape.hidden.empty())
    throw ShapeMismatchError("bad policy shape");
  Rng rng(derive_seed(seed, "init_policy"));
  auto make_block = [&](int out, int in, double scale) {
    ParamBlock blk;
    blk.w = Matrix(out, in);
    blk.b.assign(static_cast<std::size_t>(out), 0.0);
    double limit = scale * std::sqrt(6.0 / (in + out));
    for (double& v : blk.w.data) v = (2.0 * rng.next_real() - 1.0) * limit;
    return blk;
  };
  PolicyParams p;
  p.shape = shape;
  int in = shape.input_dim;
  for (int h : shape.hidden) {
    p.trunk.push_back(make_block(h, in, 1.0));
    in = h;
  }
  p.actor = make_block(shape.n_actions, in, 0.01);
  p.critic = make_block(1, in, 1.0);
  return p;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

struct ForwardResult {
  std::vector<double> logits;
  double value = 0.0;
};

struct ForwardTrace {
  std::vector<double> input;
  std::vector<std::vector<double>> activations;  // tanh outputs per trunk layer
};

namespace detail {

inline std::vector<double> affine(const ParamBlock& blk,
                                  const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != blk.w.cols)
    throw ShapeMismatchError("input size " + std::to_string(x.size()) +
                             " != layer fan-in " + std::to_string(blk.w.cols));
  std::vector<double> y(blk.b);
  for (int r = 0; r < blk.w.rows; ++r) {
    const double* wr = &blk.w.data[static_cast<std::size_t>(r) * blk.w.cols];
    double acc = 0.0;
    for (int c = 0; c < blk.w.cols; ++c) acc += wr[c] * x[static_cast<std::size_t>(c)];
    y[static_cast<std::size_t>(r)] += acc;
  }
  return y;
}

}  // namespace detail

inline ForwardResult forward(const PolicyParams& p,
                             const std::vector<double>& state,
                             ForwardTrace* trace = nullptr) {
  if (trace) {
    trace->input = state;
    trace->activations.clear();
  }
  std::vector<double> h = state;
  for (const auto& blk : p.trunk) {
    h = detail::affine(blk, h);
    for (double& v : h) v = std::tanh(v);
    if (trace) trace->activations.push_back(h);
  }
  ForwardResult out;
  out.logits = detail::affine(p.actor, h);
  out.value = detail::affine(p.critic, h)[0];
  return out;
}

struct GradientBundle {
  std::vector<ParamBlock> trunk;
  ParamBlock actor;
  ParamBlock critic;

  static GradientBundle zeros_like(const PolicyParams& p) {
    GradientBundle g;
    auto zero_of = [](const ParamBlock& src) {
      ParamBlock blk;
      blk.w = Matrix(src.w.rows, src.w.cols);
      blk.b.assign(src.b.size(), 0.0);
      return blk;
    };
    for (const auto& blk : p.trunk) g.trunk.push_back(zero_of(blk));
    g.actor = zero_of(p.actor);
    g.critic = zero_of(p.critic);
    return g;
  }

  void add(const GradientBundle& o) {
    auto add_block = [](ParamBlock& a, const ParamBlock& b) {
      for (std::size_t i = 0; i < a.w.data.size(); ++i) a.w.data[i] += b.w.data[i];
      for (std::size_t i = 0; i < a.b.size(); ++i) a.b[i] += b.b[i];
    };
    for (std::size_t l = 0; l < trunk.size(); ++l) add_block(trunk[l], o.trunk[l]);
    add_block(actor, o.actor);
    add_block(critic, o.critic);
  }

  void scale(double s) {
    auto scale_block = [s](ParamBlock& a) {
      for (double& v : a.w.data) v *= s;
      for (double& v : a.b) v *= s;
    };
    for (auto& blk : trunk) scale_block(blk);
    scale_block(actor);
    scale_block(critic);
  }
};

// Accumulates exact reverse-mode gradients of a scalar loss into `grads`,
// given the loss gradient at the two heads for one traced sample.
inline void backward(const PolicyParams& p, const ForwardTrace& trace,
                     const std::vector<double>& dlogits, double dvalue,
                     GradientBundle& grads) {
  const std::vector<double>& top =
      trace.activations.empty() ? trace.input : trace.activations.back();

  for (int r = 0; r < p.actor.w.rows; ++r) {
    double g = dlogits[static_cast<std::size_t>(r)];
    if (g != 0.0)
      for (int c = 0; c < p.actor.w.cols; ++c)
        grads.actor.w.at(r, c) += g * top[static_cast<std::size_t>(c)];
    grads.actor.b[static_cast<std::size_t>(r)] += g;
  }
  for (int c = 0; c < p.critic.w.cols; ++c)
    grads.critic.w.at(0, c) += dvalue * top[static_cast<std::size_t>(c)];
  grads.critic.b[0] += dvalue;

  std::vector<double> dh(top.size(), 0.0);
  for (int c = 0; c < p.actor.w.cols; ++c) {
    double acc = 0.0;
    for (int r = 0; r < p.actor.w.rows; ++r)
      acc += p.actor.w.at(r, c) * dlogits[static_cast<std::size_t>(r)];
    acc += p.critic.w.at(0, c) * dvalue;
    dh[static_cast<std::size_t>(c)] = acc;
  }

  for (int l = static_cast<int>(p.trunk.size()) - 1; l >= 0; --l) {
    const auto& act = trace.activations[static_cast<std::size_t>(l)];
    const std::vector<double>& below =
        l == 0 ? trace.input : trace.activations[static_cast<std::size_t>(l - 1)];
    std::vector<double> dz(act.size());
    for (std::size_t i = 0; i < act.size(); ++i)
      dz[i] = dh[i] * (1.0 - act[i] * act[i]);
    auto& gblk = grads.trunk[static_cast<std::size_t>(l)];
    const auto& blk = p.trunk[static_cast<std::size_t>(l)];
    for (int r = 0; r < blk.w.rows; ++r) {
      double g = dz[static_cast<std::size_t>(r)];
      if (g != 0.0)
        for (int c = 0; c < blk.w.cols; ++c)
          gblk.w.at(r, c) += g * below[static_cast<std::size_t>(c)];
      gblk.b[static_cast<std::size_t>(r)] += g;
    }
    std::vector<double> dbelow(below.size(), 0.0);
    for (int c = 0; c < blk.w.cols; ++c) {
      double acc = 0.0;
      for (int r = 0; r < blk.w.rows; ++r)
        acc += blk.w.at(r, c) * dz[static_cast<std::size_t>(r)];
      dbelow[static_cast<std::size_t>(c)] = acc;
    }
    dh = std::move(dbelow);
  }
}

// ---------------------------------------------------------------------------
// Softmax policy head
// ---------------------------------------------------------------------------

inline std::vector<double> softmax(const std::vector<double>& logits) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

inline double log_sum_exp(const std::vector<double>& logits) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  return m + std::log(z);
}

inline double log_prob_of(const std::vector<double>& logits, int action) {
  return logits[static_cast<std::size_t>(action)] - log_sum_exp(logits);
}

inline double entropy(const std::vector<double>& logits) {
  std::vector<double> p = softmax(logits);
  double lse = log_sum_exp(logits);
  double h = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) h -= p[i] * (logits[i] - lse);
  return h;
}

struct SampledAction {
  int action_id = 0;
  double log_prob = 0.0;
};

inline SampledAction sample_action(const std::vector<double>& logits, Rng& rng) {
  std::vector<double> p = softmax(logits);
  double u = rng.next_real();
  double acc = 0.0;
  int a = static_cast<int>(p.size()) - 1;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) {
      a = static_cast<int>(i);
      break;
    }
  }
  return {a, log_prob_of(logits, a)};
}

// Lowest index wins ties.
inline int greedy_action(const std::vector<double>& logits) {
  int best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[static_cast<std::size_t>(best)])
      best = static_cast<int>(i);
  return best;
}

// ---------------------------------------------------------------------------
// Updates. All objectives are maximized, so both rules are ascent steps.
// ---------------------------------------------------------------------------

namespace detail {

template <typename F>
void zip_blocks(PolicyParams& p, const GradientBundle& g, F&& f) {
  if (p.trunk.size() != g.trunk.size())
    throw ShapeMismatchError("gradient bundle layer count mismatch");
  auto zip = [&](ParamBlock& a, const ParamBlock& b) {
    if (a.w.data.size() != b.w.data.size() || a.b.size() != b.b.size())
      throw ShapeMismatchError("gradient bundle block shape mismatch");
    for (std::size_t i = 0; i < a.w.data.size(); ++i) f(a.w.data[i], b.w.data[i]);
    for (std::size_t i = 0; i < a.b.size(); ++i) f(a.b[i], b.b[i]);
  };
  for (std::size_t l = 0; l < p.trunk.size(); ++l) zip(p.trunk[l], g.trunk[l]);
  zip(p.actor, g.actor);
  zip(p.critic, g.critic);
}

}  // namespace detail

inline PolicyParams sgd_ascent(const PolicyParams& params,
                               const GradientBundle& grads, double lr) {
  PolicyParams out = params;
  if (lr == 0.0) return out;  // bitwise identity, degenerate meta case
  detail::zip_blocks(out, grads, [lr](double& p, double g) { p += lr * g; });
  return out;
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  GradientBundle m;
  GradientBundle v;
  long t = 0;

  static AdamState zeros_like(const PolicyParams& p) {
    return {GradientBundle::zeros_like(p), GradientBundle::zeros_like(p), 0};
  }
};

inline PolicyParams adam_ascent(const PolicyParams& params,
                                const GradientBundle& grads, double lr,
                                AdamState& state, AdamConfig cfg = {}) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));

  PolicyParams out = params;
  auto update = [&](ParamBlock& p, const ParamBlock& g, ParamBlock& m,
                    ParamBlock& v) {
    auto step = [&](double& pv, double gv, double& mv, double& vv) {
      mv = cfg.beta1 * mv + (1.0 - cfg.beta1) * gv;
      vv = cfg.beta2 * vv + (1.0 - cfg.beta2) * gv * gv;
      pv += lr * (mv / bc1) / (std::sqrt(vv / bc2) + cfg.eps);
    };
    for (std::size_t i = 0; i < p.w.data.size(); ++i)
      step(p.w.data[i], g.w.data[i], m.w.data[i], v.w.data[i]);
    for (std::size_t i = 0; i < p.b.size(); ++i)
      step(p.b[i], g.b[i], m.b[i], v.b[i]);
  };
  for (std::size_t l = 0; l < out.trunk.size(); ++l)
    update(out.trunk[l], grads.trunk[l], state.m.trunk[l], state.v.trunk[l]);
  update(out.actor, grads.actor, state.m.actor, state.v.actor);
  update(out.critic, grads.critic, state.m.critic, state.v.critic);
  return out;
}

// Flat views over every scalar parameter; fixed traversal order
// (trunk layers, then actor, then critic; weights before biases).
inline std::vector<double*> param_ptrs(PolicyParams& p) {
  std::vector<double*> out;
  auto push = [&](ParamBlock& blk) {
    for (double& v : blk.w.data) out.push_back(&v);
    for (double& v : blk.b) out.push_back(&v);
  };
  for (auto& blk : p.trunk) push(blk);
  push(p.actor);
  push(p.critic);
  return out;
}

inline std::vector<double> flatten(const GradientBundle& g) {
  std::vector<double> out;
  auto push = [&](const ParamBlock& blk) {
    out.insert(out.end(), blk.w.data.begin(), blk.w.data.end());
    out.insert(out.end(), blk.b.begin(), blk.b.end());
  };
  for (const auto& blk : g.trunk) push(blk);
  push(g.actor);
  push(g.critic);
  return out;
}

inline std::vector<double> flatten_params(const PolicyParams& p) {
  PolicyParams copy = p;
  std::vector<double> out;
  for (double* v : param_ptrs(copy)) out.push_back(*v);
  return out;
}

inline bool params_bitwise_equal(const PolicyParams& a, const PolicyParams& b) {
  std::vector<double> fa = flatten_params(a);
  std::vector<double> fb = flatten_params(b);
  if (fa.size() != fb.size()) return false;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    std::uint64_t ba, bb;
    std::memcpy(&ba, &fa[i], 8);
    std::memcpy(&bb, &fb[i], 8);
    if (ba != bb) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned JSON with a shape header; exact round-trip
// (doubles are emitted with 17 significant digits).
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json block_to_json(const ParamBlock& blk) {
  nlohmann::ordered_json w = nlohmann::ordered_json::array();
  for (int r = 0; r < blk.w.rows; ++r) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int c = 0; c < blk.w.cols; ++c) row.push_back(blk.w.at(r, c));
    w.push_back(std::move(row));
  }
  return nlohmann::ordered_json{{"w", std::move(w)}, {"b", blk.b}};
}

inline ParamBlock block_from_json(const nlohmann::ordered_json& j) {
  const auto& w = j.at("w");
  ParamBlock blk;
  int rows = static_cast<int>(w.size());
  int cols = rows > 0 ? static_cast<int>(w.at(0).size()) : 0;
  blk.w = Matrix(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const auto& row = w.at(static_cast<std::size_t>(r));
    if (static_cast<int>(row.size()) != cols)
      throw SchemaError("checkpoint: ragged weight matrix");
    for (int c = 0; c < cols; ++c)
      blk.w.at(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  blk.b = j.at("b").get<std::vector<double>>();
  if (static_cast<int>(blk.b.size()) != rows)
    throw SchemaError("checkpoint: bias size mismatch");
  return blk;
}

inline std::string serialize_policy(const PolicyParams& p,
                                    const nlohmann::ordered_json& meta = {}) {
  nlohmann::ordered_json j{{"format", "gaplab-policy"},
                           {"version", 1},
                           {"input_dim", p.shape.input_dim},
                           {"hidden", p.shape.hidden},
                           {"n_actions", p.shape.n_actions}};
  nlohmann::ordered_json trunk = nlohmann::ordered_json::array();
  for (const auto& blk : p.trunk) trunk.push_back(block_to_json(blk));
  j["trunk"] = std::move(trunk);
  j["actor"] = block_to_json(p.actor);
  j["critic"] = block_to_json(p.critic);
  if (!meta.is_null() && !meta.empty()) j["meta"] = meta;
  return j.dump(2) + "\n";
}

inline PolicyParams parse_policy(std::string_view bytes,
                                 nlohmann::ordered_json* meta_out = nullptr) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("invalid checkpoint JSON: ") + e.what());
  }
  if (j.value("format", "") != "gaplab-policy" || j.value("version", 0) != 1)
    throw SchemaError("unrecognized checkpoint format/version");
  PolicyParams p;
  p.shape.input_dim = j.at("input_dim").get<int>();
  p.shape.hidden = j.at("hidden").get<std::vector<int>>();
  p.shape.n_actions = j.at("n_actions").get<int>();
  for (const auto& blk : j.at("trunk")) p.trunk.push_back(block_from_json(blk));
  p.actor = block_from_json(j.at("actor"));
  p.critic = block_from_json(j.at("critic"));
  if (meta_out != nullptr && j.contains("meta")) *meta_out = j.at("meta");
  return p;
}

}  // namespace gaplab
