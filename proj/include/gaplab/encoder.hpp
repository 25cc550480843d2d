#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gaplab/common.hpp"
#include "gaplab/simulator.hpp"

namespace gaplab {

struct StateVector {
  std::vector<double> values;

  int dim() const { return static_cast<int>(values.size()); }

  double norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
  }

  double dot(const StateVector& o) const {
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += values[i] * o.values[i];
    return s;
  }
};

struct EmbedderSpec {
  enum class Kind { Hashing, External };
  Kind kind = Kind::Hashing;
  int d = 256;
  std::string endpoint;  // External only

  void validate() const {
    if (d <= 0) throw InvariantError("embedding dimension must be positive");
  }
};

// Feature hashing: lowercase, split on non-alphanumerics, FNV-1a 64-bit per
// token, signed (+/-1 by the hash's top bit) bucket add at hash mod d, then
// L2 normalization. Empty text embeds to the zero vector. External-kind
// specs go through embed_external (HTTP, batched) instead.
inline StateVector embed(std::string_view text, const EmbedderSpec& spec) {
  spec.validate();
  if (spec.kind != EmbedderSpec::Kind::Hashing)
    throw InvariantError("embed() handles the hashing kind; use "
                         "embed_external for external specs");
  StateVector out;
  out.values.assign(static_cast<std::size_t>(spec.d), 0.0);

  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    std::uint64_t h = fnv1a64(token);
    std::size_t bucket = static_cast<std::size_t>(h % static_cast<std::uint64_t>(spec.d));
    double sign = (h >> 63) ? -1.0 : 1.0;
    out.values[bucket] += sign;
    token.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c))
      token.push_back(static_cast<char>(std::tolower(c)));
    else
      flush();
  }
  flush();

  double n = out.norm();
  if (n > 0.0)
    for (double& v : out.values) v /= n;
  return out;
}

inline StateVector embed_observation(const Observation& obs,
                                     const EmbedderSpec& spec) {
  return embed(obs.text, spec);
}

}  // namespace gaplab
