#pragma once

#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gaplab/common.hpp"

namespace gaplab {

// Dotted version strings compared component-wise: numeric prefixes compare
// as integers, any trailing tag compares lexically after the numerics.
// Missing components behave as (0, ""). "8.5" < "8.5.1", "2.4.7" < "2.4.7-beta".
struct VersionComponent {
  std::uint64_t number = 0;
  std::string tag;

  friend auto operator<=>(const VersionComponent&,
                          const VersionComponent&) = default;
};

inline std::vector<VersionComponent> parse_version(std::string_view v) {
  std::vector<VersionComponent> out;
  std::size_t i = 0;
  while (i <= v.size()) {
    std::size_t dot = v.find('.', i);
    std::string_view comp =
        v.substr(i, dot == std::string_view::npos ? v.size() - i : dot - i);
    VersionComponent c;
    std::size_t k = 0;
    while (k < comp.size() && std::isdigit(static_cast<unsigned char>(comp[k])))
      ++k;
    for (std::size_t j = 0; j < k; ++j)
      c.number = c.number * 10 + static_cast<std::uint64_t>(comp[j] - '0');
    c.tag = std::string(comp.substr(k));
    out.push_back(std::move(c));
    if (dot == std::string_view::npos) break;
    i = dot + 1;
  }
  return out;
}

inline int compare_versions(std::string_view a, std::string_view b) {
  auto va = parse_version(a);
  auto vb = parse_version(b);
  std::size_t n = std::max(va.size(), vb.size());
  for (std::size_t i = 0; i < n; ++i) {
    VersionComponent ca = i < va.size() ? va[i] : VersionComponent{};
    VersionComponent cb = i < vb.size() ? vb[i] : VersionComponent{};
    if (ca < cb) return -1;
    if (cb < ca) return 1;
  }
  return 0;
}

// Inclusive version interval.
struct VersionRange {
  std::string min;
  std::string max;

  bool contains(std::string_view v) const {
    return compare_versions(v, min) >= 0 && compare_versions(v, max) <= 0;
  }
  bool empty() const { return compare_versions(min, max) > 0; }

  friend bool operator==(const VersionRange&, const VersionRange&) = default;
};

}  // namespace gaplab
