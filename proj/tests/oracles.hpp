// Independent reference computations used by the unit and acceptance tests.
// Deliberately naive: direct loops, no shared code with the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

inline int conv_out(int n, int k, int s, int p) { return (n + 2 * p - k) / s + 1; }

/// Spatial sizes after each PatchGAN stage: `layers` 4x4 pad-1 convs, the
/// last with stride 1, then the 4x4 stride-1 head.
inline std::vector<int> patch_sizes(int n, int layers) {
  std::vector<int> out;
  for (int i = 0; i < layers; ++i) {
    n = conv_out(n, 4, i == layers - 1 ? 1 : 2, 1);
    out.push_back(n);
  }
  out.push_back(conv_out(n, 4, 1, 1));
  return out;
}

inline long conv_params(int k, int cin, int cout, bool bias = true) {
  return static_cast<long>(k) * k * cin * cout + (bias ? cout : 0);
}
inline long norm_params(int c) { return 2L * c; }

inline long generator_params(int w, int blocks, int in, int out) {
  long p = 0;
  p += conv_params(7, in, w) + norm_params(w);
  p += conv_params(3, w, 2 * w) + norm_params(2 * w);
  p += conv_params(3, 2 * w, 4 * w) + norm_params(4 * w);
  for (int b = 0; b < blocks; ++b)
    p += 2 * (conv_params(3, 4 * w, 4 * w) + norm_params(4 * w));
  p += conv_params(3, 4 * w, 2 * w) + norm_params(2 * w);
  p += conv_params(3, 2 * w, w) + norm_params(w);
  p += conv_params(7, w, out);
  return p;
}

inline long discriminator_params(int w, int layers, int in) {
  long p = 0;
  int c = in;
  for (int i = 0; i < layers; ++i) {
    const int o = w * std::min(1 << i, 8);
    p += conv_params(4, c, o);
    if (i > 0) p += norm_params(o);
    c = o;
  }
  return p + conv_params(4, c, 1);
}

inline double dice(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  double inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]) na += 1;
    if (b[i]) nb += 1;
    if (a[i] && b[i]) inter += 1;
  }
  if (na == 0 && nb == 0) return 1.0;
  return 2 * inter / (na + nb);
}

/// Average 1-based ranks of |d| by counting, O(n^2).
inline std::vector<double> ranks(const std::vector<double>& d) {
  std::vector<double> r(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    double less = 0, equal = 0;
    for (std::size_t j = 0; j < d.size(); ++j) {
      if (std::fabs(d[j]) < std::fabs(d[i])) less += 1;
      if (std::fabs(d[j]) == std::fabs(d[i])) equal += 1;
    }
    r[i] = less + (equal + 1) / 2.0;
  }
  return r;
}

/// Two-sided exact p of the signed-rank statistic by visiting all 2^n sign
/// patterns of the nonzero differences.
inline double wilcoxon_brute_p(const std::vector<double>& diffs) {
  std::vector<double> d;
  for (double v : diffs)
    if (v != 0) d.push_back(v);
  const std::vector<double> r = ranks(d);
  const std::size_t n = d.size();
  double total = 0, w = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total += r[i];
    if (d[i] > 0) w += r[i];
  }
  const double mu = total / 2, obs = std::fabs(w - mu);
  std::uint64_t hits = 0;
  for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1) s += r[i];
    if (std::fabs(s - mu) >= obs - 1e-9) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(1ULL << n);
}

inline double wilcoxon_w(const std::vector<double>& diffs) {
  std::vector<double> d;
  for (double v : diffs)
    if (v != 0) d.push_back(v);
  const std::vector<double> r = ranks(d);
  double w = 0;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] > 0) w += r[i];
  return w;
}

}  // namespace oracle
