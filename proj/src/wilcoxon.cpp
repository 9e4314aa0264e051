#include "essnet/wilcoxon.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "essnet/errors.hpp"

namespace essnet {

std::vector<double> signed_rank_magnitudes(std::span<const double> d) {
  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return std::fabs(d[i]) < std::fabs(d[j]);
  });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::fabs(d[order[j + 1]]) == std::fabs(d[order[i]])) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

namespace {

// Two-sided p by counting sign assignments. Ranks are doubled so that
// average ranks stay integral; subset sums are tallied by dynamic
// programming, which gives the same count as walking all 2^n patterns.
double exact_p(const std::vector<double>& ranks, double w) {
  std::vector<long> r2;
  long total = 0;
  for (double r : ranks) {
    r2.push_back(std::lround(2 * r));
    total += r2.back();
  }
  std::vector<double> ways(static_cast<std::size_t>(total) + 1, 0.0);
  ways[0] = 1;
  for (long r : r2)
    for (long s = total; s >= r; --s) ways[s] += ways[s - r];
  const long observed = std::labs(2 * std::lround(2 * w) - total);
  double hits = 0;
  for (long s = 0; s <= total; ++s)
    if (std::labs(2 * s - total) >= observed) hits += ways[s];
  return hits / std::ldexp(1.0, static_cast<int>(ranks.size()));
}

}  // namespace

WilcoxonOutcome wilcoxon_signed_rank(std::span<const double> differences,
                                     WilcoxonMethod method) {
  std::vector<double> d;
  for (double v : differences) {
    if (!std::isfinite(v)) throw DataError("wilcoxon: non-finite difference");
    if (v != 0) d.push_back(v);
  }
  if (d.size() < kWilcoxonMinPairs)
    throw DataError("wilcoxon: " + std::to_string(d.size()) +
                    " usable pairs, need at least " +
                    std::to_string(kWilcoxonMinPairs));
  const std::vector<double> ranks = signed_rank_magnitudes(d);
  WilcoxonOutcome out;
  out.n = d.size();
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] > 0) out.w += ranks[i];

  const bool exact = method == WilcoxonMethod::kExact ||
                     (method == WilcoxonMethod::kAuto && out.n <= kWilcoxonExactMax);
  if (exact) {
    if (out.n > 60) throw DataError("wilcoxon: exact test limited to n <= 60");
    out.exact = true;
    out.p_value = exact_p(ranks, out.w);
  } else {
    const double n = static_cast<double>(out.n);
    const double mu = n * (n + 1) / 4.0;
    double tie = 0;
    std::vector<double> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i);
      tie += t * t * t - t;
      i = j;
    }
    const double var = n * (n + 1) * (2 * n + 1) / 24.0 - tie / 48.0;
    const double dev = std::max(0.0, std::fabs(out.w - mu) - 0.5);
    out.z = var > 0 ? dev / std::sqrt(var) : 0.0;
    out.p_value = std::erfc(out.z / std::sqrt(2.0));
  }
  out.p_value = std::clamp(out.p_value, 0.0, 1.0);
  out.significant = out.p_value < 0.05;
  return out;
}

WilcoxonOutcome wilcoxon_signed_rank(std::span<const double> a,
                                     std::span<const double> b) {
  if (a.size() != b.size())
    throw DataError("wilcoxon: paired samples differ in length (" +
                    std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return wilcoxon_signed_rank(d);
}

}  // namespace essnet
