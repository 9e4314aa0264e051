#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace essnet {

struct WilcoxonOutcome {
  double w = 0;             // sum of ranks of the positive differences
  std::size_t n = 0;        // pairs left after dropping zero differences
  double p_value = 1;       // two-sided
  bool exact = false;       // enumeration (n <= 12) or normal approximation
  double z = 0;             // normal-approximation score; 0 when exact
  bool significant = false; // p < 0.05
};

inline constexpr std::size_t kWilcoxonExactMax = 12;
inline constexpr std::size_t kWilcoxonMinPairs = 5;

/// Signed-rank test on paired samples a, b (differences a - b). Zero
/// differences are dropped and tied |differences| share their average rank.
WilcoxonOutcome wilcoxon_signed_rank(std::span<const double> a,
                                     std::span<const double> b);

/// Same test on precomputed differences. kExact / kNormal override the
/// n <= 12 switch.
enum class WilcoxonMethod { kAuto, kExact, kNormal };
WilcoxonOutcome wilcoxon_signed_rank(std::span<const double> differences,
                                     WilcoxonMethod method = WilcoxonMethod::kAuto);

/// Average ranks (1-based) of |d| for the nonzero entries of d, in input order.
std::vector<double> signed_rank_magnitudes(std::span<const double> nonzero_diffs);

}  // namespace essnet
