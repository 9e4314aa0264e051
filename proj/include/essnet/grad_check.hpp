#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "essnet/autograd.hpp"
#include "essnet/losses.hpp"

namespace essnet {

struct GradCheckEntry {
  std::string parameter;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
  bool ok = false;
};

struct GradAudit {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0;
  double median_rel_error = 0;
  double pass_fraction = 0;
  double tolerance = 0;
  double seconds = 0;

  std::size_t failures() const;
};

struct NamedParam {
  std::string name;
  Var<double> var;
};

/// Compares reverse-mode gradients of `loss` with central differences
/// (L(t + h) - L(t - h)) / 2h at `samples` uniformly drawn scalar
/// coordinates. Relative error is |a - n| / max(|a|, |n|, abs_floor).
/// Failures are reported, never thrown.
GradAudit audit_gradients(const std::function<Var<double>()>& loss,
                          const std::vector<NamedParam>& params, int samples,
                          std::uint64_t seed, double h = 1e-3,
                          double tolerance = 1e-3, double abs_floor = 1e-7);

struct GradCheckConfig {
  int size = 8;
  int width = 4;
  int blocks = 1;
  int disc_layers = 2;
  int samples = 200;
  double h = 1e-3;
  double tolerance = 1e-3;
  LossWeights weights;
  LossOptions options;
  std::uint64_t seed = 1;
};

/// Audits the full generator-side objective of the end-to-end model on a
/// tiny configuration, in double precision, over the parameters of all
/// five networks.
GradAudit grad_check(const GradCheckConfig& config);

}  // namespace essnet
