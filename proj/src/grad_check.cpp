#include "essnet/grad_check.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "essnet/data.hpp"
#include "essnet/rng.hpp"

namespace essnet {

std::size_t GradAudit::failures() const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(),
                    [](const GradCheckEntry& e) { return !e.ok; }));
}

GradAudit audit_gradients(const std::function<Var<double>()>& loss,
                          const std::vector<NamedParam>& params, int samples,
                          std::uint64_t seed, double h, double tolerance,
                          double abs_floor) {
  const auto start = std::chrono::steady_clock::now();
  for (const auto& p : params) {
    p.var->requires_grad = true;
    p.var->grad = Tensor<double>();
  }
  backward(loss());

  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : params) {
    offsets.push_back(total);
    total += p.var->value.size();
  }

  GradAudit audit;
  audit.tolerance = tolerance;
  Rng rng(seed);
  NoGradGuard no_grad;
  for (int s = 0; s < samples && total > 0; ++s) {
    const std::size_t flat = rng.below(total);
    const std::size_t which =
        std::upper_bound(offsets.begin(), offsets.end(), flat) -
        offsets.begin() - 1;
    const auto& p = params[which];
    const std::size_t idx = flat - offsets[which];

    double& theta = p.var->value[idx];
    const double saved = theta;
    theta = saved + h;
    const double up = loss()->value[0];
    theta = saved - h;
    const double down = loss()->value[0];
    theta = saved;

    GradCheckEntry e;
    e.parameter = p.name;
    e.index = idx;
    e.analytic = p.var->has_grad() ? p.var->grad[idx] : 0.0;
    e.numeric = (up - down) / (2.0 * h);
    e.rel_error = std::abs(e.analytic - e.numeric) /
                  std::max({std::abs(e.analytic), std::abs(e.numeric), abs_floor});
    e.ok = e.rel_error < tolerance;
    audit.entries.push_back(e);
  }

  std::vector<double> errs;
  for (const auto& e : audit.entries) errs.push_back(e.rel_error);
  if (!errs.empty()) {
    std::sort(errs.begin(), errs.end());
    audit.max_rel_error = errs.back();
    const std::size_t n = errs.size();
    audit.median_rel_error =
        n % 2 ? errs[n / 2] : 0.5 * (errs[n / 2 - 1] + errs[n / 2]);
    audit.pass_fraction =
        1.0 - static_cast<double>(audit.failures()) / static_cast<double>(n);
  }
  audit.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - start)
                      .count();
  return audit;
}

GradAudit grad_check(const GradCheckConfig& config) {
  GeneratorConfig gc{config.width, config.blocks, 1, 1, Head::kTanh};
  DiscriminatorConfig dc{config.width, config.disc_layers, 1};
  const std::uint64_t seed = config.seed;
  ModelSet<double> m{build_generator<double>(gc, derive_seed(seed, "G1"), Role::G1),
                     build_generator<double>(gc, derive_seed(seed, "G2"), Role::G2),
                     build_discriminator<double>(dc, derive_seed(seed, "D1"), Role::D1),
                     build_discriminator<double>(dc, derive_seed(seed, "D2"), Role::D2),
                     build_segmenter<double>(gc, derive_seed(seed, "S"))};

  // Random inputs in [-1, 1] and labels over every class.
  Rng rng(derive_seed(seed, "inputs"));
  const Shape s{1, 1, config.size, config.size};
  Tensor<double> x(s), y(s);
  for (auto& v : x.values()) v = rng.uniform(-1.0, 1.0);
  for (auto& v : y.values()) v = rng.uniform(-1.0, 1.0);
  std::vector<std::uint8_t> labels(s.numel());
  for (auto& l : labels) l = static_cast<std::uint8_t>(rng.below(kClassCount));

  std::vector<NamedParam> params;
  for (const Network<double>* net : {&m.g1, &m.g2, &m.d1, &m.d2, &*m.s})
    for (const auto& [name, v] : net->parameters())
      params.push_back({std::string(role_name(net->role())) + "." + name, v});

  auto loss = [&] {
    return generator_pass(m, x, labels, y, config.weights, config.options).total;
  };
  return audit_gradients(loss, params, config.samples,
                         derive_seed(seed, "samples"), config.h,
                         config.tolerance);
}

}  // namespace essnet
