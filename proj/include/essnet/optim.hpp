#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "essnet/autograd.hpp"
#include "essnet/networks.hpp"
#include "essnet/rng.hpp"

namespace essnet {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over one network's parameters, with bias-corrected moments.
class Adam {
 public:
  Adam() = default;
  Adam(const Network<float>& net, AdamConfig config);

  /// One update from the parameters' accumulated gradients. Parameters
  /// without a gradient are treated as having gradient zero.
  void step();

  const AdamConfig& config() const { return config_; }
  std::int64_t steps() const { return t_; }
  std::vector<Tensor<float>>& first_moment() { return m_; }
  std::vector<Tensor<float>>& second_moment() { return v_; }
  const std::vector<Tensor<float>>& first_moment() const { return m_; }
  const std::vector<Tensor<float>>& second_moment() const { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  AdamConfig config_;
  std::vector<Var<float>> params_;
  std::vector<Tensor<float>> m_, v_;
  std::int64_t t_ = 0;
};

/// History of generated images for discriminator updates. Until full, each
/// query image is stored and returned; afterwards, with probability 1/2 a
/// random stored image is returned and replaced by the query.
class ImagePool {
 public:
  ImagePool() = default;
  ImagePool(int capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {}

  /// batch is [N, C, H, W]; returns a batch of the same shape.
  Tensor<float> query(const Tensor<float>& batch);

  int capacity() const { return capacity_; }
  const std::vector<Tensor<float>>& images() const { return images_; }
  std::vector<Tensor<float>>& images() { return images_; }
  Rng& rng() { return rng_; }
  const Rng& rng() const { return rng_; }

 private:
  int capacity_ = 0;
  Rng rng_;
  std::vector<Tensor<float>> images_;
};

}  // namespace essnet
