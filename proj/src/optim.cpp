#include "essnet/optim.hpp"

#include <cmath>

namespace essnet {

Adam::Adam(const Network<float>& net, AdamConfig config) : config_(config) {
  for (const auto& [name, v] : net.parameters()) {
    params_.push_back(v);
    m_.emplace_back(v->value.shape());
    v_.emplace_back(v->value.shape());
  }
}

void Adam::step() {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double lr = config_.lr;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Node<float>& p = *params_[k];
    const bool has = p.has_grad();
    float* m = m_[k].data();
    float* v = v_[k].data();
    float* w = p.value.data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = has ? p.grad[i] : 0.0;
      m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * g);
      v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * g * g);
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] = static_cast<float>(w[i] - lr * mhat / (std::sqrt(vhat) + config_.eps));
    }
  }
}

Tensor<float> ImagePool::query(const Tensor<float>& batch) {
  if (capacity_ <= 0) return batch;
  const Shape s = batch.shape();
  const Shape one{1, s.c, s.h, s.w};
  const std::size_t per = one.numel();
  Tensor<float> out(s);
  for (int n = 0; n < s.n; ++n) {
    Tensor<float> img(one);
    std::copy(batch.plane(n, 0), batch.plane(n, 0) + per, img.data());
    const float* chosen = img.data();
    Tensor<float> swapped;
    if (static_cast<int>(images_.size()) < capacity_) {
      images_.push_back(img);
    } else if (rng_.uniform() > 0.5) {
      const std::size_t idx = rng_.below(images_.size());
      swapped = std::move(images_[idx]);
      images_[idx] = img;
      chosen = swapped.data();
    }
    std::copy(chosen, chosen + per, out.plane(n, 0));
  }
  return out;
}

}  // namespace essnet
