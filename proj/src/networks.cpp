#include "essnet/networks.hpp"

#include <algorithm>
#include <array>
#include <atomic>

#include "essnet/errors.hpp"
#include "essnet/ops.hpp"
#include "essnet/rng.hpp"

namespace essnet {

namespace {
std::array<std::atomic<std::size_t>, 5> g_forward_calls{};
}

std::size_t forward_calls(Role role) {
  return g_forward_calls[static_cast<int>(role)].load();
}

const char* role_name(Role r) {
  switch (r) {
    case Role::G1: return "G1";
    case Role::G2: return "G2";
    case Role::D1: return "D1";
    case Role::D2: return "D2";
    case Role::S: return "S";
  }
  return "?";
}

Role role_from_name(const std::string& name) {
  for (Role r : {Role::G1, Role::G2, Role::D1, Role::D2, Role::S})
    if (name == role_name(r)) return r;
  throw DataError("unknown architecture tag '" + name + "'");
}

void GeneratorConfig::validate() const {
  if (blocks < 1) throw ConfigError("generator needs at least one residual block");
  if (width < 2) throw ConfigError("generator width must be >= 2");
  if (in_channels < 1 || out_channels < 1)
    throw ConfigError("generator channel counts must be positive");
  if (head == Head::kSoftmax && out_channels < 2)
    throw ConfigError("softmax head needs at least two classes");
}

void DiscriminatorConfig::validate() const {
  if (layers < 2) throw ConfigError("discriminator needs at least two layers");
  if (width < 1) throw ConfigError("discriminator width must be >= 1");
  if (in_channels < 1) throw ConfigError("discriminator needs an input channel");
}

int patch_map_size(const DiscriminatorConfig& config, int n) {
  for (int i = 0; i < config.layers; ++i) {
    const int stride = (i == config.layers - 1) ? 1 : 2;
    n = ops::conv_out_size(n, 4, stride, 1);
    if (n < 1) return 0;
  }
  n = ops::conv_out_size(n, 4, 1, 1);
  return n < 1 ? 0 : n;
}

namespace {

// Collects parameters and layer specs in construction order with a single
// seeded stream so float and double builds draw identical values.
template <typename T>
struct Builder {
  Rng rng;
  std::vector<std::pair<std::string, Var<T>>> params;
  std::vector<LayerSpec> layers;

  void conv(const std::string& name, int cin, int cout, int k, int stride,
            bool transposed = false) {
    Tensor<T> w(transposed ? Shape{cin, cout, k, k} : Shape{cout, cin, k, k});
    for (auto& v : w.values()) v = static_cast<T>(rng.normal(0.0, 0.02));
    params.emplace_back(name + ".w", parameter(std::move(w)));
    params.emplace_back(name + ".b", parameter(Tensor<T>(Shape{1, cout, 1, 1})));
    layers.push_back({name, transposed ? "convT" : "conv", cin, cout, k, stride});
  }
  void inorm(const std::string& name, int c) {
    params.emplace_back(name + ".g", parameter(Tensor<T>(Shape{1, c, 1, 1}, T(1))));
    params.emplace_back(name + ".b", parameter(Tensor<T>(Shape{1, c, 1, 1})));
    layers.push_back({name, "inorm", c, c, 0, 1});
  }
};

}  // namespace

template <typename T>
Network<T> build_generator(const GeneratorConfig& config, std::uint64_t seed,
                           Role role) {
  config.validate();
  if (role == Role::D1 || role == Role::D2)
    throw ConfigError("generator cannot take a discriminator role");
  Builder<T> b{Rng(seed), {}, {}};
  const int w = config.width;
  b.conv("in.conv", config.in_channels, w, 7, 1);
  b.inorm("in.norm", w);
  b.conv("down1.conv", w, 2 * w, 3, 2);
  b.inorm("down1.norm", 2 * w);
  b.conv("down2.conv", 2 * w, 4 * w, 3, 2);
  b.inorm("down2.norm", 4 * w);
  for (int i = 0; i < config.blocks; ++i) {
    const std::string p = "res" + std::to_string(i);
    b.conv(p + ".conv1", 4 * w, 4 * w, 3, 1);
    b.inorm(p + ".norm1", 4 * w);
    b.conv(p + ".conv2", 4 * w, 4 * w, 3, 1);
    b.inorm(p + ".norm2", 4 * w);
  }
  b.conv("up1.conv", 4 * w, 2 * w, 3, 2, true);
  b.inorm("up1.norm", 2 * w);
  b.conv("up2.conv", 2 * w, w, 3, 2, true);
  b.inorm("up2.norm", w);
  b.conv("out.conv", w, config.out_channels, 7, 1);

  Network<T> net;
  net.role_ = role;
  net.kind_ = NetKind::kGenerator;
  net.gen_ = config;
  net.params_ = std::move(b.params);
  net.layers_ = std::move(b.layers);
  return net;
}

template <typename T>
Network<T> build_discriminator(const DiscriminatorConfig& config,
                               std::uint64_t seed, Role role) {
  config.validate();
  if (role != Role::D1 && role != Role::D2)
    throw ConfigError("discriminator needs role D1 or D2");
  Builder<T> b{Rng(seed), {}, {}};
  int cin = config.in_channels;
  for (int i = 0; i < config.layers; ++i) {
    const int cout = config.width * std::min(1 << i, 8);
    const int stride = (i == config.layers - 1) ? 1 : 2;
    const std::string p = "l" + std::to_string(i);
    b.conv(p + ".conv", cin, cout, 4, stride);
    if (i > 0) b.inorm(p + ".norm", cout);
    cin = cout;
  }
  b.conv("head.conv", cin, 1, 4, 1);

  Network<T> net;
  net.role_ = role;
  net.kind_ = NetKind::kDiscriminator;
  net.disc_ = config;
  net.params_ = std::move(b.params);
  net.layers_ = std::move(b.layers);
  return net;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : params_) n += v->value.size();
  return n;
}

template <typename T>
const Var<T>& Network<T>::param(const std::string& name) const {
  for (const auto& [n, v] : params_)
    if (n == name) return v;
  throw DataError(std::string("network ") + role_name(role_) +
                  " has no parameter '" + name + "'");
}

template <typename T>
void Network<T>::set_trainable(bool trainable) {
  for (auto& [name, v] : params_) v->requires_grad = trainable;
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto& [name, v] : params_) v->grad = Tensor<T>();
}

template <typename T>
Var<T> Network<T>::conv(const Var<T>& x, const std::string& name, int stride,
                        int pad) const {
  return ops::conv2d(x, param(name + ".w"), param(name + ".b"), stride, pad);
}

template <typename T>
Var<T> Network<T>::conv_t(const Var<T>& x, const std::string& name) const {
  return ops::conv_transpose2d(x, param(name + ".w"), param(name + ".b"), 2, 1,
                               1);
}

template <typename T>
Var<T> Network<T>::inorm(const Var<T>& x, const std::string& name) const {
  return ops::instance_norm(x, param(name + ".g"), param(name + ".b"));
}

template <typename T>
Var<T> Network<T>::forward(const Var<T>& x) const {
  ++g_forward_calls[static_cast<int>(role_)];
  return kind_ == NetKind::kGenerator ? generator_forward(x)
                                      : discriminator_forward(x);
}

template <typename T>
Var<T> Network<T>::generator_forward(const Var<T>& x) const {
  const Shape s = x->value.shape();
  if (s.c != gen_.in_channels)
    throw ShapeError("generator expects " + std::to_string(gen_.in_channels) +
                     " input channels, got " + std::to_string(s.c));
  if (s.h % 4 != 0 || s.w % 4 != 0)
    throw ShapeError("generator input " + std::to_string(s.h) + "x" +
                     std::to_string(s.w) + " is not divisible by 4");
  if (s.h < 8 || s.w < 8)
    throw ShapeError("generator input must be at least 8x8");

  Var<T> h = ops::reflection_pad2d(x, 3);
  h = ops::relu(inorm(conv(h, "in.conv", 1, 0), "in.norm"));
  h = ops::relu(inorm(conv(h, "down1.conv", 2, 1), "down1.norm"));
  h = ops::relu(inorm(conv(h, "down2.conv", 2, 1), "down2.norm"));
  for (int i = 0; i < gen_.blocks; ++i) {
    const std::string p = "res" + std::to_string(i);
    Var<T> r = ops::reflection_pad2d(h, 1);
    r = ops::relu(inorm(conv(r, p + ".conv1", 1, 0), p + ".norm1"));
    r = ops::reflection_pad2d(r, 1);
    r = inorm(conv(r, p + ".conv2", 1, 0), p + ".norm2");
    h = ops::add(h, r);
  }
  h = ops::relu(inorm(conv_t(h, "up1.conv"), "up1.norm"));
  h = ops::relu(inorm(conv_t(h, "up2.conv"), "up2.norm"));
  h = conv(ops::reflection_pad2d(h, 3), "out.conv", 1, 0);
  return gen_.head == Head::kTanh ? ops::tanh(h) : h;
}

template <typename T>
Var<T> Network<T>::discriminator_forward(const Var<T>& x) const {
  const Shape s = x->value.shape();
  if (s.c != disc_.in_channels)
    throw ShapeError("discriminator expects " +
                     std::to_string(disc_.in_channels) +
                     " input channels, got " + std::to_string(s.c));
  if (patch_map_size(disc_, s.h) < 1 || patch_map_size(disc_, s.w) < 1)
    throw ShapeError("discriminator input " + std::to_string(s.h) + "x" +
                     std::to_string(s.w) + " is too small");
  const T slope = T(0.2);
  Var<T> h = x;
  for (int i = 0; i < disc_.layers; ++i) {
    const std::string p = "l" + std::to_string(i);
    const int stride = (i == disc_.layers - 1) ? 1 : 2;
    h = conv(h, p + ".conv", stride, 1);
    if (i > 0) h = inorm(h, p + ".norm");
    h = ops::leaky_relu(h, slope);
  }
  return conv(h, "head.conv", 1, 1);
}

Tensor<float> generator_forward(const Network<float>& net,
                                const Tensor<float>& batch) {
  if (net.kind() != NetKind::kGenerator)
    throw ConfigError("generator_forward needs a generator");
  NoGradGuard no_grad;
  return net.forward(constant(batch))->value;
}

Tensor<float> discriminator_forward(const Network<float>& net,
                                    const Tensor<float>& batch) {
  if (net.kind() != NetKind::kDiscriminator)
    throw ConfigError("discriminator_forward needs a discriminator");
  NoGradGuard no_grad;
  return net.forward(constant(batch))->value;
}

Tensor<float> segmenter_forward(const Network<float>& net,
                                const Tensor<float>& batch) {
  if (net.kind() != NetKind::kGenerator ||
      net.generator_config().head != Head::kSoftmax)
    throw ConfigError("segmenter_forward needs a softmax-head network");
  NoGradGuard no_grad;
  return ops::softmax_channels(net.forward(constant(batch))->value);
}

template class Network<float>;
template class Network<double>;
template Network<float> build_generator(const GeneratorConfig&, std::uint64_t, Role);
template Network<double> build_generator(const GeneratorConfig&, std::uint64_t, Role);
template Network<float> build_discriminator(const DiscriminatorConfig&, std::uint64_t, Role);
template Network<double> build_discriminator(const DiscriminatorConfig&, std::uint64_t, Role);

}  // namespace essnet
