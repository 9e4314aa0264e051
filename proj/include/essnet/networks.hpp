#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "essnet/autograd.hpp"
#include "essnet/data.hpp"

namespace essnet {

enum class Role : std::uint8_t { G1, G2, D1, D2, S };
const char* role_name(Role r);
Role role_from_name(const std::string& name);

enum class Head : std::uint8_t { kTanh, kSoftmax };

/// ResNet-block image-to-image network: c7s1-w, d2w, d4w, N x R4w, u2w, uw,
/// c7s1-out. Reflection padding, instance normalisation.
struct GeneratorConfig {
  int width = 16;
  int blocks = 3;
  int in_channels = 1;
  int out_channels = 1;
  Head head = Head::kTanh;

  void validate() const;
  bool operator==(const GeneratorConfig&) const = default;

  static GeneratorConfig desk() { return {}; }
  static GeneratorConfig paper_parity() { return {64, 9, 1, 1, Head::kTanh}; }
  /// Same trunk with a C-way softmax head.
  GeneratorConfig as_segmenter(int classes = kClassCount) const {
    GeneratorConfig c = *this;
    c.out_channels = classes;
    c.head = Head::kSoftmax;
    return c;
  }
};

/// PatchGAN: `layers` 4x4 convolutions (all stride 2 except the last, which
/// is stride 1) followed by a 1-channel 4x4 head. No output sigmoid.
struct DiscriminatorConfig {
  int width = 16;
  int layers = 4;
  int in_channels = 1;

  void validate() const;
  bool operator==(const DiscriminatorConfig&) const = default;

  static DiscriminatorConfig desk() { return {}; }
  static DiscriminatorConfig paper_parity() { return {64, 4, 1}; }
};

struct LayerSpec {
  std::string name;
  std::string kind;  // conv | convT | inorm
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;
  int stride = 1;
  bool operator==(const LayerSpec&) const = default;
};

enum class NetKind : std::uint8_t { kGenerator, kDiscriminator };

template <typename T>
class Network {
 public:
  using Param = std::pair<std::string, Var<T>>;

  Network() = default;

  Role role() const { return role_; }
  NetKind kind() const { return kind_; }
  const GeneratorConfig& generator_config() const { return gen_; }
  const DiscriminatorConfig& discriminator_config() const { return disc_; }

  const std::vector<Param>& parameters() const { return params_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t parameter_count() const;
  const Var<T>& param(const std::string& name) const;

  /// Toggles gradient tracking on every parameter.
  void set_trainable(bool trainable);
  void zero_grad();

  /// Generator: tanh output (or raw logits for a softmax head).
  /// Discriminator: raw patch scores.
  Var<T> forward(const Var<T>& x) const;

  /// Deep copy with independent parameter nodes.
  Network clone() const { return cast<T>(); }

  template <typename U>
  Network<U> cast() const {
    Network<U> out;
    out.role_ = role_;
    out.kind_ = kind_;
    out.gen_ = gen_;
    out.disc_ = disc_;
    out.layers_ = layers_;
    for (const auto& [name, v] : params_) {
      auto p = parameter(v->value.template cast<U>());
      p->requires_grad = v->requires_grad;
      out.params_.emplace_back(name, p);
    }
    return out;
  }

 private:
  template <typename>
  friend class Network;
  template <typename U>
  friend Network<U> build_generator(const GeneratorConfig&, std::uint64_t, Role);
  template <typename U>
  friend Network<U> build_discriminator(const DiscriminatorConfig&,
                                        std::uint64_t, Role);

  Var<T> generator_forward(const Var<T>& x) const;
  Var<T> discriminator_forward(const Var<T>& x) const;
  Var<T> conv(const Var<T>& x, const std::string& name, int stride, int pad) const;
  Var<T> conv_t(const Var<T>& x, const std::string& name) const;
  Var<T> inorm(const Var<T>& x, const std::string& name) const;

  Role role_ = Role::G1;
  NetKind kind_ = NetKind::kGenerator;
  GeneratorConfig gen_;
  DiscriminatorConfig disc_;
  std::vector<Param> params_;
  std::vector<LayerSpec> layers_;
};

/// The five networks of the end-to-end model. `s` is absent in the
/// synthesis-only stage.
template <typename T>
struct ModelSet {
  Network<T> g1, g2, d1, d2;
  std::optional<Network<T>> s;
};

/// Weights ~ N(0, 0.02), biases 0, normalisation gains 1 and biases 0.
/// Deterministic per seed; the role only tags the network.
template <typename T>
Network<T> build_generator(const GeneratorConfig& config, std::uint64_t seed,
                           Role role = Role::G1);

template <typename T>
Network<T> build_segmenter(const GeneratorConfig& trunk, std::uint64_t seed,
                           int classes = kClassCount) {
  return build_generator<T>(trunk.as_segmenter(classes), seed, Role::S);
}

template <typename T>
Network<T> build_discriminator(const DiscriminatorConfig& config,
                               std::uint64_t seed, Role role = Role::D1);

/// Patch-map extent for an n-pixel input, or 0 if some stage would vanish.
int patch_map_size(const DiscriminatorConfig& config, int n);

// Value-level wrappers (no gradient tracking).
Tensor<float> generator_forward(const Network<float>& net,
                                const Tensor<float>& batch);
Tensor<float> discriminator_forward(const Network<float>& net,
                                    const Tensor<float>& batch);
/// Per-pixel class probabilities [N, C, H, W].
Tensor<float> segmenter_forward(const Network<float>& net,
                                const Tensor<float>& batch);

/// Number of forward passes run so far by networks with the given role.
std::size_t forward_calls(Role role);

}  // namespace essnet
