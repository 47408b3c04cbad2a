#pragma once

#include <memory>
#include <string>
#include <vector>

#include "syndiff/layers.hpp"
#include "syndiff/random.hpp"
#include "syndiff/tensor.hpp"

namespace syndiff {

/// Shared size parameters of the four network families. Defaults are the
/// desk-scale configuration (the reference UNet uses six halvings at 256x256).
struct NetConfig {
  int image_size = 32;
  int base_channels = 32;
  int levels = 3;
  int embed_dim = 32;
  int hidden_dim = 128;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  /// Channel count at resolution level l: base * min(4, 2^ceil(l/2)).
  int channels_at(int level) const;
  bool operator==(const NetConfig&) const = default;
};

/// Interleaved [sin(t w_0), cos(t w_0), sin(t w_1), ...] with
/// w_i = 10000^(-i / (dim/2)).
std::vector<double> sinusoidal_encoding(double t, int dim);

/// Sinusoidal encoding followed by Linear -> swish -> Linear.
template <typename T>
class TimeEmbedding {
 public:
  TimeEmbedding() = default;
  TimeEmbedding(ParameterSet<T>& ps, const std::string& name, int embed_dim, int hidden_dim, Rng& rng);

  /// [1, hidden_dim]
  BasicTensor<T> operator()(int t) const;
  int embed_dim() const noexcept { return embed_dim_; }
  int hidden_dim() const noexcept { return hidden_dim_; }

 private:
  int embed_dim_ = 0;
  int hidden_dim_ = 0;
  Linear<T> fc1_;
  Linear<T> fc2_;
};

/// Length-hidden_dim embedding of t through the given MLP.
template <typename T>
std::vector<T> temporal_embedding(int t, const TimeEmbedding<T>& mlp);

enum class OutputActivation { Tanh, None };

/// Conditional UNet for x0 estimation: (x_t, y, t) -> image in [-1, 1].
/// x_t and y enter as a two-channel concatenation; t conditions every
/// residual block through a per-channel bias.
template <typename T>
class GeneratorNet {
 public:
  GeneratorNet(const NetConfig& config, Rng& rng, OutputActivation output = OutputActivation::Tanh);
  GeneratorNet(GeneratorNet&&) noexcept;
  GeneratorNet& operator=(GeneratorNet&&) noexcept;
  ~GeneratorNet();

  BasicTensor<T> forward(const BasicTensor<T>& x_t, const BasicTensor<T>& y, int t) const;

  const NetConfig& config() const noexcept { return config_; }
  const ParameterSet<T>& parameters() const noexcept { return params_; }

 private:
  struct Layers;
  NetConfig config_;
  ParameterSet<T> params_;
  std::unique_ptr<Layers> layers_;
  bool saturate_ = true;
};

enum class DiscriminatorKind {
  /// Judges (candidate, x_t) pairs at time t.
  Diffusive,
  /// Judges single images; no time input.
  NonDiffusive,
};

/// Strided conv stack with a linear head; one logit per batch element.
template <typename T>
class DiscriminatorNet {
 public:
  DiscriminatorNet(const NetConfig& config, DiscriminatorKind kind, Rng& rng);
  DiscriminatorNet(DiscriminatorNet&&) noexcept;
  DiscriminatorNet& operator=(DiscriminatorNet&&) noexcept;
  ~DiscriminatorNet();

  /// Diffusive form: [N, 1, H, W] x 2 -> [N].
  BasicTensor<T> forward(const BasicTensor<T>& candidate, const BasicTensor<T>& x_t, int t) const;
  /// Non-diffusive form: [N, 1, H, W] -> [N].
  BasicTensor<T> forward(const BasicTensor<T>& image) const;

  DiscriminatorKind kind() const noexcept { return kind_; }
  const NetConfig& config() const noexcept { return config_; }
  const ParameterSet<T>& parameters() const noexcept { return params_; }

 private:
  struct Layers;
  BasicTensor<T> run(const BasicTensor<T>& input, int t) const;
  NetConfig config_;
  DiscriminatorKind kind_;
  ParameterSet<T> params_;
  std::unique_ptr<Layers> layers_;
};

/// One-shot translator: three encoding blocks, six residual blocks, three
/// decoding blocks. Output in [-1, 1].
template <typename T>
class ResNetGenerator {
 public:
  static constexpr int kResidualBlocks = 6;

  ResNetGenerator(const NetConfig& config, Rng& rng);
  ResNetGenerator(ResNetGenerator&&) noexcept;
  ResNetGenerator& operator=(ResNetGenerator&&) noexcept;
  ~ResNetGenerator();

  /// decode(residual(5, ... residual(0, encode(x)))).
  BasicTensor<T> forward(const BasicTensor<T>& x) const;
  /// [N, 1, S, S] -> [N, 2 * base, S / 4, S / 4]
  BasicTensor<T> encode(const BasicTensor<T>& x) const;
  BasicTensor<T> residual(int block, const BasicTensor<T>& h) const;
  BasicTensor<T> decode(const BasicTensor<T>& h) const;

  const NetConfig& config() const noexcept { return config_; }
  const ParameterSet<T>& parameters() const noexcept { return params_; }

 private:
  struct Layers;
  NetConfig config_;
  ParameterSet<T> params_;
  std::unique_ptr<Layers> layers_;
};

}  // namespace syndiff
