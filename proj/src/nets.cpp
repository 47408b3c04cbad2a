#include "syndiff/nets.hpp"

#include <cmath>
#include <stdexcept>

namespace syndiff {

namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

void require_image(const char* op, const Shape& s, int size) {
  if (s.size() != 4 || s[1] != 1 || s[2] != size || s[3] != size)
    throw DimensionError(op, "expected [N, 1, " + std::to_string(size) + ", " + std::to_string(size) + "], got " +
                                 shape_str(s));
}

// Per-channel bias from a time embedding: [1, hidden] -> [C].
template <typename T>
BasicTensor<T> channel_bias(const Linear<T>& proj, const BasicTensor<T>& temb_act) {
  auto b = proj(temb_act);
  return reshape(b, {b.dim(1)});
}

}  // namespace

void NetConfig::validate() const {
  if (!is_power_of_two(image_size) || image_size < 16)
    throw std::invalid_argument("image_size must be a power of two >= 16, got " + std::to_string(image_size));
  if (base_channels < 2 || base_channels % 2 != 0)
    throw std::invalid_argument("base_channels must be even and >= 2, got " + std::to_string(base_channels));
  if (levels < 1) throw std::invalid_argument("levels must be >= 1, got " + std::to_string(levels));
  if ((image_size >> levels) < 2)
    throw std::invalid_argument("image_size / 2^levels must be >= 2 (image_size " + std::to_string(image_size) +
                                ", levels " + std::to_string(levels) + ")");
  if (embed_dim < 2 || embed_dim % 2 != 0)
    throw std::invalid_argument("embed_dim must be even and >= 2, got " + std::to_string(embed_dim));
  if (hidden_dim < 1) throw std::invalid_argument("hidden_dim must be positive, got " + std::to_string(hidden_dim));
}

int NetConfig::channels_at(int level) const {
  return base_channels * (1 << std::min((level + 1) / 2, 2));
}

std::vector<double> sinusoidal_encoding(double t, int dim) {
  const int half = dim / 2;
  std::vector<double> out(static_cast<std::size_t>(dim));
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
    out[2 * i] = std::sin(t * freq);
    out[2 * i + 1] = std::cos(t * freq);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Time embedding

template <typename T>
TimeEmbedding<T>::TimeEmbedding(ParameterSet<T>& ps, const std::string& name, int embed_dim, int hidden_dim,
                                Rng& rng)
    : embed_dim_(embed_dim),
      hidden_dim_(hidden_dim),
      fc1_(ps, name + ".fc1", embed_dim, hidden_dim, rng),
      fc2_(ps, name + ".fc2", hidden_dim, hidden_dim, rng) {}

template <typename T>
BasicTensor<T> TimeEmbedding<T>::operator()(int t) const {
  const auto enc = sinusoidal_encoding(t, embed_dim_);
  BasicTensor<T> x({1, embed_dim_}, std::vector<T>(enc.begin(), enc.end()));
  return fc2_(swish(fc1_(x)));
}

template <typename T>
std::vector<T> temporal_embedding(int t, const TimeEmbedding<T>& mlp) {
  NoGradGuard no_grad;
  auto e = mlp(t);
  return std::vector<T>(e.data().begin(), e.data().end());
}

// ---------------------------------------------------------------------------
// Diffusive generator

namespace {

// norm -> swish -> conv -> norm -> +time bias -> swish -> conv, plus skip.
// The time bias follows the second norm so normalization cannot remove it.
template <typename T>
struct UNetBlock {
  Norm<T> norm1;
  Conv2d<T> conv1;
  Linear<T> time_proj;
  Norm<T> norm2;
  Conv2d<T> conv2;
  Conv2d<T> skip;

  UNetBlock(ParameterSet<T>& ps, const std::string& name, int in, int out, int hidden, Rng& rng)
      : norm1(ps, name + ".norm1", in, in),
        conv1(ps, name + ".conv1", in, out, 3, {1, 1}, false, rng),
        time_proj(ps, name + ".time_proj", hidden, out, rng),
        norm2(ps, name + ".norm2", out, out),
        conv2(ps, name + ".conv2", out, out, 3, {1, 1}, true, rng) {
    if (in != out) skip = Conv2d<T>(ps, name + ".skip", in, out, 1, {1, 0}, false, rng);
  }

  BasicTensor<T> operator()(const BasicTensor<T>& x, const BasicTensor<T>& temb_act) const {
    auto h = conv1(swish(norm1(x)));
    h = add_bias(norm2(h), channel_bias(time_proj, temb_act));
    h = conv2(swish(h));
    return add(skip.weight.defined() ? skip(x) : x, h);
  }
};

}  // namespace

template <typename T>
struct GeneratorNet<T>::Layers {
  TimeEmbedding<T> time;
  Conv2d<T> conv_in;
  std::vector<std::vector<UNetBlock<T>>> down_blocks;
  std::vector<Conv2d<T>> downsample;
  std::vector<UNetBlock<T>> middle;
  std::vector<Conv2d<T>> upsample;
  std::vector<std::vector<UNetBlock<T>>> up_blocks;
  Norm<T> norm_out;
  Conv2d<T> conv_out;
};

template <typename T>
GeneratorNet<T>::GeneratorNet(const NetConfig& config, Rng& rng, OutputActivation output)
    : config_(config), layers_(std::make_unique<Layers>()) {
  config_.validate();
  auto& L = *layers_;
  const int levels = config_.levels;
  const int hidden = config_.hidden_dim;
  constexpr int kBlocksPerLevel = 2;
  L.time = TimeEmbedding<T>(params_, "time", config_.embed_dim, hidden, rng);
  const int c0 = config_.channels_at(0);
  L.conv_in = Conv2d<T>(params_, "conv_in", 2, c0, 3, {1, 1}, true, rng);

  int ch = c0;
  for (int l = 0; l < levels; ++l) {
    const int out = config_.channels_at(l);
    std::vector<UNetBlock<T>> blocks;
    for (int b = 0; b < kBlocksPerLevel; ++b) {
      blocks.emplace_back(params_, "down" + std::to_string(l) + ".block" + std::to_string(b), ch, out, hidden, rng);
      ch = out;
    }
    L.down_blocks.push_back(std::move(blocks));
    L.downsample.emplace_back(params_, "down" + std::to_string(l) + ".resample", ch, ch, 3, ConvGeometry{2, 1},
                              true, rng);
  }
  const int cm = config_.channels_at(levels);
  L.middle.emplace_back(params_, "mid.block0", ch, cm, hidden, rng);
  L.middle.emplace_back(params_, "mid.block1", cm, cm, hidden, rng);
  ch = cm;

  L.upsample.resize(static_cast<std::size_t>(levels));
  L.up_blocks.resize(static_cast<std::size_t>(levels));
  for (int l = levels - 1; l >= 0; --l) {
    const int out = config_.channels_at(l);
    const std::string name = "up" + std::to_string(l);
    L.upsample[l] = Conv2d<T>(params_, name + ".resample", ch, out, 3, {1, 1}, true, rng);
    std::vector<UNetBlock<T>> blocks;
    blocks.emplace_back(params_, name + ".block0", 2 * out, out, hidden, rng);
    blocks.emplace_back(params_, name + ".block1", out, out, hidden, rng);
    L.up_blocks[l] = std::move(blocks);
    ch = out;
  }
  L.norm_out = Norm<T>(params_, "norm_out", ch, ch);
  L.conv_out = Conv2d<T>(params_, "conv_out", ch, 1, 3, {1, 1}, true, rng);
  saturate_ = output == OutputActivation::Tanh;
}

template <typename T>
GeneratorNet<T>::GeneratorNet(GeneratorNet&&) noexcept = default;
template <typename T>
GeneratorNet<T>& GeneratorNet<T>::operator=(GeneratorNet&&) noexcept = default;
template <typename T>
GeneratorNet<T>::~GeneratorNet() = default;

template <typename T>
BasicTensor<T> GeneratorNet<T>::forward(const BasicTensor<T>& x_t, const BasicTensor<T>& y, int t) const {
  require_image("generator_forward", x_t.shape(), config_.image_size);
  if (y.shape() != x_t.shape())
    throw DimensionError("generator_forward", "x_t " + shape_str(x_t.shape()) + " vs y " + shape_str(y.shape()));
  const auto& L = *layers_;
  const auto temb = swish(L.time(t));

  auto h = L.conv_in(concat_channels(x_t, y));
  std::vector<BasicTensor<T>> skips;
  for (std::size_t l = 0; l < L.down_blocks.size(); ++l) {
    for (const auto& block : L.down_blocks[l]) h = block(h, temb);
    skips.push_back(h);
    h = L.downsample[l](h);
  }
  for (const auto& block : L.middle) h = block(h, temb);
  for (std::size_t l = L.up_blocks.size(); l-- > 0;) {
    h = L.upsample[l](upsample_nearest2(h));
    h = concat_channels(h, skips[l]);
    for (const auto& block : L.up_blocks[l]) h = block(h, temb);
  }
  h = L.conv_out(swish(L.norm_out(h)));
  return saturate_ ? tanh(h) : h;
}

// ---------------------------------------------------------------------------
// Discriminator

template <typename T>
struct DiscriminatorNet<T>::Layers {
  TimeEmbedding<T> time;
  std::vector<Conv2d<T>> conv_a;
  std::vector<Linear<T>> time_proj;
  std::vector<Conv2d<T>> conv_b;
  Linear<T> head;
};

template <typename T>
DiscriminatorNet<T>::DiscriminatorNet(const NetConfig& config, DiscriminatorKind kind, Rng& rng)
    : config_(config), kind_(kind), layers_(std::make_unique<Layers>()) {
  config_.validate();
  auto& L = *layers_;
  const bool timed = kind_ == DiscriminatorKind::Diffusive;
  if (timed) L.time = TimeEmbedding<T>(params_, "time", config_.embed_dim, config_.hidden_dim, rng);
  int ch = timed ? 2 : 1;
  for (int b = 0; b < config_.levels; ++b) {
    const int out = std::min(4 * config_.base_channels, (config_.base_channels / 2) << b);
    const std::string name = "block" + std::to_string(b);
    L.conv_a.emplace_back(params_, name + ".conv_a", ch, out, 3, ConvGeometry{1, 1}, true, rng);
    if (timed) L.time_proj.emplace_back(params_, name + ".time_proj", config_.hidden_dim, out, rng);
    L.conv_b.emplace_back(params_, name + ".conv_b", out, out, 3, ConvGeometry{2, 1}, true, rng);
    ch = out;
  }
  L.head = Linear<T>(params_, "head", ch, 1, rng);
}

template <typename T>
DiscriminatorNet<T>::DiscriminatorNet(DiscriminatorNet&&) noexcept = default;
template <typename T>
DiscriminatorNet<T>& DiscriminatorNet<T>::operator=(DiscriminatorNet&&) noexcept = default;
template <typename T>
DiscriminatorNet<T>::~DiscriminatorNet() = default;

template <typename T>
BasicTensor<T> DiscriminatorNet<T>::forward(const BasicTensor<T>& candidate, const BasicTensor<T>& x_t,
                                            int t) const {
  if (kind_ != DiscriminatorKind::Diffusive)
    throw std::logic_error("discriminator_forward: time-conditioned call on a non-diffusive discriminator");
  require_image("discriminator_forward", candidate.shape(), config_.image_size);
  if (x_t.shape() != candidate.shape())
    throw DimensionError("discriminator_forward",
                         "candidate " + shape_str(candidate.shape()) + " vs x_t " + shape_str(x_t.shape()));
  return run(concat_channels(candidate, x_t), t);
}

template <typename T>
BasicTensor<T> DiscriminatorNet<T>::forward(const BasicTensor<T>& image) const {
  if (kind_ != DiscriminatorKind::NonDiffusive)
    throw std::logic_error("discriminator_forward: diffusive discriminator needs x_t and t");
  require_image("discriminator_forward", image.shape(), config_.image_size);
  return run(image, 0);
}

template <typename T>
BasicTensor<T> DiscriminatorNet<T>::run(const BasicTensor<T>& input, int t) const {
  const auto& L = *layers_;
  BasicTensor<T> temb;
  if (kind_ == DiscriminatorKind::Diffusive) temb = swish(L.time(t));
  auto h = input;
  for (std::size_t b = 0; b < L.conv_a.size(); ++b) {
    h = L.conv_a[b](h);
    if (temb.defined()) h = add_bias(h, channel_bias(L.time_proj[b], temb));
    h = leaky_relu(h);
    h = leaky_relu(L.conv_b[b](h));
  }
  const int n = h.dim(0), c = h.dim(1);
  const auto pooled = scale(reduce_bias(h, {n, c}), static_cast<T>(1.0 / (h.dim(2) * h.dim(3))));
  return reshape(L.head(pooled), {n});
}

// ---------------------------------------------------------------------------
// Non-diffusive generator

namespace {

// norm -> lrelu -> conv -> norm -> lrelu -> conv, plus identity.
template <typename T>
struct ResidualBlock {
  Norm<T> norm1;
  Conv2d<T> conv1;
  Norm<T> norm2;
  Conv2d<T> conv2;

  ResidualBlock(ParameterSet<T>& ps, const std::string& name, int ch, Rng& rng)
      : norm1(ps, name + ".norm1", ch, default_groups(ch)),
        conv1(ps, name + ".conv1", ch, ch, 3, {1, 1}, false, rng),
        norm2(ps, name + ".norm2", ch, default_groups(ch)),
        conv2(ps, name + ".conv2", ch, ch, 3, {1, 1}, true, rng) {}

  BasicTensor<T> operator()(const BasicTensor<T>& x) const {
    auto h = conv1(leaky_relu(norm1(x)));
    h = conv2(leaky_relu(norm2(h)));
    return add(x, h);
  }
};

}  // namespace

template <typename T>
struct ResNetGenerator<T>::Layers {
  Conv2d<T> enc0, enc1, enc2;
  Norm<T> enc0_norm, enc1_norm, enc2_norm;
  std::vector<ResidualBlock<T>> blocks;
  ConvTranspose2d<T> dec0, dec1;
  Norm<T> dec0_norm, dec1_norm;
  Conv2d<T> dec2;
};

template <typename T>
ResNetGenerator<T>::ResNetGenerator(const NetConfig& config, Rng& rng)
    : config_(config), layers_(std::make_unique<Layers>()) {
  config_.validate();
  auto& L = *layers_;
  const int c0 = config_.base_channels / 2, c1 = config_.base_channels, c2 = 2 * config_.base_channels;
  L.enc0 = Conv2d<T>(params_, "enc0.conv", 1, c0, 3, {1, 1}, false, rng);
  L.enc0_norm = Norm<T>(params_, "enc0.norm", c0, default_groups(c0));
  L.enc1 = Conv2d<T>(params_, "enc1.conv", c0, c1, 4, {2, 1}, false, rng);
  L.enc1_norm = Norm<T>(params_, "enc1.norm", c1, default_groups(c1));
  L.enc2 = Conv2d<T>(params_, "enc2.conv", c1, c2, 4, {2, 1}, false, rng);
  L.enc2_norm = Norm<T>(params_, "enc2.norm", c2, default_groups(c2));
  for (int b = 0; b < kResidualBlocks; ++b) L.blocks.emplace_back(params_, "res" + std::to_string(b), c2, rng);
  L.dec0 = ConvTranspose2d<T>(params_, "dec0.conv", c2, c1, 4, {2, 1}, false, rng);
  L.dec0_norm = Norm<T>(params_, "dec0.norm", c1, default_groups(c1));
  L.dec1 = ConvTranspose2d<T>(params_, "dec1.conv", c1, c0, 4, {2, 1}, false, rng);
  L.dec1_norm = Norm<T>(params_, "dec1.norm", c0, default_groups(c0));
  L.dec2 = Conv2d<T>(params_, "dec2.conv", c0, 1, 3, {1, 1}, true, rng);
}

template <typename T>
ResNetGenerator<T>::ResNetGenerator(ResNetGenerator&&) noexcept = default;
template <typename T>
ResNetGenerator<T>& ResNetGenerator<T>::operator=(ResNetGenerator&&) noexcept = default;
template <typename T>
ResNetGenerator<T>::~ResNetGenerator() = default;

template <typename T>
BasicTensor<T> ResNetGenerator<T>::forward(const BasicTensor<T>& x) const {
  auto h = encode(x);
  for (int b = 0; b < kResidualBlocks; ++b) h = residual(b, h);
  return decode(h);
}

template <typename T>
BasicTensor<T> ResNetGenerator<T>::encode(const BasicTensor<T>& x) const {
  require_image("resnet_forward", x.shape(), config_.image_size);
  const auto& L = *layers_;
  auto h = leaky_relu(L.enc0_norm(L.enc0(x)));
  h = leaky_relu(L.enc1_norm(L.enc1(h)));
  return leaky_relu(L.enc2_norm(L.enc2(h)));
}

template <typename T>
BasicTensor<T> ResNetGenerator<T>::residual(int block, const BasicTensor<T>& h) const {
  if (block < 0 || block >= kResidualBlocks) throw std::out_of_range("residual block " + std::to_string(block));
  return layers_->blocks[static_cast<std::size_t>(block)](h);
}

template <typename T>
BasicTensor<T> ResNetGenerator<T>::decode(const BasicTensor<T>& h) const {
  const auto& L = *layers_;
  auto out = leaky_relu(L.dec0_norm(L.dec0(h)));
  out = leaky_relu(L.dec1_norm(L.dec1(out)));
  return tanh(L.dec2(out));
}

template class TimeEmbedding<float>;
template class TimeEmbedding<double>;
template std::vector<float> temporal_embedding(int, const TimeEmbedding<float>&);
template std::vector<double> temporal_embedding(int, const TimeEmbedding<double>&);
template class GeneratorNet<float>;
template class GeneratorNet<double>;
template class DiscriminatorNet<float>;
template class DiscriminatorNet<double>;
template class ResNetGenerator<float>;
template class ResNetGenerator<double>;

}  // namespace syndiff
