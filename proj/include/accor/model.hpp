#pragma once

// The classification network:
//
//   range profiles (B, C_in, N)
//     -> 3 x [complex conv -> complex BN -> cReLU] -> complex average pool
//     -> per-position complex projection to D/2, realified to D
//     -> multi-head self-attention (residual) -> mean over tokens = embedding
//     -> affine classifier = logits
//
// The embedding (pre-classifier, post-attention) is what the contrastive
// term consumes.

#include "accor/binary.hpp"
#include "accor/config.hpp"
#include "accor/dataset.hpp"
#include "accor/layers.hpp"
#include "accor/rng.hpp"
#include "accor/signal.hpp"

#include <array>
#include <filesystem>
#include <fstream>

namespace accor {

enum class TokenMode { spatial_tokens, single_token };
enum class ConvMode { one_d, two_d };

struct ModelConfig {
  std::array<std::size_t, 3> conv_channels{32, 64, 128};
  std::size_t kernel_size = 5;
  std::size_t input_channels = 400;
  std::size_t range_bins = 100;
  std::size_t embed_dim = 256;
  std::size_t attention_heads = 16;
  std::size_t n_classes = 10;
  TokenMode token_mode = TokenMode::spatial_tokens;
  ConvMode conv_mode = ConvMode::one_d;
  // 2-D mode views the channels as a grid_rows x grid_cols (Tx x Rx) plane
  // with range bins as feature channels.
  std::size_t grid_rows = 20;
  std::size_t grid_cols = 20;
  // Average-pool window after the backbone (per spatial axis).
  std::size_t pool_window = 10;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.1;

  void validate() const {
    if (embed_dim == 0 || embed_dim % 2 != 0) throw std::invalid_argument("embed_dim must be even and positive");
    if (attention_heads == 0 || embed_dim % attention_heads != 0) {
      throw std::invalid_argument("embed_dim must be divisible by attention_heads");
    }
    if (kernel_size == 0 || kernel_size % 2 == 0) throw std::invalid_argument("kernel_size must be odd");
    for (auto c : conv_channels)
      if (c == 0) throw std::invalid_argument("conv channel counts must be positive");
    if (n_classes < 2) throw std::invalid_argument("n_classes must be >= 2");
    if (input_channels == 0 || range_bins == 0 || pool_window == 0) throw std::invalid_argument("empty input geometry");
    if (conv_mode == ConvMode::two_d && grid_rows * grid_cols != input_channels) {
      throw std::invalid_argument("2-D mode needs grid_rows * grid_cols == input_channels");
    }
    const std::size_t extent = conv_mode == ConvMode::two_d ? std::min(grid_rows, grid_cols) : range_bins;
    if (token_mode == TokenMode::spatial_tokens && pool_window > extent) {
      throw std::invalid_argument("pool_window exceeds the backbone output extent");
    }
  }

  /// Token count entering attention.
  std::size_t token_count() const {
    if (token_mode == TokenMode::single_token) return 1;
    if (conv_mode == ConvMode::two_d) return (grid_rows / pool_window) * (grid_cols / pool_window);
    return range_bins / pool_window;
  }

  void store(KeyValueConfig& cfg) const {
    cfg.set("model.conv_channels", std::to_string(conv_channels[0]) + "," + std::to_string(conv_channels[1]) + "," +
                                       std::to_string(conv_channels[2]));
    cfg.set("model.kernel_size", std::to_string(kernel_size));
    cfg.set("model.input_channels", std::to_string(input_channels));
    cfg.set("model.range_bins", std::to_string(range_bins));
    cfg.set("model.embed_dim", std::to_string(embed_dim));
    cfg.set("model.attention_heads", std::to_string(attention_heads));
    cfg.set("model.n_classes", std::to_string(n_classes));
    cfg.set("model.token_mode", token_mode == TokenMode::spatial_tokens ? "spatial_tokens" : "single_token");
    cfg.set("model.conv_mode", conv_mode == ConvMode::one_d ? "1d" : "2d");
    cfg.set("model.grid_rows", std::to_string(grid_rows));
    cfg.set("model.grid_cols", std::to_string(grid_cols));
    cfg.set("model.pool_window", std::to_string(pool_window));
    cfg.set("model.bn_epsilon", format_double(bn_epsilon));
    cfg.set("model.bn_momentum", format_double(bn_momentum));
  }

  static ModelConfig load(const KeyValueConfig& cfg) { return load(cfg, ModelConfig()); }

  static ModelConfig load(const KeyValueConfig& cfg, ModelConfig m) {
    if (cfg.has("model.conv_channels")) {
      const auto parts = KeyValueConfig::split(cfg.require("model.conv_channels"), ',');
      if (parts.size() != 3) throw ConfigError("model.conv_channels needs exactly 3 values");
      for (std::size_t i = 0; i < 3; ++i) m.conv_channels[i] = std::stoul(parts[i]);
    }
    m.kernel_size = cfg.get_int("model.kernel_size", m.kernel_size);
    m.input_channels = cfg.get_int("model.input_channels", m.input_channels);
    m.range_bins = cfg.get_int("model.range_bins", m.range_bins);
    m.embed_dim = cfg.get_int("model.embed_dim", m.embed_dim);
    m.attention_heads = cfg.get_int("model.attention_heads", m.attention_heads);
    m.n_classes = cfg.get_int("model.n_classes", m.n_classes);
    if (cfg.has("model.token_mode")) {
      const auto v = KeyValueConfig::trim(cfg.require("model.token_mode"));
      if (v == "spatial_tokens") m.token_mode = TokenMode::spatial_tokens;
      else if (v == "single_token") m.token_mode = TokenMode::single_token;
      else throw ConfigError("model.token_mode: unknown value '" + v + "'");
    }
    if (cfg.has("model.conv_mode")) {
      const auto v = KeyValueConfig::trim(cfg.require("model.conv_mode"));
      if (v == "1d") m.conv_mode = ConvMode::one_d;
      else if (v == "2d") m.conv_mode = ConvMode::two_d;
      else throw ConfigError("model.conv_mode: unknown value '" + v + "'");
    }
    m.grid_rows = cfg.get_int("model.grid_rows", m.grid_rows);
    m.grid_cols = cfg.get_int("model.grid_cols", m.grid_cols);
    m.pool_window = cfg.get_int("model.pool_window", m.pool_window);
    m.bn_epsilon = cfg.get_double("model.bn_epsilon", m.bn_epsilon);
    m.bn_momentum = cfg.get_double("model.bn_momentum", m.bn_momentum);
    return m;
  }
};

struct BackboneLayer {
  Tensor kernel;
  Tensor bias;
  Tensor bn_scale;
  Tensor bn_shift;
  BatchNormState bn;
};

struct ForwardOutput {
  Tensor logits;      // (B, n_classes)
  Tensor embeddings;  // (B, embed_dim)
};

using NamedTensor = std::pair<std::string, Tensor>;

class AccorNetwork {
 public:
  AccorNetwork(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(derive_seed(seed, "init"));
    Normal normal;
    auto complex_init = [&](Shape shape, std::size_t fan_in) {
      // Independent parts of variance 1/fan_in: total complex variance 2/fan_in.
      const double sd = std::sqrt(1.0 / static_cast<double>(fan_in));
      std::vector<Complex> v(shape_numel(shape));
      for (auto& x : v) {
        const double re = sd * normal(rng);
        x = {re, sd * normal(rng)};
      }
      return Tensor(std::move(shape), std::move(v)).set_requires_grad();
    };
    auto real_init = [&](Shape shape, std::size_t fan_in) {
      const double sd = std::sqrt(1.0 / static_cast<double>(fan_in));
      std::vector<Complex> v(shape_numel(shape));
      for (auto& x : v) x = sd * normal(rng);
      return Tensor(std::move(shape), std::move(v)).set_requires_grad();
    };
    auto zeros = [](Shape shape) { return Tensor::zeros(std::move(shape)).set_requires_grad(); };

    const bool two_d = config_.conv_mode == ConvMode::two_d;
    std::size_t in_ch = two_d ? config_.range_bins : config_.input_channels;
    const std::size_t k = config_.kernel_size;
    for (std::size_t i = 0; i < 3; ++i) {
      const std::size_t out_ch = config_.conv_channels[i];
      BackboneLayer layer;
      layer.kernel = two_d ? complex_init({out_ch, in_ch, k, k}, in_ch * k * k) : complex_init({out_ch, in_ch, k}, in_ch * k);
      layer.bias = zeros({out_ch});
      layer.bn_scale = Tensor::full({out_ch}, Complex{1.0, 1.0}).set_requires_grad();
      layer.bn_shift = zeros({out_ch});
      layer.bn = BatchNormState::fresh(out_ch);
      layers_[i] = std::move(layer);
      in_ch = out_ch;
    }
    const std::size_t half = config_.embed_dim / 2, d = config_.embed_dim;
    projection_weight_ = complex_init({half, in_ch}, in_ch);
    projection_bias_ = zeros({half});
    attention_.heads = config_.attention_heads;
    attention_.query_weight = real_init({d, d}, d);
    attention_.query_bias = zeros({d});
    attention_.key_weight = real_init({d, d}, d);
    attention_.key_bias = zeros({d});
    attention_.value_weight = real_init({d, d}, d);
    attention_.value_bias = zeros({d});
    attention_.output_weight = real_init({d, d}, d);
    attention_.output_bias = zeros({d});
    classifier_weight_ = real_init({config_.n_classes, d}, d);
    classifier_bias_ = zeros({config_.n_classes});
  }

  const ModelConfig& config() const { return config_; }
  bool training() const { return training_; }
  void set_training(bool on) { training_ = on; }

  /// Trainable tensors in a fixed order.
  std::vector<NamedTensor> parameters() const {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < 3; ++i) {
      const auto p = "backbone." + std::to_string(i) + ".";
      out.emplace_back(p + "kernel", layers_[i].kernel);
      out.emplace_back(p + "bias", layers_[i].bias);
      out.emplace_back(p + "bn_scale", layers_[i].bn_scale);
      out.emplace_back(p + "bn_shift", layers_[i].bn_shift);
    }
    out.emplace_back("projection.weight", projection_weight_);
    out.emplace_back("projection.bias", projection_bias_);
    out.emplace_back("attention.query_weight", attention_.query_weight);
    out.emplace_back("attention.query_bias", attention_.query_bias);
    out.emplace_back("attention.key_weight", attention_.key_weight);
    out.emplace_back("attention.key_bias", attention_.key_bias);
    out.emplace_back("attention.value_weight", attention_.value_weight);
    out.emplace_back("attention.value_bias", attention_.value_bias);
    out.emplace_back("attention.output_weight", attention_.output_weight);
    out.emplace_back("attention.output_bias", attention_.output_bias);
    out.emplace_back("classifier.weight", classifier_weight_);
    out.emplace_back("classifier.bias", classifier_bias_);
    return out;
  }

  /// Parameters plus batch-norm running statistics.
  std::vector<NamedTensor> state() const {
    auto out = parameters();
    for (std::size_t i = 0; i < 3; ++i) {
      const auto p = "backbone." + std::to_string(i) + ".";
      out.emplace_back(p + "running_mean", layers_[i].bn.running_mean);
      out.emplace_back(p + "running_var", layers_[i].bn.running_var);
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : parameters()) n += t.numel();
    return n;
  }

  /// Backbone output (B, C_out, L') or (B, C_out, H', W') after pooling.
  Tensor backbone(const Tensor& profiles) {
    if (profiles.rank() != 3 || profiles.dim(1) != config_.input_channels || profiles.dim(2) != config_.range_bins) {
      throw ShapeError("network input must be (batch, " + std::to_string(config_.input_channels) + ", " +
                       std::to_string(config_.range_bins) + "), got " + shape_str(profiles.shape()));
    }
    const std::size_t batch = profiles.dim(0);
    if (batch == 0) throw ShapeError("empty batch");
    Tensor x = profiles;
    if (config_.conv_mode == ConvMode::two_d) {
      x = reshape(permute(x, {0, 2, 1}), {batch, config_.range_bins, config_.grid_rows, config_.grid_cols});
    }
    const ConvOptions conv{1, config_.kernel_size / 2};
    const BatchNormOptions bn{training_, config_.bn_epsilon, config_.bn_momentum};
    for (auto& layer : layers_) {
      x = complex_conv(x, layer.kernel, layer.bias, conv);
      x = complex_batchnorm(x, layer.bn_scale, layer.bn_shift, layer.bn, bn);
      x = crelu(x);
    }
    if (config_.token_mode == TokenMode::single_token) {
      return mean_axis(reshape(x, {batch, x.dim(1), x.numel() / (batch * x.dim(1))}), 2);
    }
    return complex_avg_pool(x, config_.pool_window);
  }

  /// Realified token sequence (B, T, embed_dim).
  Tensor tokens(const Tensor& features) const {
    const std::size_t batch = features.dim(0), channels = features.dim(1);
    Tensor seq;
    if (features.rank() == 2) {
      seq = reshape(features, {batch, 1, channels});
    } else {
      const std::size_t positions = features.numel() / (batch * channels);
      seq = permute(reshape(features, {batch, channels, positions}), {0, 2, 1});
    }
    return realify(linear(seq, projection_weight_, projection_bias_));
  }

  ForwardOutput forward(const Tensor& profiles, AttentionTrace* trace = nullptr) {
    const Tensor attended = multi_head_attention(attention_, tokens(backbone(profiles)), trace);
    Tensor embeddings = mean_axis(attended, 1);
    Tensor logits = linear(embeddings, classifier_weight_, classifier_bias_);
    return {std::move(logits), std::move(embeddings)};
  }

  const AttentionParams& attention() const { return attention_; }
  std::array<BackboneLayer, 3>& layers() { return layers_; }
  const Tensor& projection_weight() const { return projection_weight_; }
  const Tensor& classifier_weight() const { return classifier_weight_; }
  const Tensor& classifier_bias() const { return classifier_bias_; }

 private:
  ModelConfig config_;
  bool training_ = true;
  std::array<BackboneLayer, 3> layers_;
  Tensor projection_weight_, projection_bias_;
  AttentionParams attention_;
  Tensor classifier_weight_, classifier_bias_;
};

/// Stacks the range profiles of the selected frames into (B, channels, N).
inline Tensor batch_profiles(const Dataset& ds, std::span<const std::size_t> ids) {
  if (ids.empty()) throw ShapeError("batch_profiles: empty selection");
  NoGradGuard no_grad;
  const Shape frame = ds.header.frame_shape();
  const std::size_t per = shape_numel(frame);
  std::vector<Complex> out(ids.size() * per);
  FftPlan plan(frame[1]);
  for (std::size_t b = 0; b < ids.size(); ++b) {
    const auto& f = ds.frames.at(ids[b]).data;
    if (f.shape() != frame) throw ShapeError("batch_profiles: frame shape mismatch");
    for (std::size_t c = 0; c < frame[0]; ++c) {
      plan.forward(f.data().subspan(c * frame[1], frame[1]), std::span(out).subspan(b * per + c * frame[1], frame[1]));
    }
  }
  return Tensor({ids.size(), frame[0], frame[1]}, std::move(out));
}

/// Range profiles of raw frames followed by the network.
inline ForwardOutput forward_frames(AccorNetwork& net, std::span<const IQFrame> frames) {
  if (frames.empty()) throw ShapeError("forward_frames: empty batch");
  const Shape frame = frames[0].data.shape();
  std::vector<Complex> stacked;
  stacked.reserve(frames.size() * frames[0].data.numel());
  for (const auto& f : frames) {
    if (f.data.shape() != frame) throw ShapeError("forward_frames: frames differ in shape");
    const Tensor p = range_profile(f.data.detach());
    stacked.insert(stacked.end(), p.data().begin(), p.data().end());
  }
  return net.forward(Tensor({frames.size(), frame[0], frame[1]}, std::move(stacked)));
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   magic "ACCORCK1" | u16 version | config text (u32 length + bytes)
//   | u32 tensor count | per tensor: name (u32 length + bytes), u32 rank,
//     rank x u32 extents, f32 I/Q interleaved values

inline constexpr char kCheckpointMagic[8] = {'A', 'C', 'C', 'O', 'R', 'C', 'K', '1'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

inline void save_checkpoint(const AccorNetwork& net, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint '" + path.string() + "' for writing");
  os.write(kCheckpointMagic, 8);
  binary::put<std::uint16_t>(os, kCheckpointVersion);
  KeyValueConfig cfg;
  net.config().store(cfg);
  binary::put_string(os, cfg.to_string());
  const auto state = net.state();
  binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(state.size()));
  for (const auto& [name, t] : state) {
    binary::put_string(os, name);
    binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (auto v : t.data()) {
      binary::put<float>(os, static_cast<float>(v.real()));
      binary::put<float>(os, static_cast<float>(v.imag()));
    }
  }
  if (!os.flush()) throw std::runtime_error("write to '" + path.string() + "' failed");
}

inline AccorNetwork load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  std::uint16_t version = 0;
  if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kCheckpointMagic) || !binary::get(is, version)) {
    throw std::runtime_error("'" + path.string() + "' is not a checkpoint");
  }
  if (version != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version");
  std::string text;
  std::uint32_t count = 0;
  if (!binary::get_string(is, text) || !binary::get(is, count)) throw std::runtime_error("checkpoint header truncated");
  AccorNetwork net(ModelConfig::load(KeyValueConfig::parse(text, path.string())), 0);
  auto state = net.state();
  if (count != state.size()) throw std::runtime_error("checkpoint tensor count does not match its config");
  for (auto& [name, t] : state) {
    std::string stored;
    std::uint32_t rank = 0;
    if (!binary::get_string(is, stored) || !binary::get(is, rank)) throw std::runtime_error("checkpoint truncated");
    if (stored != name) throw std::runtime_error("checkpoint tensor '" + stored + "' where '" + name + "' expected");
    Shape shape(rank);
    for (auto& d : shape) {
      std::uint32_t v = 0;
      if (!binary::get(is, v)) throw std::runtime_error("checkpoint truncated");
      d = v;
    }
    if (shape != t.shape()) throw std::runtime_error("checkpoint tensor '" + name + "' has the wrong shape");
    auto values = t.mutable_data();
    for (auto& v : values) {
      float re = 0, im = 0;
      if (!binary::get(is, re) || !binary::get(is, im)) throw std::runtime_error("checkpoint truncated in '" + name + "'");
      v = {re, im};
    }
  }
  if (is.peek() != std::char_traits<char>::eof()) throw std::runtime_error("trailing bytes in checkpoint");
  return net;
}

}  // namespace accor
