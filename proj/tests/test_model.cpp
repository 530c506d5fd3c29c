#include "accor/gradcheck.hpp"
#include "accor/loss.hpp"
#include "accor/model.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace accor;
using oracle::C;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny() {
  ModelConfig m;
  m.conv_channels = {3, 3, 4};
  m.kernel_size = 3;
  m.input_channels = 4;
  m.range_bins = 16;
  m.embed_dim = 8;
  m.attention_heads = 2;
  m.n_classes = 2;
  m.pool_window = 4;
  m.grid_rows = 2;
  m.grid_cols = 2;
  return m;
}

ModelConfig small(std::size_t classes = 10) {
  ModelConfig m;
  m.conv_channels = {8, 8, 16};
  m.input_channels = 16;
  m.range_bins = 20;
  m.embed_dim = 32;
  m.n_classes = classes;
  m.grid_rows = 4;
  m.grid_cols = 4;
  m.pool_window = 4;
  return m;
}

Tensor inputs(const ModelConfig& m, std::size_t batch, unsigned seed) {
  return oracle::random_tensor({batch, m.input_channels, m.range_bins}, seed);
}

}  // namespace

TEST(Network, OutputShapes) {
  ModelConfig m = small();
  AccorNetwork net(m, 1);
  const auto out = net.forward(inputs(m, 3, 300));
  EXPECT_EQ(out.logits.shape(), (Shape{3, 10}));
  EXPECT_EQ(out.embeddings.shape(), (Shape{3, 32}));
  EXPECT_EQ(m.token_count(), 5u);
}

TEST(Network, PaperGeometryShapes) {
  ModelConfig m;
  AccorNetwork net(m, 2);
  net.set_training(false);
  const auto out = net.forward(inputs(m, 1, 301));
  EXPECT_EQ(out.logits.shape(), (Shape{1, 10}));
  EXPECT_EQ(out.embeddings.shape(), (Shape{1, 256}));
  for (const auto& [name, t] : net.parameters())
    for (auto v : t.data()) ASSERT_TRUE(std::isfinite(v.real()) && std::isfinite(v.imag())) << name;
  EXPECT_EQ(net.attention().heads, 16u);
}

TEST(Network, IdenticalFramesGiveIdenticalRows) {
  ModelConfig m = small();
  AccorNetwork net(m, 3);
  net.set_training(false);
  const auto one = oracle::random_values(m.input_channels * m.range_bins, 302);
  std::vector<C> two(one);
  two.insert(two.end(), one.begin(), one.end());
  const auto out = net.forward(Tensor({2, m.input_channels, m.range_bins}, two));
  // Equal up to rounding: batched products may block rows differently.
  for (std::size_t c = 0; c < 10; ++c) EXPECT_NEAR(std::abs(out.logits.at({0, c}) - out.logits.at({1, c})), 0.0, 1e-12);
}

TEST(Network, InferenceIsPure) {
  ModelConfig m = small();
  AccorNetwork net(m, 4);
  net.set_training(false);
  const Tensor x = inputs(m, 2, 303);
  const auto a = net.forward(x), b = net.forward(x);
  EXPECT_EQ(oracle::max_abs_diff(a.logits.data(), b.logits.data()), 0.0);
}

TEST(Network, ClassifierBiasShiftsOneLogit) {
  ModelConfig m = small();
  AccorNetwork net(m, 5);
  net.set_training(false);
  const Tensor x = inputs(m, 3, 304);
  const auto before = net.forward(x);
  Tensor bias = net.classifier_bias();
  bias.mutable_data()[7] += 2.5;
  const auto after = net.forward(x);
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t c = 0; c < 10; ++c)
      EXPECT_NEAR((after.logits.at({b, c}) - before.logits.at({b, c})).real(), c == 7 ? 2.5 : 0.0, 1e-12);
}

TEST(Network, ArgmaxInvariantUnderConstantShift) {
  ModelConfig m = small();
  AccorNetwork net(m, 6);
  net.set_training(false);
  const Tensor logits = net.forward(inputs(m, 4, 305)).logits;
  const Tensor shifted = logits + Tensor::full(logits.shape(), -123.0);
  for (std::size_t b = 0; b < 4; ++b) {
    std::size_t a = 0, s = 0;
    for (std::size_t c = 1; c < 10; ++c) {
      if (logits.at({b, c}).real() > logits.at({b, a}).real()) a = c;
      if (shifted.at({b, c}).real() > shifted.at({b, s}).real()) s = c;
    }
    EXPECT_EQ(a, s);
  }
}

TEST(Network, SeedDeterminesInitialisation) {
  const auto a = AccorNetwork(small(), 7).parameters(), b = AccorNetwork(small(), 7).parameters();
  const auto c = AccorNetwork(small(), 8).parameters();
  ASSERT_EQ(a.size(), b.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_EQ(oracle::max_abs_diff(a[i].second.data(), b[i].second.data()), 0.0);
    differs = differs || oracle::max_abs_diff(a[i].second.data(), c[i].second.data()) > 0;
  }
  EXPECT_TRUE(differs);
}

TEST(Network, WrongInputShapeRejected) {
  ModelConfig m = small();
  AccorNetwork net(m, 9);
  EXPECT_THROW(net.forward(oracle::random_tensor({2, 15, 20}, 306)), ShapeError);
  EXPECT_THROW(net.forward(oracle::random_tensor({15, 20}, 306)), ShapeError);
}

TEST(Network, ConfigValidation) {
  ModelConfig m;
  m.attention_heads = 7;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m = ModelConfig();
  m.kernel_size = 4;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m = ModelConfig();
  m.pool_window = 200;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  EXPECT_THROW(AccorNetwork(m, 0), std::invalid_argument);
}

TEST(Network, EndToEndGradientCheck) {
  ModelConfig m = tiny();
  AccorNetwork net(m, 10);
  const Tensor x = inputs(m, 4, 307);
  const std::vector<std::size_t> labels{0, 1, 1, 0};
  std::vector<Tensor> params;
  for (const auto& [name, t] : net.parameters()) params.push_back(t);
  const double err = finite_diff_check(
      [&] {
        const auto out = net.forward(x);
        return hybrid_loss(out.logits, out.embeddings, labels, LossConfig{0.4, 0.5, {}});
      },
      params, 1e-4);
  EXPECT_LE(err, 1e-4);
}

TEST(Network, EveryParameterReceivesGradient) {
  ModelConfig m = small(3);
  AccorNetwork net(m, 11);
  const auto out = net.forward(inputs(m, 4, 308));
  backward(hybrid_loss(out.logits, out.embeddings, std::vector<std::size_t>{0, 1, 2, 0}, LossConfig{}));
  for (const auto& [name, t] : net.parameters()) {
    ASSERT_EQ(t.grad().size(), t.numel()) << name;
    double norm = 0;
    for (auto g : t.grad()) norm += std::norm(g);
    EXPECT_GT(norm, 0.0) << name;
  }
}

TEST(Network, SingleTokenMode) {
  ModelConfig m = small();
  m.token_mode = TokenMode::single_token;
  EXPECT_EQ(m.token_count(), 1u);
  AccorNetwork net(m, 12);
  const auto out = net.forward(inputs(m, 2, 309));
  EXPECT_EQ(out.logits.shape(), (Shape{2, 10}));
  ModelConfig t = tiny();
  t.token_mode = TokenMode::single_token;
  AccorNetwork tn(t, 13);
  const Tensor x = inputs(t, 3, 310);
  std::vector<Tensor> params;
  for (const auto& [name, p] : tn.parameters()) params.push_back(p);
  EXPECT_LE(finite_diff_check(
                [&] {
                  const auto o = tn.forward(x);
                  return hybrid_loss(o.logits, o.embeddings, std::vector<std::size_t>{0, 1, 0}, LossConfig{});
                },
                params, 1e-4),
            1e-4);
}

TEST(Network, TwoDimensionalMode) {
  ModelConfig m = small();
  m.conv_mode = ConvMode::two_d;
  m.pool_window = 2;
  EXPECT_EQ(m.token_count(), 4u);
  AccorNetwork net(m, 14);
  const auto out = net.forward(inputs(m, 2, 311));
  EXPECT_EQ(out.embeddings.shape(), (Shape{2, 32}));
  ModelConfig t = tiny();
  t.conv_mode = ConvMode::two_d;
  t.pool_window = 2;
  AccorNetwork tn(t, 15);
  const Tensor x = inputs(t, 3, 312);
  std::vector<Tensor> params;
  for (const auto& [name, p] : tn.parameters()) params.push_back(p);
  EXPECT_LE(finite_diff_check(
                [&] {
                  const auto o = tn.forward(x);
                  return hybrid_loss(o.logits, o.embeddings, std::vector<std::size_t>{0, 1, 1}, LossConfig{});
                },
                params, 1e-4),
            1e-4);
}

TEST(Checkpoint, RoundTripIsExactAtStoredPrecision) {
  ModelConfig m = small(4);
  m.token_mode = TokenMode::single_token;
  AccorNetwork net(m, 16);
  // Move the running statistics away from their initial values.
  net.forward(inputs(m, 3, 313));
  const fs::path dir = fs::temp_directory_path() / "accor_test_model";
  fs::create_directories(dir);
  save_checkpoint(net, dir / "a.ckpt");
  AccorNetwork back = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(back.config().n_classes, 4u);
  EXPECT_EQ(back.config().token_mode, TokenMode::single_token);
  const auto s0 = net.state(), s1 = back.state();
  ASSERT_EQ(s0.size(), s1.size());
  for (std::size_t i = 0; i < s0.size(); ++i) {
    EXPECT_EQ(s0[i].first, s1[i].first);
    for (std::size_t k = 0; k < s0[i].second.numel(); ++k) {
      EXPECT_EQ(static_cast<float>(s0[i].second[k].real()), s1[i].second[k].real());
      EXPECT_EQ(static_cast<float>(s0[i].second[k].imag()), s1[i].second[k].imag());
    }
  }
  save_checkpoint(back, dir / "b.ckpt");
  std::ifstream a(dir / "a.ckpt", std::ios::binary), b(dir / "b.ckpt", std::ios::binary);
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a), {}), std::string(std::istreambuf_iterator<char>(b), {}));
}

TEST(Checkpoint, CorruptionRejected) {
  const fs::path dir = fs::temp_directory_path() / "accor_test_model";
  fs::create_directories(dir);
  AccorNetwork net(small(), 17);
  save_checkpoint(net, dir / "c.ckpt");
  std::ifstream is(dir / "c.ckpt", std::ios::binary);
  std::string bytes(std::istreambuf_iterator<char>(is), {});
  auto write = [&](const std::string& b) { std::ofstream(dir / "bad.ckpt", std::ios::binary | std::ios::trunc) << b; };
  write(bytes.substr(0, bytes.size() - 5));
  EXPECT_THROW(load_checkpoint(dir / "bad.ckpt"), std::runtime_error);
  write(bytes + "x");
  EXPECT_THROW(load_checkpoint(dir / "bad.ckpt"), std::runtime_error);
  std::string magic = bytes;
  magic[0] = 'Z';
  write(magic);
  EXPECT_THROW(load_checkpoint(dir / "bad.ckpt"), std::runtime_error);
}
