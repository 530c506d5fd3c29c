#include "accor/gradcheck.hpp"
#include "accor/layers.hpp"
#include "accor/loss.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace accor;
using oracle::C;

TEST(Elementwise, ComplexProductByHand) {
  const Tensor p = Tensor::scalar({1, 2}) * Tensor::scalar({3, 4});
  EXPECT_EQ(p.item(), C(-5, 10));
}

TEST(Elementwise, Identities) {
  const Tensor x = oracle::random_tensor({3, 4}, 1);
  const Tensor sum = x + Tensor::zeros({3, 4});
  const Tensor prod = x * Tensor::full({3, 4}, 1.0);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_EQ(sum[i], x[i]);
    EXPECT_EQ(prod[i], x[i]);
  }
}

TEST(Elementwise, ScalarBroadcastAndSubtraction) {
  const Tensor x = oracle::random_tensor({5}, 2);
  const Tensor y = Tensor::scalar({2, -1}) * x - x;
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(std::abs(y[i] - (C(2, -1) * x[i] - x[i])), 0.0, 1e-15);
}

TEST(Elementwise, ShapeMismatchRejected) {
  EXPECT_THROW(Tensor::zeros({2, 3}) + Tensor::zeros({3, 2}), ShapeError);
}

TEST(Elementwise, AlgebraicLaws) {
  std::mt19937 gen(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto v = oracle::random_values(3, static_cast<unsigned>(gen()));
    const Tensor a = Tensor::scalar(v[0]), b = Tensor::scalar(v[1]), c = Tensor::scalar(v[2]);
    // Exact up to fused multiply-add contraction.
    EXPECT_LE(std::abs((a * b).item() - (b * a).item()), 1e-15);
    EXPECT_LE(std::abs(((a * b) * c).item() - (a * (b * c)).item()), 1e-12);
    EXPECT_LE(std::abs((a * (b + c)).item() - (a * b + a * c).item()), 1e-12);
  }
}

TEST(Matmul, IdentityAndScalarCases) {
  const Tensor m = oracle::random_tensor({3, 3}, 4);
  std::vector<C> eye(9);
  eye[0] = eye[4] = eye[8] = 1.0;
  const Tensor out = matmul(Tensor({3, 3}, eye), m);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(out[i], m[i]);
  EXPECT_EQ(matmul(Tensor({1, 1}, {{1, 2}}), Tensor({1, 1}, {{3, 4}})).item(), C(-5, 10));
}

TEST(Matmul, MatchesTripleLoop) {
  const auto a = oracle::random_values(20, 5), b = oracle::random_values(12, 6);
  const Tensor out = matmul(Tensor({5, 4}, a), Tensor({4, 3}, b));
  EXPECT_LE(oracle::max_abs_diff(out.data(), oracle::matmul(a, b, 5, 4, 3)), 1e-12);
}

TEST(Matmul, InnerMismatchRejected) {
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST(Backward, RealPartOfProduct) {
  // L = Re(w x) = ac - bd
  const double a = 0.7, b = -1.3, c = 2.1, d = 0.4;
  Tensor w = Tensor::scalar({a, b});
  w.set_requires_grad();
  const Tensor x = Tensor::scalar({c, d});
  backward(real_part(w * x));
  EXPECT_DOUBLE_EQ(w.grad()[0].real(), c);
  EXPECT_DOUBLE_EQ(w.grad()[0].imag(), -d);
}

TEST(Backward, IdentityChainSeedsOne) {
  Tensor x = Tensor::scalar(3.0);
  x.set_requires_grad();
  backward(reshape(reshape(x, {1}), {}));
  EXPECT_EQ(x.grad()[0], C(1, 0));
  Tensor y = Tensor::scalar(2.0);
  y.set_requires_grad();
  backward(y);
  EXPECT_EQ(y.grad()[0], C(1, 0));
}

TEST(Backward, UsageErrors) {
  Tensor x = oracle::random_tensor({3}, 7);
  x.set_requires_grad();
  EXPECT_THROW(backward(x * x), UsageError);
  EXPECT_THROW(backward(sum(x)), UsageError);  // complex-valued scalar
}

TEST(Backward, GradientShapesMatchParameters) {
  Tensor w = oracle::random_tensor({4, 3}, 8), b = oracle::random_tensor({4}, 9);
  w.set_requires_grad();
  b.set_requires_grad();
  const Tensor x = oracle::random_tensor({2, 3}, 10);
  backward(sum(real_part(linear(x, w, b) * linear(x, w, b))));
  EXPECT_EQ(w.grad().size(), w.numel());
  EXPECT_EQ(b.grad().size(), b.numel());
  for (auto g : w.grad()) EXPECT_TRUE(std::isfinite(g.real()) && std::isfinite(g.imag()));
}

TEST(Backward, DeterministicBitIdentical) {
  auto run = [] {
    Tensor w = oracle::random_tensor({6, 5}, 11);
    w.set_requires_grad();
    const Tensor x = oracle::random_tensor({3, 5}, 12);
    const Tensor y = realify(linear(x, w, Tensor()));
    backward(cross_entropy(reshape(y, {3, 12}), std::vector<std::size_t>{0, 4, 11}));
    return std::vector<C>(w.grad().begin(), w.grad().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(GradRecord, OperandsPrecedeNodes) {
  Tensor a = oracle::random_tensor({4}, 13);
  a.set_requires_grad();
  const Tensor b = a * a, c = b + a, d = c * b;
  const GradRecord record(sum(real_part(d)));
  ASSERT_GE(record.size(), 4u);
  for (std::size_t i = 0; i < record.size(); ++i)
    for (auto pos : record[i].operand_positions) EXPECT_LT(pos, static_cast<std::ptrdiff_t>(i));
}

TEST(GradRecord, NoGradGuardSkipsRecording) {
  Tensor a = oracle::random_tensor({4}, 14);
  a.set_requires_grad();
  NoGradGuard guard;
  const Tensor b = a * a;
  EXPECT_FALSE(b.requires_grad());
  EXPECT_TRUE(b.is_leaf());
}

TEST(Tensor, ResultsAreImmutable) {
  Tensor a = oracle::random_tensor({2}, 15);
  a.set_requires_grad();
  Tensor b = a * a;
  EXPECT_THROW(b.mutable_data(), UsageError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<C>(3)), ShapeError);
  EXPECT_THROW(a.at({2}), ShapeError);
}

TEST(FiniteDiff, LinearFunctionIsExact) {
  Tensor x = oracle::random_tensor({6}, 16);
  x.set_requires_grad();
  const Tensor r = oracle::random_tensor({6}, 17);
  EXPECT_LE(finite_diff_check([&] { return sum(real_part(x * r)); }, {x}, 1e-4), 1e-10);
}

TEST(FiniteDiff, CreluAwayFromKinks) {
  auto v = oracle::random_values(40, 18);
  for (auto& z : v) z = C(z.real() + (z.real() >= 0 ? 0.01 : -0.01), z.imag() + (z.imag() >= 0 ? 0.01 : -0.01));
  Tensor x(Shape{40}, v);
  x.set_requires_grad();
  const Tensor r = oracle::random_tensor({40}, 19);
  EXPECT_LE(finite_diff_check([&] { return sum(real_part(crelu(x) * r)); }, {x}, 1e-4), 1e-6);
}

TEST(FiniteDiff, SoftmaxCrossEntropy) {
  Tensor logits = oracle::random_tensor({4, 6}, 20, false);
  logits.set_requires_grad();
  const std::vector<std::size_t> labels{1, 5, 0, 1};
  EXPECT_LE(finite_diff_check([&] { return cross_entropy(logits, labels); }, {logits}, 1e-4), 1e-4);
}

TEST(FiniteDiff, RejectsBadUse) {
  Tensor x = oracle::random_tensor({3}, 21);
  x.set_requires_grad();
  EXPECT_THROW(finite_diff_check([&] { return sum(x); }, {x}, 1e-4), UsageError);
  EXPECT_THROW(finite_diff_check([&] { return sum(real_part(x)); }, {x}, 0.0), UsageError);
}

TEST(FiniteDiff, ShapeOpsAndMatmul) {
  Tensor a = oracle::random_tensor({2, 3, 4}, 22), b = oracle::random_tensor({2, 4, 2}, 23);
  a.set_requires_grad();
  b.set_requires_grad();
  const Tensor r = oracle::random_tensor({2, 2, 3}, 24);
  const double err = finite_diff_check(
      [&] { return sum(real_part(transpose(bmm(a, b)) * r)) + sum(real_part(mean_axis(permute(a, {2, 0, 1}), 1))); },
      {a, b}, 1e-4);
  EXPECT_LE(err, 1e-4);
}
