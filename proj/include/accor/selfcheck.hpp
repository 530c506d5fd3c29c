#pragma once

// Release gate run by `accor selfcheck`: gradient checks for every layer,
// both losses and a tiny end-to-end network, the DFT against direct
// summation, and the loss identities.
//
// The conv and contrastive operations are injectable so test fixtures can
// confirm that a corrupted implementation is caught.

#include "accor/gradcheck.hpp"
#include "accor/loss.hpp"
#include "accor/model.hpp"

#include <iomanip>
#include <ostream>

namespace accor {

struct CheckResult {
  std::string name;
  double value = 0;      // measured error
  double tolerance = 0;  // pass iff value <= tolerance
  bool passed() const { return std::isfinite(value) && value <= tolerance; }
};

struct SelfCheckHooks {
  std::function<Tensor(const Tensor&, const Tensor&, const Tensor&, const ConvOptions&)> conv =
      [](const Tensor& x, const Tensor& w, const Tensor& b, const ConvOptions& o) { return complex_conv(x, w, b, o); };
  std::function<Tensor(const Tensor&, std::span<const std::size_t>, double)> contrastive =
      [](const Tensor& e, std::span<const std::size_t> l, double tau) { return supervised_contrastive(e, l, tau); };
};

namespace detail {

inline Tensor random_tensor(Shape shape, Rng& rng, bool complex_values = true, double offset = 0.0) {
  Normal normal;
  std::vector<Complex> v(shape_numel(shape));
  for (auto& x : v) {
    const double re = normal(rng) + offset;
    x = complex_values ? Complex{re, normal(rng) + offset} : Complex{re, 0.0};
  }
  return Tensor(std::move(shape), std::move(v));
}

inline Tensor leaf(Tensor t) {
  t.set_requires_grad();
  return t;
}

/// sum Re(x * r) for fixed random r: a generic real readout of a tensor.
inline Tensor readout(const Tensor& x, const Tensor& r) { return sum(real_part(x * r)); }

/// Max |a - b| over two equally sized sequences.
inline double max_abs_diff(std::span<const Complex> a, std::span<const Complex> b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace detail

inline std::vector<CheckResult> run_selfcheck(const SelfCheckHooks& hooks = {}, std::uint64_t seed = 20240101) {
  using detail::leaf;
  using detail::random_tensor;
  using detail::readout;
  std::vector<CheckResult> out;
  Rng rng(seed);
  constexpr double kStep = 1e-4, kGradTol = 1e-4;

  // DFT against direct summation, smooth and non-smooth lengths.
  for (std::size_t n : {100, 97, 64, 1}) {
    const Tensor x = random_tensor({n}, rng);
    const Tensor fast = dft_1d(x);
    const auto slow = dft_direct(x.data());
    out.push_back({"dft_1d vs direct sum, N=" + std::to_string(n), detail::max_abs_diff(fast.data(), slow), 1e-9});
  }

  // Conv forward: hand value and the four-real-convolutions split.
  {
    const Tensor y = hooks.conv(Tensor({1, 1, 1}, {{3, 4}}), Tensor({1, 1, 1}, {{1, 2}}), Tensor(), ConvOptions{});
    out.push_back({"conv (1+2j)*(3+4j) = -5+10j", std::abs(y[0] - Complex{-5, 10}), 1e-12});

    const Tensor x = random_tensor({2, 3, 7}, rng), w = random_tensor({4, 3, 3}, rng);
    const Tensor y2 = hooks.conv(x, w, Tensor(), ConvOptions{1, 1});
    std::vector<Complex> split(y2.numel());
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t o = 0; o < 4; ++o)
        for (std::size_t t = 0; t < 7; ++t) {
          double rr = 0, ii = 0, ri = 0, ir = 0;
          for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t k = 0; k < 3; ++k) {
              const auto src = static_cast<std::ptrdiff_t>(t + k) - 1;
              if (src < 0 || src >= 7) continue;
              const Complex xv = x[(b * 3 + c) * 7 + static_cast<std::size_t>(src)], wv = w[(o * 3 + c) * 3 + k];
              rr += wv.real() * xv.real();
              ii += wv.imag() * xv.imag();
              ri += wv.real() * xv.imag();
              ir += wv.imag() * xv.real();
            }
          split[(b * 4 + o) * 7 + t] = {rr - ii, ri + ir};
        }
    out.push_back({"conv vs four real convolutions", detail::max_abs_diff(y2.data(), split), 1e-12});
  }

  // Batch norm and cReLU hand values.
  {
    BatchNormState state = BatchNormState::fresh(1);
    const Tensor y = complex_batchnorm(Tensor({2, 1}, {{1, 2}, {3, 4}}), Tensor::full({1}, {1, 1}), Tensor::zeros({1}),
                                       state, BatchNormOptions{true, 0.0, 0.1});
    const std::vector<Complex> expect{{-1, -1}, {1, 1}};
    out.push_back({"cBN {1+2j, 3+4j} -> {-1-j, 1+j}", detail::max_abs_diff(y.data(), expect), 1e-12});
    const Tensor r = crelu(Tensor({3}, {{1, 1}, {-1, 2}, {3, -0.5}}));
    const std::vector<Complex> expect_r{{1, 1}, {0, 0}, {0, 0}};
    out.push_back({"cReLU hand values", detail::max_abs_diff(r.data(), expect_r), 0.0});
  }

  // Layer gradients.
  {
    Tensor x = leaf(random_tensor({2, 3, 8}, rng)), w = leaf(random_tensor({4, 3, 3}, rng)), b = leaf(random_tensor({4}, rng));
    const Tensor r = random_tensor({2, 4, 8}, rng);
    out.push_back({"grad complex_conv 1-D",
                   finite_diff_check([&] { return readout(hooks.conv(x, w, b, ConvOptions{1, 1}), r); }, {x, w, b}, kStep),
                   kGradTol});
  }
  {
    Tensor x = leaf(random_tensor({2, 2, 5, 5}, rng)), w = leaf(random_tensor({3, 2, 3, 3}, rng)), b = leaf(random_tensor({3}, rng));
    const Tensor r = random_tensor({2, 3, 3, 3}, rng);
    out.push_back({"grad complex_conv 2-D stride 2",
                   finite_diff_check([&] { return readout(complex_conv(x, w, b, ConvOptions{2, 1}), r); }, {x, w, b}, kStep),
                   kGradTol});
  }
  {
    Tensor x = leaf(random_tensor({4, 3, 5}, rng)), s = leaf(random_tensor({3}, rng)), h = leaf(random_tensor({3}, rng));
    const Tensor r = random_tensor({4, 3, 5}, rng);
    BatchNormState state = BatchNormState::fresh(3);
    out.push_back({"grad complex_batchnorm",
                   finite_diff_check([&] { return readout(complex_batchnorm(x, s, h, state, {}), r); }, {x, s, h}, kStep),
                   kGradTol});
  }
  {
    // Entries at distance >= 0.1 from both axes.
    std::vector<Complex> v(24);
    Normal normal;
    for (auto& z : v) {
      auto away = [&] {
        const double d = normal(rng);
        return d >= 0 ? d + 0.1 : d - 0.1;
      };
      const double re = away();
      z = {re, away()};
    }
    Tensor x = leaf(Tensor({24}, v));
    const Tensor r = random_tensor({24}, rng);
    out.push_back({"grad crelu", finite_diff_check([&] { return readout(crelu(x), r); }, {x}, kStep), 1e-6});
  }
  {
    Tensor x = leaf(random_tensor({2, 3, 11}, rng));
    const Tensor r = random_tensor({2, 3, 3}, rng);
    out.push_back({"grad complex_avg_pool", finite_diff_check([&] { return readout(complex_avg_pool(x, 3), r); }, {x}, kStep),
                   kGradTol});
  }
  {
    Tensor x = leaf(random_tensor({3, 4, 5}, rng)), w = leaf(random_tensor({6, 5}, rng)), b = leaf(random_tensor({6}, rng));
    const Tensor r = random_tensor({3, 4, 12}, rng, false);
    out.push_back({"grad linear + realify",
                   finite_diff_check([&] { return readout(realify(linear(x, w, b)), r); }, {x, w, b}, kStep), kGradTol});
  }
  {
    Tensor x = leaf(random_tensor({3, 7}, rng));
    const Tensor r = random_tensor({3, 7}, rng, false);
    out.push_back({"grad dft_1d", finite_diff_check([&] { return readout(dft_1d(x), r); }, {x}, kStep), kGradTol});
  }
  {
    Tensor logits = leaf(random_tensor({4, 5}, rng, false));
    const std::vector<std::size_t> labels{0, 3, 3, 1};
    const std::vector<double> weights{1.0, 2.0, 0.5, 1.5, 1.0};
    out.push_back({"grad softmax cross-entropy (weighted)",
                   finite_diff_check([&] { return cross_entropy(logits, labels, weights); }, {logits}, kStep), kGradTol});
  }
  {
    Tensor emb = leaf(random_tensor({6, 4}, rng, false));
    const std::vector<std::size_t> labels{0, 1, 0, 2, 1, 0};
    out.push_back({"grad supervised contrastive",
                   finite_diff_check([&] { return hooks.contrastive(emb, labels, 0.5); }, {emb}, kStep), kGradTol});
  }
  {
    const std::size_t d = 8;
    AttentionParams p;
    p.heads = 2;
    p.query_weight = leaf(random_tensor({d, d}, rng, false));
    p.query_bias = leaf(random_tensor({d}, rng, false));
    p.key_weight = leaf(random_tensor({d, d}, rng, false));
    p.key_bias = leaf(random_tensor({d}, rng, false));
    p.value_weight = leaf(random_tensor({d, d}, rng, false));
    p.value_bias = leaf(random_tensor({d}, rng, false));
    p.output_weight = leaf(random_tensor({d, d}, rng, false));
    p.output_bias = leaf(random_tensor({d}, rng, false));
    Tensor tokens = leaf(random_tensor({2, 3, d}, rng, false));
    const Tensor r = random_tensor({2, 3, d}, rng, false);
    out.push_back({"grad multi_head_attention",
                   finite_diff_check([&] { return readout(multi_head_attention(p, tokens), r); },
                                     {tokens, p.query_weight, p.query_bias, p.key_weight, p.key_bias, p.value_weight,
                                      p.value_bias, p.output_weight, p.output_bias},
                                     kStep),
                   kGradTol});
  }

  // End to end on a tiny configuration.
  {
    ModelConfig cfg;
    cfg.conv_channels = {3, 3, 4};
    cfg.kernel_size = 3;
    cfg.input_channels = 4;
    cfg.range_bins = 16;
    cfg.embed_dim = 8;
    cfg.attention_heads = 2;
    cfg.n_classes = 2;
    cfg.pool_window = 4;
    AccorNetwork net(cfg, derive_seed(seed, "tiny"));
    const Tensor profiles = dft_1d(random_tensor({4, 4, 16}, rng));
    const std::vector<std::size_t> labels{0, 1, 1, 0};
    LossConfig loss;
    std::vector<Tensor> params;
    for (const auto& [name, t] : net.parameters()) params.push_back(t);
    out.push_back({"grad end-to-end tiny network (hybrid loss)",
                   finite_diff_check(
                       [&] {
                         const auto o = net.forward(profiles);
                         return hybrid_loss(o.logits, o.embeddings, labels, loss);
                       },
                       params, kStep),
                   kGradTol});
  }

  // Loss identities.
  {
    const Tensor logits = random_tensor({5, 4}, rng, false), emb = random_tensor({5, 6}, rng, false);
    const std::vector<std::size_t> labels{0, 1, 0, 2, 1};
    LossConfig cfg;
    cfg.alpha = 0.0;
    out.push_back({"alpha=0 hybrid equals CE",
                   std::abs(hybrid_loss(logits, emb, labels, cfg).item().real() - cross_entropy(logits, labels).item().real()),
                   1e-12});
    cfg.alpha = 1.0;
    out.push_back({"alpha=1 hybrid equals contrastive",
                   std::abs(hybrid_loss(logits, emb, labels, cfg).item().real() -
                            hooks.contrastive(emb, labels, cfg.tau).item().real()),
                   1e-12});
    const std::vector<std::size_t> ten_labels{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    out.push_back({"uniform logits CE = ln 10",
                   std::abs(cross_entropy(Tensor::zeros({10, 10}), ten_labels).item().real() - std::log(10.0)), 1e-9});

    std::vector<Complex> z(3 * 4);
    z[0] = z[4] = 1.0;
    z[9] = 1.0;
    const std::vector<std::size_t> probe_labels{0, 0, 1};
    const double expected = std::log1p(std::exp(-10.0));
    const double got = hooks.contrastive(Tensor({3, 4}, z), probe_labels, 0.1).item().real();
    out.push_back({"contrastive 3-sample hand value log(1+e^-10)", std::abs(got - expected) / expected, 0.01});

    const double base = hooks.contrastive(emb, labels, 0.1).item().real();
    const double scaled = hooks.contrastive(scale(emb, 7.5), labels, 0.1).item().real();
    out.push_back({"contrastive scale invariance", std::abs(base - scaled), 1e-9});
  }
  return out;
}

/// One line per check; returns true when all passed.
inline bool report_selfcheck(const std::vector<CheckResult>& results, std::ostream& os) {
  bool all = true;
  for (const auto& r : results) {
    all = all && r.passed();
    os << (r.passed() ? "PASS  " : "FAIL  ") << std::left << std::setw(48) << r.name << " error " << std::scientific
       << std::setprecision(2) << r.value << " (tol " << r.tolerance << ")" << std::defaultfloat << '\n';
  }
  os << (all ? "selfcheck: all " : "selfcheck: FAILED, ") << results.size() << " checks" << (all ? " passed" : "") << '\n';
  return all;
}

}  // namespace accor
