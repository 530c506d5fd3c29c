#pragma once

// Network layers on complex tensors: complex convolution, split batch
// normalisation, cReLU, average pooling, affine maps, realification and
// multi-head self-attention over real tokens.
//
// Real-valued stages (tokens, attention, classifier) reuse the complex
// storage with zero imaginary parts. Ops that are only defined on reals
// (softmax) read the real part and return purely real gradients, so real
// parameters stay real under training.

#include "accor/ctensor.hpp"

#include <optional>

namespace accor {

// ---------------------------------------------------------------------------
// Complex convolution

struct ConvOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

namespace detail {

/// Convolution geometry; 1-D inputs are treated as height 1.
struct ConvGeometry {
  std::size_t batch = 0, in_ch = 0, out_ch = 0;
  std::size_t in_h = 1, in_w = 0, k_h = 1, k_w = 0;
  std::size_t stride_h = 1, stride_w = 1, pad_h = 0, pad_w = 0;
  std::size_t out_h = 1, out_w = 0;
  bool two_d = false;

  std::size_t rows() const { return in_ch * k_h * k_w; }
  std::size_t cols() const { return batch * out_h * out_w; }
  Shape out_shape() const {
    return two_d ? Shape{batch, out_ch, out_h, out_w} : Shape{batch, out_ch, out_w};
  }
};

inline ConvGeometry conv_geometry(const Shape& x, const Shape& w, const ConvOptions& opt) {
  if (!((x.size() == 3 && w.size() == 3) || (x.size() == 4 && w.size() == 4))) {
    throw ShapeError("complex_conv expects (B,C,L)/(O,C,K) or (B,C,H,W)/(O,C,KH,KW), got " + shape_str(x) + " and " +
                     shape_str(w));
  }
  if (x[1] != w[1]) {
    throw ShapeError("complex_conv: input has " + std::to_string(x[1]) + " channels, kernel expects " +
                     std::to_string(w[1]));
  }
  if (opt.stride == 0) throw ShapeError("complex_conv: stride must be >= 1");
  ConvGeometry g;
  g.two_d = x.size() == 4;
  g.batch = x[0];
  g.in_ch = x[1];
  g.out_ch = w[0];
  g.in_w = x.back();
  g.k_w = w.back();
  g.stride_w = opt.stride;
  g.pad_w = opt.padding;
  if (g.two_d) {
    g.in_h = x[2];
    g.k_h = w[2];
    g.stride_h = opt.stride;
    g.pad_h = opt.padding;
  }
  auto out_extent = [](std::size_t in, std::size_t k, std::size_t pad, std::size_t stride) -> std::size_t {
    if (in + 2 * pad < k) throw ShapeError("complex_conv: kernel larger than padded input");
    return (in + 2 * pad - k) / stride + 1;
  };
  g.out_w = out_extent(g.in_w, g.k_w, g.pad_w, g.stride_w);
  g.out_h = g.two_d ? out_extent(g.in_h, g.k_h, g.pad_h, g.stride_h) : 1;
  return g;
}

inline std::vector<Complex> im2col(std::span<const Complex> x, const ConvGeometry& g) {
  const std::size_t ncol = g.cols();
  std::vector<Complex> cols(g.rows() * ncol);
  for (std::size_t c = 0; c < g.in_ch; ++c)
    for (std::size_t kh = 0; kh < g.k_h; ++kh)
      for (std::size_t kw = 0; kw < g.k_w; ++kw) {
        Complex* row = cols.data() + ((c * g.k_h + kh) * g.k_w + kw) * ncol;
        for (std::size_t b = 0; b < g.batch; ++b) {
          const Complex* plane = x.data() + (b * g.in_ch + c) * g.in_h * g.in_w;
          for (std::size_t oh = 0; oh < g.out_h; ++oh) {
            const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride_h + kh) - static_cast<std::ptrdiff_t>(g.pad_h);
            Complex* dst = row + (b * g.out_h + oh) * g.out_w;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
            const Complex* src = plane + static_cast<std::size_t>(ih) * g.in_w;
            for (std::size_t ow = 0; ow < g.out_w; ++ow) {
              const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride_w + kw) - static_cast<std::ptrdiff_t>(g.pad_w);
              if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.in_w)) dst[ow] = src[iw];
            }
          }
        }
      }
  return cols;
}

inline void col2im_add(std::span<const Complex> cols, const ConvGeometry& g, std::span<Complex> gx) {
  const std::size_t ncol = g.cols();
  for (std::size_t c = 0; c < g.in_ch; ++c)
    for (std::size_t kh = 0; kh < g.k_h; ++kh)
      for (std::size_t kw = 0; kw < g.k_w; ++kw) {
        const Complex* row = cols.data() + ((c * g.k_h + kh) * g.k_w + kw) * ncol;
        for (std::size_t b = 0; b < g.batch; ++b) {
          Complex* plane = gx.data() + (b * g.in_ch + c) * g.in_h * g.in_w;
          for (std::size_t oh = 0; oh < g.out_h; ++oh) {
            const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride_h + kh) - static_cast<std::ptrdiff_t>(g.pad_h);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
            const Complex* src = row + (b * g.out_h + oh) * g.out_w;
            Complex* dst = plane + static_cast<std::size_t>(ih) * g.in_w;
            for (std::size_t ow = 0; ow < g.out_w; ++ow) {
              const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride_w + kw) - static_cast<std::ptrdiff_t>(g.pad_w);
              if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.in_w)) dst[iw] += src[ow];
            }
          }
        }
      }
}

/// Forward values: each output is sum over channels and receptive field of
/// k * x = (ca - db) + j(cb + da) for k = a + jb, x = c + jd, plus bias.
inline std::vector<Complex> conv_values(const Tensor& x, const Tensor& w, const Tensor& bias, const ConvGeometry& g) {
  const auto cols = im2col(x.data(), g);
  const std::size_t ncol = g.cols();
  RowMatrix y = cmap(w.data(), g.out_ch, g.rows()) * cmap(cols, g.rows(), ncol);
  const std::size_t plane = g.out_h * g.out_w;
  std::vector<Complex> out(g.batch * g.out_ch * plane);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t o = 0; o < g.out_ch; ++o) {
      const Complex shift = bias.defined() ? bias[o] : Complex{};
      const Complex* src = y.data() + o * ncol + b * plane;
      Complex* dst = out.data() + (b * g.out_ch + o) * plane;
      for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p] + shift;
    }
  return out;
}

/// Adjoint of conv_values with respect to input, kernel and bias.
inline BackwardRule conv_rule(const Tensor& x, const Tensor& w, const ConvGeometry& g) {
  return [x, w, g](std::span<const Complex> grad, GradSink& sink) {
    const std::size_t ncol = g.cols();
    const std::size_t plane = g.out_h * g.out_w;
    RowMatrix gy(static_cast<Eigen::Index>(g.out_ch), static_cast<Eigen::Index>(ncol));
    for (std::size_t b = 0; b < g.batch; ++b)
      for (std::size_t o = 0; o < g.out_ch; ++o) {
        const Complex* src = grad.data() + (b * g.out_ch + o) * plane;
        Complex* dst = gy.data() + o * ncol + b * plane;
        std::copy(src, src + plane, dst);
      }
    if (auto gb = sink[2]; !gb.empty()) {
      for (std::size_t o = 0; o < g.out_ch; ++o) gb[o] += gy.row(static_cast<Eigen::Index>(o)).sum();
    }
    auto gw = sink[1];
    auto gx = sink[0];
    if (gw.empty() && gx.empty()) return;
    if (!gw.empty()) {
      const auto cols = im2col(x.data(), g);
      map(gw, g.out_ch, g.rows()).noalias() += gy * cmap(cols, g.rows(), ncol).adjoint();
    }
    if (!gx.empty()) {
      RowMatrix gcols = cmap(w.data(), g.out_ch, g.rows()).adjoint() * gy;
      col2im_add(std::span<const Complex>(gcols.data(), static_cast<std::size_t>(gcols.size())), g, gx);
    }
  };
}

// Stride-1 1-D fast path: with the input stored channel-last and padded,
// (C, B*Lp) column-major, each kernel tap is one GEMM against a column-
// shifted view. Columns that straddle two batch items are computed and
// discarded.
struct Conv1dPlan {
  using ColMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic>;
  ConvGeometry g;
  std::size_t padded = 0;  // Lp
  std::size_t span = 0;    // B*Lp - K + 1

  explicit Conv1dPlan(const ConvGeometry& geom) : g(geom), padded(geom.in_w + 2 * geom.pad_w) {
    span = g.batch * padded - g.k_w + 1;
  }

  ColMatrix channel_last(std::span<const Complex> x) const {
    ColMatrix xp = ColMatrix::Zero(static_cast<Eigen::Index>(g.in_ch), static_cast<Eigen::Index>(g.batch * padded));
    for (std::size_t b = 0; b < g.batch; ++b)
      for (std::size_t c = 0; c < g.in_ch; ++c) {
        const Complex* src = x.data() + (b * g.in_ch + c) * g.in_w;
        for (std::size_t t = 0; t < g.in_w; ++t) xp(c, b * padded + t + g.pad_w) = src[t];
      }
    return xp;
  }

  ColMatrix tap(std::span<const Complex> w, std::size_t k) const {
    ColMatrix m(static_cast<Eigen::Index>(g.out_ch), static_cast<Eigen::Index>(g.in_ch));
    for (std::size_t o = 0; o < g.out_ch; ++o)
      for (std::size_t c = 0; c < g.in_ch; ++c) m(o, c) = w[(o * g.in_ch + c) * g.k_w + k];
    return m;
  }

  auto shifted(const ColMatrix& xp, std::size_t k) const {
    return xp.middleCols(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(span));
  }
};

inline bool use_conv1d_plan(const ConvGeometry& g) { return !g.two_d && g.stride_w == 1; }

inline std::vector<Complex> conv1d_values(const Tensor& x, const Tensor& w, const Tensor& bias, const ConvGeometry& g) {
  const Conv1dPlan plan(g);
  const auto xp = plan.channel_last(x.data());
  Conv1dPlan::ColMatrix y = Conv1dPlan::ColMatrix::Zero(static_cast<Eigen::Index>(g.out_ch), static_cast<Eigen::Index>(plan.span));
  for (std::size_t k = 0; k < g.k_w; ++k) y.noalias() += plan.tap(w.data(), k) * plan.shifted(xp, k);
  std::vector<Complex> out(g.batch * g.out_ch * g.out_w);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t o = 0; o < g.out_ch; ++o) {
      const Complex shift = bias.defined() ? bias[o] : Complex{};
      Complex* dst = out.data() + (b * g.out_ch + o) * g.out_w;
      for (std::size_t t = 0; t < g.out_w; ++t) dst[t] = y(o, b * plan.padded + t) + shift;
    }
  return out;
}

inline BackwardRule conv1d_rule(const Tensor& x, const Tensor& w, const ConvGeometry& g) {
  return [x, w, g](std::span<const Complex> grad, GradSink& sink) {
    const Conv1dPlan plan(g);
    using ColMatrix = Conv1dPlan::ColMatrix;
    ColMatrix gy = ColMatrix::Zero(static_cast<Eigen::Index>(g.out_ch), static_cast<Eigen::Index>(plan.span));
    for (std::size_t b = 0; b < g.batch; ++b)
      for (std::size_t o = 0; o < g.out_ch; ++o) {
        const Complex* src = grad.data() + (b * g.out_ch + o) * g.out_w;
        for (std::size_t t = 0; t < g.out_w; ++t) gy(o, b * plan.padded + t) = src[t];
      }
    if (auto gb = sink[2]; !gb.empty()) {
      for (std::size_t o = 0; o < g.out_ch; ++o) gb[o] += gy.row(static_cast<Eigen::Index>(o)).sum();
    }
    auto gw = sink[1];
    auto gx = sink[0];
    if (!gw.empty()) {
      const auto xp = plan.channel_last(x.data());
      for (std::size_t k = 0; k < g.k_w; ++k) {
        const ColMatrix gk = gy * plan.shifted(xp, k).adjoint();
        for (std::size_t o = 0; o < g.out_ch; ++o)
          for (std::size_t c = 0; c < g.in_ch; ++c) gw[(o * g.in_ch + c) * g.k_w + k] += gk(o, c);
      }
    }
    if (!gx.empty()) {
      ColMatrix gxp = ColMatrix::Zero(static_cast<Eigen::Index>(g.in_ch), static_cast<Eigen::Index>(g.batch * plan.padded));
      for (std::size_t k = 0; k < g.k_w; ++k) {
        gxp.middleCols(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(plan.span)).noalias() +=
            plan.tap(w.data(), k).adjoint() * gy;
      }
      for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t c = 0; c < g.in_ch; ++c) {
          Complex* dst = gx.data() + (b * g.in_ch + c) * g.in_w;
          for (std::size_t t = 0; t < g.in_w; ++t) dst[t] += gxp(c, b * plan.padded + t + g.pad_w);
        }
    }
  };
}

}  // namespace detail

/// Complex cross-correlation. `bias` may be undefined.
inline Tensor complex_conv(const Tensor& x, const Tensor& kernel, const Tensor& bias, const ConvOptions& opt = {}) {
  const auto g = detail::conv_geometry(x.shape(), kernel.shape(), opt);
  if (bias.defined() && bias.numel() != g.out_ch) throw ShapeError("complex_conv: bias length must equal output channels");
  if (detail::use_conv1d_plan(g)) {
    return custom_op("complex_conv", g.out_shape(), detail::conv1d_values(x, kernel, bias, g), {x, kernel, bias},
                     detail::conv1d_rule(x, kernel, g));
  }
  return custom_op("complex_conv", g.out_shape(), detail::conv_values(x, kernel, bias, g), {x, kernel, bias},
                   detail::conv_rule(x, kernel, g));
}

// ---------------------------------------------------------------------------
// Split batch normalisation

/// Running statistics; real parts belong to the real-part normaliser and
/// imaginary parts to the imaginary-part normaliser.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;

  static BatchNormState fresh(std::size_t channels) {
    return {Tensor::zeros({channels}), Tensor::full({channels}, Complex{1.0, 1.0})};
  }
};

struct BatchNormOptions {
  bool training = true;
  double epsilon = 1e-5;
  double momentum = 0.1;
};

/// cBN(z) = BN(Re z) + j BN(Im z) per channel over batch and spatial axes.
/// `scale` and `shift` hold (gamma_re + j gamma_im) and (beta_re + j beta_im).
inline Tensor complex_batchnorm(const Tensor& x, const Tensor& scale, const Tensor& shift, BatchNormState& state,
                                const BatchNormOptions& opt) {
  if (x.rank() < 2) throw ShapeError("complex_batchnorm expects (B, C, ...)");
  const std::size_t batch = x.dim(0), channels = x.dim(1);
  const std::size_t spatial = x.numel() / (batch * channels);
  if (scale.numel() != channels || shift.numel() != channels || state.running_mean.numel() != channels ||
      state.running_var.numel() != channels) {
    throw ShapeError("complex_batchnorm: parameter length must equal channel count " + std::to_string(channels));
  }
  if (opt.training && batch < 2) throw UsageError("complex_batchnorm: training mode needs a batch of at least 2");
  const std::size_t count = batch * spatial;
  const auto xv = x.data();

  // Per channel: mean and inverse std for both parts.
  std::vector<Complex> mean(channels), inv_std(channels);
  if (opt.training) {
    auto rm = state.running_mean.mutable_data();
    auto rv = state.running_var.mutable_data();
    for (std::size_t c = 0; c < channels; ++c) {
      double sr = 0, si = 0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t s = 0; s < spatial; ++s) {
          const Complex v = xv[(b * channels + c) * spatial + s];
          sr += v.real();
          si += v.imag();
        }
      const double mr = sr / static_cast<double>(count), mi = si / static_cast<double>(count);
      double vr = 0, vi = 0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t s = 0; s < spatial; ++s) {
          const Complex v = xv[(b * channels + c) * spatial + s];
          vr += (v.real() - mr) * (v.real() - mr);
          vi += (v.imag() - mi) * (v.imag() - mi);
        }
      vr /= static_cast<double>(count);
      vi /= static_cast<double>(count);
      mean[c] = {mr, mi};
      inv_std[c] = {1.0 / std::sqrt(vr + opt.epsilon), 1.0 / std::sqrt(vi + opt.epsilon)};
      const double unbias = static_cast<double>(count) / static_cast<double>(count - 1);
      rm[c] = (1.0 - opt.momentum) * rm[c] + opt.momentum * mean[c];
      rv[c] = (1.0 - opt.momentum) * rv[c] + opt.momentum * Complex{vr * unbias, vi * unbias};
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      const Complex m = state.running_mean[c];
      const Complex v = state.running_var[c];
      mean[c] = m;
      inv_std[c] = {1.0 / std::sqrt(v.real() + opt.epsilon), 1.0 / std::sqrt(v.imag() + opt.epsilon)};
    }
  }

  std::vector<Complex> normed(x.numel()), out(x.numel());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c) {
      const Complex gamma = scale[c], beta = shift[c];
      for (std::size_t s = 0; s < spatial; ++s) {
        const std::size_t i = (b * channels + c) * spatial + s;
        const Complex n{(xv[i].real() - mean[c].real()) * inv_std[c].real(),
                        (xv[i].imag() - mean[c].imag()) * inv_std[c].imag()};
        normed[i] = n;
        out[i] = {gamma.real() * n.real() + beta.real(), gamma.imag() * n.imag() + beta.imag()};
      }
    }

  const bool training = opt.training;
  return custom_op(
      "complex_batchnorm", x.shape(), std::move(out), {x, scale, shift},
      [scale, normed = std::move(normed), inv_std = std::move(inv_std), batch, channels, spatial, count, training](
          std::span<const Complex> g, GradSink& sink) {
        auto gx = sink[0];
        auto gscale = sink[1];
        auto gshift = sink[2];
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_gr = 0, sum_gi = 0, sum_gnr = 0, sum_gni = 0;
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t s = 0; s < spatial; ++s) {
              const std::size_t i = (b * channels + c) * spatial + s;
              sum_gr += g[i].real();
              sum_gi += g[i].imag();
              sum_gnr += g[i].real() * normed[i].real();
              sum_gni += g[i].imag() * normed[i].imag();
            }
          if (!gscale.empty()) gscale[c] += Complex{sum_gnr, sum_gni};
          if (!gshift.empty()) gshift[c] += Complex{sum_gr, sum_gi};
          if (gx.empty()) continue;
          const Complex gamma = scale[c];
          const double kr = gamma.real() * inv_std[c].real();
          const double ki = gamma.imag() * inv_std[c].imag();
          const double inv_n = 1.0 / static_cast<double>(count);
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t s = 0; s < spatial; ++s) {
              const std::size_t i = (b * channels + c) * spatial + s;
              if (training) {
                gx[i] += Complex{kr * (g[i].real() - sum_gr * inv_n - normed[i].real() * sum_gnr * inv_n),
                                 ki * (g[i].imag() - sum_gi * inv_n - normed[i].imag() * sum_gni * inv_n)};
              } else {
                gx[i] += Complex{kr * g[i].real(), ki * g[i].imag()};
              }
            }
        }
      });
}

// ---------------------------------------------------------------------------
// Activations and pooling

/// Passes z when Re z >= 0 and Im z >= 0, else 0. The gradient is zero on
/// the axes themselves.
inline Tensor crelu(const Tensor& x) {
  std::vector<Complex> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Complex z = x[i];
    out[i] = (z.real() >= 0.0 && z.imag() >= 0.0) ? z : Complex{};
  }
  return custom_op("crelu", x.shape(), std::move(out), {x}, [x](std::span<const Complex> g, GradSink& sink) {
    auto gx = sink[0];
    const auto xv = x.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i].real() > 0.0 && xv[i].imag() > 0.0) gx[i] += g[i];
    }
  });
}

/// Mean over non-overlapping windows of the trailing spatial axes.
/// (B, C, L) uses `window` along L; (B, C, H, W) uses window x window.
/// Partial windows at the end are dropped.
inline Tensor complex_avg_pool(const Tensor& x, std::size_t window) {
  if (x.rank() != 3 && x.rank() != 4) throw ShapeError("complex_avg_pool expects (B,C,L) or (B,C,H,W)");
  if (window == 0) throw ShapeError("complex_avg_pool: window must be >= 1");
  const bool two_d = x.rank() == 4;
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t in_h = two_d ? x.dim(2) : 1, in_w = x.shape().back();
  const std::size_t win_h = two_d ? window : 1;
  const std::size_t out_h = in_h / win_h, out_w = in_w / window;
  if (out_h == 0 || out_w == 0) {
    throw ShapeError("complex_avg_pool: window " + std::to_string(window) + " exceeds input " + shape_str(x.shape()));
  }
  Shape out_shape = two_d ? Shape{x.dim(0), x.dim(1), out_h, out_w} : Shape{x.dim(0), x.dim(1), out_w};
  const double inv = 1.0 / static_cast<double>(win_h * window);
  std::vector<Complex> out(planes * out_h * out_w);
  const auto xv = x.data();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t oh = 0; oh < out_h; ++oh)
      for (std::size_t ow = 0; ow < out_w; ++ow) {
        Complex acc{};
        for (std::size_t i = 0; i < win_h; ++i)
          for (std::size_t j = 0; j < window; ++j) acc += xv[(p * in_h + oh * win_h + i) * in_w + ow * window + j];
        out[(p * out_h + oh) * out_w + ow] = acc * inv;
      }
  return custom_op("complex_avg_pool", std::move(out_shape), std::move(out), {x},
                   [=](std::span<const Complex> g, GradSink& sink) {
                     auto gx = sink[0];
                     for (std::size_t p = 0; p < planes; ++p)
                       for (std::size_t oh = 0; oh < out_h; ++oh)
                         for (std::size_t ow = 0; ow < out_w; ++ow) {
                           const Complex d = g[(p * out_h + oh) * out_w + ow] * inv;
                           for (std::size_t i = 0; i < win_h; ++i)
                             for (std::size_t j = 0; j < window; ++j) gx[(p * in_h + oh * win_h + i) * in_w + ow * window + j] += d;
                         }
                   });
}

// ---------------------------------------------------------------------------
// Affine maps, realification, softmax

/// y = x W^T + b over the last axis. W is (out, in); `bias` may be undefined.
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || x.rank() == 0 || x.shape().back() != weight.dim(1)) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(weight.shape()));
  }
  const std::size_t in = weight.dim(1), out_dim = weight.dim(0), rows = x.numel() / in;
  if (bias.defined() && bias.numel() != out_dim) throw ShapeError("linear: bias length mismatch");
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  std::vector<Complex> out(rows * out_dim);
  auto y = detail::map(out, rows, out_dim);
  y.noalias() = detail::cmap(x.data(), rows, in) * detail::cmap(weight.data(), out_dim, in).transpose();
  if (bias.defined()) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t o = 0; o < out_dim; ++o) out[r * out_dim + o] += bias[o];
  }
  return custom_op("linear", std::move(out_shape), std::move(out), {x, weight, bias},
                   [x, weight, rows, in, out_dim](std::span<const Complex> g, GradSink& sink) {
                     const auto gy = detail::cmap(g, rows, out_dim);
                     if (auto gx = sink[0]; !gx.empty()) {
                       detail::map(gx, rows, in).noalias() += gy * detail::cmap(weight.data(), out_dim, in).conjugate();
                     }
                     if (auto gw = sink[1]; !gw.empty()) {
                       detail::map(gw, out_dim, in).noalias() += gy.transpose() * detail::cmap(x.data(), rows, in).conjugate();
                     }
                     if (auto gb = sink[2]; !gb.empty()) {
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t o = 0; o < out_dim; ++o) gb[o] += g[r * out_dim + o];
                     }
                   });
}

/// (..., n) complex -> (..., 2n) real: all real parts, then all imaginary parts.
inline Tensor realify(const Tensor& x) {
  if (x.rank() == 0) throw ShapeError("realify needs rank >= 1");
  const std::size_t n = x.shape().back(), rows = x.numel() / n;
  Shape out_shape = x.shape();
  out_shape.back() = 2 * n;
  std::vector<Complex> out(rows * 2 * n);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < n; ++i) {
      out[r * 2 * n + i] = x[r * n + i].real();
      out[r * 2 * n + n + i] = x[r * n + i].imag();
    }
  return custom_op("realify", std::move(out_shape), std::move(out), {x},
                   [n, rows](std::span<const Complex> g, GradSink& sink) {
                     auto gx = sink[0];
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t i = 0; i < n; ++i) {
                         gx[r * n + i] += Complex{g[r * 2 * n + i].real(), g[r * 2 * n + n + i].real()};
                       }
                   });
}

/// Row-wise softmax of the real parts over the last axis.
inline Tensor softmax_lastdim(const Tensor& x) {
  if (x.rank() == 0) throw ShapeError("softmax needs rank >= 1");
  const std::size_t n = x.shape().back(), rows = x.numel() / n;
  std::vector<Complex> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) hi = std::max(hi, x[r * n + i].real());
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = std::exp(x[r * n + i].real() - hi);
      out[r * n + i] = e;
      total += e;
    }
    for (std::size_t i = 0; i < n; ++i) out[r * n + i] /= total;
  }
  std::vector<double> probs(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) probs[i] = out[i].real();
  return custom_op("softmax", x.shape(), std::move(out), {x},
                   [probs = std::move(probs), n, rows](std::span<const Complex> g, GradSink& sink) {
                     auto gx = sink[0];
                     for (std::size_t r = 0; r < rows; ++r) {
                       double dot = 0;
                       for (std::size_t i = 0; i < n; ++i) dot += probs[r * n + i] * g[r * n + i].real();
                       for (std::size_t i = 0; i < n; ++i) gx[r * n + i] += probs[r * n + i] * (g[r * n + i].real() - dot);
                     }
                   });
}

// ---------------------------------------------------------------------------
// Multi-head self-attention

struct AttentionParams {
  Tensor query_weight, query_bias;
  Tensor key_weight, key_bias;
  Tensor value_weight, value_bias;
  Tensor output_weight, output_bias;
  std::size_t heads = 1;
};

/// Optional capture of the softmax weights, shape (B * heads, T, T).
struct AttentionTrace {
  Tensor weights;
};

/// Scaled dot-product self-attention with a residual connection:
/// out = x + W_o concat_h(softmax(Q_h K_h^T / sqrt(d_h)) V_h) + b_o.
/// No positional encoding, so the map is permutation-equivariant in tokens.
inline Tensor multi_head_attention(const AttentionParams& p, const Tensor& tokens, AttentionTrace* trace = nullptr) {
  if (tokens.rank() != 3) throw ShapeError("multi_head_attention expects (B, T, D), got " + shape_str(tokens.shape()));
  const std::size_t batch = tokens.dim(0), count = tokens.dim(1), width = tokens.dim(2);
  if (count == 0) throw ShapeError("multi_head_attention needs at least one token");
  if (p.heads == 0 || width % p.heads != 0) throw ShapeError("multi_head_attention: width not divisible by heads");
  if (p.query_weight.dim(1) != width) {
    throw ShapeError("multi_head_attention: token width " + std::to_string(width) + " does not match parameters (" +
                     std::to_string(p.query_weight.dim(1)) + ")");
  }
  const std::size_t head_dim = width / p.heads;
  auto split = [&](const Tensor& t) {
    // (B, T, H*dh) -> (B*H, T, dh)
    return reshape(permute(reshape(t, {batch, count, p.heads, head_dim}), {0, 2, 1, 3}),
                   {batch * p.heads, count, head_dim});
  };
  const Tensor q = split(linear(tokens, p.query_weight, p.query_bias));
  const Tensor k = split(linear(tokens, p.key_weight, p.key_bias));
  const Tensor v = split(linear(tokens, p.value_weight, p.value_bias));
  const Tensor scores = scale(bmm(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(head_dim)));
  const Tensor weights = softmax_lastdim(scores);
  if (trace) trace->weights = weights;
  const Tensor mixed = reshape(permute(reshape(bmm(weights, v), {batch, p.heads, count, head_dim}), {0, 2, 1, 3}),
                               {batch, count, width});
  return tokens + linear(mixed, p.output_weight, p.output_bias);
}

}  // namespace accor
