#pragma once

// Exact-length discrete Fourier transform.
//
// Lengths whose prime factors are all small use a recursive mixed-radix
// decimation-in-time transform; anything with a large prime factor goes
// through Bluestein's chirp-z identity on a power-of-two transform.

#include "accor/ctensor.hpp"

#include <array>
#include <numbers>

namespace accor {

class FftPlan {
 public:
  explicit FftPlan(std::size_t n) : n_(n) {
    if (n == 0) throw ShapeError("FFT length must be >= 1");
    twiddle_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      twiddle_[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
    }
    std::size_t rest = n;
    for (std::size_t p : {4, 2, 3, 5}) {
      while (rest % p == 0) {
        factors_.push_back(p);
        rest /= p;
      }
    }
    for (std::size_t p = 7; p * p <= rest; p += 2) {
      while (rest % p == 0) {
        factors_.push_back(p);
        rest /= p;
      }
    }
    if (rest > 1) factors_.push_back(rest);
    for (std::size_t p : factors_) {
      // p-th roots of unity W_p^(r q) = W_N^((r q mod p) N / p)
      std::vector<Complex> roots(p * p);
      for (std::size_t r = 0; r < p; ++r)
        for (std::size_t q = 0; q < p; ++q) roots[r * p + q] = twiddle_[((r * q) % p) * (n / p)];
      butterflies_.push_back(std::move(roots));
    }
    const std::size_t largest = factors_.empty() ? 1 : *std::max_element(factors_.begin(), factors_.end());
    if (largest > kMaxDirectRadix) init_bluestein();
  }

  std::size_t size() const { return n_; }
  bool uses_bluestein() const { return static_cast<bool>(conv_plan_); }

  /// X[k] = sum_t x[t] exp(-j 2 pi k t / N)
  void forward(std::span<const Complex> in, std::span<Complex> out) const {
    check(in, out);
    if (conv_plan_) {
      bluestein(in, out);
    } else {
      mixed_radix(in.data(), 1, out.data(), n_, 1, 0);
    }
  }

  /// x[t] = sum_k X[k] exp(+j 2 pi k t / N), without the 1/N factor.
  void inverse_unscaled(std::span<const Complex> in, std::span<Complex> out) const {
    check(in, out);
    std::vector<Complex> conj_in(in.size());
    std::transform(in.begin(), in.end(), conj_in.begin(), [](Complex v) { return std::conj(v); });
    forward(conj_in, out);
    for (auto& v : out) v = std::conj(v);
  }

 private:
  static constexpr std::size_t kMaxDirectRadix = 31;

  void check(std::span<const Complex> in, std::span<Complex> out) const {
    if (in.size() != n_ || out.size() != n_) throw ShapeError("FFT buffer length does not match plan length");
  }

  // Writes the length-n transform of in[0], in[stride], ... into out[0..n).
  // The twiddle for a sub-transform of length n is W_N^(j * N/n).
  void mixed_radix(const Complex* in, std::size_t stride, Complex* out, std::size_t n, std::size_t tw_step,
                   std::size_t level) const {
    if (n == 1) {
      out[0] = in[0];
      return;
    }
    const std::size_t p = factors_[level];
    const std::size_t m = n / p;
    const Complex* roots = butterflies_[level].data();
    std::array<Complex, kMaxDirectRadix> t{}, s{};
    if (m == 1) {
      for (std::size_t r = 0; r < p; ++r) t[r] = in[r * stride];
      for (std::size_t q = 0; q < p; ++q) {
        Complex acc = t[0];
        for (std::size_t r = 1; r < p; ++r) acc += t[r] * roots[r * p + q];
        out[q] = acc;
      }
      return;
    }
    for (std::size_t r = 0; r < p; ++r) {
      mixed_radix(in + r * stride, stride * p, out + r * m, m, tw_step * p, level + 1);
    }
    // n * tw_step == N, so r * k * tw_step < N.
    for (std::size_t k = 0; k < m; ++k) {
      t[0] = out[k];
      for (std::size_t r = 1; r < p; ++r) t[r] = twiddle_[r * k * tw_step] * out[r * m + k];
      for (std::size_t q = 0; q < p; ++q) {
        Complex acc = t[0];
        for (std::size_t r = 1; r < p; ++r) acc += t[r] * roots[r * p + q];
        s[q] = acc;
      }
      for (std::size_t q = 0; q < p; ++q) out[k + q * m] = s[q];
    }
  }

  void init_bluestein() {
    std::size_t m = 1;
    while (m < 2 * n_ - 1) m <<= 1;
    conv_plan_ = std::make_shared<FftPlan>(m);
    chirp_.resize(n_);
    const std::size_t period = 2 * n_;
    for (std::size_t k = 0; k < n_; ++k) {
      // exp(-j pi k^2 / N), with k^2 reduced mod 2N to keep the argument small
      const std::size_t k2 = (k * k) % period;
      chirp_[k] = std::polar(1.0, -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n_));
    }
    std::vector<Complex> b(m);
    b[0] = std::conj(chirp_[0]);
    for (std::size_t k = 1; k < n_; ++k) b[k] = b[m - k] = std::conj(chirp_[k]);
    kernel_spectrum_.resize(m);
    conv_plan_->forward(b, kernel_spectrum_);
  }

  void bluestein(std::span<const Complex> in, std::span<Complex> out) const {
    const std::size_t m = conv_plan_->size();
    std::vector<Complex> a(m), spec(m), conv(m);
    for (std::size_t k = 0; k < n_; ++k) a[k] = in[k] * chirp_[k];
    conv_plan_->forward(a, spec);
    for (std::size_t i = 0; i < m; ++i) spec[i] *= kernel_spectrum_[i];
    conv_plan_->inverse_unscaled(spec, conv);
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t k = 0; k < n_; ++k) out[k] = conv[k] * inv_m * chirp_[k];
  }

  std::size_t n_;
  std::vector<std::size_t> factors_;
  std::vector<std::vector<Complex>> butterflies_;
  std::vector<Complex> twiddle_;
  std::shared_ptr<FftPlan> conv_plan_;
  std::vector<Complex> chirp_;
  std::vector<Complex> kernel_spectrum_;
};

/// O(N^2) direct evaluation, kept for the runtime self-check.
inline std::vector<Complex> dft_direct(std::span<const Complex> x) {
  const std::size_t n = x.size();
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc{};
    for (std::size_t t = 0; t < n; ++t) {
      acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n));
    }
    out[k] = acc;
  }
  return out;
}

/// DFT along the last axis, independently for every leading index.
inline Tensor dft_1d(const Tensor& signal) {
  if (signal.rank() == 0) throw ShapeError("dft_1d needs rank >= 1");
  const std::size_t n = signal.shape().back();
  auto plan = std::make_shared<FftPlan>(n);
  const std::size_t rows = signal.numel() / n;
  std::vector<Complex> out(signal.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    plan->forward(signal.data().subspan(r * n, n), std::span(out).subspan(r * n, n));
  }
  // Linear map with matrix A; the adjoint A^H is the unscaled inverse.
  return custom_op("dft_1d", signal.shape(), std::move(out), {signal},
                   [plan, n, rows](std::span<const Complex> g, GradSink& sink) {
                     auto gx = sink[0];
                     std::vector<Complex> tmp(n);
                     for (std::size_t r = 0; r < rows; ++r) {
                       plan->inverse_unscaled(g.subspan(r * n, n), tmp);
                       for (std::size_t t = 0; t < n; ++t) gx[r * n + t] += tmp[t];
                     }
                   });
}

}  // namespace accor
