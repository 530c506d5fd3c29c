#pragma once

// Reference computations written independently of the library: plain loops
// over real arithmetic, no shared helpers.

#include "accor/ctensor.hpp"

#include <cmath>
#include <complex>
#include <random>
#include <vector>

namespace oracle {

using C = std::complex<double>;

inline std::vector<C> random_values(std::size_t n, unsigned seed, bool complex_values = true) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<C> v(n);
  for (auto& x : v) {
    const double re = u(gen);
    x = complex_values ? C(re, u(gen)) : C(re, 0.0);
  }
  return v;
}

inline accor::Tensor random_tensor(accor::Shape shape, unsigned seed, bool complex_values = true) {
  return accor::Tensor(shape, random_values(accor::shape_numel(shape), seed, complex_values));
}

/// S[k] = sum_t s[t] (cos - j sin)(2 pi k t / N), computed with long double.
inline std::vector<C> direct_dft(const std::vector<C>& s) {
  const std::size_t n = s.size();
  std::vector<C> out(n);
  const long double two_pi = 6.283185307179586476925286766559L;
  for (std::size_t k = 0; k < n; ++k) {
    long double re = 0, im = 0;
    for (std::size_t t = 0; t < n; ++t) {
      const long double angle = two_pi * static_cast<long double>((k * t) % n) / static_cast<long double>(n);
      const long double c = std::cos(angle), si = std::sin(angle);
      re += s[t].real() * c + s[t].imag() * si;
      im += s[t].imag() * c - s[t].real() * si;
    }
    out[k] = C(static_cast<double>(re), static_cast<double>(im));
  }
  return out;
}

/// (m x k) * (k x n), row-major, triple loop on real parts.
inline std::vector<C> matmul(const std::vector<C>& a, const std::vector<C>& b, std::size_t m, std::size_t k, std::size_t n) {
  std::vector<C> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double re = 0, im = 0;
      for (std::size_t p = 0; p < k; ++p) {
        const C x = a[i * k + p], y = b[p * n + j];
        re += x.real() * y.real() - x.imag() * y.imag();
        im += x.real() * y.imag() + x.imag() * y.real();
      }
      out[i * n + j] = C(re, im);
    }
  return out;
}

/// Real 2-D cross-correlation, zero padding, input (B, Cin, H, W), kernel
/// (Cout, Cin, KH, KW). 1-D is H = KH = 1.
inline std::vector<double> real_conv(const std::vector<double>& x, const std::vector<double>& w, std::size_t batch,
                                     std::size_t cin, std::size_t h, std::size_t wd, std::size_t cout, std::size_t kh,
                                     std::size_t kw, std::size_t stride, std::size_t pad_h, std::size_t pad_w,
                                     std::size_t& oh, std::size_t& ow) {
  oh = (h + 2 * pad_h - kh) / stride + 1;
  ow = (wd + 2 * pad_w - kw) / stride + 1;
  std::vector<double> out(batch * cout * oh * ow, 0.0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t z = 0; z < ow; ++z) {
          double acc = 0;
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j) {
                const long yy = static_cast<long>(y * stride + i) - static_cast<long>(pad_h);
                const long zz = static_cast<long>(z * stride + j) - static_cast<long>(pad_w);
                if (yy < 0 || zz < 0 || yy >= static_cast<long>(h) || zz >= static_cast<long>(wd)) continue;
                acc += w[((o * cin + c) * kh + i) * kw + j] * x[((b * cin + c) * h + yy) * wd + zz];
              }
          out[((b * cout + o) * oh + y) * ow + z] = acc;
        }
  return out;
}

/// Complex conv from four real convolutions: re*re - im*im, re*im + im*re.
inline std::vector<C> four_real_conv(const std::vector<C>& x, const std::vector<C>& w, std::size_t batch, std::size_t cin,
                                     std::size_t h, std::size_t wd, std::size_t cout, std::size_t kh, std::size_t kw,
                                     std::size_t stride, std::size_t pad_h, std::size_t pad_w) {
  std::vector<double> xr, xi, wr, wi;
  for (auto v : x) {
    xr.push_back(v.real());
    xi.push_back(v.imag());
  }
  for (auto v : w) {
    wr.push_back(v.real());
    wi.push_back(v.imag());
  }
  std::size_t oh = 0, ow = 0;
  auto rr = real_conv(xr, wr, batch, cin, h, wd, cout, kh, kw, stride, pad_h, pad_w, oh, ow);
  auto ii = real_conv(xi, wi, batch, cin, h, wd, cout, kh, kw, stride, pad_h, pad_w, oh, ow);
  auto ri = real_conv(xi, wr, batch, cin, h, wd, cout, kh, kw, stride, pad_h, pad_w, oh, ow);
  auto ir = real_conv(xr, wi, batch, cin, h, wd, cout, kh, kw, stride, pad_h, pad_w, oh, ow);
  std::vector<C> out(rr.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = C(rr[i] - ii[i], ri[i] + ir[i]);
  return out;
}

/// Mean and sample variance in two passes.
inline std::pair<double, double> two_pass(const std::vector<double>& v) {
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, v.size() > 1 ? ss / static_cast<double>(v.size() - 1) : 0.0};
}

inline double max_abs_diff(std::span<const C> a, std::span<const C> b) {
  if (a.size() != b.size()) return INFINITY;
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace oracle
