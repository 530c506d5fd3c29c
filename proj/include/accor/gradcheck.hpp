#pragma once

#include "accor/ctensor.hpp"

namespace accor {

/// Compares backward() against central differences.
///
/// `fn` must return a real scalar built from `inputs` (leaf tensors that
/// require gradients). Every real component of every input is perturbed by
/// +/- step in place and restored afterwards. Returns the largest
/// |analytic - numeric| / max(1, |numeric|).
inline double finite_diff_check(const std::function<Tensor()>& fn, std::vector<Tensor> inputs, double step) {
  if (!(step > 0.0)) throw UsageError("finite_diff_check: step must be positive");
  auto evaluate = [&] {
    NoGradGuard no_grad;
    const Tensor out = fn();
    if (out.numel() != 1 || out.item().imag() != 0.0) {
      throw UsageError("finite_diff_check: function must return a real scalar");
    }
    return out.item().real();
  };

  for (auto& t : inputs) {
    if (!t.requires_grad() || !t.is_leaf()) throw UsageError("finite_diff_check: inputs must be leaf tensors requiring grad");
    t.zero_grad();
  }
  const Tensor out = fn();
  if (out.numel() != 1 || out.item().imag() != 0.0) {
    throw UsageError("finite_diff_check: function must return a real scalar");
  }
  backward(out);

  double worst = 0.0;
  for (auto& t : inputs) {
    const std::vector<Complex> analytic = t.grad().empty() ? std::vector<Complex>(t.numel())
                                                           : std::vector<Complex>(t.grad().begin(), t.grad().end());
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      for (int part = 0; part < 2; ++part) {
        const Complex original = values[i];
        const Complex delta = part == 0 ? Complex{step, 0.0} : Complex{0.0, step};
        values[i] = original + delta;
        const double plus = evaluate();
        values[i] = original - delta;
        const double minus = evaluate();
        values[i] = original;
        const double numeric = (plus - minus) / (2.0 * step);
        const double exact = part == 0 ? analytic[i].real() : analytic[i].imag();
        worst = std::max(worst, std::abs(exact - numeric) / std::max(1.0, std::abs(numeric)));
      }
    }
  }
  return worst;
}

}  // namespace accor
