#pragma once

// Hybrid objective: (1 - alpha) * weighted cross-entropy
//                   + alpha * supervised contrastive loss on L2-normalised
//                     embeddings with temperature tau.
// Both terms read the real parts of their inputs and return real gradients.

#include "accor/ctensor.hpp"

#include <limits>

namespace accor {

struct LossConfig {
  double alpha = 0.4;
  double tau = 0.1;
  std::vector<double> class_weights;  // empty: uniform

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
    for (double w : class_weights) {
      if (!(w > 0.0)) throw std::invalid_argument("class weights must be positive");
    }
  }
};

/// w_c = N / (C * n_c); classes absent from `labels` get weight 1.
inline std::vector<double> inverse_frequency_weights(std::span<const std::size_t> labels, std::size_t n_classes) {
  std::vector<double> counts(n_classes);
  for (auto l : labels) counts.at(l) += 1.0;
  std::vector<double> w(n_classes, 1.0);
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (counts[c] > 0) w[c] = static_cast<double>(labels.size()) / (static_cast<double>(n_classes) * counts[c]);
  }
  return w;
}

/// sum_i w_{y_i} * (-log softmax(logits_i)[y_i]) / sum_i w_{y_i}
inline Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels,
                            std::span<const double> weights = {}) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy expects (batch, classes) logits");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (batch == 0 || labels.size() != batch) throw ShapeError("cross_entropy: label count does not match batch");
  if (!weights.empty() && weights.size() != classes) throw ShapeError("cross_entropy: weight count must equal classes");
  std::vector<double> probs(batch * classes), sample_w(batch);
  double total = 0, weight_sum = 0;
  for (std::size_t i = 0; i < batch; ++i) {
    if (labels[i] >= classes) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(labels[i]) + " out of range");
    }
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) hi = std::max(hi, logits[i * classes + c].real());
    double z = 0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(logits[i * classes + c].real() - hi);
    const double log_z = hi + std::log(z);
    for (std::size_t c = 0; c < classes; ++c) probs[i * classes + c] = std::exp(logits[i * classes + c].real() - log_z);
    sample_w[i] = weights.empty() ? 1.0 : weights[labels[i]];
    total += sample_w[i] * (log_z - logits[i * classes + labels[i]].real());
    weight_sum += sample_w[i];
  }
  std::vector<std::size_t> ys(labels.begin(), labels.end());
  return custom_op("cross_entropy", {}, {total / weight_sum}, {logits},
                   [probs = std::move(probs), sample_w = std::move(sample_w), ys = std::move(ys), batch, classes,
                    weight_sum](std::span<const Complex> g, GradSink& sink) {
                     auto gx = sink[0];
                     const double up = g[0].real() / weight_sum;
                     for (std::size_t i = 0; i < batch; ++i)
                       for (std::size_t c = 0; c < classes; ++c) {
                         const double d = probs[i * classes + c] - (c == ys[i] ? 1.0 : 0.0);
                         gx[i * classes + c] += up * sample_w[i] * d;
                       }
                   });
}

/// Supervised contrastive loss over a batch.
///
/// z_i = f_i / |f_i|, s_ik = z_i . z_k / tau. For each anchor with at least
/// one positive (same label, k != i):
///   l_i = -(1/|P(i)|) sum_{j in P(i)} [ s_ij - log sum_{k != i} exp(s_ik) ]
/// and the loss is the mean of l_i over those anchors, or 0 if there are none.
inline Tensor supervised_contrastive(const Tensor& embeddings, std::span<const std::size_t> labels, double tau) {
  if (embeddings.rank() != 2) throw ShapeError("supervised_contrastive expects (batch, dim) embeddings");
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  const std::size_t batch = embeddings.dim(0), dim = embeddings.dim(1);
  if (batch < 2) throw ShapeError("supervised_contrastive needs a batch of at least 2");
  if (labels.size() != batch) throw ShapeError("supervised_contrastive: label count does not match batch");

  std::vector<double> z(batch * dim), norms(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    double n2 = 0;
    for (std::size_t d = 0; d < dim; ++d) n2 += std::pow(embeddings[i * dim + d].real(), 2);
    norms[i] = std::sqrt(n2);
    if (!(norms[i] > 0.0)) {
      throw std::domain_error("supervised_contrastive: embedding " + std::to_string(i) + " has zero norm");
    }
    for (std::size_t d = 0; d < dim; ++d) z[i * dim + d] = embeddings[i * dim + d].real() / norms[i];
  }
  std::vector<double> sim(batch * batch);
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t k = 0; k < batch; ++k) {
      double dot = 0;
      for (std::size_t d = 0; d < dim; ++d) dot += z[i * dim + d] * z[k * dim + d];
      sim[i * batch + k] = dot / tau;
    }

  // coeff[i*batch+k] = dl/ds_ik summed over the anchor's terms (before 1/#anchors)
  std::vector<double> coeff(batch * batch, 0.0);
  double total = 0;
  std::size_t anchors = 0;
  for (std::size_t i = 0; i < batch; ++i) {
    std::size_t positives = 0;
    for (std::size_t k = 0; k < batch; ++k) positives += (k != i && labels[k] == labels[i]);
    if (positives == 0) continue;
    ++anchors;
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < batch; ++k)
      if (k != i) hi = std::max(hi, sim[i * batch + k]);
    double denom = 0;
    for (std::size_t k = 0; k < batch; ++k)
      if (k != i) denom += std::exp(sim[i * batch + k] - hi);
    const double lse = hi + std::log(denom);
    double term = 0;
    const double inv_p = 1.0 / static_cast<double>(positives);
    for (std::size_t k = 0; k < batch; ++k) {
      if (k == i) continue;
      const double p = std::exp(sim[i * batch + k] - lse);
      const bool pos = labels[k] == labels[i];
      if (pos) term += sim[i * batch + k] - lse;
      coeff[i * batch + k] = p - (pos ? inv_p : 0.0);
    }
    total += -term * inv_p;
  }
  const double value = anchors ? total / static_cast<double>(anchors) : 0.0;
  const double inv_anchors = anchors ? 1.0 / static_cast<double>(anchors) : 0.0;

  return custom_op("supervised_contrastive", {}, {value}, {embeddings},
                   [z = std::move(z), norms = std::move(norms), coeff = std::move(coeff), batch, dim, tau,
                    inv_anchors](std::span<const Complex> g, GradSink& sink) {
                     auto gx = sink[0];
                     const double up = g[0].real() * inv_anchors / tau;
                     std::vector<double> gz(batch * dim, 0.0);
                     for (std::size_t i = 0; i < batch; ++i)
                       for (std::size_t k = 0; k < batch; ++k) {
                         const double c = coeff[i * batch + k];
                         if (c == 0.0) continue;
                         for (std::size_t d = 0; d < dim; ++d) {
                           gz[i * dim + d] += up * c * z[k * dim + d];
                           gz[k * dim + d] += up * c * z[i * dim + d];
                         }
                       }
                     // Through z = f / |f|: df = (gz - z (z . gz)) / |f|
                     for (std::size_t i = 0; i < batch; ++i) {
                       double proj = 0;
                       for (std::size_t d = 0; d < dim; ++d) proj += z[i * dim + d] * gz[i * dim + d];
                       for (std::size_t d = 0; d < dim; ++d) {
                         gx[i * dim + d] += (gz[i * dim + d] - z[i * dim + d] * proj) / norms[i];
                       }
                     }
                   });
}

/// (1 - alpha) * cross_entropy + alpha * supervised_contrastive. Endpoint
/// values of alpha skip the unused term entirely.
inline Tensor hybrid_loss(const Tensor& logits, const Tensor& embeddings, std::span<const std::size_t> labels,
                          const LossConfig& config) {
  config.validate();
  if (logits.rank() != 2 || embeddings.rank() != 2 || logits.dim(0) != embeddings.dim(0)) {
    throw ShapeError("hybrid_loss: logits and embeddings disagree on batch size");
  }
  if (config.alpha == 0.0) return cross_entropy(logits, labels, config.class_weights);
  if (config.alpha == 1.0) return supervised_contrastive(embeddings, labels, config.tau);
  return scale(cross_entropy(logits, labels, config.class_weights), 1.0 - config.alpha) +
         scale(supervised_contrastive(embeddings, labels, config.tau), config.alpha);
}

}  // namespace accor
