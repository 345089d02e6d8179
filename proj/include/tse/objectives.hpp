// Copyright 2026 The tse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Scale-invariant SNR, the multi-scale loss, speaker cross-entropy and the
// joint objective.

#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tse/autograd.hpp"
#include "tse/json_util.hpp"
#include "tse/ops.hpp"
#include "tse/waveform.hpp"

namespace tse {

struct SiSnrOptions {
  bool zero_mean = true;
  // Results are clamped to [-clamp_db, +clamp_db].
  double clamp_db = 60.0;
};

struct LossWeights {
  // Shortest, middle and longest filter decoders.
  std::array<double, 3> scale_weights{0.8, 0.1, 0.1};
  double ce_weight = 0.5;

  void validate() const {
    double sum = 0.0;
    for (double w : scale_weights) {
      if (w < 0.0) throw ConfigError("scale weights must be non-negative");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("scale weights must sum to 1");
    if (ce_weight < 0.0) throw ConfigError("ce_weight must be non-negative");
  }
};

struct ObjectiveConfig {
  LossWeights weights;
  SiSnrOptions si_snr;
};

inline json to_json(const ObjectiveConfig& c) {
  return {{"scale_weights", c.weights.scale_weights},
          {"ce_weight", c.weights.ce_weight},
          {"zero_mean", c.si_snr.zero_mean},
          {"clamp_db", c.si_snr.clamp_db}};
}

inline ObjectiveConfig objective_config_from_json(const json& j) {
  ObjectiveConfig c;
  StrictObject o(j, "objectives");
  o.get("scale_weights", c.weights.scale_weights);
  o.get("ce_weight", c.weights.ce_weight);
  o.get("zero_mean", c.si_snr.zero_mean);
  o.get("clamp_db", c.si_snr.clamp_db);
  o.finish();
  c.weights.validate();
  if (!(c.si_snr.clamp_db > 0.0)) throw ConfigError("clamp_db must be positive");
  return c;
}

namespace detail {

struct SiSnrParts {
  Eigen::VectorXd est;     // centred estimate
  Eigen::VectorXd target;  // projection of the estimate onto the reference
  Eigen::VectorXd error;   // est - target
  double value = 0.0;
  bool clamped = false;
};

inline SiSnrParts si_snr_parts(std::span<const double> estimate,
                               std::span<const double> reference,
                               const SiSnrOptions& opts) {
  if (estimate.size() != reference.size()) {
    throw std::invalid_argument("si_snr: estimate has " +
                                std::to_string(estimate.size()) +
                                " samples, reference " +
                                std::to_string(reference.size()));
  }
  if (estimate.empty()) throw std::invalid_argument("si_snr: empty signals");
  const auto n = static_cast<Eigen::Index>(estimate.size());
  Eigen::VectorXd est = Eigen::Map<const Eigen::VectorXd>(estimate.data(), n);
  Eigen::VectorXd ref = Eigen::Map<const Eigen::VectorXd>(reference.data(), n);
  if (opts.zero_mean) {
    est.array() -= est.mean();
    ref.array() -= ref.mean();
  }
  const double ref_energy = ref.squaredNorm();
  if (!(ref_energy > 0.0)) {
    throw std::invalid_argument("si_snr: reference has zero energy");
  }
  SiSnrParts p;
  p.target = (est.dot(ref) / ref_energy) * ref;
  p.error = est - p.target;
  p.est = std::move(est);
  const double num = p.target.squaredNorm();
  const double den = p.error.squaredNorm();
  if (num <= 0.0) {
    // Covers the all-zero estimate, whose error term is zero as well.
    p.value = -opts.clamp_db;
    p.clamped = true;
  } else if (den <= 0.0) {
    p.value = opts.clamp_db;
    p.clamped = true;
  } else {
    p.value = 10.0 * std::log10(num / den);
    if (std::abs(p.value) >= opts.clamp_db) {
      p.value = std::copysign(opts.clamp_db, p.value);
      p.clamped = true;
    }
  }
  return p;
}

}  // namespace detail

// Scale-invariant SNR in dB: the estimate is projected onto the reference,
// and the projection's energy is compared to the residual's.
inline double si_snr(std::span<const double> estimate,
                     std::span<const double> reference,
                     const SiSnrOptions& opts = {}) {
  return detail::si_snr_parts(estimate, reference, opts).value;
}

inline double si_snr(const Waveform& estimate, const Waveform& reference,
                     const SiSnrOptions& opts = {}) {
  return si_snr(std::span<const double>(estimate.samples),
                std::span<const double>(reference.samples), opts);
}

// Evaluation metric. Same computation as si_snr.
inline double si_sdr(std::span<const double> estimate,
                     std::span<const double> reference,
                     const SiSnrOptions& opts = {}) {
  return si_snr(estimate, reference, opts);
}

inline double si_sdr(const Waveform& estimate, const Waveform& reference,
                     const SiSnrOptions& opts = {}) {
  return si_snr(estimate, reference, opts);
}

// Differentiable in the [N x 1] estimate; the reference is a constant.
inline Var si_snr(const Var& estimate, const Waveform& reference,
                  const SiSnrOptions& opts = {}) {
  if (estimate.cols() != 1) {
    throw std::invalid_argument("si_snr: estimate must be an [N x 1] column");
  }
  auto parts = detail::si_snr_parts(
      std::span<const double>(estimate.value().data(),
                              static_cast<std::size_t>(estimate.rows())),
      std::span<const double>(reference.samples), opts);
  Matrix out(1, 1);
  out(0, 0) = parts.value;
  if (parts.clamped) return make_op(std::move(out), {estimate}, [](Node&) {});
  // d/d est_c = 10/ln10 * (2 s_t / |s_t|^2 - 2 e / |e|^2); centering is a
  // symmetric projection, so the same projection applies to the gradient.
  const double k = 10.0 / std::numbers::ln10;
  Eigen::VectorXd g = k * (2.0 * parts.target / parts.target.squaredNorm() -
                           2.0 * parts.error / parts.error.squaredNorm());
  if (opts.zero_mean) g.array() -= g.mean();
  return make_op(std::move(out), {estimate}, [g](Node& n) {
    n.inputs[0]->accumulate(g * n.grad(0, 0));
  });
}

// -sum_i w_i * si_snr(estimate_i, reference).
inline Var multiscale_si_snr_loss(const std::array<Var, 3>& estimates,
                                  const Waveform& reference,
                                  const LossWeights& weights,
                                  const SiSnrOptions& opts = {}) {
  Var loss = Var::scalar(0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    if (weights.scale_weights[i] == 0.0) continue;
    loss = add(loss, scale(si_snr(estimates[i], reference, opts),
                           -weights.scale_weights[i]));
  }
  return loss;
}

inline double multiscale_si_snr_loss(const std::array<Waveform, 3>& estimates,
                                     const Waveform& reference,
                                     const LossWeights& weights,
                                     const SiSnrOptions& opts = {}) {
  double loss = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    if (weights.scale_weights[i] == 0.0) continue;
    loss -= weights.scale_weights[i] * si_snr(estimates[i], reference, opts);
  }
  return loss;
}

// -log softmax(logits)[label] for a [1 x n] logit row.
inline Var cross_entropy(const Var& logits, int label) {
  if (logits.rows() != 1) {
    throw std::invalid_argument("cross_entropy: logits must be a single row");
  }
  if (label < 0 || label >= logits.cols()) {
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) +
                            " outside [0, " + std::to_string(logits.cols()) + ")");
  }
  const auto& z = logits.value();
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  Matrix out(1, 1);
  out(0, 0) = lse - z(0, label);
  Matrix probs = (z.array() - lse).exp().matrix();
  return make_op(std::move(out), {logits}, [probs, label](Node& n) {
    Matrix g = probs;
    g(0, label) -= 1.0;
    n.inputs[0]->accumulate(g * n.grad(0, 0));
  });
}

inline double cross_entropy(std::span<const double> logits, int label) {
  Matrix z(1, static_cast<Eigen::Index>(logits.size()));
  for (std::size_t i = 0; i < logits.size(); ++i) {
    z(0, static_cast<Eigen::Index>(i)) = logits[i];
  }
  return cross_entropy(Var(std::move(z)), label).item();
}

// Multi-scale SI-SNR loss plus ce_weight * cross-entropy of the speaker head.
inline Var multitask_loss(const std::array<Var, 3>& estimates,
                          const Waveform& reference, const Var& logits,
                          int label, const LossWeights& weights,
                          const SiSnrOptions& opts = {}) {
  Var loss = multiscale_si_snr_loss(estimates, reference, weights, opts);
  if (weights.ce_weight == 0.0) return loss;
  return add(loss, scale(cross_entropy(logits, label), weights.ce_weight));
}

}  // namespace tse
