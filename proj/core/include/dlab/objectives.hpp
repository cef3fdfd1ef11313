#pragma once

#include <span>
#include <vector>

#include "dlab/error.hpp"

namespace dlab {

struct SmoothingConfig {
  double alpha = 0.0;  // mixture weight toward uniform, in [0, 1)
  int num_classes = 0;
};

struct DistillConfig {
  double temperature = 1.0;  // softening temperature T > 0
  double beta = 1.0;         // weight of the soft (teacher) term, in [0, 1]
};

/// A probability vector over classes, tagged with the softmax temperature
/// that produced it. The tag travels with the data so that a distillation
/// loss evaluated at a different temperature is a detectable error instead
/// of a silent one.
struct SoftDistribution {
  std::vector<double> probs;
  double temperature = 1.0;
};

/// Smoothed target: the one-hot vector for `label` mixed with the uniform
/// distribution, y_k = onehot_k * (1 - alpha) + alpha / K.
SoftDistribution smoothed_targets(int label, const SmoothingConfig& cfg);

/// Numerically stable softmax of logits / temperature (max subtracted
/// before exponentiation).
SoftDistribution tempered_softmax(std::span<const double> logits,
                                  double temperature);

/// Cross entropy H(target, pred) in nats. Predicted probabilities are
/// clamped at 1e-300 before the log so exact zeros stay finite.
double cross_entropy(const SoftDistribution& target,
                     const SoftDistribution& pred);

/// Cross entropy of softmax(logits) against the smoothed target, and its
/// gradient with respect to the logits.
double smoothed_loss(std::span<const double> logits, int label,
                     const SmoothingConfig& cfg);
std::vector<double> smoothed_loss_grad(std::span<const double> logits,
                                       int label, const SmoothingConfig& cfg);

/// Distillation loss
///   (1 - beta) * H(onehot(label), softmax(logits))
///     + beta * T^2 * H(teacher_probs, softmax(logits / T)).
/// The T^2 factor keeps the soft-term gradient magnitude roughly constant
/// in T. teacher_probs.temperature must equal cfg.temperature.
double distill_loss(std::span<const double> student_logits,
                    const SoftDistribution& teacher_probs, int hard_label,
                    const DistillConfig& cfg);

/// Gradient of distill_loss with respect to the student logits:
///   (1 - beta) * (softmax(z) - onehot) + beta * T * (softmax(z/T) - teacher).
std::vector<double> distill_loss_grad(std::span<const double> student_logits,
                                      const SoftDistribution& teacher_probs,
                                      int hard_label, const DistillConfig& cfg);

}  // namespace dlab
