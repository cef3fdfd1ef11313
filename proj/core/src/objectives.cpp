#include "dlab/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dlab {

namespace {

constexpr double kProbFloor = 1e-300;

void check_smoothing(const SmoothingConfig& cfg) {
  if (cfg.num_classes < 1) {
    throw DomainError("smoothing: num_classes must be positive, got " +
                      std::to_string(cfg.num_classes));
  }
  if (!(cfg.alpha >= 0.0 && cfg.alpha < 1.0)) {
    throw DomainError("smoothing: alpha must lie in [0, 1), got " +
                      std::to_string(cfg.alpha));
  }
}

void check_label(int label, std::size_t num_classes, const char* who) {
  if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
    throw DomainError(std::string(who) + ": label " + std::to_string(label) +
                      " out of range for " + std::to_string(num_classes) +
                      " classes");
  }
}

}  // namespace

SoftDistribution smoothed_targets(int label, const SmoothingConfig& cfg) {
  check_smoothing(cfg);
  check_label(label, static_cast<std::size_t>(cfg.num_classes),
              "smoothed_targets");
  const double k = static_cast<double>(cfg.num_classes);
  SoftDistribution out;
  out.temperature = 1.0;
  out.probs.assign(static_cast<std::size_t>(cfg.num_classes), cfg.alpha / k);
  out.probs[static_cast<std::size_t>(label)] = 1.0 - cfg.alpha + cfg.alpha / k;
  return out;
}

SoftDistribution tempered_softmax(std::span<const double> logits,
                                  double temperature) {
  if (!(temperature > 0.0)) {
    throw DomainError("tempered_softmax: temperature must be positive, got " +
                      std::to_string(temperature));
  }
  if (logits.empty()) {
    throw ShapeError("tempered_softmax: empty logit vector");
  }
  for (double z : logits) {
    if (!std::isfinite(z)) {
      throw DomainError("tempered_softmax: non-finite logit");
    }
  }
  const double zmax = *std::max_element(logits.begin(), logits.end());
  SoftDistribution out;
  out.temperature = temperature;
  out.probs.resize(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.probs[i] = std::exp((logits[i] - zmax) / temperature);
    sum += out.probs[i];
  }
  for (double& p : out.probs) {
    p /= sum;
  }
  return out;
}

double cross_entropy(const SoftDistribution& target,
                     const SoftDistribution& pred) {
  if (target.probs.size() != pred.probs.size()) {
    throw ShapeError("cross_entropy: target has " +
                     std::to_string(target.probs.size()) + " classes, pred " +
                     std::to_string(pred.probs.size()));
  }
  double h = 0.0;
  for (std::size_t i = 0; i < target.probs.size(); ++i) {
    if (target.probs[i] == 0.0) {
      continue;  // 0 * log(0) = 0
    }
    h -= target.probs[i] * std::log(std::max(pred.probs[i], kProbFloor));
  }
  return h;
}

double smoothed_loss(std::span<const double> logits, int label,
                     const SmoothingConfig& cfg) {
  if (logits.size() != static_cast<std::size_t>(cfg.num_classes)) {
    throw ShapeError("smoothed_loss: logit count does not match num_classes");
  }
  return cross_entropy(smoothed_targets(label, cfg),
                       tempered_softmax(logits, 1.0));
}

std::vector<double> smoothed_loss_grad(std::span<const double> logits,
                                       int label, const SmoothingConfig& cfg) {
  if (logits.size() != static_cast<std::size_t>(cfg.num_classes)) {
    throw ShapeError(
        "smoothed_loss_grad: logit count does not match num_classes");
  }
  const SoftDistribution target = smoothed_targets(label, cfg);
  const SoftDistribution p = tempered_softmax(logits, 1.0);
  std::vector<double> grad(logits.size());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    grad[i] = p.probs[i] - target.probs[i];
  }
  return grad;
}

namespace {

void check_distill(std::span<const double> student_logits,
                   const SoftDistribution& teacher_probs, int hard_label,
                   const DistillConfig& cfg, const char* who) {
  if (!(cfg.temperature > 0.0)) {
    throw DomainError(std::string(who) + ": temperature must be positive");
  }
  if (!(cfg.beta >= 0.0 && cfg.beta <= 1.0)) {
    throw DomainError(std::string(who) + ": beta must lie in [0, 1], got " +
                      std::to_string(cfg.beta));
  }
  if (teacher_probs.probs.size() != student_logits.size()) {
    throw ShapeError(std::string(who) +
                     ": teacher distribution and student logits disagree on "
                     "class count");
  }
  if (teacher_probs.temperature != cfg.temperature) {
    throw DomainError(std::string(who) + ": teacher probabilities carry T=" +
                      std::to_string(teacher_probs.temperature) +
                      " but the loss was configured with T=" +
                      std::to_string(cfg.temperature));
  }
  check_label(hard_label, student_logits.size(), who);
}

}  // namespace

double distill_loss(std::span<const double> student_logits,
                    const SoftDistribution& teacher_probs, int hard_label,
                    const DistillConfig& cfg) {
  check_distill(student_logits, teacher_probs, hard_label, cfg,
                "distill_loss");
  const double t = cfg.temperature;
  double loss = 0.0;
  if (cfg.beta < 1.0) {
    SoftDistribution onehot;
    onehot.probs.assign(student_logits.size(), 0.0);
    onehot.probs[static_cast<std::size_t>(hard_label)] = 1.0;
    loss += (1.0 - cfg.beta) *
            cross_entropy(onehot, tempered_softmax(student_logits, 1.0));
  }
  if (cfg.beta > 0.0) {
    loss += cfg.beta * t * t *
            cross_entropy(teacher_probs, tempered_softmax(student_logits, t));
  }
  return loss;
}

std::vector<double> distill_loss_grad(std::span<const double> student_logits,
                                      const SoftDistribution& teacher_probs,
                                      int hard_label,
                                      const DistillConfig& cfg) {
  check_distill(student_logits, teacher_probs, hard_label, cfg,
                "distill_loss_grad");
  const double t = cfg.temperature;
  std::vector<double> grad(student_logits.size(), 0.0);
  if (cfg.beta < 1.0) {
    const SoftDistribution p1 = tempered_softmax(student_logits, 1.0);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      grad[i] += (1.0 - cfg.beta) * p1.probs[i];
    }
    grad[static_cast<std::size_t>(hard_label)] -= 1.0 - cfg.beta;
  }
  if (cfg.beta > 0.0) {
    // d/dz of T^2 * H(q, softmax(z/T)) is T * (softmax(z/T) - q); one factor
    // of T survives the chain rule through z/T.
    const SoftDistribution pt = tempered_softmax(student_logits, t);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      grad[i] += cfg.beta * t * (pt.probs[i] - teacher_probs.probs[i]);
    }
  }
  return grad;
}

}  // namespace dlab
