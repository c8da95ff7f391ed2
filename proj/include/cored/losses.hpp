#pragma once

// Loss terms of the teacher-student continual objective:
//   student:        mean cross-entropy against hard (or mixed soft) labels
//   distillation:   mean soft-target cross-entropy between tempered softmax
//                   distributions; teacher targets are detached so no
//                   gradient ever reaches the teacher
//   combine:        total = alpha * L_S + beta * L_D + gamma * L_R
//
// Probabilities are clamped to [1e-12, 1 - 1e-12] before any log, far below
// gradient-check resolution. All batch reductions are means, so loss scale
// does not depend on batch size. Classic distillation rescales the soft term
// by tau^2 to balance gradient magnitudes; that is off by default here and
// available via distill_tau_squared.

#include <cstdint>
#include <vector>

#include "cored/errors.hpp"
#include "cored/tensor.hpp"

namespace cored {

constexpr double kProbEps = 1e-12;

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  double tau = 20.0;
  bool distill_tau_squared = false;

  void validate() const {
    if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) {
      throw ParameterError("loss weights must be non-negative");
    }
    if (tau <= 0.0) {
      throw ParameterError("distillation temperature must be positive");
    }
  }
};

// plain-number snapshot of a breakdown, for logging
struct LossValues {
  double student = 0.0;
  double distillation = 0.0;
  double representation = 0.0;
  double total = 0.0;
};

struct LossBreakdown {
  Tensor student;
  Tensor distillation;
  Tensor representation;
  Tensor total;

  LossValues values() const {
    return LossValues{student.value(), distillation.value(),
                      representation.value(), total.value()};
  }
};

namespace detail {

inline void require_logit_batch(const Tensor& logits, const char* op) {
  if (logits.ndim() != 2 || logits.cols() != 2) {
    throw DimensionError(std::string(op) + " expects [N x 2] logits, got " +
                         shape_str(logits.shape()));
  }
  if (logits.rows() == 0) {
    throw ParameterError(std::string(op) + " on an empty batch");
  }
}

}  // namespace detail

// mean over the batch of -log softmax(logits)[true class]
inline Tensor student_loss(Tape& tape, const Tensor& logits,
                           const std::vector<std::uint8_t>& labels) {
  detail::require_logit_batch(logits, "student_loss");
  if (labels.size() != logits.rows()) {
    throw DimensionError("student_loss: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(logits.rows()) +
                         " rows");
  }
  for (std::uint8_t l : labels) {
    if (l > 1) {
      throw DataError("student_loss label outside {0,1}: " +
                      std::to_string(int(l)));
    }
  }
  Tensor probs = softmax(tape, logits, 1.0);
  Tensor picked = select_true_class(tape, probs, labels);
  Tensor safe = clamp(tape, picked, kProbEps, 1.0 - kProbEps);
  return scale(tape, mean(tape, log(tape, safe)), -1.0);
}

// soft-label variant used after CutMix: mean of -sum_c t[i][c] log p[i][c];
// soft labels are constants (rows must sum to 1)
inline Tensor student_loss_soft(Tape& tape, const Tensor& logits,
                                const Tensor& soft_labels) {
  detail::require_logit_batch(logits, "student_loss_soft");
  detail::require_same_shape(logits, soft_labels, "student_loss_soft");
  for (std::size_t i = 0; i < soft_labels.rows(); ++i) {
    const double s = soft_labels.at(i, 0) + soft_labels.at(i, 1);
    if (s < 1.0 - 1e-9 || s > 1.0 + 1e-9 || soft_labels.at(i, 0) < 0.0 ||
        soft_labels.at(i, 1) < 0.0) {
      throw DataError("soft label row " + std::to_string(i) +
                      " is not a distribution");
    }
  }
  Tensor probs = clamp(tape, softmax(tape, logits, 1.0), kProbEps,
                       1.0 - kProbEps);
  Tensor weighted = mul(tape, soft_labels.detached(), log(tape, probs));
  return scale(tape, mean(tape, row_sum(tape, weighted)), -1.0);
}

// mean over the batch of -sum_c softmax(t/tau)[c] * log softmax(s/tau)[c];
// teacher targets are computed off-tape (detached) by construction
inline Tensor distillation_loss(Tape& tape, const Tensor& teacher_logits,
                                const Tensor& student_logits, double tau,
                                bool tau_squared = false) {
  detail::require_logit_batch(student_logits, "distillation_loss");
  detail::require_same_shape(teacher_logits, student_logits,
                             "distillation_loss");
  if (tau <= 0.0) {
    throw ParameterError("distillation temperature must be positive");
  }
  Tape off(false);
  Tensor targets = softmax(off, teacher_logits.detached(), tau);
  Tensor probs = clamp(tape, softmax(tape, student_logits, tau), kProbEps,
                       1.0 - kProbEps);
  Tensor weighted = mul(tape, targets, log(tape, probs));
  Tensor loss = scale(tape, mean(tape, row_sum(tape, weighted)), -1.0);
  if (tau_squared) loss = scale(tape, loss, tau * tau);
  return loss;
}

// total = alpha * L_S + beta * L_D + gamma * L_R; undefined components are
// treated as literal zeros (and reported as such)
inline LossBreakdown combine(Tape& tape, const Tensor& student,
                             const Tensor& distillation,
                             const Tensor& representation,
                             const LossWeights& weights) {
  weights.validate();
  LossBreakdown out;
  out.student = student.defined() ? student : Tensor::scalar(0.0);
  out.distillation =
      distillation.defined() ? distillation : Tensor::scalar(0.0);
  out.representation =
      representation.defined() ? representation : Tensor::scalar(0.0);

  Tensor total;
  auto accumulate = [&](const Tensor& term, double w) {
    if (term.size() != 1) {
      throw ContractError("combine expects scalar loss terms");
    }
    Tensor scaled = scale(tape, term, w);
    total = total.defined() ? add(tape, total, scaled) : scaled;
  };
  accumulate(out.student, weights.alpha);
  accumulate(out.distillation, weights.beta);
  accumulate(out.representation, weights.gamma);
  out.total = total;
  return out;
}

}  // namespace cored
