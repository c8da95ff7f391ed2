#pragma once

// Finite-difference audit of the backward pass. For every student
// parameter the analytic gradient of each loss term (student,
// distillation, representation, combined) is compared against a central
// difference (f(w+h) - f(w-h)) / 2h computed from value-only forward
// passes, which never touch the backward rules being audited.
//
// Relative error uses max(|analytic|, |fd|, 1e-3) as denominator: central
// differences at h = 1e-5 on O(1) losses carry roughly 1e-9 of absolute
// noise, and the floor keeps the 1e-4 gate meaningful instead of flagging
// roundoff on near-zero entries.
//
// The teacher network is cloned trainable and run through a recording tape
// so the audit can also assert that no gradient reaches it: the loss terms
// detach teacher outputs by construction.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cored/losses.hpp"
#include "cored/network.hpp"
#include "cored/repmem.hpp"
#include "cored/rng.hpp"
#include "cored/tensor.hpp"

namespace cored {

constexpr double kGradcheckStep = 1e-5;
constexpr double kGradcheckFloor = 1e-3;
constexpr double kGradcheckTolerance = 1e-4;

inline double relative_gradient_error(double analytic, double fd,
                                      double floor = kGradcheckFloor) {
  const double denom =
      std::max({std::abs(analytic), std::abs(fd), floor});
  return std::abs(analytic - fd) / denom;
}

struct ComponentAudit {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradcheckReport {
  std::vector<ComponentAudit> components;
  double max_teacher_grad = 0.0;

  double worst() const {
    double w = 0.0;
    for (const auto& c : components) w = std::max(w, c.max_rel_err);
    return w;
  }
  bool pass(double tolerance = kGradcheckTolerance) const {
    return worst() < tolerance && max_teacher_grad == 0.0;
  }
};

namespace detail {

// max over all parameters of the relative error between tape gradients and
// central differences of `value_of` (evaluated without recording)
inline double audit_parameters(const std::vector<Tensor>& params,
                               const std::function<double()>& value_of,
                               bool corrupt) {
  double worst = 0.0;
  bool corrupted_once = !corrupt;
  for (Tensor p : params) {  // handle copy: aliases the network storage
    for (std::size_t i = 0; i < p.size(); ++i) {
      double analytic = p.grad_at(i);
      if (!corrupted_once) {
        analytic += 0.01;  // deliberate defect: the audit must catch it
        corrupted_once = true;
      }
      const double keep = p.data()[i];
      p.data()[i] = keep + kGradcheckStep;
      const double up = value_of();
      p.data()[i] = keep - kGradcheckStep;
      const double down = value_of();
      p.data()[i] = keep;
      const double fd = (up - down) / (2.0 * kGradcheckStep);
      worst = std::max(worst, relative_gradient_error(analytic, fd));
    }
  }
  return worst;
}

}  // namespace detail

// Audit on a small two-weight-layer network and a random batch. `corrupt`
// injects a wrong analytic gradient so the negative control demonstrably
// fails.
inline GradcheckReport gradcheck_run(std::uint64_t seed,
                                     bool corrupt = false) {
  Rng rng(mix_seed(seed, 0x6C4D, 1));
  const std::size_t n = 6, d = 6;
  Network student({d, 5, 2}, mix_seed(seed, 0x57D, 2));
  Network teacher_src({d, 5, 2}, mix_seed(seed, 0x7EAC, 3));
  // trainable clone on the tape: lets the audit assert zero teacher grads
  Network teacher = clone_as_student(teacher_src);

  Tensor inputs(Shape{n, d}, 0.0);
  for (auto& v : inputs.data()) v = rng.uniform();
  std::vector<std::uint8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i % 2;

  const LossWeights weights;  // alpha = beta = gamma = 1, tau = 20
  const BlockSpec blocks;

  // Central differences are only trustworthy away from ReLU kinks, and the
  // representation term should not be audited as a constant zero. Resample
  // the batch until every hidden pre-activation clears the step size by a
  // wide margin and at least one sample lands in memory.
  auto batch_ok = [&] {
    Tape off(false);
    const auto sp = student.parameter_tensors();
    Tensor pre = add_bias(off, matmul(off, inputs, sp[0]), sp[1]);
    double min_abs = 1e300;
    for (double v : pre.data()) min_abs = std::min(min_abs, std::abs(v));
    Tensor t_probs = softmax(off, forward(teacher, inputs, off), 1.0);
    std::size_t bucketed = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (t_probs.at(i, labels[i]) >= blocks.start) ++bucketed;
    }
    return min_abs > 100.0 * kGradcheckStep && bucketed > 0;
  };
  for (int attempt = 0; attempt < 1000 && !batch_ok(); ++attempt) {
    for (auto& v : inputs.data()) v = rng.uniform();
  }

  enum Component { kStudent, kDistill, kRep, kTotal };
  auto component_value = [&](Component which) {
    Tape off(false);
    Tensor s_logits = forward(student, inputs, off);
    Tensor t_logits = forward(teacher, inputs, off);
    Tensor ls = student_loss(off, s_logits, labels);
    Tensor ld = distillation_loss(off, t_logits, s_logits, weights.tau);
    Tensor t_probs = softmax(off, t_logits, 1.0);
    Tensor s_probs = softmax(off, s_logits, 1.0);
    Tensor lr = representation_loss(
        off, build_memory(off, t_probs, s_probs, labels, blocks));
    switch (which) {
      case kStudent: return ls.value();
      case kDistill: return ld.value();
      case kRep: return lr.value();
      case kTotal:
        return combine(off, ls, ld, lr, weights).total.value();
    }
    throw ContractError("unreachable");
  };

  auto component_backward = [&](Component which) {
    student.zero_grad();
    teacher.zero_grad();
    Tape tape;
    Tensor s_logits = forward(student, inputs, tape);
    Tensor t_logits = forward(teacher, inputs, tape);
    Tensor ls = student_loss(tape, s_logits, labels);
    Tensor ld = distillation_loss(tape, t_logits, s_logits, weights.tau);
    Tape off(false);
    Tensor t_probs = softmax(off, t_logits, 1.0);
    Tensor s_probs = softmax(tape, s_logits, 1.0);
    Tensor lr = representation_loss(
        tape, build_memory(tape, t_probs, s_probs, labels, blocks));
    Tensor target;
    switch (which) {
      case kStudent: target = ls; break;
      case kDistill: target = ld; break;
      case kRep: target = lr; break;
      case kTotal: target = combine(tape, ls, ld, lr, weights).total; break;
    }
    tape.backward(target);
  };

  GradcheckReport report;
  const auto params = student.parameter_tensors();
  const auto teacher_params = teacher.parameter_tensors();
  const std::pair<Component, const char*> kComponents[] = {
      {kStudent, "student_loss"},
      {kDistill, "distillation_loss"},
      {kRep, "representation_loss"},
      {kTotal, "combined_loss"},
  };
  for (const auto& [which, name] : kComponents) {
    component_backward(which);
    for (const Tensor& tp : teacher_params) {
      for (std::size_t i = 0; i < tp.size(); ++i) {
        report.max_teacher_grad =
            std::max(report.max_teacher_grad, std::abs(tp.grad_at(i)));
      }
    }
    const double err = detail::audit_parameters(
        params, [&] { return component_value(which); }, corrupt);
    report.components.push_back(ComponentAudit{name, err});
  }
  return report;
}

}  // namespace cored
