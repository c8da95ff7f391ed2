#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "cored/losses.hpp"
#include "cored/rng.hpp"

using namespace cored;

namespace {

// Scalar reference implementations: plain double loops, one sample at a
// time, sharing no code with the tensor versions.
std::vector<double> scalar_softmax_row(const std::vector<double>& logits,
                                       double tau) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    p[j] = std::exp((logits[j] - mx) / tau);
    z += p[j];
  }
  for (double& v : p) v /= z;
  return p;
}

double scalar_student_loss(const std::vector<std::vector<double>>& logits,
                           const std::vector<std::uint8_t>& labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto p = scalar_softmax_row(logits[i], 1.0);
    total += -std::log(std::max(p[labels[i]], 1e-12));
  }
  return total / double(logits.size());
}

double scalar_distillation_loss(
    const std::vector<std::vector<double>>& teacher,
    const std::vector<std::vector<double>>& student, double tau) {
  double total = 0.0;
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    const auto pt = scalar_softmax_row(teacher[i], tau);
    const auto ps = scalar_softmax_row(student[i], tau);
    double ce = 0.0;
    for (std::size_t j = 0; j < pt.size(); ++j) {
      ce += -pt[j] * std::log(std::max(ps[j], 1e-12));
    }
    total += ce;
  }
  return total / double(teacher.size());
}

Tensor logits_tensor(const std::vector<std::vector<double>>& rows) {
  std::vector<double> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return Tensor(Shape{rows.size(), rows[0].size()}, flat);
}

}  // namespace

TEST(StudentLoss, HandValue) {
  Tape tape(false);
  Tensor logits(Shape{1, 2}, std::vector<double>{2.0, 0.0});
  const double loss = student_loss(tape, logits, {0}).value();
  EXPECT_NEAR(loss, 0.1269, 1e-4);
  EXPECT_NEAR(loss, std::log(1.0 + std::exp(-2.0)), 1e-12);
}

TEST(StudentLoss, WrongClassIsExpensive) {
  Tape tape(false);
  Tensor logits(Shape{1, 2}, std::vector<double>{2.0, 0.0});
  const double wrong = student_loss(tape, logits, {1}).value();
  EXPECT_NEAR(wrong, 2.126928, 1e-5);
}

TEST(StudentLoss, RejectsBadLabelsAndShapes) {
  Tape tape(false);
  Tensor logits(Shape{2, 2}, 0.0);
  EXPECT_THROW(student_loss(tape, logits, {0}), DimensionError);
  EXPECT_THROW(student_loss(tape, logits, {0, 2}), DataError);
  Tensor wide(Shape{1, 3}, 0.0);
  EXPECT_THROW(student_loss(tape, wide, {0}), DimensionError);
}

TEST(DistillationLoss, UniformStudentAgainstSkewedTeacherIsLogTwo) {
  // teacher probabilities [0.6, 0.4] at tau = 1, student exactly uniform
  Tape tape(false);
  Tensor teacher(Shape{1, 2},
                 std::vector<double>{std::log(0.6), std::log(0.4)});
  Tensor student(Shape{1, 2}, std::vector<double>{0.0, 0.0});
  EXPECT_NEAR(distillation_loss(tape, teacher, student, 1.0).value(),
              0.693147, 1e-6);
}

TEST(DistillationLoss, MatchingDistributionsGiveEntropy) {
  Tape tape(false);
  Tensor logits(Shape{1, 2},
                std::vector<double>{std::log(0.6), std::log(0.4)});
  EXPECT_NEAR(distillation_loss(tape, logits, logits, 1.0).value(), 0.67301,
              1e-5);
}

TEST(DistillationLoss, MinimisedExactlyAtTeacherDistribution) {
  // cross-entropy(p, q) >= entropy(p) for every q
  Rng rng(3);
  Tape tape(false);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor teacher(Shape{1, 2}, 0.0);
    Tensor student(Shape{1, 2}, 0.0);
    for (auto& v : teacher.data()) v = rng.uniform(-3.0, 3.0);
    for (auto& v : student.data()) v = rng.uniform(-3.0, 3.0);
    const double ce = distillation_loss(tape, teacher, student, 2.0).value();
    const double entropy = distillation_loss(tape, teacher, teacher, 2.0).value();
    EXPECT_GE(ce, entropy - 1e-12);
  }
}

TEST(DistillationLoss, ExtremeTemperatureApproachesLogTwo) {
  Tape tape(false);
  Tensor teacher(Shape{1, 2}, std::vector<double>{4.0, -1.0});
  Tensor student(Shape{1, 2}, std::vector<double>{-2.0, 3.0});
  EXPECT_NEAR(distillation_loss(tape, teacher, student, 1e6).value(),
              std::log(2.0), 1e-4);
}

TEST(DistillationLoss, TauSquaredFlagRescales) {
  Tape tape(false);
  Tensor teacher(Shape{2, 2}, std::vector<double>{4.0, -1.0, 0.5, 0.25});
  Tensor student(Shape{2, 2}, std::vector<double>{-2.0, 3.0, 1.0, 0.0});
  const double plain = distillation_loss(tape, teacher, student, 20.0).value();
  const double scaled =
      distillation_loss(tape, teacher, student, 20.0, true).value();
  EXPECT_NEAR(scaled, 400.0 * plain, 1e-9 * 400.0);
}

TEST(DistillationLoss, TeacherReceivesNoGradient) {
  Tape tape;
  Tensor teacher(Shape{2, 2}, std::vector<double>{1.0, -1.0, 0.5, 0.2}, true);
  Tensor student(Shape{2, 2}, std::vector<double>{0.3, 0.1, -0.4, 0.9}, true);
  Tensor loss = distillation_loss(tape, teacher, student, 20.0);
  tape.backward(loss);
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    EXPECT_EQ(teacher.grad_at(i), 0.0);
  }
  double student_grad_mass = 0.0;
  for (std::size_t i = 0; i < student.size(); ++i) {
    student_grad_mass += std::abs(student.grad_at(i));
  }
  EXPECT_GT(student_grad_mass, 0.0);
}

TEST(Losses, BatchedValuesMatchScalarReferenceLoops) {
  Rng rng(17);
  for (int batch = 0; batch < 100; ++batch) {
    const std::size_t n = 1 + rng.integer(16);
    std::vector<std::vector<double>> t_rows(n), s_rows(n);
    std::vector<std::uint8_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      t_rows[i] = {rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)};
      s_rows[i] = {rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)};
      labels[i] = std::uint8_t(rng.integer(2));
    }
    const double tau = 0.5 + rng.uniform() * 25.0;

    Tape tape(false);
    Tensor t = logits_tensor(t_rows);
    Tensor s = logits_tensor(s_rows);
    EXPECT_NEAR(student_loss(tape, s, labels).value(),
                scalar_student_loss(s_rows, labels), 1e-10);
    EXPECT_NEAR(distillation_loss(tape, t, s, tau).value(),
                scalar_distillation_loss(t_rows, s_rows, tau), 1e-10);
  }
}

TEST(Combine, WeightsScaleEachTerm) {
  Tape tape(false);
  LossWeights w;
  w.alpha = 2.0;
  w.beta = 0.5;
  w.gamma = 3.0;
  LossBreakdown out = combine(tape, Tensor::scalar(1.0), Tensor::scalar(2.0),
                              Tensor::scalar(0.25), w);
  EXPECT_DOUBLE_EQ(out.total.value(), 2.0 * 1.0 + 0.5 * 2.0 + 3.0 * 0.25);
}

TEST(Combine, ZeroGammaDropsRepresentationExactly) {
  Tape tape(false);
  LossWeights w;
  w.gamma = 0.0;
  LossBreakdown out = combine(tape, Tensor::scalar(0.7), Tensor::scalar(0.3),
                              Tensor::scalar(123.456), w);
  EXPECT_EQ(out.total.value(), 0.7 + 0.3);  // bitwise: 0 * term adds +0.0
}

TEST(Combine, UndefinedComponentsCountAsZero) {
  Tape tape(false);
  LossWeights w;
  LossBreakdown out =
      combine(tape, Tensor::scalar(0.7), Tensor(), Tensor(), w);
  EXPECT_DOUBLE_EQ(out.total.value(), 0.7);
  EXPECT_DOUBLE_EQ(out.distillation.value(), 0.0);
  EXPECT_DOUBLE_EQ(out.representation.value(), 0.0);
}

TEST(Combine, RejectsNegativeWeights) {
  LossWeights w;
  w.beta = -0.1;
  EXPECT_THROW(w.validate(), ParameterError);
  LossWeights w2;
  w2.tau = 0.0;
  EXPECT_THROW(w2.validate(), ParameterError);
}

TEST(StudentLossSoft, MatchesHardLabelsOnOneHots) {
  Tape tape(false);
  Tensor logits(Shape{2, 2}, std::vector<double>{2.0, 0.0, -1.0, 1.0});
  Tensor onehot(Shape{2, 2}, std::vector<double>{1.0, 0.0, 0.0, 1.0});
  EXPECT_NEAR(student_loss_soft(tape, logits, onehot).value(),
              student_loss(tape, logits, {0, 1}).value(), 1e-12);
}

TEST(StudentLossSoft, RejectsRowsNotSummingToOne) {
  Tape tape(false);
  Tensor logits(Shape{1, 2}, 0.0);
  Tensor bad(Shape{1, 2}, std::vector<double>{0.9, 0.3});
  EXPECT_THROW(student_loss_soft(tape, logits, bad), DataError);
}
