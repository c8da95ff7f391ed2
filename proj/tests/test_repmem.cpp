#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "cored/repmem.hpp"
#include "cored/rng.hpp"

using namespace cored;

namespace {

Tensor prob_rows(const std::vector<double>& p_class0) {
  std::vector<double> flat;
  for (double p : p_class0) {
    flat.push_back(p);
    flat.push_back(1.0 - p);
  }
  return Tensor(Shape{p_class0.size(), 2}, flat);
}

}  // namespace

TEST(BlockSpec, PartitionsConfidenceRange) {
  BlockSpec spec;  // 5 blocks of width 0.1 starting at 0.5
  EXPECT_EQ(spec.block_of(0.55), 0u);
  EXPECT_EQ(spec.block_of(0.65), 1u);
  EXPECT_EQ(spec.block_of(0.75), 2u);
  EXPECT_EQ(spec.block_of(0.85), 3u);
  EXPECT_EQ(spec.block_of(0.95), 4u);
}

TEST(BlockSpec, TopBoundaryClampsIntoLastBlock) {
  BlockSpec spec;
  EXPECT_EQ(spec.block_of(1.0), 4u);
  EXPECT_EQ(spec.block_of(0.999999), 4u);
}

TEST(BlockSpec, LowConfidenceIsExcluded) {
  BlockSpec spec;
  EXPECT_EQ(spec.block_of(0.49), BlockSpec::kExcluded);
  EXPECT_EQ(spec.block_of(0.0), BlockSpec::kExcluded);
  EXPECT_NE(spec.block_of(0.5), BlockSpec::kExcluded);
}

TEST(BlockSpec, SingleWideBlockCoversEverythingAboveStart) {
  BlockSpec spec{1, 0.5, 0.5};
  spec.validate();
  EXPECT_EQ(spec.block_of(0.51), 0u);
  EXPECT_EQ(spec.block_of(1.0), 0u);
  EXPECT_EQ(spec.block_of(0.49), BlockSpec::kExcluded);
}

TEST(BlockSpec, MustFitInsideProbabilityRange) {
  BlockSpec spec{6, 0.1, 0.5};  // 0.5 + 0.6 > 1
  EXPECT_THROW(spec.validate(), ParameterError);
  BlockSpec zero{0, 0.1, 0.5};
  EXPECT_THROW(zero.validate(), ParameterError);
}

TEST(RepresentationMemory, HandExampleGivesExactLoss) {
  // teacher ground-truth probs 0.72 and 0.78 land in the same block with
  // mean 0.75; student means 0.65; squared gap = 0.01
  Tape tape(false);
  Tensor teacher = prob_rows({0.72, 0.78});
  Tensor student = prob_rows({0.60, 0.70});
  RepresentationMemory mem =
      build_memory(tape, teacher, student, {0, 0}, BlockSpec{});
  EXPECT_EQ(mem.populated(), 1u);
  const MemoryBlock& block = mem.classes[0][2];
  EXPECT_EQ(block.count, 2u);
  EXPECT_DOUBLE_EQ(block.teacher_mean, 0.75);
  EXPECT_DOUBLE_EQ(block.student_mean_value(), 0.65);
  EXPECT_NEAR(representation_loss(tape, mem).value(), 0.01, 1e-12);
}

TEST(RepresentationMemory, TwoBlocksSumTheirGaps) {
  Tape tape(false);
  Tensor teacher = prob_rows({0.55, 0.95});
  Tensor student = prob_rows({0.50, 0.90});
  RepresentationMemory mem =
      build_memory(tape, teacher, student, {0, 0}, BlockSpec{});
  EXPECT_EQ(mem.populated(), 2u);
  EXPECT_NEAR(representation_loss(tape, mem).value(), 0.005, 1e-12);
}

TEST(RepresentationMemory, LowTeacherConfidenceContributesNothing) {
  Tape tape(false);
  Tensor teacher = prob_rows({0.49, 0.30, 0.75});
  Tensor student = prob_rows({0.9, 0.9, 0.75});
  RepresentationMemory mem =
      build_memory(tape, teacher, student, {0, 0, 0}, BlockSpec{});
  EXPECT_EQ(mem.populated(), 1u);
  EXPECT_NEAR(representation_loss(tape, mem).value(), 0.0, 1e-15);
}

TEST(RepresentationMemory, EmptyMemoryGivesZeroLoss) {
  Tape tape(false);
  Tensor teacher = prob_rows({0.2, 0.3});
  Tensor student = prob_rows({0.9, 0.9});
  RepresentationMemory mem =
      build_memory(tape, teacher, student, {0, 0}, BlockSpec{});
  EXPECT_EQ(mem.populated(), 0u);
  EXPECT_EQ(representation_loss(tape, mem).value(), 0.0);
}

TEST(RepresentationMemory, ClassesBucketSeparately) {
  // one real and one fake sample, both confident: two distinct blocks
  Tape tape(false);
  // label 0 reads column 0; label 1 reads column 1
  Tensor teacher(Shape{2, 2}, std::vector<double>{0.72, 0.28, 0.25, 0.75});
  Tensor student(Shape{2, 2}, std::vector<double>{0.62, 0.38, 0.35, 0.65});
  RepresentationMemory mem =
      build_memory(tape, teacher, student, {0, 1}, BlockSpec{});
  EXPECT_EQ(mem.populated(), 2u);
  EXPECT_EQ(mem.classes[0][2].count, 1u);
  EXPECT_EQ(mem.classes[1][2].count, 1u);
  EXPECT_NEAR(representation_loss(tape, mem).value(), 0.02, 1e-12);
}

TEST(RepresentationMemory, BucketingFollowsTeacherNotStudent) {
  // student is unconfident everywhere; the teacher decides membership
  Tape tape(false);
  Tensor teacher = prob_rows({0.95, 0.92});
  Tensor student = prob_rows({0.10, 0.20});
  RepresentationMemory mem =
      build_memory(tape, teacher, student, {0, 0}, BlockSpec{});
  EXPECT_EQ(mem.populated(), 1u);
  EXPECT_EQ(mem.classes[0][4].count, 2u);
  EXPECT_DOUBLE_EQ(mem.classes[0][4].student_mean_value(), 0.15);
}

TEST(RepresentationMemory, GradientFlowsOnlyThroughStudentMeans) {
  Tape tape;
  Tensor teacher_logits(Shape{2, 2},
                        std::vector<double>{2.0, 0.0, 1.5, 0.0}, true);
  Tensor student_logits(Shape{2, 2},
                        std::vector<double>{1.0, 0.0, 0.5, 0.0}, true);
  Tape off(false);
  Tensor teacher_probs = softmax(off, teacher_logits.detached(), 1.0);
  Tensor student_probs = softmax(tape, student_logits, 1.0);
  RepresentationMemory mem =
      build_memory(tape, teacher_probs, student_probs, {0, 0}, BlockSpec{});
  ASSERT_GT(mem.populated(), 0u);
  tape.backward(representation_loss(tape, mem));

  for (std::size_t i = 0; i < teacher_logits.size(); ++i) {
    EXPECT_EQ(teacher_logits.grad_at(i), 0.0);
  }
  double student_mass = 0.0;
  for (std::size_t i = 0; i < student_logits.size(); ++i) {
    student_mass += std::abs(student_logits.grad_at(i));
  }
  EXPECT_GT(student_mass, 0.0);
}

TEST(RepresentationMemory, RejectsMalformedProbabilities) {
  Tape tape(false);
  Tensor bad_sum(Shape{1, 2}, std::vector<double>{0.8, 0.8});
  Tensor ok = prob_rows({0.7});
  EXPECT_THROW(build_memory(tape, bad_sum, ok, {0}, BlockSpec{}), DataError);
  EXPECT_THROW(build_memory(tape, ok, bad_sum, {0}, BlockSpec{}), DataError);
  EXPECT_THROW(build_memory(tape, ok, ok, {2}, BlockSpec{}), DataError);
  Tensor short_probs = prob_rows({0.7, 0.8});
  EXPECT_THROW(build_memory(tape, ok, short_probs, {0}, BlockSpec{}),
               DimensionError);
}

TEST(RepresentationMemory, RebuildingReflectsCurrentBatchOnly) {
  Tape tape(false);
  Tensor t1 = prob_rows({0.55});
  Tensor s1 = prob_rows({0.50});
  RepresentationMemory first =
      build_memory(tape, t1, s1, {0}, BlockSpec{});
  EXPECT_EQ(first.classes[0][0].count, 1u);

  Tensor t2 = prob_rows({0.95});
  Tensor s2 = prob_rows({0.90});
  RepresentationMemory second =
      build_memory(tape, t2, s2, {0}, BlockSpec{});
  EXPECT_EQ(second.classes[0][0].count, 0u);
  EXPECT_EQ(second.classes[0][4].count, 1u);
}
