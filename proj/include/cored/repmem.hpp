#pragma once

// Block-partitioned representation memory. For every class the probability
// band [start, start + blocks * width] is cut into `blocks` intervals; a
// sample falls into the block that holds the teacher's ground-truth-class
// probability. Samples the teacher gets wrong (p < start) are excluded, a
// probability of exactly 1.0 clamps into the top block. The memory stores,
// per populated block, the mean teacher and mean student ground-truth-class
// probability over the same samples; the representation loss is the summed
// squared gap between those means. Teacher means are plain constants, so
// gradients flow only through the student side.

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "cored/errors.hpp"
#include "cored/tensor.hpp"

namespace cored {

struct BlockSpec {
  std::size_t blocks = 5;
  double width = 0.1;
  double start = 0.5;

  void validate() const {
    if (blocks == 0) throw ParameterError("block count must be positive");
    if (width <= 0.0) throw ParameterError("block width must be positive");
    if (start < 0.0 || start >= 1.0) {
      throw ParameterError("block start must lie in [0, 1)");
    }
    if (start + double(blocks) * width > 1.0 + 1e-12) {
      throw ParameterError("blocks must fit inside [0, 1]: start + b * v = " +
                           std::to_string(start + double(blocks) * width));
    }
  }

  // block index for a teacher ground-truth probability, or npos if excluded
  static constexpr std::size_t kExcluded = std::size_t(-1);
  std::size_t block_of(double p) const {
    if (p < start) return kExcluded;
    std::size_t k = static_cast<std::size_t>((p - start) / width);
    return k >= blocks ? blocks - 1 : k;
  }
};

struct MemoryBlock {
  std::size_t count = 0;
  double teacher_mean = 0.0;
  Tensor student_mean;  // scalar on the tape; undefined when count == 0
  double student_mean_value() const {
    return student_mean.defined() ? student_mean.value() : 0.0;
  }
};

struct RepresentationMemory {
  BlockSpec spec;
  std::array<std::vector<MemoryBlock>, 2> classes;  // [class][block]

  std::size_t populated() const {
    std::size_t n = 0;
    for (const auto& cls : classes)
      for (const auto& b : cls) n += b.count > 0 ? 1 : 0;
    return n;
  }
};

// teacher_probs / student_probs: [N x 2] softmax outputs over the same
// samples; labels: ground-truth classes. Bucketing keys on the teacher,
// student means aggregate the very same sample sets.
inline RepresentationMemory build_memory(
    Tape& tape, const Tensor& teacher_probs, const Tensor& student_probs,
    const std::vector<std::uint8_t>& labels, const BlockSpec& spec) {
  spec.validate();
  if (teacher_probs.ndim() != 2 || teacher_probs.cols() != 2) {
    throw DimensionError("build_memory expects [N x 2] probabilities, got " +
                         detail::shape_str(teacher_probs.shape()));
  }
  detail::require_same_shape(teacher_probs, student_probs, "build_memory");
  const std::size_t n = teacher_probs.rows();
  if (labels.size() != n) {
    throw DimensionError("build_memory: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n) + " rows");
  }
  for (const Tensor* t : {&teacher_probs, &student_probs}) {
    for (std::size_t i = 0; i < n; ++i) {
      const double s = t->at(i, 0) + t->at(i, 1);
      if (std::abs(s - 1.0) > 1e-6 || t->at(i, 0) < -1e-9 ||
          t->at(i, 1) < -1e-9) {
        throw DataError("probability row " + std::to_string(i) +
                        " is not a distribution");
      }
    }
  }
  for (std::uint8_t l : labels) {
    if (l > 1) {
      throw DataError("build_memory label outside {0,1}: " +
                      std::to_string(int(l)));
    }
  }

  std::array<std::vector<std::vector<std::size_t>>, 2> buckets;
  for (auto& cls : buckets) cls.assign(spec.blocks, {});
  for (std::size_t i = 0; i < n; ++i) {
    const double p = teacher_probs.at(i, labels[i]);
    const std::size_t k = spec.block_of(p);
    if (k != BlockSpec::kExcluded) buckets[labels[i]][k].push_back(i);
  }

  Tensor student_picked = select_true_class(tape, student_probs, labels);

  RepresentationMemory mem;
  mem.spec = spec;
  for (std::size_t cls = 0; cls < 2; ++cls) {
    mem.classes[cls].assign(spec.blocks, MemoryBlock{});
    for (std::size_t k = 0; k < spec.blocks; ++k) {
      const auto& idx = buckets[cls][k];
      if (idx.empty()) continue;
      MemoryBlock block;
      block.count = idx.size();
      double t_sum = 0.0;
      for (std::size_t i : idx) t_sum += teacher_probs.at(i, cls);
      block.teacher_mean = t_sum / double(idx.size());
      block.student_mean = subset_mean(tape, student_picked, idx);
      mem.classes[cls][k] = std::move(block);
    }
  }
  return mem;
}

// sum over populated blocks of (student_mean - teacher_mean)^2
inline Tensor representation_loss(Tape& tape,
                                  const RepresentationMemory& memory) {
  Tensor total;
  for (const auto& cls : memory.classes) {
    for (const MemoryBlock& block : cls) {
      if (block.count == 0) continue;
      Tensor gap = sub(tape, block.student_mean,
                       Tensor::scalar(block.teacher_mean));
      Tensor sq = mul(tape, gap, gap);
      total = total.defined() ? add(tape, total, sq) : sq;
    }
  }
  return total.defined() ? total : Tensor::scalar(0.0);
}

}  // namespace cored
