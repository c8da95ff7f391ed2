#pragma once

// Sequential task learning. Task 1 trains a fresh student on the plain
// student loss (with CutMix); the result is frozen into the first teacher.
// Every later task clones the teacher into a trainable student, trains it
// under the strategy's objective and promotes it to become the next
// teacher:
//   CoReD    student + distillation + representation terms
//   DL       student + distillation (gamma = 0)
//   TF       student loss only (plain fine-tuning)
//   TG_L2SP  student loss + lambda * ||w - w_source||^2
// The loop reads only the strategy's weights, so CoReD with gamma = 0
// follows the DL code path bit for bit, and with beta = gamma = 0 the TF
// path; CutMix only ever feeds the student term, the distillation and
// representation terms see the un-mixed batch.
//
// Early stopping watches the strategy objective on the validation split
// with a patience counter; the parameters of the best epoch are restored
// before promotion. All randomness derives from (seed, sequence position,
// epoch), so runs are reproducible and identical across strategies.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cored/data.hpp"
#include "cored/errors.hpp"
#include "cored/losses.hpp"
#include "cored/metrics.hpp"
#include "cored/network.hpp"
#include "cored/repmem.hpp"
#include "cored/rng.hpp"
#include "cored/tensor.hpp"

namespace cored {

enum class StrategyKind { CoReD, TF, TG_L2SP, DL };

inline std::string to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::CoReD: return "CoReD";
    case StrategyKind::TF: return "TF";
    case StrategyKind::TG_L2SP: return "TG_L2SP";
    case StrategyKind::DL: return "DL";
  }
  throw ContractError("unknown strategy kind");
}

inline StrategyKind strategy_from_string(const std::string& name) {
  if (name == "CoReD") return StrategyKind::CoReD;
  if (name == "TF") return StrategyKind::TF;
  if (name == "TG_L2SP") return StrategyKind::TG_L2SP;
  if (name == "DL") return StrategyKind::DL;
  throw ParameterError("unknown strategy '" + name + "'");
}

// The factories zero out the terms a baseline does not use; the training
// loop consumes only weights + l2sp_lambda, never the kind tag.
struct Strategy {
  StrategyKind kind = StrategyKind::CoReD;
  LossWeights weights;
  double l2sp_lambda = 0.0;

  static Strategy cored(LossWeights w = {}) {
    w.validate();
    return Strategy{StrategyKind::CoReD, w, 0.0};
  }
  static Strategy dl(LossWeights w = {}) {
    w.gamma = 0.0;
    w.validate();
    return Strategy{StrategyKind::DL, w, 0.0};
  }
  static Strategy tf(LossWeights w = {}) {
    w.beta = 0.0;
    w.gamma = 0.0;
    w.validate();
    return Strategy{StrategyKind::TF, w, 0.0};
  }
  static Strategy tg_l2sp(double lambda = 0.01, LossWeights w = {}) {
    if (lambda < 0.0) throw ParameterError("l2sp lambda must be non-negative");
    w.beta = 0.0;
    w.gamma = 0.0;
    w.validate();
    return Strategy{StrategyKind::TG_L2SP, w, lambda};
  }
  static Strategy named(const std::string& name, LossWeights w = {},
                        double lambda = 0.01) {
    switch (strategy_from_string(name)) {
      case StrategyKind::CoReD: return cored(w);
      case StrategyKind::DL: return dl(w);
      case StrategyKind::TF: return tf(w);
      case StrategyKind::TG_L2SP: return tg_l2sp(lambda, w);
    }
    throw ContractError("unreachable");
  }
};

struct TrainConfig {
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  double learning_rate = 0.05;
  double momentum = 0.1;
  std::size_t batch_size = 32;
  double cutmix_probability = 0.5;
  std::vector<std::size_t> hidden_layers = {32, 16};
  std::uint64_t seed = 1;
  Strategy strategy;
  BlockSpec block_spec;

  void validate() const {
    if (max_epochs == 0) throw ParameterError("max_epochs must be positive");
    if (batch_size == 0) throw ParameterError("batch_size must be positive");
    if (learning_rate <= 0.0) {
      throw ParameterError("learning_rate must be positive");
    }
    if (momentum < 0.0 || momentum >= 1.0) {
      throw ParameterError("momentum must lie in [0, 1)");
    }
    if (cutmix_probability < 0.0 || cutmix_probability > 1.0) {
      throw ParameterError("cutmix_probability must lie in [0, 1]");
    }
    strategy.weights.validate();
    block_spec.validate();
  }
};

// Patience rule: stop once the validation loss has not strictly improved
// for `patience` consecutive epochs. Tracks which epoch was best so its
// snapshot can be restored.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  // feed one epoch's validation loss; true means stop after this epoch
  bool observe(double val_loss) {
    ++epoch_;
    if (epoch_ == 1 || val_loss < best_loss_) {
      best_loss_ = val_loss;
      best_epoch_ = epoch_;
      stale_ = 0;
      return false;
    }
    ++stale_;
    return stale_ >= patience_;
  }

  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }
  std::size_t epochs_seen() const { return epoch_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t stale_ = 0;
  std::size_t best_epoch_ = 0;
  double best_loss_ = 0.0;
};

// --------------------------------------------------------------------------
// SGD with momentum: v <- momentum * v + g ; w <- w - lr * v

struct SgdState {
  std::vector<std::vector<double>> velocity;
};

inline void sgd_step(Network& net, SgdState& state, double learning_rate,
                     double momentum) {
  if (net.frozen()) {
    throw FrozenNetworkError("sgd_step on a frozen teacher network");
  }
  auto params = net.parameter_tensors();
  if (state.velocity.empty()) {
    for (const Tensor& p : params)
      state.velocity.emplace_back(p.size(), 0.0);
  }
  if (state.velocity.size() != params.size()) {
    throw ContractError("sgd state does not match network layout");
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& p = params[t];
    auto& v = state.velocity[t];
    if (v.size() != p.size()) {
      throw ContractError("sgd velocity size mismatch");
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = momentum * v[i] + p.grad_at(i);
      p.data()[i] -= learning_rate * v[i];
    }
  }
}

// --------------------------------------------------------------------------
// training loop

using EpochCallback = std::function<void(const EpochRecord&)>;

struct TaskRunLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
};

namespace detail {

inline Tensor l2sp_penalty(Tape& tape, const Network& net,
                           const std::vector<Tensor>& anchor, double lambda) {
  Tensor acc;
  auto params = net.parameter_tensors();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor d = sub(tape, params[i], anchor[i]);
    Tensor sq = sum(tape, mul(tape, d, d));
    acc = acc.defined() ? add(tape, acc, sq) : sq;
  }
  return scale(tape, acc, lambda);
}

struct StepLosses {
  LossValues values;
  double l2sp = 0.0;
  double objective = 0.0;
};

// One objective evaluation over the given samples. When `update` is set the
// tape records, gradients flow and the caller applies the optimiser step.
// CutMix (train only) feeds exclusively the student term; distillation and
// representation terms always see the raw batch.
inline StepLosses objective_pass(
    Network& student, const Network* teacher,
    const std::vector<Tensor>* anchor, const TaskDataset& data,
    const std::vector<std::size_t>& indices, const TrainConfig& cfg,
    Rng* mix_rng, Tape* update_tape) {
  const Strategy& strat = cfg.strategy;
  const bool training = update_tape != nullptr;
  Tape local(false);
  Tape& tape = training ? *update_tape : local;

  Tensor images = data.batch_images(indices);
  const std::vector<std::uint8_t> labels = data.batch_labels(indices);
  Tensor hard = one_hot_labels(labels);

  Tensor student_inputs;
  Tensor student_targets;
  if (training && mix_rng && cfg.cutmix_probability > 0.0 &&
      indices.size() >= 2) {
    MixedBatch mixed = cutmix(images, hard, cfg.cutmix_probability, *mix_rng);
    student_inputs = flatten_images(mixed.images);
    student_targets = mixed.labels;
  } else {
    student_inputs = flatten_images(images);
    student_targets = hard;
  }

  Tensor ls = student_loss_soft(tape, forward(student, student_inputs, tape),
                                student_targets);

  Tensor ld, lr;
  const bool want_distill = teacher != nullptr && strat.weights.beta != 0.0;
  const bool want_rep = teacher != nullptr && strat.weights.gamma != 0.0;
  if (want_distill || want_rep) {
    Tensor clean = flatten_images(images);
    Tensor s_logits = forward(student, clean, tape);
    Tensor t_logits = forward(*teacher, clean);
    if (want_distill) {
      ld = distillation_loss(tape, t_logits, s_logits, strat.weights.tau,
                             strat.weights.distill_tau_squared);
    }
    if (want_rep) {
      Tape off(false);
      Tensor t_probs = softmax(off, t_logits, 1.0);
      Tensor s_probs = softmax(tape, s_logits, 1.0);
      RepresentationMemory mem =
          build_memory(tape, t_probs, s_probs, labels, cfg.block_spec);
      lr = representation_loss(tape, mem);
    }
  }

  LossBreakdown breakdown = combine(tape, ls, ld, lr, strat.weights);

  Tensor objective = breakdown.total;
  StepLosses out;
  if (strat.l2sp_lambda != 0.0) {
    if (anchor == nullptr) {
      throw ContractError("l2sp strategy requires source parameters");
    }
    Tensor penalty = l2sp_penalty(tape, student, *anchor, strat.l2sp_lambda);
    out.l2sp = penalty.value();
    objective = add(tape, objective, penalty);
  }

  out.values = breakdown.values();
  out.objective = objective.value();

  if (training) {
    student.zero_grad();
    tape.backward(objective);
  }
  return out;
}

inline TaskMetrics evaluate_split(const Network& net, const TaskDataset& data,
                                  const std::vector<std::size_t>& indices) {
  Tensor logits = forward(net, flatten_images(data.batch_images(indices)));
  Tape off(false);
  Tensor probs = softmax(off, logits, 1.0);
  const auto labels = data.batch_labels(indices);
  const auto preds = hard_predictions(probs);
  std::vector<double> scores(probs.rows());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = probs.at(i, 1);
  TaskMetrics m;
  m.task_id = data.task_id;
  m.f1 = f1_score(preds, labels, 1);
  m.auroc = auroc(scores, labels);
  m.accuracy = accuracy(preds, labels);
  return m;
}

// Trains `student` in place on the dataset's train split. Returns the log;
// parameters end at the best validation epoch.
inline TaskRunLog train_student(Network& student, const Network* teacher,
                                const TaskDataset& data,
                                const TrainConfig& cfg,
                                std::size_t sequence_position,
                                const EpochCallback& on_epoch) {
  cfg.validate();
  data.validate();
  if (student.frozen()) {
    throw FrozenNetworkError("cannot train a frozen network");
  }

  std::optional<std::vector<Tensor>> anchor;
  if (cfg.strategy.l2sp_lambda != 0.0) {
    std::vector<Tensor> frozen;
    for (const Tensor& p : student.parameter_tensors())
      frozen.push_back(p.detached());
    anchor = std::move(frozen);
  }

  SgdState sgd;
  EarlyStopper stopper(cfg.patience);
  auto best = student.snapshot();
  TaskRunLog log;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng epoch_rng(mix_seed(cfg.seed, 0xE90C, sequence_position, epoch));
    std::vector<std::size_t> order = data.train_idx;
    epoch_rng.shuffle(order);

    LossValues train_mean;
    double l2sp_mean = 0.0, objective_mean = 0.0;
    std::size_t batches = 0;
    for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), at + cfg.batch_size);
      std::vector<std::size_t> batch(order.begin() + at, order.begin() + end);
      Tape tape;
      StepLosses step = objective_pass(student, teacher,
                                       anchor ? &*anchor : nullptr, data,
                                       batch, cfg, &epoch_rng, &tape);
      if (!std::isfinite(step.objective)) {
        throw NumericError("non-finite training loss", epoch);
      }
      sgd_step(student, sgd, cfg.learning_rate, cfg.momentum);
      train_mean.student += step.values.student;
      train_mean.distillation += step.values.distillation;
      train_mean.representation += step.values.representation;
      train_mean.total += step.values.total;
      l2sp_mean += step.l2sp;
      objective_mean += step.objective;
      ++batches;
    }
    const double inv = 1.0 / double(batches);
    train_mean.student *= inv;
    train_mean.distillation *= inv;
    train_mean.representation *= inv;
    train_mean.total *= inv;
    l2sp_mean *= inv;
    objective_mean *= inv;

    StepLosses val = objective_pass(student, teacher,
                                    anchor ? &*anchor : nullptr, data,
                                    data.val_idx, cfg, nullptr, nullptr);
    if (!std::isfinite(val.objective)) {
      throw NumericError("non-finite validation loss", epoch);
    }
    TaskMetrics val_metrics = evaluate_split(student, data, data.val_idx);

    EpochRecord record;
    record.sequence_position = sequence_position;
    record.task_id = data.task_id;
    record.epoch = epoch;
    record.train = train_mean;
    record.l2sp = l2sp_mean;
    record.objective = objective_mean;
    record.val_loss = val.objective;
    record.val_f1 = val_metrics.f1;
    log.epochs.push_back(record);
    if (on_epoch) on_epoch(record);

    const bool stop = stopper.observe(val.objective);
    if (stopper.best_epoch() == epoch) best = student.snapshot();
    if (stop) break;
  }

  student.restore(best);
  log.best_epoch = stopper.best_epoch();
  return log;
}

}  // namespace detail

// Task-1 training: fresh student, student loss only (CutMix on), frozen
// teacher returned. The configured strategy's beta/gamma do not apply to
// the first task.
inline Network train_task1(const TaskDataset& data, const TrainConfig& cfg,
                           TaskRunLog* log = nullptr,
                           const EpochCallback& on_epoch = {}) {
  cfg.validate();
  TrainConfig first = cfg;
  first.strategy = Strategy::tf(cfg.strategy.weights);

  std::vector<std::size_t> sizes;
  sizes.push_back(data.pixel_count());
  for (std::size_t h : cfg.hidden_layers) sizes.push_back(h);
  sizes.push_back(2);

  Network student(sizes, cfg.seed);
  TaskRunLog run =
      detail::train_student(student, nullptr, data, first, 1, on_epoch);
  if (log) *log = std::move(run);
  return promote_to_teacher(student);
}

// --------------------------------------------------------------------------
// task sequencing

struct TaskSequenceState {
  Network teacher;                 // frozen after every step
  std::size_t steps_done = 0;      // 1 after task 1
  std::vector<TaskRunLog> history;
};

inline TaskSequenceState begin_sequence(Network teacher) {
  if (!teacher.frozen()) {
    throw ContractError("begin_sequence expects a frozen teacher");
  }
  TaskSequenceState st;
  st.teacher = std::move(teacher);
  st.steps_done = 1;
  return st;
}

// Clone teacher -> student, train under the strategy, promote the student
// to be the next teacher. The previous teacher stays untouched throughout.
inline void learn_next_task(TaskSequenceState& state, const TaskDataset& data,
                            const TrainConfig& cfg, TaskRunLog* log = nullptr,
                            const EpochCallback& on_epoch = {}) {
  if (state.steps_done == 0) {
    throw ContractError("sequence not initialised; run task 1 first");
  }
  Network student = clone_as_student(state.teacher);
  TaskRunLog run = detail::train_student(student, &state.teacher, data, cfg,
                                         state.steps_done + 1, on_epoch);
  state.teacher = promote_to_teacher(student);
  state.steps_done += 1;
  state.history.push_back(run);
  if (log) *log = std::move(run);
}

// Balanced concatenation of two tasks learned as one step.
inline void learn_two_tasks_simultaneously(TaskSequenceState& state,
                                           const TaskDataset& a,
                                           const TaskDataset& b,
                                           const TrainConfig& cfg,
                                           TaskRunLog* log = nullptr,
                                           const EpochCallback& on_epoch = {}) {
  TaskDataset merged = merge_balanced(a, b);
  learn_next_task(state, merged, cfg, log, on_epoch);
}

// test-split metrics per dataset; no updates happen (teacher stays frozen)
inline std::vector<TaskMetrics> zero_shot_eval(
    const Network& teacher, const std::vector<const TaskDataset*>& datasets) {
  std::vector<TaskMetrics> out;
  out.reserve(datasets.size());
  for (const TaskDataset* ds : datasets) {
    ds->validate();
    out.push_back(detail::evaluate_split(teacher, *ds, ds->test_idx));
  }
  return out;
}

inline TaskMetrics evaluate_test_split(const Network& net,
                                       const TaskDataset& data) {
  return detail::evaluate_split(net, data, data.test_idx);
}

}  // namespace cored
