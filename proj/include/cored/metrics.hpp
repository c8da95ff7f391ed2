#pragma once

// Classification metrics and the experiment report. F1 treats the fake
// class (1) as positive by default and returns 0 for degenerate inputs
// (no positive predictions or no positive labels). AUROC is exact: the
// rank-sum (Mann-Whitney) formulation with average ranks, which equals the
// probability that a random positive outscores a random negative with ties
// credited 0.5.
//
// Reports are emitted twice per run: per-epoch records as JSON Lines
// (appended and flushed as training proceeds, so an interrupted run leaves
// parseable lines) and a final summary as one JSON document. Serialisation
// is deterministic: keys are sorted and doubles use shortest round-trip
// form, so identical runs produce identical bytes.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cored/errors.hpp"
#include "cored/losses.hpp"

namespace cored {

using json = nlohmann::json;

inline double accuracy(const std::vector<std::uint8_t>& predictions,
                       const std::vector<std::uint8_t>& labels) {
  if (predictions.empty() || predictions.size() != labels.size()) {
    throw MetricError("accuracy needs matching non-empty inputs");
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    hit += predictions[i] == labels[i] ? 1 : 0;
  return double(hit) / double(labels.size());
}

inline double f1_score(const std::vector<std::uint8_t>& predictions,
                       const std::vector<std::uint8_t>& labels,
                       std::uint8_t positive_class = 1) {
  if (predictions.empty() || predictions.size() != labels.size()) {
    throw MetricError("f1_score needs matching non-empty inputs");
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred_pos = predictions[i] == positive_class;
    const bool is_pos = labels[i] == positive_class;
    if (pred_pos && is_pos) ++tp;
    if (pred_pos && !is_pos) ++fp;
    if (!pred_pos && is_pos) ++fn;
  }
  if (tp + fp == 0 || tp + fn == 0) return 0.0;
  const double precision = double(tp) / double(tp + fp);
  const double recall = double(tp) / double(tp + fn);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

// scores: probability (or any monotone score) of the positive class (1)
inline double auroc(const std::vector<double>& scores,
                    const std::vector<std::uint8_t>& labels) {
  if (scores.empty() || scores.size() != labels.size()) {
    throw MetricError("auroc needs matching non-empty inputs");
  }
  std::size_t n_pos = 0;
  for (std::uint8_t l : labels) {
    if (l > 1) throw MetricError("auroc labels must be 0 or 1");
    n_pos += l;
  }
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw MetricError("auroc needs both classes present");
  }

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * double(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  const double u =
      rank_sum_pos - double(n_pos) * double(n_pos + 1) / 2.0;
  return u / (double(n_pos) * double(n_neg));
}

// argmax over the two class probabilities; ties resolve to real (0)
inline std::vector<std::uint8_t> hard_predictions(const Tensor& probs) {
  std::vector<std::uint8_t> out(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    out[i] = probs.at(i, 1) > probs.at(i, 0) ? 1 : 0;
  }
  return out;
}

// --------------------------------------------------------------------------
// experiment report

struct TaskMetrics {
  std::string task_id;
  double f1 = 0.0;
  double auroc = 0.0;
  double accuracy = 0.0;

  json to_json() const {
    return json{{"task", task_id},
                {"f1", f1},
                {"auroc", auroc},
                {"accuracy", accuracy}};
  }
};

struct EpochRecord {
  std::size_t sequence_position = 0;  // 1 = first task
  std::string task_id;
  std::size_t epoch = 0;  // 1-based within the task
  LossValues train;       // mean over minibatches
  double l2sp = 0.0;      // parameter-anchor penalty, when active
  double objective = 0.0; // optimised scalar (total + l2sp), mean over batches
  double val_loss = 0.0;  // same objective on the validation split
  double val_f1 = 0.0;

  json to_json() const {
    return json{{"position", sequence_position},
                {"task", task_id},
                {"epoch", epoch},
                {"student_loss", train.student},
                {"distillation_loss", train.distillation},
                {"representation_loss", train.representation},
                {"total_loss", train.total},
                {"l2sp_penalty", l2sp},
                {"objective", objective},
                {"val_loss", val_loss},
                {"val_f1", val_f1}};
  }
};

// metrics on every task seen so far, captured after finishing a step
struct TaskBlock {
  std::size_t sequence_position = 0;
  std::string learned;  // task(s) finishing this step, e.g. "task2" / "task2+task3"
  std::vector<TaskMetrics> metrics;

  double average_f1() const {
    double s = 0.0;
    for (const auto& m : metrics) s += m.f1;
    return metrics.empty() ? 0.0 : s / double(metrics.size());
  }

  json to_json() const {
    json arr = json::array();
    for (const auto& m : metrics) arr.push_back(m.to_json());
    return json{{"position", sequence_position},
                {"learned", learned},
                {"metrics", arr},
                {"average_f1", average_f1()}};
  }
};

struct ExperimentReport {
  std::string strategy;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::vector<std::string> sequence;  // human-readable task steps
  std::vector<EpochRecord> epochs;
  std::vector<TaskBlock> blocks;

  json summary_json() const {
    json seq = json::array();
    for (const auto& s : sequence) seq.push_back(s);
    json blk = json::array();
    for (const auto& b : blocks) blk.push_back(b.to_json());
    return json{{"strategy", strategy},
                {"seed", seed},
                {"config_hash", config_hash},
                {"sequence", seq},
                {"epochs_per_step", epoch_counts()},
                {"final_metrics", blk}};
  }

  json epoch_counts() const {
    json counts = json::array();
    std::size_t pos = 0, n = 0;
    for (const auto& e : epochs) {
      if (e.sequence_position != pos) {
        if (pos != 0) counts.push_back(n);
        pos = e.sequence_position;
        n = 0;
      }
      ++n;
    }
    if (pos != 0) counts.push_back(n);
    return counts;
  }
};

// <stem>.jsonl: one epoch record per line; <stem>.json: the summary
inline void emit_report(const ExperimentReport& report,
                        const std::filesystem::path& stem) {
  std::filesystem::path jsonl = stem;
  jsonl += ".jsonl";
  std::filesystem::path summary = stem;
  summary += ".json";
  if (stem.has_parent_path()) {
    std::filesystem::create_directories(stem.parent_path());
  }
  {
    std::ofstream out(jsonl, std::ios::trunc);
    if (!out) throw Error("cannot write " + jsonl.string());
    for (const auto& e : report.epochs) out << e.to_json().dump() << "\n";
  }
  {
    std::ofstream out(summary, std::ios::trunc);
    if (!out) throw Error("cannot write " + summary.string());
    out << report.summary_json().dump(2) << "\n";
  }
}

}  // namespace cored
