#pragma once

// Experiment orchestration: a JSON run spec binds the synthetic task
// family, the training configuration, a strategy list, a seed list, and a
// task sequence (with optional two-task simultaneous groups). The runner
// trains task 1 once per seed (it only uses the plain classification loss,
// so it is shared across strategies), saves that checkpoint, then walks the
// remaining sequence once per strategy, streaming per-epoch JSON lines and
// emitting one summary per (strategy, seed) plus a cross-strategy
// comparison with per-task F1, per seed and averaged.
//
// All outputs are deterministic functions of (spec, seed): maps serialise
// with sorted keys and doubles in shortest round-trip form, so rerunning a
// command overwrites files with identical bytes.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cored/continual.hpp"
#include "cored/data.hpp"
#include "cored/errors.hpp"
#include "cored/metrics.hpp"
#include "cored/network.hpp"

namespace cored {

namespace detail {

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline void expect_keys(const json& j, const std::string& where,
                        std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ParameterError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ParameterError(where + ": unknown key '" + it.key() + "'");
    }
  }
}

inline double double_field(const json& j, const std::string& where,
                           const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) {
    throw ParameterError(where + "." + key + " must be a number");
  }
  return v.get<double>();
}

inline bool is_nonneg_int(const json& v) {
  return v.is_number_unsigned() ||
         (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

inline std::size_t size_field(const json& j, const std::string& where,
                              const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!is_nonneg_int(v)) {
    throw ParameterError(where + "." + key +
                         " must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

inline bool bool_field(const json& j, const std::string& where,
                       const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_boolean()) {
    throw ParameterError(where + "." + key + " must be a boolean");
  }
  return v.get<bool>();
}

inline std::string string_field(const json& j, const std::string& where,
                                const char* key, std::string fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_string()) {
    throw ParameterError(where + "." + key + " must be a string");
  }
  return v.get<std::string>();
}

}  // namespace detail

struct RunSpec {
  TaskFamilySpec family = TaskFamilySpec::default_family();
  TrainConfig train;  // strategy field is a prototype; kind set per run
  double l2sp_lambda = 0.01;
  std::vector<StrategyKind> strategies = {StrategyKind::TF, StrategyKind::DL,
                                          StrategyKind::CoReD};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  // 1-based task indices; inner groups of two are learned simultaneously
  std::vector<std::vector<std::size_t>> sequence = {{1}, {2}, {3}};
  std::filesystem::path out_dir;   // resolved: spec > $CORED_OUT > cored-out
  std::filesystem::path data_dir;  // resolved: spec > out_dir / "datasets"

  void validate() const {
    family.validate();
    train.validate();
    if (l2sp_lambda < 0.0) {
      throw ParameterError("l2sp_lambda must be non-negative");
    }
    if (strategies.empty()) throw ParameterError("strategies must not be empty");
    for (std::size_t i = 0; i < strategies.size(); ++i) {
      for (std::size_t j = i + 1; j < strategies.size(); ++j) {
        if (strategies[i] == strategies[j]) {
          throw ParameterError("duplicate strategy: " +
                               to_string(strategies[i]));
        }
      }
    }
    if (seeds.empty()) throw ParameterError("seeds must not be empty");
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      for (std::size_t j = i + 1; j < seeds.size(); ++j) {
        if (seeds[i] == seeds[j]) {
          throw ParameterError("duplicate seed: " + std::to_string(seeds[i]));
        }
      }
    }
    if (sequence.empty()) throw ParameterError("sequence must not be empty");
    if (sequence.front().size() != 1) {
      throw ParameterError("the first sequence step must be a single task");
    }
    std::vector<bool> seen(family.tasks.size() + 1, false);
    for (const auto& group : sequence) {
      if (group.empty() || group.size() > 2) {
        throw ParameterError("sequence groups must hold one or two tasks");
      }
      for (std::size_t t : group) {
        if (t < 1 || t > family.tasks.size()) {
          throw ParameterError("sequence references task " +
                               std::to_string(t) + " but the family defines " +
                               std::to_string(family.tasks.size()));
        }
        if (seen[t]) {
          throw ParameterError("task " + std::to_string(t) +
                               " appears twice in the sequence");
        }
        seen[t] = true;
      }
    }
  }

  Strategy strategy_for(StrategyKind kind) const {
    switch (kind) {
      case StrategyKind::CoReD: return Strategy::cored(train.strategy.weights);
      case StrategyKind::DL: return Strategy::dl(train.strategy.weights);
      case StrategyKind::TF: return Strategy::tf(train.strategy.weights);
      case StrategyKind::TG_L2SP:
        return Strategy::tg_l2sp(l2sp_lambda, train.strategy.weights);
    }
    throw ContractError("unreachable");
  }

  TrainConfig config_for(StrategyKind kind, std::uint64_t seed) const {
    TrainConfig cfg = train;
    cfg.seed = seed;
    cfg.strategy = strategy_for(kind);
    return cfg;
  }

  // every task index the sequence touches, in first-use order
  std::vector<std::size_t> tasks_in_sequence() const {
    std::vector<std::size_t> out;
    for (const auto& group : sequence) {
      for (std::size_t t : group) out.push_back(t);
    }
    return out;
  }

  static std::string step_name(const std::vector<std::size_t>& group) {
    std::string name;
    for (std::size_t t : group) {
      if (!name.empty()) name += "+";
      name += "task" + std::to_string(t);
    }
    return name;
  }

  // canonical form: defaults materialised, paths excluded (they do not
  // affect results, so they do not contribute to the config hash)
  json to_json() const {
    json tasks = json::array();
    for (const FakeParams& f : family.tasks) {
      tasks.push_back(json{{"frequency", f.frequency},
                           {"phase", f.phase},
                           {"amplitude", f.amplitude}});
    }
    json seq = json::array();
    for (const auto& group : sequence) {
      json g = json::array();
      for (std::size_t t : group) g.push_back(t);
      seq.push_back(g);
    }
    json strat = json::array();
    for (StrategyKind k : strategies) strat.push_back(to_string(k));
    const LossWeights& w = train.strategy.weights;
    return json{
        {"family",
         {{"image_size", family.image_size},
          {"real",
           {{"blob_smoothness", family.real.blob_smoothness},
            {"noise_scale", family.real.noise_scale}}},
          {"tasks", tasks},
          {"train_samples", family.train_samples},
          {"val_samples", family.val_samples},
          {"test_samples", family.test_samples},
          {"seed", family.seed}}},
        {"train",
         {{"max_epochs", train.max_epochs},
          {"patience", train.patience},
          {"learning_rate", train.learning_rate},
          {"momentum", train.momentum},
          {"batch_size", train.batch_size},
          {"cutmix_probability", train.cutmix_probability},
          {"hidden_layers", train.hidden_layers},
          {"loss_weights",
           {{"alpha", w.alpha},
            {"beta", w.beta},
            {"gamma", w.gamma},
            {"tau", w.tau},
            {"tau_squared", w.distill_tau_squared}}},
          {"blocks",
           {{"count", train.block_spec.blocks},
            {"width", train.block_spec.width},
            {"start", train.block_spec.start}}},
          {"l2sp_lambda", l2sp_lambda}}},
        {"strategies", strat},
        {"seeds", seeds},
        {"sequence", seq}};
  }

  std::uint64_t config_hash() const {
    return detail::fnv1a64(to_json().dump());
  }
};

inline std::filesystem::path default_out_dir() {
  if (const char* env = std::getenv("CORED_OUT"); env && *env) {
    return std::filesystem::path(env);
  }
  return std::filesystem::path("cored-out");
}

inline RunSpec parse_run_spec(const json& j) {
  detail::expect_keys(j, "spec",
                      {"family", "train", "strategies", "seeds", "sequence",
                       "out_dir", "data_dir"});
  RunSpec spec;

  if (j.contains("family")) {
    const json& f = j.at("family");
    detail::expect_keys(f, "family",
                        {"image_size", "real", "tasks", "train_samples",
                         "val_samples", "test_samples", "seed"});
    spec.family.image_size =
        detail::size_field(f, "family", "image_size", spec.family.image_size);
    if (f.contains("real")) {
      const json& r = f.at("real");
      detail::expect_keys(r, "family.real", {"blob_smoothness", "noise_scale"});
      spec.family.real.blob_smoothness = detail::double_field(
          r, "family.real", "blob_smoothness", spec.family.real.blob_smoothness);
      spec.family.real.noise_scale = detail::double_field(
          r, "family.real", "noise_scale", spec.family.real.noise_scale);
    }
    if (f.contains("tasks")) {
      const json& tasks = f.at("tasks");
      if (!tasks.is_array() || tasks.empty()) {
        throw ParameterError("family.tasks must be a non-empty array");
      }
      spec.family.tasks.clear();
      for (const json& t : tasks) {
        detail::expect_keys(t, "family.tasks[]",
                            {"frequency", "phase", "amplitude"});
        if (!t.contains("frequency")) {
          throw ParameterError("family.tasks[] entries need a frequency");
        }
        FakeParams p;
        p.frequency = detail::double_field(t, "family.tasks[]", "frequency", 0.0);
        p.phase = detail::double_field(t, "family.tasks[]", "phase", 0.0);
        p.amplitude =
            detail::double_field(t, "family.tasks[]", "amplitude", p.amplitude);
        spec.family.tasks.push_back(p);
      }
    }
    spec.family.train_samples = detail::size_field(f, "family", "train_samples",
                                                   spec.family.train_samples);
    spec.family.val_samples =
        detail::size_field(f, "family", "val_samples", spec.family.val_samples);
    spec.family.test_samples = detail::size_field(f, "family", "test_samples",
                                                  spec.family.test_samples);
    spec.family.seed = detail::size_field(f, "family", "seed", spec.family.seed);
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    detail::expect_keys(t, "train",
                        {"max_epochs", "patience", "learning_rate", "momentum",
                         "batch_size", "cutmix_probability", "hidden_layers",
                         "loss_weights", "blocks", "l2sp_lambda"});
    spec.train.max_epochs =
        detail::size_field(t, "train", "max_epochs", spec.train.max_epochs);
    spec.train.patience =
        detail::size_field(t, "train", "patience", spec.train.patience);
    spec.train.learning_rate = detail::double_field(
        t, "train", "learning_rate", spec.train.learning_rate);
    spec.train.momentum =
        detail::double_field(t, "train", "momentum", spec.train.momentum);
    spec.train.batch_size =
        detail::size_field(t, "train", "batch_size", spec.train.batch_size);
    spec.train.cutmix_probability = detail::double_field(
        t, "train", "cutmix_probability", spec.train.cutmix_probability);
    if (t.contains("hidden_layers")) {
      const json& h = t.at("hidden_layers");
      if (!h.is_array()) {
        throw ParameterError("train.hidden_layers must be an array");
      }
      spec.train.hidden_layers.clear();
      for (const json& v : h) {
        if (!detail::is_nonneg_int(v) || v.get<std::size_t>() == 0) {
          throw ParameterError(
              "train.hidden_layers entries must be positive integers");
        }
        spec.train.hidden_layers.push_back(v.get<std::size_t>());
      }
    }
    if (t.contains("loss_weights")) {
      const json& w = t.at("loss_weights");
      detail::expect_keys(w, "train.loss_weights",
                          {"alpha", "beta", "gamma", "tau", "tau_squared"});
      LossWeights& lw = spec.train.strategy.weights;
      lw.alpha = detail::double_field(w, "train.loss_weights", "alpha", lw.alpha);
      lw.beta = detail::double_field(w, "train.loss_weights", "beta", lw.beta);
      lw.gamma = detail::double_field(w, "train.loss_weights", "gamma", lw.gamma);
      lw.tau = detail::double_field(w, "train.loss_weights", "tau", lw.tau);
      lw.distill_tau_squared = detail::bool_field(
          w, "train.loss_weights", "tau_squared", lw.distill_tau_squared);
    }
    if (t.contains("blocks")) {
      const json& b = t.at("blocks");
      detail::expect_keys(b, "train.blocks", {"count", "width", "start"});
      spec.train.block_spec.blocks = detail::size_field(
          b, "train.blocks", "count", spec.train.block_spec.blocks);
      spec.train.block_spec.width = detail::double_field(
          b, "train.blocks", "width", spec.train.block_spec.width);
      spec.train.block_spec.start = detail::double_field(
          b, "train.blocks", "start", spec.train.block_spec.start);
    }
    spec.l2sp_lambda =
        detail::double_field(t, "train", "l2sp_lambda", spec.l2sp_lambda);
  }

  if (j.contains("strategies")) {
    const json& s = j.at("strategies");
    if (!s.is_array() || s.empty()) {
      throw ParameterError("strategies must be a non-empty array");
    }
    spec.strategies.clear();
    for (const json& v : s) {
      if (!v.is_string()) {
        throw ParameterError("strategies entries must be strings");
      }
      spec.strategies.push_back(strategy_from_string(v.get<std::string>()));
    }
  }

  if (j.contains("seeds")) {
    const json& s = j.at("seeds");
    if (!s.is_array() || s.empty()) {
      throw ParameterError("seeds must be a non-empty array");
    }
    spec.seeds.clear();
    for (const json& v : s) {
      if (!detail::is_nonneg_int(v)) {
        throw ParameterError("seeds entries must be non-negative integers");
      }
      spec.seeds.push_back(v.get<std::uint64_t>());
    }
  }

  if (j.contains("sequence")) {
    const json& s = j.at("sequence");
    if (!s.is_array() || s.empty()) {
      throw ParameterError("sequence must be a non-empty array");
    }
    spec.sequence.clear();
    for (const json& g : s) {
      std::vector<std::size_t> group;
      if (detail::is_nonneg_int(g)) {
        group.push_back(g.get<std::size_t>());
      } else if (g.is_array()) {
        for (const json& v : g) {
          if (!detail::is_nonneg_int(v)) {
            throw ParameterError("sequence task indices must be integers");
          }
          group.push_back(v.get<std::size_t>());
        }
      } else {
        throw ParameterError(
            "sequence entries must be task indices or arrays of them");
      }
      spec.sequence.push_back(std::move(group));
    }
  }

  spec.out_dir = detail::string_field(j, "spec", "out_dir",
                                      default_out_dir().string());
  spec.data_dir = detail::string_field(j, "spec", "data_dir",
                                       (spec.out_dir / "datasets").string());
  spec.validate();
  return spec;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open " + path.string());
  return json::parse(in);  // parse_error carries the byte offset
}

inline RunSpec load_run_spec(const std::filesystem::path& path) {
  return parse_run_spec(read_json_file(path));
}

inline std::filesystem::path dataset_stem(
    const std::filesystem::path& data_dir, std::size_t task_index) {
  return data_dir / ("task" + std::to_string(task_index));
}

// one CRD1 file per task per split; byte-identical on rerun
inline std::vector<std::filesystem::path> generate_datasets(
    const RunSpec& spec) {
  std::filesystem::create_directories(spec.data_dir);
  std::vector<std::filesystem::path> written;
  for (std::size_t t = 1; t <= spec.family.tasks.size(); ++t) {
    TaskDataset ds = generate_task(spec.family, t);
    const std::filesystem::path stem = dataset_stem(spec.data_dir, t);
    write_dataset(ds, stem);
    for (const char* split : {"train", "val", "test"}) {
      written.push_back(split_path(stem, split));
    }
  }
  return written;
}

inline TaskDataset load_task(const RunSpec& spec, std::size_t task_index) {
  const std::filesystem::path stem = dataset_stem(spec.data_dir, task_index);
  if (!std::filesystem::exists(split_path(stem, "train"))) {
    throw MissingInputError("dataset not found: " +
                            split_path(stem, "train").string() +
                            " (run gen-data first)");
  }
  TaskDataset ds = read_dataset(stem);
  ds.validate();
  return ds;
}

struct ExperimentResult {
  std::vector<ExperimentReport> reports;
  json comparison;
};

namespace detail {

inline json metrics_map(const std::vector<TaskMetrics>& metrics,
                        const char* field) {
  json out = json::object();
  for (const TaskMetrics& m : metrics) {
    if (field == std::string("f1")) out[m.task_id] = m.f1;
    if (field == std::string("auroc")) out[m.task_id] = m.auroc;
    if (field == std::string("accuracy")) out[m.task_id] = m.accuracy;
  }
  return out;
}

}  // namespace detail

// Trains everything the spec asks for. When `write_files` is set, streams
// per-epoch JSON lines under out_dir/reports/, saves the shared task-1
// checkpoint per seed under out_dir/checkpoints/, and writes
// out_dir/comparison.json at the end.
inline ExperimentResult run_experiment(const RunSpec& spec,
                                       bool write_files = true) {
  spec.validate();
  const std::uint64_t hash = spec.config_hash();

  // datasets load once, shared read-only across seeds and strategies;
  // loading first keeps a missing input from leaving half-made output dirs
  const std::vector<std::size_t> task_ids = spec.tasks_in_sequence();
  std::map<std::size_t, TaskDataset> data;
  for (std::size_t t : task_ids) data.emplace(t, load_task(spec, t));

  const std::filesystem::path reports_dir = spec.out_dir / "reports";
  const std::filesystem::path ckpt_dir = spec.out_dir / "checkpoints";
  if (write_files) {
    std::filesystem::create_directories(reports_dir);
    std::filesystem::create_directories(ckpt_dir);
  }

  std::vector<std::string> step_names;
  for (const auto& group : spec.sequence) {
    step_names.push_back(RunSpec::step_name(group));
  }

  ExperimentResult result;
  json task1_per_seed = json::array();
  double task1_f1_sum = 0.0;

  for (std::uint64_t seed : spec.seeds) {
    const std::size_t first_task = spec.sequence.front().front();
    TrainConfig base_cfg = spec.config_for(spec.strategies.front(), seed);
    TaskRunLog task1_log;
    Network teacher = train_task1(data.at(first_task), base_cfg, &task1_log);
    if (write_files) {
      save_checkpoint(teacher,
                      ckpt_dir / ("task1_seed" + std::to_string(seed) +
                                  ".crdm"));
    }
    TaskBlock task1_block;
    task1_block.sequence_position = 1;
    task1_block.learned = step_names.front();
    task1_block.metrics = {evaluate_test_split(teacher, data.at(first_task))};
    task1_per_seed.push_back(json{
        {"seed", seed}, {"f1", task1_block.metrics.front().f1}});
    task1_f1_sum += task1_block.metrics.front().f1;

    for (StrategyKind kind : spec.strategies) {
      ExperimentReport report;
      report.strategy = to_string(kind);
      report.seed = seed;
      report.config_hash = hash;
      report.sequence = step_names;
      report.epochs = task1_log.epochs;
      report.blocks = {task1_block};

      std::ofstream stream;
      if (write_files) {
        const std::filesystem::path jsonl =
            reports_dir /
            (report.strategy + "_seed" + std::to_string(seed) + ".jsonl");
        stream.open(jsonl, std::ios::trunc);
        if (!stream) throw Error("cannot write " + jsonl.string());
        for (const EpochRecord& e : task1_log.epochs) {
          stream << e.to_json().dump() << "\n";
        }
        stream.flush();
      }
      EpochCallback on_epoch;
      if (write_files) {
        on_epoch = [&stream](const EpochRecord& e) {
          stream << e.to_json().dump() << "\n";
          stream.flush();
        };
      }

      const TrainConfig cfg = spec.config_for(kind, seed);
      TaskSequenceState state = begin_sequence(teacher);
      std::vector<std::size_t> seen = {first_task};
      for (std::size_t step = 1; step < spec.sequence.size(); ++step) {
        const auto& group = spec.sequence[step];
        TaskRunLog log;
        if (group.size() == 1) {
          learn_next_task(state, data.at(group[0]), cfg, &log, on_epoch);
        } else {
          learn_two_tasks_simultaneously(state, data.at(group[0]),
                                         data.at(group[1]), cfg, &log,
                                         on_epoch);
        }
        for (std::size_t t : group) seen.push_back(t);
        report.epochs.insert(report.epochs.end(), log.epochs.begin(),
                             log.epochs.end());

        TaskBlock block;
        block.sequence_position = step + 1;
        block.learned = step_names[step];
        for (std::size_t t : seen) {
          block.metrics.push_back(
              evaluate_test_split(state.teacher, data.at(t)));
        }
        report.blocks.push_back(std::move(block));
      }

      if (write_files) {
        stream.close();
        emit_report(report, reports_dir / (report.strategy + "_seed" +
                                           std::to_string(seed)));
      }
      result.reports.push_back(std::move(report));
    }
  }

  // cross-strategy comparison: final per-task F1 matrix, per seed and mean
  json strategies = json::object();
  for (StrategyKind kind : spec.strategies) {
    const std::string name = to_string(kind);
    json per_seed = json::array();
    std::map<std::string, double> f1_sums;
    double avg_sum = 0.0;
    for (const ExperimentReport& r : result.reports) {
      if (r.strategy != name) continue;
      const TaskBlock& final_block = r.blocks.back();
      json entry{{"seed", r.seed},
                 {"f1", detail::metrics_map(final_block.metrics, "f1")},
                 {"auroc", detail::metrics_map(final_block.metrics, "auroc")},
                 {"accuracy",
                  detail::metrics_map(final_block.metrics, "accuracy")},
                 {"average_f1", final_block.average_f1()}};
      per_seed.push_back(std::move(entry));
      for (const TaskMetrics& m : final_block.metrics) {
        f1_sums[m.task_id] += m.f1;
      }
      avg_sum += final_block.average_f1();
    }
    const double n = double(spec.seeds.size());
    json mean_f1 = json::object();
    for (const auto& [task, sum] : f1_sums) mean_f1[task] = sum / n;
    strategies[name] = json{{"per_seed", per_seed},
                            {"mean_f1", mean_f1},
                            {"mean_average_f1", avg_sum / n}};
  }

  json tasks = json::array();
  for (std::size_t t : task_ids) tasks.push_back("task" + std::to_string(t));
  result.comparison =
      json{{"config_hash", hash},
           {"positive_class", 1},
           {"tasks", tasks},
           {"seeds", spec.seeds},
           {"sequence", step_names},
           {"task1",
            {{"per_seed", task1_per_seed},
             {"mean_f1", task1_f1_sum / double(spec.seeds.size())}}},
           {"strategies", strategies}};

  if (write_files) {
    const std::filesystem::path path = spec.out_dir / "comparison.json";
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << result.comparison.dump(2) << "\n";
  }
  return result;
}

// --- ablations ------------------------------------------------------------

// Each study runs the shared experiment harness over controlled variants
// and writes a paired summary under out_dir/ablations/<study>/.

inline json ablation_variant_summary(const RunSpec& spec,
                                     const std::string& label) {
  ExperimentResult res = run_experiment(spec);
  json out = res.comparison;
  out["label"] = label;
  return out;
}

inline json ablate_block_size(const RunSpec& base) {
  RunSpec wide = base;
  wide.strategies = {StrategyKind::CoReD};
  wide.out_dir = base.out_dir / "ablations" / "block_size" / "b5";
  wide.data_dir = base.data_dir;
  wide.train.block_spec = BlockSpec{5, 0.1, 0.5};

  RunSpec single = wide;
  single.out_dir = base.out_dir / "ablations" / "block_size" / "b1";
  single.train.block_spec = BlockSpec{1, 0.5, 0.5};

  json summary{{"study", "block_size"},
               {"variants",
                {{"b5", ablation_variant_summary(wide, "blocks=5 width=0.1")},
                 {"b1", ablation_variant_summary(single,
                                                 "blocks=1 width=0.5")}}}};
  return summary;
}

inline json ablate_loss_components(const RunSpec& base) {
  RunSpec spec = base;
  spec.strategies = {StrategyKind::CoReD, StrategyKind::DL, StrategyKind::TF};
  spec.out_dir = base.out_dir / "ablations" / "loss_components";
  spec.data_dir = base.data_dir;
  json summary{{"study", "loss_components"},
               {"variants",
                {{"all_terms", "CoReD"},
                 {"no_representation", "DL"},
                 {"classification_only", "TF"}}},
               {"comparison", ablation_variant_summary(spec, "CoReD vs DL vs TF")}};
  return summary;
}

inline json ablate_simultaneous(const RunSpec& base) {
  if (base.family.tasks.size() < 3) {
    throw ParameterError(
        "simultaneous ablation needs at least three family tasks");
  }
  RunSpec sequential = base;
  sequential.strategies = {StrategyKind::CoReD};
  sequential.sequence = {{1}, {2}, {3}};
  sequential.out_dir = base.out_dir / "ablations" / "simultaneous" / "one_by_one";
  sequential.data_dir = base.data_dir;

  RunSpec grouped = sequential;
  grouped.sequence = {{1}, {2, 3}};
  grouped.out_dir = base.out_dir / "ablations" / "simultaneous" / "grouped";

  json summary{
      {"study", "simultaneous"},
      {"variants",
       {{"one_by_one",
         ablation_variant_summary(sequential, "task1 -> task2 -> task3")},
        {"grouped",
         ablation_variant_summary(grouped, "task1 -> task2+task3")}}}};
  return summary;
}

inline json ablate_distill_weight(const RunSpec& base) {
  const double betas[] = {0.1, 0.3, 0.5, 0.7, 1.0};
  json variants = json::object();
  std::vector<std::pair<double, double>> ranking;  // (mean avg F1, beta)
  for (double beta : betas) {
    RunSpec spec = base;
    spec.strategies = {StrategyKind::CoReD};
    spec.train.strategy.weights.beta = beta;
    char label[32];
    std::snprintf(label, sizeof(label), "beta_%.1f", beta);
    spec.out_dir = base.out_dir / "ablations" / "distill_weight" / label;
    spec.data_dir = base.data_dir;
    json summary = ablation_variant_summary(spec, label);
    const double mean_avg =
        summary["strategies"]["CoReD"]["mean_average_f1"].get<double>();
    ranking.emplace_back(mean_avg, beta);
    variants[label] = std::move(summary);
  }
  std::stable_sort(ranking.begin(), ranking.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  json ranked = json::array();
  for (const auto& [score, beta] : ranking) {
    ranked.push_back(json{{"beta", beta}, {"mean_average_f1", score}});
  }
  return json{{"study", "distill_weight"},
              {"variants", variants},
              {"ranking", ranked}};
}

inline json run_ablation(const RunSpec& spec, const std::string& which) {
  json summary;
  if (which == "block_size") {
    summary = ablate_block_size(spec);
  } else if (which == "loss_components") {
    summary = ablate_loss_components(spec);
  } else if (which == "simultaneous") {
    summary = ablate_simultaneous(spec);
  } else if (which == "distill_weight") {
    summary = ablate_distill_weight(spec);
  } else {
    throw ParameterError(
        "unknown ablation '" + which +
        "' (expected block_size, loss_components, simultaneous, or "
        "distill_weight)");
  }
  const std::filesystem::path dir = spec.out_dir / "ablations";
  std::filesystem::create_directories(dir);
  const std::filesystem::path path = dir / (which + ".json");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << summary.dump(2) << "\n";
  return summary;
}

// --- standalone evaluation -------------------------------------------------

// test-split metrics of a frozen checkpoint over a list of dataset stems
inline json evaluate_checkpoint(const std::filesystem::path& checkpoint,
                                const std::vector<std::filesystem::path>& stems) {
  Network net = load_checkpoint(checkpoint);
  json rows = json::array();
  for (const std::filesystem::path& stem : stems) {
    if (!std::filesystem::exists(split_path(stem, "test"))) {
      throw MissingInputError("dataset not found: " +
                              split_path(stem, "test").string());
    }
    TaskDataset ds = read_dataset(stem);
    ds.validate();
    TaskMetrics m = evaluate_test_split(net, ds);
    rows.push_back(m.to_json());
  }
  return json{{"checkpoint", checkpoint.string()},
              {"positive_class", 1},
              {"rows", rows}};
}

}  // namespace cored
