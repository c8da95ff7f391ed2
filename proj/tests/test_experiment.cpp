#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <vector>

#include <gtest/gtest.h>

#include "cored/experiment.hpp"

using namespace cored;

namespace {

std::filesystem::path fresh_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

json tiny_spec_json(const std::filesystem::path& out) {
  return json{
      {"family",
       {{"train_samples", 64}, {"val_samples", 16}, {"test_samples", 32}}},
      {"train", {{"hidden_layers", {16, 8}}, {"max_epochs", 10}}},
      {"strategies", {"TF", "CoReD"}},
      {"seeds", {1}},
      {"sequence", {1, 2}},
      {"out_dir", out.string()}};
}

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST(RunSpecParsing, EmptyDocumentYieldsDefaults) {
  const RunSpec spec = parse_run_spec(json::object());
  EXPECT_EQ(spec.family.tasks.size(), 4u);
  EXPECT_EQ(spec.family.image_size, 8u);
  EXPECT_EQ(spec.strategies.size(), 3u);
  EXPECT_EQ(spec.seeds.size(), 5u);
  EXPECT_EQ(spec.sequence.size(), 3u);
  EXPECT_DOUBLE_EQ(spec.train.strategy.weights.tau, 20.0);
  EXPECT_DOUBLE_EQ(spec.train.learning_rate, 0.05);
  EXPECT_EQ(spec.train.batch_size, 32u);
  EXPECT_EQ(spec.data_dir, spec.out_dir / "datasets");
}

TEST(RunSpecParsing, EnvironmentVariableSetsDefaultOutput) {
  setenv("CORED_OUT", "/tmp/cored-env-test", 1);
  const RunSpec spec = parse_run_spec(json::object());
  EXPECT_EQ(spec.out_dir, std::filesystem::path("/tmp/cored-env-test"));
  unsetenv("CORED_OUT");
  const RunSpec fallback = parse_run_spec(json::object());
  EXPECT_EQ(fallback.out_dir, std::filesystem::path("cored-out"));
}

TEST(RunSpecParsing, UnknownKeysAreRejectedAtEveryLevel) {
  EXPECT_THROW(parse_run_spec(json{{"sseeds", {1}}}), ParameterError);
  EXPECT_THROW(parse_run_spec(json{{"family", {{"imagesize", 8}}}}),
               ParameterError);
  EXPECT_THROW(parse_run_spec(json{{"train", {{"lr", 0.1}}}}), ParameterError);
  EXPECT_THROW(
      parse_run_spec(json{{"train", {{"loss_weights", {{"delta", 1.0}}}}}}),
      ParameterError);
}

TEST(RunSpecParsing, TypeMismatchesAreRejected) {
  EXPECT_THROW(parse_run_spec(json{{"seeds", "1,2"}}), ParameterError);
  EXPECT_THROW(parse_run_spec(json{{"seeds", {-1}}}), ParameterError);
  EXPECT_THROW(parse_run_spec(json{{"train", {{"learning_rate", "fast"}}}}),
               ParameterError);
  EXPECT_THROW(parse_run_spec(json{{"strategies", {"CoReD", 7}}}),
               ParameterError);
  EXPECT_THROW(parse_run_spec(json{{"strategies", {"SGDR"}}}), ParameterError);
}

TEST(RunSpecParsing, SequenceAcceptsIndicesAndGroups) {
  const RunSpec spec =
      parse_run_spec(json{{"sequence", json::array({1, json::array({2, 3})})}});
  ASSERT_EQ(spec.sequence.size(), 2u);
  EXPECT_EQ(spec.sequence[0], std::vector<std::size_t>{1});
  EXPECT_EQ(spec.sequence[1], (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(RunSpec::step_name(spec.sequence[1]), "task2+task3");
}

TEST(RunSpecParsing, SequenceConstraintsAreEnforced) {
  // first step must be a single task
  EXPECT_THROW(
      parse_run_spec(json{{"sequence", json::array({json::array({1, 2})})}}),
      ParameterError);
  // groups hold at most two tasks
  EXPECT_THROW(parse_run_spec(json{
                   {"sequence", json::array({1, json::array({2, 3, 4})})}}),
               ParameterError);
  // indices are 1-based and bounded by the family
  EXPECT_THROW(parse_run_spec(json{{"sequence", {0}}}), ParameterError);
  EXPECT_THROW(parse_run_spec(json{{"sequence", {1, 9}}}), ParameterError);
  // a task may appear only once
  EXPECT_THROW(parse_run_spec(json{{"sequence", {1, 2, 2}}}), ParameterError);
}

TEST(RunSpecParsing, DuplicateSeedsAndStrategiesAreRejected) {
  EXPECT_THROW(parse_run_spec(json{{"seeds", {1, 1}}}), ParameterError);
  EXPECT_THROW(parse_run_spec(json{{"strategies", {"TF", "TF"}}}),
               ParameterError);
}

TEST(RunSpecParsing, ConfigHashTracksSemanticsNotFormatting) {
  const RunSpec a = parse_run_spec(json::object());
  RunSpec b = parse_run_spec(json::object());
  EXPECT_EQ(a.config_hash(), b.config_hash());

  const RunSpec c =
      parse_run_spec(json{{"train", {{"learning_rate", 0.05}}}});
  EXPECT_EQ(a.config_hash(), c.config_hash());  // default restated

  const RunSpec d = parse_run_spec(json{{"train", {{"learning_rate", 0.1}}}});
  EXPECT_NE(a.config_hash(), d.config_hash());

  // output location does not change what is computed
  const RunSpec e = parse_run_spec(json{{"out_dir", "/tmp/elsewhere"}});
  EXPECT_EQ(a.config_hash(), e.config_hash());
}

TEST(GenData, WritesOneFilePerTaskPerSplit) {
  const auto out = fresh_dir("cored-gendata-test");
  RunSpec spec = parse_run_spec(tiny_spec_json(out));
  const auto files = generate_datasets(spec);
  EXPECT_EQ(files.size(), 12u);  // 4 default tasks x 3 splits
  for (const auto& f : files) EXPECT_TRUE(std::filesystem::exists(f));

  const auto before = slurp(files[0]);
  generate_datasets(spec);
  EXPECT_EQ(slurp(files[0]), before);
}

TEST(Runner, MissingDatasetsFailBeforeAnyTraining) {
  const auto out = fresh_dir("cored-missing-test");
  const RunSpec spec = parse_run_spec(tiny_spec_json(out));
  EXPECT_THROW(run_experiment(spec), MissingInputError);
  EXPECT_FALSE(std::filesystem::exists(out / "reports"));
}

TEST(Runner, ProducesReportsCheckpointsAndComparison) {
  const auto out = fresh_dir("cored-runner-test");
  const RunSpec spec = parse_run_spec(tiny_spec_json(out));
  generate_datasets(spec);
  const ExperimentResult result = run_experiment(spec);

  ASSERT_EQ(result.reports.size(), 2u);  // 2 strategies x 1 seed
  const ExperimentReport& tf = result.reports[0];
  EXPECT_EQ(tf.strategy, "TF");
  EXPECT_EQ(tf.seed, 1u);
  EXPECT_EQ(tf.sequence, (std::vector<std::string>{"task1", "task2"}));
  ASSERT_EQ(tf.blocks.size(), 2u);
  EXPECT_EQ(tf.blocks[0].metrics.size(), 1u);
  EXPECT_EQ(tf.blocks[1].metrics.size(), 2u);
  EXPECT_FALSE(tf.epochs.empty());
  EXPECT_EQ(tf.epochs.front().sequence_position, 1u);
  EXPECT_EQ(tf.epochs.back().sequence_position, 2u);

  // both strategies share the identical task-1 trajectory
  const ExperimentReport& cored_rep = result.reports[1];
  const auto task1_epochs = [](const ExperimentReport& r) {
    std::size_t n = 0;
    for (const auto& e : r.epochs) n += e.sequence_position == 1;
    return n;
  };
  EXPECT_EQ(task1_epochs(tf), task1_epochs(cored_rep));
  EXPECT_EQ(tf.blocks[0].metrics[0].f1, cored_rep.blocks[0].metrics[0].f1);

  EXPECT_TRUE(std::filesystem::exists(out / "checkpoints/task1_seed1.crdm"));
  EXPECT_TRUE(std::filesystem::exists(out / "reports/TF_seed1.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(out / "reports/TF_seed1.json"));
  EXPECT_TRUE(std::filesystem::exists(out / "reports/CoReD_seed1.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(out / "comparison.json"));

  // every jsonl line parses on its own
  std::ifstream lines(out / "reports/CoReD_seed1.jsonl");
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    EXPECT_NO_THROW(json::parse(line));
    ++count;
  }
  EXPECT_EQ(count, cored_rep.epochs.size());

  const json cmp = json::parse(std::ifstream(out / "comparison.json"));
  EXPECT_EQ(cmp["tasks"], json::array({"task1", "task2"}));
  EXPECT_EQ(cmp["positive_class"], 1);
  EXPECT_TRUE(cmp["strategies"].contains("TF"));
  EXPECT_TRUE(cmp["strategies"].contains("CoReD"));
  EXPECT_EQ(cmp["strategies"]["TF"]["per_seed"].size(), 1u);
  EXPECT_TRUE(cmp["strategies"]["TF"]["mean_f1"].contains("task1"));
  EXPECT_TRUE(cmp["task1"].contains("mean_f1"));
}

TEST(Runner, RerunsAreByteIdentical) {
  const auto out = fresh_dir("cored-idem-test");
  const RunSpec spec = parse_run_spec(tiny_spec_json(out));
  generate_datasets(spec);
  run_experiment(spec);
  const auto cmp_before = slurp(out / "comparison.json");
  const auto jsonl_before = slurp(out / "reports/CoReD_seed1.jsonl");
  const auto ckpt_before = slurp(out / "checkpoints/task1_seed1.crdm");
  run_experiment(spec);
  EXPECT_EQ(slurp(out / "comparison.json"), cmp_before);
  EXPECT_EQ(slurp(out / "reports/CoReD_seed1.jsonl"), jsonl_before);
  EXPECT_EQ(slurp(out / "checkpoints/task1_seed1.crdm"), ckpt_before);
}

TEST(Runner, SingleTaskSpecDegeneratesToTask1Training) {
  const auto out = fresh_dir("cored-single-test");
  json doc = tiny_spec_json(out);
  doc["sequence"] = {1};
  doc["strategies"] = {"TF"};
  const RunSpec spec = parse_run_spec(doc);
  generate_datasets(spec);
  const ExperimentResult result = run_experiment(spec);
  ASSERT_EQ(result.reports.size(), 1u);
  EXPECT_EQ(result.reports[0].blocks.size(), 1u);
  for (const auto& e : result.reports[0].epochs) {
    EXPECT_EQ(e.sequence_position, 1u);
  }
}

TEST(Evaluation, TablesCoverEveryRequestedDataset) {
  const auto out = fresh_dir("cored-eval-test");
  const RunSpec spec = parse_run_spec(tiny_spec_json(out));
  generate_datasets(spec);
  run_experiment(spec);
  const json table = evaluate_checkpoint(
      out / "checkpoints/task1_seed1.crdm",
      {dataset_stem(spec.data_dir, 1), dataset_stem(spec.data_dir, 3)});
  ASSERT_EQ(table["rows"].size(), 2u);
  EXPECT_EQ(table["rows"][0]["task"], "task1");
  EXPECT_EQ(table["rows"][1]["task"], "task3");
  // tiny 64-sample training run: expect clearly-better-than-chance, not polish
  EXPECT_GT(table["rows"][0]["f1"].get<double>(), 0.75);
}

TEST(Evaluation, MissingInputsAreReported) {
  const auto out = fresh_dir("cored-eval-missing");
  EXPECT_THROW(evaluate_checkpoint(out / "none.crdm", {}), MissingInputError);
}

TEST(Ablations, UnknownStudyIsRejected) {
  const RunSpec spec = parse_run_spec(json::object());
  EXPECT_THROW(run_ablation(spec, "bogus"), ParameterError);
}
