// Command-line front end. Subcommands:
//
//   gen-data   write the synthetic task datasets (one CRD1 file per split)
//   run        task-sequence training for every strategy in the spec
//   ablate     one of the comparison studies (block_size, loss_components,
//              simultaneous, distill_weight)
//   gradcheck  finite-difference audit of the backward pass
//   eval       metric table of a saved checkpoint over dataset stems
//
// Configuration comes from a JSON run spec; every field has a mirror flag
// and flags override file values. Exit codes: 0 success, 2 bad spec or
// malformed input, 3 missing input file, 4 numeric failure during training.

#include <cstdio>
#include <exception>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cored/experiment.hpp"
#include "cored/gradcheck.hpp"

namespace {

using cored::json;

constexpr int kExitOk = 0;
constexpr int kExitSpecError = 2;
constexpr int kExitMissingInput = 3;
constexpr int kExitNumericFailure = 4;

std::uint64_t parse_uint(const std::string& text) {
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw cored::ParameterError("expected a non-negative integer, got '" +
                                text + "'");
  }
}

double parse_double(const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw cored::ParameterError("expected a number, got '" + text + "'");
  }
}

std::vector<std::uint64_t> parse_uint_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    out.push_back(parse_uint(text.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    out.push_back(parse_double(text.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

std::vector<std::string> parse_string_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    out.push_back(text.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

// "1,2+3" -> [[1],[2,3]]
json parse_sequence(const std::string& text) {
  json seq = json::array();
  for (const std::string& group : parse_string_list(text)) {
    json g = json::array();
    std::size_t pos = 0;
    while (pos <= group.size()) {
      const std::size_t plus = std::min(group.find('+', pos), group.size());
      g.push_back(parse_uint(group.substr(pos, plus - pos)));
      pos = plus + 1;
    }
    seq.push_back(g);
  }
  return seq;
}

// Spec file plus flag overrides. Flags record JSON-pointer patches applied
// on top of the file document, so the precedence is uniform.
struct SpecArgs {
  std::string spec_path;
  std::vector<std::pair<std::string, json>> patches;
  std::vector<double> frequencies;
  std::vector<double> phases;
  double amplitude = -1.0;

  json resolve() const {
    json j = spec_path.empty() ? json::object()
                               : cored::read_json_file(spec_path);
    if (!frequencies.empty() || !phases.empty() || amplitude >= 0.0) {
      json tasks = json::array();
      std::vector<double> freq = frequencies;
      if (freq.empty()) {
        for (const json& t : j.value("family", json::object())
                                 .value("tasks", json::array())) {
          tasks.push_back(t);
        }
        if (tasks.empty()) {
          for (const cored::FakeParams& f :
               cored::TaskFamilySpec::default_family().tasks) {
            tasks.push_back(json{{"frequency", f.frequency},
                                 {"phase", f.phase},
                                 {"amplitude", f.amplitude}});
          }
        }
      } else {
        if (!phases.empty() && phases.size() != freq.size()) {
          throw cored::ParameterError(
              "--task-phases must match --task-frequencies in length");
        }
        for (std::size_t i = 0; i < freq.size(); ++i) {
          tasks.push_back(json{{"frequency", freq[i]},
                               {"phase", phases.empty() ? 0.0 : phases[i]},
                               {"amplitude", 0.18}});
        }
      }
      if (!phases.empty() && frequencies.empty()) {
        if (phases.size() != tasks.size()) {
          throw cored::ParameterError(
              "--task-phases must list one phase per task");
        }
        for (std::size_t i = 0; i < tasks.size(); ++i) {
          tasks[i]["phase"] = phases[i];
        }
      }
      if (amplitude >= 0.0) {
        for (json& t : tasks) t["amplitude"] = amplitude;
      }
      j[json::json_pointer("/family/tasks")] = tasks;
    }
    for (const auto& [ptr, value] : patches) {
      j[json::json_pointer(ptr)] = value;
    }
    return j;
  }

  cored::RunSpec load() const { return cored::parse_run_spec(resolve()); }
};

void add_spec_options(CLI::App* cmd, SpecArgs& args) {
  cmd->add_option("--spec", args.spec_path, "Run-spec JSON file");

  auto patch = [cmd, &args](const std::string& flag, const char* pointer,
                            const std::string& help, auto parse) {
    cmd->add_option_function<std::string>(
        flag,
        [&args, pointer, parse](const std::string& v) {
          args.patches.emplace_back(pointer, parse(v));
        },
        help);
  };
  auto as_double = [](const std::string& v) { return json(parse_double(v)); };
  auto as_size = [](const std::string& v) { return json(parse_uint(v)); };
  auto as_bool = [](const std::string& v) {
    if (v == "true" || v == "1") return json(true);
    if (v == "false" || v == "0") return json(false);
    throw cored::ParameterError("expected true/false, got '" + v + "'");
  };
  auto as_string = [](const std::string& v) { return json(v); };
  auto as_uints = [](const std::string& v) { return json(parse_uint_list(v)); };
  auto as_strings = [](const std::string& v) {
    return json(parse_string_list(v));
  };

  patch("--out", "/out_dir", "Output directory root", as_string);
  patch("--data-dir", "/data_dir", "Dataset directory", as_string);
  patch("--seeds", "/seeds", "Comma-separated seed list", as_uints);
  patch("--strategies", "/strategies",
        "Comma-separated strategies (CoReD,TF,TG_L2SP,DL)", as_strings);
  patch("--sequence", "/sequence",
        "Task sequence, e.g. 1,2,3 or 1,2+3 (simultaneous group)",
        [](const std::string& v) { return parse_sequence(v); });

  patch("--image-size", "/family/image_size", "Square image extent", as_size);
  patch("--train-samples", "/family/train_samples", "Train split size",
        as_size);
  patch("--val-samples", "/family/val_samples", "Validation split size",
        as_size);
  patch("--test-samples", "/family/test_samples", "Test split size", as_size);
  patch("--family-seed", "/family/seed", "Dataset generation seed", as_size);
  patch("--blob-smoothness", "/family/real/blob_smoothness",
        "Real-class blob smoothness", as_double);
  patch("--noise-scale", "/family/real/noise_scale", "Pixel noise sigma",
        as_double);

  patch("--max-epochs", "/train/max_epochs", "Epoch cap per task", as_size);
  patch("--patience", "/train/patience", "Early-stopping patience", as_size);
  patch("--learning-rate", "/train/learning_rate", "SGD learning rate",
        as_double);
  patch("--momentum", "/train/momentum", "SGD momentum", as_double);
  patch("--batch-size", "/train/batch_size", "Minibatch size", as_size);
  patch("--cutmix-probability", "/train/cutmix_probability",
        "Per-sample patch-mix probability", as_double);
  patch("--hidden-layers", "/train/hidden_layers",
        "Comma-separated hidden widths, e.g. 32,16", as_uints);
  patch("--alpha", "/train/loss_weights/alpha", "Classification weight",
        as_double);
  patch("--beta", "/train/loss_weights/beta", "Distillation weight",
        as_double);
  patch("--gamma", "/train/loss_weights/gamma", "Representation weight",
        as_double);
  patch("--tau", "/train/loss_weights/tau", "Distillation temperature",
        as_double);
  patch("--tau-squared", "/train/loss_weights/tau_squared",
        "Rescale the distillation term by tau^2 (true/false)", as_bool);
  patch("--blocks", "/train/blocks/count", "Memory blocks per class", as_size);
  patch("--block-width", "/train/blocks/width", "Memory block width",
        as_double);
  patch("--block-start", "/train/blocks/start",
        "Lowest bucketed teacher probability", as_double);
  patch("--l2sp-lambda", "/train/l2sp_lambda",
        "Source-anchor penalty weight (TG_L2SP)", as_double);

  cmd->add_option_function<std::string>(
      "--task-frequencies",
      [&args](const std::string& v) { args.frequencies = parse_double_list(v); },
      "Comma-separated artifact frequency per task");
  cmd->add_option_function<std::string>(
      "--task-phases",
      [&args](const std::string& v) { args.phases = parse_double_list(v); },
      "Comma-separated artifact phase per task");
  cmd->add_option("--task-amplitude", args.amplitude,
                  "Artifact amplitude applied to every task");
}

int cmd_gen_data(const SpecArgs& args) {
  const cored::RunSpec spec = args.load();
  const auto files = cored::generate_datasets(spec);
  std::cout << "wrote " << files.size() << " dataset files under "
            << spec.data_dir.string() << "\n";
  return kExitOk;
}

int cmd_run(const SpecArgs& args) {
  const cored::RunSpec spec = args.load();
  const cored::ExperimentResult result = cored::run_experiment(spec);
  const json& cmp = result.comparison;
  std::cout << "task1 mean F1 after step 1: "
            << cmp["task1"]["mean_f1"].get<double>() << "\n";
  std::cout << "final mean F1 per task:\n";
  for (const auto& [name, body] : cmp["strategies"].items()) {
    std::cout << "  " << name << ":";
    for (const auto& [task, f1] : body["mean_f1"].items()) {
      std::cout << " " << task << "=" << f1.get<double>();
    }
    std::cout << " (avg " << body["mean_average_f1"].get<double>() << ")\n";
  }
  std::cout << "reports: " << (spec.out_dir / "reports").string() << "\n";
  std::cout << "summary: " << (spec.out_dir / "comparison.json").string()
            << "\n";
  return kExitOk;
}

int cmd_ablate(const SpecArgs& args, const std::string& which) {
  const cored::RunSpec spec = args.load();
  cored::run_ablation(spec, which);
  std::cout << "ablation summary: "
            << (spec.out_dir / "ablations" / (which + ".json")).string()
            << "\n";
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t repeats, bool corrupt) {
  if (repeats == 0) {
    throw cored::ParameterError("--seeds must be at least 1");
  }
  std::vector<cored::ComponentAudit> worst;
  double teacher_grad = 0.0;
  bool pass = true;
  for (std::size_t i = 0; i < repeats; ++i) {
    const cored::GradcheckReport report =
        cored::gradcheck_run(seed + i, corrupt && i == 0);
    if (worst.empty()) worst = report.components;
    for (std::size_t c = 0; c < report.components.size(); ++c) {
      worst[c].max_rel_err =
          std::max(worst[c].max_rel_err, report.components[c].max_rel_err);
    }
    teacher_grad = std::max(teacher_grad, report.max_teacher_grad);
    pass = pass && report.pass();
  }
  for (const cored::ComponentAudit& c : worst) {
    std::printf("%-22s max rel err %.3e\n", c.name.c_str(), c.max_rel_err);
  }
  std::printf("%-22s max abs     %.3e\n", "teacher_gradient", teacher_grad);
  std::printf("gradcheck: %s (tolerance %.0e, %zu seed%s)\n",
              pass ? "PASS" : "FAIL", cored::kGradcheckTolerance, repeats,
              repeats == 1 ? "" : "s");
  return pass ? kExitOk : 1;
}

int cmd_eval(const std::string& checkpoint,
             const std::vector<std::string>& stems,
             const std::string& json_out) {
  std::vector<std::filesystem::path> paths(stems.begin(), stems.end());
  const json table = cored::evaluate_checkpoint(checkpoint, paths);
  std::printf("%-24s %8s %8s %8s\n", "task", "f1", "auroc", "acc");
  for (const json& row : table["rows"]) {
    std::printf("%-24s %8.4f %8.4f %8.4f\n",
                row["task"].get<std::string>().c_str(),
                row["f1"].get<double>(), row["auroc"].get<double>(),
                row["accuracy"].get<double>());
  }
  if (!json_out.empty()) {
    std::filesystem::path path(json_out);
    if (path.has_parent_path()) {
      std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw cored::Error("cannot write " + json_out);
    out << table.dump(2) << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continual fake-image detection benchmark"};
  app.require_subcommand(1);

  SpecArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen-data", "Generate task datasets");
  add_spec_options(gen, gen_args);

  SpecArgs run_args;
  CLI::App* run = app.add_subcommand("run", "Train the task sequence");
  add_spec_options(run, run_args);

  SpecArgs ablate_args;
  std::string which;
  CLI::App* ablate = app.add_subcommand("ablate", "Run a comparison study");
  ablate
      ->add_option("study", which,
                   "block_size | loss_components | simultaneous | "
                   "distill_weight")
      ->required();
  add_spec_options(ablate, ablate_args);

  std::uint64_t gc_seed = 1;
  std::size_t gc_repeats = 1;
  bool gc_corrupt = false;
  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "Finite-difference gradient audit");
  gradcheck->add_option("--seed", gc_seed, "Base seed");
  gradcheck->add_option("--seeds", gc_repeats,
                        "Number of consecutive seeds to audit");
  gradcheck->add_flag("--self-test-corrupt", gc_corrupt)->group("");

  std::string eval_checkpoint;
  std::vector<std::string> eval_stems;
  std::string eval_json;
  CLI::App* eval =
      app.add_subcommand("eval", "Evaluate a checkpoint over datasets");
  eval->add_option("--checkpoint", eval_checkpoint, "CRDM checkpoint file")
      ->required();
  eval->add_option("datasets", eval_stems,
                   "Dataset stems (a stem names <stem>_test.crd1)")
      ->required();
  eval->add_option("--json", eval_json, "Also write the table as JSON here");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_gen_data(gen_args);
    if (run->parsed()) return cmd_run(run_args);
    if (ablate->parsed()) return cmd_ablate(ablate_args, which);
    if (gradcheck->parsed()) {
      return cmd_gradcheck(gc_seed, gc_repeats, gc_corrupt);
    }
    if (eval->parsed()) return cmd_eval(eval_checkpoint, eval_stems, eval_json);
    return kExitSpecError;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitSpecError;
  } catch (const json::parse_error& e) {
    std::cerr << "spec error: " << e.what() << "\n";
    return kExitSpecError;
  } catch (const cored::MissingInputError& e) {
    std::cerr << "missing input: " << e.what() << "\n";
    return kExitMissingInput;
  } catch (const cored::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumericFailure;
  } catch (const cored::Error& e) {
    std::cerr << "spec error: " << e.what() << "\n";
    return kExitSpecError;
  } catch (const json::exception& e) {
    std::cerr << "spec error: " << e.what() << "\n";
    return kExitSpecError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
