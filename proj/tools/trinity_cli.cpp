// trinity: command-line front end for dataset generation, training,
// perturbation-grid evaluation and ablation runs.
//
// Exit codes: 0 success, 2 usage/configuration error, 3 data error,
// 4 runtime error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "trinity/data.hpp"
#include "trinity/eval.hpp"
#include "trinity/fusion.hpp"
#include "trinity/train.hpp"

namespace fs = std::filesystem;
using namespace trinity;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json read_json(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

struct RunConfig {
  data::PreprocessConfig preprocess;
  fusion::DetectorConfig detector;
  train::TrainConfig train;
};

RunConfig run_config_from(const nlohmann::json& j) {
  RunConfig rc;
  const auto pre = j.value("preprocess", nlohmann::json::object());
  rc.preprocess.height = pre.value("height", rc.preprocess.height);
  rc.preprocess.width = pre.value("width", rc.preprocess.width);
  nlohmann::json det = j.value("detector", nlohmann::json::object());
  if (!det.contains("input")) det["input"] = {rc.preprocess.height, rc.preprocess.width};
  rc.detector = fusion::detector_config_from_json(det);
  rc.train = train::train_config_from_json(j.value("train", nlohmann::json::object()));
  if (rc.detector.input_h != rc.preprocess.height || rc.detector.input_w != rc.preprocess.width) {
    throw ConfigError("detector.input must match the preprocess resolution");
  }
  return rc;
}

void apply_overrides(RunConfig& rc, const std::optional<std::uint64_t>& seed,
                     const std::optional<std::size_t>& epochs, const std::optional<double>& lr) {
  if (seed) rc.train.seed = *seed;
  if (epochs) rc.train.epochs = *epochs;
  if (lr) rc.train.learning_rate = *lr;
  rc.train.validate();
}

void print_warnings(const data::Manifest& m) {
  for (const auto& w : m.warnings) std::cerr << "warning: " << w << '\n';
}

int cmd_gen(const std::string& config, const std::string& out, std::optional<std::uint64_t> seed) {
  if (config.empty()) throw UsageError("gen: --config is required");
  auto cfg = data::toy_config_from_json(read_json(config));
  if (seed) cfg.seed = *seed;
  const auto paths = data::generate_toy_dataset(cfg, out);
  std::cout << "wrote " << 2 * cfg.count_per_class << " images\n"
            << "manifest: " << paths.manifest.string() << '\n';
  if (paths.train) std::cout << "train: " << paths.train->string() << '\n';
  if (paths.test) std::cout << "test: " << paths.test->string() << '\n';
  return 0;
}

int cmd_train(const std::string& manifest, const std::string& config, const std::string& out,
              std::optional<std::uint64_t> seed, std::optional<std::size_t> epochs,
              std::optional<double> lr) {
  RunConfig rc = run_config_from(read_json(config));
  apply_overrides(rc, seed, epochs, lr);
  const auto m = data::load_manifest(manifest);
  print_warnings(m);
  const auto dataset = train::load_dataset(m, rc.preprocess);
  std::cout << "training on " << dataset.size() << " samples, seed " << rc.train.seed << '\n';
  const auto result = train::train(dataset, rc.detector, rc.train, [](const train::EpochInfo& e) {
    std::cout << "epoch " << e.epoch << "  loss " << e.mean_loss << "  probe " << e.probe_loss << '\n';
  });
  nlohmann::json extra = {{"train", train::to_json(rc.train)},
                          {"preprocess", {{"height", rc.preprocess.height}, {"width", rc.preprocess.width}}},
                          {"initial_probe_loss", result.initial_probe_loss},
                          {"final_probe_loss", result.final_probe_loss}};
  fusion::save_checkpoint(out, result.model, extra);
  std::cout << "final probe loss " << result.final_probe_loss << " (initial "
            << result.initial_probe_loss << ")\nseed " << rc.train.seed << "\ncheckpoint "
            << out << '\n';
  return 0;
}

std::vector<data::PerturbationSpec> parse_grid(const std::vector<std::string>& tokens) {
  if (tokens.empty()) return data::default_grid();
  std::vector<data::PerturbationSpec> grid;
  for (const auto& t : tokens) {
    try {
      grid.push_back(data::parse_perturbation(t));
    } catch (const ValidationError& e) {
      throw UsageError(e.what());
    }
  }
  return grid;
}

int cmd_eval(const std::string& checkpoint, const std::vector<std::string>& manifests,
             const std::vector<std::string>& grid_tokens, const std::string& out, unsigned threads) {
  const auto grid = parse_grid(grid_tokens);
  const auto ckpt = fusion::load_checkpoint(checkpoint);
  data::PreprocessConfig pre{ckpt.model.config.input_h, ckpt.model.config.input_w};
  std::vector<eval::NamedDataset> sets;
  for (const auto& m : manifests) sets.push_back(eval::load_named_dataset(m, pre));
  const eval::ModelClassifier clf(ckpt.model);
  auto report = eval::evaluate(clf, sets, grid, threads);
  report.checkpoint = checkpoint;
  report.config = ckpt.snapshot;
  report.config.erase("params");
  eval::write_report(report, out);
  std::cout << eval::to_csv(report);
  return 0;
}

int cmd_ablate(const std::string& train_manifest, const std::vector<std::string>& eval_manifests,
               const std::string& config, const std::vector<std::string>& plan_names,
               const std::string& out, std::optional<std::uint64_t> seed,
               std::optional<std::size_t> epochs, std::optional<double> lr) {
  RunConfig rc = run_config_from(read_json(config));
  apply_overrides(rc, seed, epochs, lr);
  const auto plan = plan_names.empty() ? eval::AblationPlan::standard()
                                       : eval::AblationPlan::from_names(plan_names);
  const auto m = data::load_manifest(train_manifest);
  print_warnings(m);
  const auto train_set = train::load_dataset(m, rc.preprocess);
  std::vector<eval::NamedDataset> sets;
  for (const auto& e : eval_manifests) sets.push_back(eval::load_named_dataset(e, rc.preprocess));
  const auto report = eval::run_ablation(train_set, sets, rc.detector, rc.train, plan,
                                         [](const std::string& s) { std::cout << s << '\n'; });
  eval::write_report(report, out);
  std::cout << eval::to_csv(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion-image detector: toy data generation, training, evaluation, ablation"};
  app.require_subcommand(1);

  std::string config, out, manifest, checkpoint, train_manifest;
  std::vector<std::string> manifests, grid, plan, eval_manifests;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());

  auto* gen = app.add_subcommand("gen", "Generate the synthetic toy dataset");
  gen->add_option("--config", config, "Toy generator JSON config")->required();
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--seed", seed, "Override the config seed");

  auto* tr = app.add_subcommand("train", "Train a detector and write a checkpoint");
  tr->add_option("--manifest", manifest, "Training manifest (JSON lines)")->required();
  tr->add_option("--config", config, "Run config JSON (preprocess/detector/train)");
  tr->add_option("--out", out, "Checkpoint path")->required();
  tr->add_option("--seed", seed);
  tr->add_option("--epochs", epochs);
  tr->add_option("--lr", lr);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint under the perturbation grid");
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--manifest", manifests, "Evaluation manifest(s)")->required();
  ev->add_option("--grid", grid, "Perturbations: none, jpeg<q>, blur<sigma>")->delimiter(',');
  ev->add_option("--out", out, "Report directory")->required();
  ev->add_option("--threads", threads);

  auto* ab = app.add_subcommand("ablate", "Train and evaluate each ablation configuration");
  ab->add_option("--train", train_manifest, "Training manifest")->required();
  ab->add_option("--eval", eval_manifests, "Evaluation manifest(s)")->required();
  ab->add_option("--config", config, "Run config JSON");
  ab->add_option("--plan", plan, "Configurations (default: all four)")->delimiter(',');
  ab->add_option("--out", out, "Report directory")->required();
  ab->add_option("--seed", seed);
  ab->add_option("--epochs", epochs);
  ab->add_option("--lr", lr);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(config, out, seed);
    if (tr->parsed()) return cmd_train(manifest, config, out, seed, epochs, lr);
    if (ev->parsed()) return cmd_eval(checkpoint, manifests, grid, out, threads);
    if (ab->parsed()) return cmd_ablate(train_manifest, eval_manifests, config, plan, out, seed, epochs, lr);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n' << app.help();
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
