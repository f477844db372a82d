#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "relchain/evaluate.hpp"
#include "relchain/gradcheck.hpp"
#include "relchain/sweep.hpp"

using namespace relchain;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::optional<uint64_t> seed_override(const CLI::Option* opt, uint64_t flag_value) {
  if (opt->count() > 0) return flag_value;
  if (const char* env = std::getenv("RELCHAIN_SEED")) return std::stoull(env);
  return std::nullopt;
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir,
                 std::optional<uint64_t> seed) {
  DataConfig config = load_data_config(config_path);
  if (seed) config.seed = *seed;
  DatasetSplit split = generate_dataset(config);
  save_dataset(split, config, out_dir);
  std::cout << "wrote " << split.train.size() << " train, " << split.valid.size() << " valid, "
            << split.test.size() << " test splits to " << out_dir << "\n";
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::optional<uint64_t> seed) {
  TrainConfig config = load_train_config(config_path);
  if (seed) config.seed = *seed;
  TrainResult result = train(config, out_dir);
  std::cout << "best epoch " << result.best_epoch << ": val loss " << result.best_val_loss
            << ", val acc " << result.best_val_acc << " (" << result.wall_seconds << " s, "
            << result.log.size() << " epochs)\n"
            << "checkpoint: " << (std::filesystem::path(out_dir) / "checkpoint.bin").string()
            << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir,
             const std::string& out_dir) {
  EvalReport report = evaluate_checkpoint(checkpoint, data_dir);
  std::cout << format_eval_report(report);
  if (!out_dir.empty()) write_eval_report(report, out_dir);
  return kExitOk;
}

int cmd_sweep(const std::vector<std::string>& config_paths, const std::string& out_dir, int jobs,
              std::optional<uint64_t> seed) {
  std::vector<TrainConfig> configs;
  for (const std::string& path : config_paths) {
    configs.push_back(load_train_config(path));
    if (seed) configs.back().seed = *seed;
  }
  auto rows = sweep(configs, out_dir, jobs);
  std::cout << format_sweep_table(rows);
  int failures = 0;
  for (const SweepRow& row : rows)
    if (row.status != "ok") ++failures;
  if (failures > 0) std::cout << failures << " config(s) failed\n";
  return kExitOk;
}

int cmd_oracle(const std::string& chain_arg, const std::string& kb_path) {
  std::vector<Rel> chain;
  std::istringstream ss(chain_arg);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    auto rel = parse_relation(item);
    if (!rel) {
      std::cerr << "oracle: unknown relation `" << item << "`\n";
      return kExitUsage;
    }
    chain.push_back(*rel);
  }
  if (chain.empty()) {
    std::cerr << "oracle: empty relation chain\n";
    return kExitUsage;
  }
  const KnowledgeBase kb =
      kb_path.empty() ? KnowledgeBase::default_kb() : KnowledgeBase::load(kb_path);
  auto result = kb.resolve_chain(chain);
  std::cout << (result ? relation_name(*result) : "none") << "\n";
  return kExitOk;
}

int cmd_gradcheck(int reps, uint64_t seed, double tol) {
  bool all_ok = true;
  auto print = [&](const std::vector<GradCheckResult>& results) {
    for (const GradCheckResult& r : results) {
      std::cout << r.name << '\t' << r.max_rel_err << (r.ok(tol) ? "" : "\tFAIL") << "\n";
      all_ok = all_ok && r.ok(tol);
    }
  };
  print(gradcheck_ops(reps, seed));
  print(gradcheck_models(seed));
  std::cout << (all_ok ? "all gradients within " : "gradient failures above ") << tol << "\n";
  return all_ok ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relchain: kinship-chain reasoning benchmark and models"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  std::string config_path, out_dir, checkpoint, data_dir, chain_arg, kb_path;
  std::vector<std::string> config_paths;
  uint64_t seed_flag = 0;
  int jobs = 1;
  int reps = 20;
  double tol = 1e-4;

  auto* gen = app.add_subcommand("gen-data", "Generate a dataset from a data config");
  gen->add_option("--config", config_path, "data config file")->required();
  gen->add_option("--out", out_dir, "output directory")->required();
  auto* gen_seed = gen->add_option("--seed", seed_flag, "override the master seed");

  auto* tr = app.add_subcommand("train", "Train one model from a train config");
  tr->add_option("--config", config_path, "train config file")->required();
  tr->add_option("--out", out_dir, "output directory for checkpoint and log")->required();
  auto* tr_seed = tr->add_option("--seed", seed_flag, "override the training seed");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test splits");
  ev->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  ev->add_option("--data", data_dir, "dataset directory (defaults to the one in the config)");
  ev->add_option("--out", out_dir, "directory for report.tsv and curve.tsv");

  auto* sw = app.add_subcommand("sweep", "Train and evaluate several configs");
  sw->add_option("--config", config_paths, "train config file (repeatable)")->required();
  sw->add_option("--out", out_dir, "output directory")->required();
  sw->add_option("--jobs", jobs, "parallel workers, one model each")->check(CLI::PositiveNumber);
  auto* sw_seed = sw->add_option("--seed", seed_flag, "override every config's seed");

  auto* orc = app.add_subcommand("oracle", "Resolve a comma-separated relation chain");
  orc->add_option("chain", chain_arg, "e.g. father,father")->required();
  orc->add_option("--kb", kb_path, "rule file overriding the built-in knowledge base");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of ops and model variants");
  gc->add_option("--reps", reps, "random repetitions per op");
  auto* gc_seed = gc->add_option("--seed", seed_flag, "random seed");
  gc->add_option("--tol", tol, "relative-error tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\nRun with --help for usage.\n";
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, out_dir, seed_override(gen_seed, seed_flag));
    if (tr->parsed()) return cmd_train(config_path, out_dir, seed_override(tr_seed, seed_flag));
    if (ev->parsed()) return cmd_eval(checkpoint, data_dir, out_dir);
    if (sw->parsed()) return cmd_sweep(config_paths, out_dir, jobs, seed_override(sw_seed, seed_flag));
    if (orc->parsed()) return cmd_oracle(chain_arg, kb_path);
    if (gc->parsed())
      return cmd_gradcheck(reps, gc_seed->count() ? seed_flag : 42, tol);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
