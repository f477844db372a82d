#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "relchain/train.hpp"

namespace relchain {

struct EvalReport {
  std::map<int, double> per_k_accuracy;  // k -> accuracy in [0, 1]
  double mean_test_accuracy = 0.0;       // arithmetic mean over the k range
  std::string config_fingerprint;
  double wall_seconds = 0.0;
};

// Per-clause-length accuracy over the test splits. Side-effect free; the
// model is only read.
EvalReport evaluate(Classifier& model, const DatasetSplit& data, int batch_size,
                    const std::string& fingerprint = "");

// Rebuilds the model recorded in the checkpoint metadata and evaluates it on
// the dataset directory (defaults to the one in the recorded config).
EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint,
                               const std::filesystem::path& data_dir = {});

// report.tsv (one row) and curve.tsv (k <TAB> accuracy per line)
void write_eval_report(const EvalReport& report, const std::filesystem::path& out_dir);
std::string format_eval_report(const EvalReport& report);

}  // namespace relchain
