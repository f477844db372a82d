#pragma once

#include <filesystem>
#include <vector>

#include "relchain/evaluate.hpp"

namespace relchain {

struct SweepRow {
  std::string fingerprint;
  std::string family;
  std::string variant;
  std::map<int, double> per_k;
  double mean = 0.0;
  double train_seconds = 0.0;
  std::string status;  // "ok" or the failure message
};

// Trains and evaluates every config; per-config failures are recorded and
// the sweep continues. Rows are keyed by fingerprint so parallel execution
// (jobs > 1, one model per worker) and serial execution produce the same
// table. Writes results.tsv plus one <variant>_<fingerprint>.curve.tsv per
// config under out_dir.
std::vector<SweepRow> sweep(const std::vector<TrainConfig>& configs,
                            const std::filesystem::path& out_dir, int jobs = 1);

std::string format_sweep_table(const std::vector<SweepRow>& rows);

}  // namespace relchain
