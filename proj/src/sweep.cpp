#include "relchain/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

namespace relchain {

namespace {

SweepRow run_one(const TrainConfig& config, const std::filesystem::path& out_dir) {
  SweepRow row;
  row.fingerprint = config.fingerprint();
  row.family = config.family;
  row.variant = config.variant;
  try {
    DatasetSplit data = load_dataset(config.data);
    auto model = make_classifier(config);
    TrainResult fitted = fit(*model, config, data);
    row.train_seconds = fitted.wall_seconds;
    EvalReport report = evaluate(*model, data, config.batch_size, row.fingerprint);
    row.per_k = report.per_k_accuracy;
    row.mean = report.mean_test_accuracy;
    row.status = "ok";

    std::ofstream curve(out_dir / (config.variant + "_" + row.fingerprint + ".curve.tsv"));
    for (const auto& [k, acc] : row.per_k) curve << k << '\t' << acc << '\n';
  } catch (const std::exception& e) {
    row.status = e.what();
  }
  return row;
}

}  // namespace

std::vector<SweepRow> sweep(const std::vector<TrainConfig>& configs,
                            const std::filesystem::path& out_dir, int jobs) {
  if (configs.empty()) throw std::invalid_argument("sweep: at least one config required");
  std::filesystem::create_directories(out_dir);

  std::vector<SweepRow> rows(configs.size());
  if (jobs <= 1) {
    for (size_t i = 0; i < configs.size(); ++i) rows[i] = run_one(configs[i], out_dir);
  } else {
    std::atomic<size_t> next{0};
    auto worker = [&] {
      while (true) {
        const size_t i = next.fetch_add(1);
        if (i >= configs.size()) return;
        rows[i] = run_one(configs[i], out_dir);
      }
    };
    std::vector<std::thread> pool;
    const int n = std::min<int>(jobs, static_cast<int>(configs.size()));
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tie(a.family, a.variant, a.fingerprint) <
           std::tie(b.family, b.variant, b.fingerprint);
  });

  std::ofstream out(out_dir / "results.tsv");
  out << format_sweep_table(rows);
  std::ofstream timings(out_dir / "timings.tsv");
  timings << "fingerprint\ttrain_seconds\n";
  for (const SweepRow& r : rows)
    timings << r.fingerprint << '\t' << r.train_seconds << '\n';
  return rows;
}

std::string format_sweep_table(const std::vector<SweepRow>& rows) {
  // union of k columns across rows
  std::vector<int> ks;
  for (const SweepRow& r : rows)
    for (const auto& [k, acc] : r.per_k)
      if (std::find(ks.begin(), ks.end(), k) == ks.end()) ks.push_back(k);
  std::sort(ks.begin(), ks.end());

  std::ostringstream out;
  out << "family\tvariant\tfingerprint";
  for (int k : ks) out << "\tk" << k;
  out << "\tmean\tstatus\n";
  for (const SweepRow& r : rows) {
    out << r.family << '\t' << r.variant << '\t' << r.fingerprint;
    for (int k : ks) {
      auto it = r.per_k.find(k);
      if (it == r.per_k.end()) out << "\t-";
      else out << '\t' << it->second;
    }
    out << '\t' << r.mean << '\t' << r.status << '\n';
  }
  return out.str();
}

}  // namespace relchain
