#include "relchain/evaluate.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "relchain/checkpoint.hpp"

namespace relchain {

EvalReport evaluate(Classifier& model, const DatasetSplit& data, int batch_size,
                    const std::string& fingerprint) {
  if (data.test.empty()) throw std::invalid_argument("evaluate: no test splits");
  const auto t0 = std::chrono::steady_clock::now();
  EvalReport report;
  report.config_fingerprint = fingerprint;
  double sum = 0.0;
  for (const auto& [k, instances] : data.test) {
    if (instances.empty())
      throw std::invalid_argument("evaluate: empty test split for k=" + std::to_string(k));
    const double acc = accuracy(model, instances, batch_size);
    report.per_k_accuracy[k] = acc;
    sum += acc;
  }
  report.mean_test_accuracy = sum / static_cast<double>(report.per_k_accuracy.size());
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint,
                               const std::filesystem::path& data_dir) {
  Checkpoint ckpt = load_checkpoint(checkpoint);
  TrainConfig config = train_config_from_text(ckpt.meta);
  auto model = make_classifier(config);
  apply_checkpoint(ckpt, model->params());
  DatasetSplit data = load_dataset(data_dir.empty() ? std::filesystem::path(config.data)
                                                    : data_dir);
  return evaluate(*model, data, config.batch_size, config.fingerprint());
}

std::string format_eval_report(const EvalReport& report) {
  std::ostringstream out;
  out << "k\taccuracy\n";
  for (const auto& [k, acc] : report.per_k_accuracy) out << k << '\t' << acc << '\n';
  out << "mean\t" << report.mean_test_accuracy << '\n';
  return out.str();
}

void write_eval_report(const EvalReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "report.tsv");
    out << "fingerprint";
    for (const auto& [k, acc] : report.per_k_accuracy) out << "\tk" << k;
    out << "\tmean\twall_seconds\n" << report.config_fingerprint;
    for (const auto& [k, acc] : report.per_k_accuracy) out << '\t' << acc;
    out << '\t' << report.mean_test_accuracy << '\t' << report.wall_seconds << '\n';
  }
  std::ofstream curve(out_dir / "curve.tsv");
  for (const auto& [k, acc] : report.per_k_accuracy) curve << k << '\t' << acc << '\n';
}

}  // namespace relchain
