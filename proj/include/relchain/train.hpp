#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "relchain/config.hpp"
#include "relchain/dataset.hpp"
#include "relchain/egnn.hpp"
#include "relchain/lgraph.hpp"

namespace relchain {

struct TrainConfig {
  std::string family = "lgraph";  // egnn | lgraph
  std::string variant = "gru";
  int emb_dim = 100;
  int layers = 3;
  int heads = 0;  // 0 = family default (1 gat head, 2 mha heads)
  double lr = 1e-3;
  std::string optimizer = "adam";  // adam | sgd
  int batch_size = 64;
  int max_epochs = 100;
  int patience = 10;
  std::string selection = "max_val_acc";  // min_val_loss | max_val_acc
  uint64_t seed = 1;
  std::string data;  // dataset directory
  int max_entities = 30;
  // entity identities carry nothing beyond distinctness: during training,
  // canonical ids are mapped through a random slot injection so every slot
  // embedding trains and none becomes positional
  bool slot_shuffle = true;
  // slot-table size the injection draws from (the name-pool scale); eval
  // keeps canonical ids, which always fit
  int slot_pool = 300;

  // heads with the family default applied (1 gat head, 2 mha heads)
  int effective_heads() const;

  // canonical `key = value` rendering; fingerprints and checkpoint metadata
  // both derive from it
  std::string canonical_text() const;
  std::string fingerprint() const;
};

TrainConfig train_config_from(const KeyValues& kv);
TrainConfig load_train_config(const std::filesystem::path& file);
TrainConfig train_config_from_text(const std::string& text);

// Family-agnostic face of the two model kinds; builds its own batch type.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual Tensor forward(std::span<const StoryInstance> instances, Tape* tape) = 0;
  virtual std::vector<Parameter>& params() = 0;

  // train-time entity-slot randomization; no-op when disabled
  virtual void set_augment(bool) {}
};

// Random injection of canonical ids 0..n-1 into the slot range; facts and
// query are relabelled together, so structure is untouched.
StoryInstance shuffle_slots(const StoryInstance& instance, int max_entities, Rng& rng);

std::unique_ptr<Classifier> make_classifier(const TrainConfig& config);

struct EpochLog {
  int epoch;
  double train_loss;
  double val_loss;
  double val_acc;
};

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  double best_val_acc = 0.0;
  double wall_seconds = 0.0;
};

// Minibatch loop with per-epoch validation, checkpoint selection under the
// configured metric and patience-based early stopping. On return the
// classifier holds the selected epoch's parameters. Deterministic in
// config.seed. Aborts with diagnostics when the loss stops being finite.
TrainResult fit(Classifier& model, const TrainConfig& config, const DatasetSplit& data);

// fit + artifacts: checkpoint.bin and train_log.tsv under out_dir.
TrainResult train(const TrainConfig& config, const std::filesystem::path& out_dir);

// batched argmax predictions; ties resolve to the lowest relation index
std::vector<int> predict(Classifier& model, std::span<const StoryInstance> instances,
                         int batch_size);
double accuracy(Classifier& model, std::span<const StoryInstance> instances, int batch_size);
double mean_loss(Classifier& model, std::span<const StoryInstance> instances, int batch_size);

}  // namespace relchain
