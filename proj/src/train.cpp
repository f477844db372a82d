#include "relchain/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "relchain/checkpoint.hpp"

namespace relchain {

namespace {

// Applies slot shuffling to training batches (tape != nullptr) when enabled.
template <class Fn>
Tensor forward_with_augment(Fn&& raw_forward, std::span<const StoryInstance> instances,
                            Tape* tape, bool augment, int max_entities, Rng& rng,
                            std::vector<StoryInstance>& scratch) {
  if (tape == nullptr || !augment) return raw_forward(instances, tape);
  scratch.clear();
  for (const StoryInstance& inst : instances)
    scratch.push_back(shuffle_slots(inst, max_entities, rng));
  return raw_forward(std::span<const StoryInstance>(scratch), tape);
}

class EgnnClassifier : public Classifier {
 public:
  EgnnClassifier(const EgnnConfig& cfg, uint64_t seed)
      : model_(cfg, seed), aug_rng_(Rng::mix(seed, 0x5107u)) {}
  Tensor forward(std::span<const StoryInstance> instances, Tape* tape) override {
    auto raw = [this](std::span<const StoryInstance> batch, Tape* t) {
      return model_.forward(build_graph_batch(batch, model_.config().max_entities), t);
    };
    return forward_with_augment(raw, instances, tape, augment_,
                                model_.config().max_entities, aug_rng_, scratch_);
  }
  std::vector<Parameter>& params() override { return model_.params(); }
  void set_augment(bool on) override { augment_ = on; }

 private:
  EgnnModel model_;
  Rng aug_rng_;
  bool augment_ = false;
  std::vector<StoryInstance> scratch_;
};

class SeqClassifier : public Classifier {
 public:
  SeqClassifier(const SeqConfig& cfg, uint64_t seed)
      : model_(cfg, seed), aug_rng_(Rng::mix(seed, 0x5107u)) {}
  Tensor forward(std::span<const StoryInstance> instances, Tape* tape) override {
    auto raw = [this](std::span<const StoryInstance> batch, Tape* t) {
      return model_.forward(build_token_batch(batch, model_.config().max_entities), t);
    };
    return forward_with_augment(raw, instances, tape, augment_,
                                model_.config().max_entities, aug_rng_, scratch_);
  }
  std::vector<Parameter>& params() override { return model_.params(); }
  void set_augment(bool on) override { augment_ = on; }

 private:
  SeqModel model_;
  Rng aug_rng_;
  bool augment_ = false;
  std::vector<StoryInstance> scratch_;
};

std::vector<int> targets_of(std::span<const StoryInstance> instances) {
  std::vector<int> out;
  out.reserve(instances.size());
  for (const StoryInstance& inst : instances) out.push_back(static_cast<int>(inst.target));
  return out;
}

double param_norm(std::vector<Parameter>& params) {
  double sq = 0.0;
  for (Parameter& p : params)
    for (double v : p.value.values()) sq += v * v;
  return std::sqrt(sq);
}

}  // namespace

int TrainConfig::effective_heads() const {
  if (heads > 0) return heads;
  return family == "egnn" ? 1 : 2;
}

StoryInstance shuffle_slots(const StoryInstance& instance, int max_entities, Rng& rng) {
  const int n = entity_count(instance);
  std::vector<int> slots(static_cast<size_t>(max_entities));
  for (int i = 0; i < max_entities; ++i) slots[static_cast<size_t>(i)] = i;
  rng.shuffle(slots);
  StoryInstance out = instance;
  for (Fact& f : out.facts) {
    f.src = slots[static_cast<size_t>(f.src)];
    f.dst = slots[static_cast<size_t>(f.dst)];
  }
  out.query = {slots[static_cast<size_t>(instance.query.first)],
               slots[static_cast<size_t>(instance.query.second)]};
  (void)n;
  return out;
}

std::string TrainConfig::canonical_text() const {
  std::ostringstream out;
  out << "batch_size = " << batch_size << "\n";
  out << "data = " << data << "\n";
  out << "emb_dim = " << emb_dim << "\n";
  out << "family = " << family << "\n";
  out << "heads = " << effective_heads() << "\n";
  out << "layers = " << layers << "\n";
  out << "lr = " << lr << "\n";
  out << "max_entities = " << max_entities << "\n";
  out << "max_epochs = " << max_epochs << "\n";
  out << "optimizer = " << optimizer << "\n";
  out << "patience = " << patience << "\n";
  out << "seed = " << seed << "\n";
  out << "selection = " << selection << "\n";
  out << "slot_pool = " << slot_pool << "\n";
  out << "slot_shuffle = " << (slot_shuffle ? "on" : "off") << "\n";
  out << "variant = " << variant << "\n";
  return out.str();
}

std::string TrainConfig::fingerprint() const {
  return relchain::fingerprint(parse_key_values(canonical_text()));
}

TrainConfig train_config_from(const KeyValues& kv) {
  TrainConfig c;
  if (auto v = kv.get("family")) c.family = *v;
  if (auto v = kv.get("variant")) c.variant = *v;
  if (auto v = kv.get("emb_dim")) c.emb_dim = std::stoi(*v);
  if (auto v = kv.get("layers")) c.layers = std::stoi(*v);
  if (auto v = kv.get("heads")) c.heads = std::stoi(*v);
  if (auto v = kv.get("lr")) c.lr = std::stod(*v);
  if (auto v = kv.get("optimizer")) c.optimizer = *v;
  if (auto v = kv.get("batch_size")) c.batch_size = std::stoi(*v);
  if (auto v = kv.get("max_epochs")) c.max_epochs = std::stoi(*v);
  if (auto v = kv.get("patience")) c.patience = std::stoi(*v);
  if (auto v = kv.get("selection")) c.selection = *v;
  if (auto v = kv.get("seed")) c.seed = std::stoull(*v);
  if (auto v = kv.get("data")) c.data = *v;
  if (auto v = kv.get("max_entities")) c.max_entities = std::stoi(*v);
  if (auto v = kv.get("slot_pool")) c.slot_pool = std::stoi(*v);
  if (auto v = kv.get("slot_shuffle")) {
    if (*v != "on" && *v != "off")
      throw std::runtime_error("train config: slot_shuffle must be on or off");
    c.slot_shuffle = *v == "on";
  }
  kv.reject_unknown({"family", "variant", "emb_dim", "layers", "heads", "lr", "optimizer",
                     "batch_size", "max_epochs", "patience", "selection", "seed", "data",
                     "max_entities", "slot_pool", "slot_shuffle"});

  if (c.family != "egnn" && c.family != "lgraph")
    throw std::runtime_error("train config: family must be egnn or lgraph, got `" + c.family + "`");
  if (c.selection != "min_val_loss" && c.selection != "max_val_acc")
    throw std::runtime_error("train config: selection must be min_val_loss or max_val_acc");
  if (c.optimizer != "adam" && c.optimizer != "sgd")
    throw std::runtime_error("train config: optimizer must be adam or sgd");
  if (c.family == "egnn" && !parse_egnn_variant(c.variant))
    throw std::runtime_error("train config: unknown egnn variant `" + c.variant + "`");
  if (c.family == "lgraph" && !parse_seq_variant(c.variant))
    throw std::runtime_error("train config: unknown lgraph variant `" + c.variant + "`");
  if (c.slot_pool < c.max_entities)
    throw std::runtime_error("train config: slot_pool must be >= max_entities");
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& file) {
  return train_config_from(load_key_values(file));
}

TrainConfig train_config_from_text(const std::string& text) {
  return train_config_from(parse_key_values(text));
}

std::unique_ptr<Classifier> make_classifier(const TrainConfig& config) {
  const uint64_t model_seed = Rng::mix(config.seed, 0x0DE1u);
  if (config.family == "egnn") {
    EgnnConfig cfg;
    cfg.variant = *parse_egnn_variant(config.variant);
    cfg.emb_dim = config.emb_dim;
    cfg.layers = config.layers;
    cfg.heads = config.effective_heads();
    cfg.max_entities = config.slot_pool;
    return std::make_unique<EgnnClassifier>(cfg, model_seed);
  }
  SeqConfig cfg;
  cfg.variant = *parse_seq_variant(config.variant);
  cfg.emb_dim = config.emb_dim;
  cfg.heads = config.effective_heads();
  cfg.max_entities = config.slot_pool;
  return std::make_unique<SeqClassifier>(cfg, model_seed);
}

std::vector<int> predict(Classifier& model, std::span<const StoryInstance> instances,
                         int batch_size) {
  std::vector<int> out;
  out.reserve(instances.size());
  for (size_t begin = 0; begin < instances.size(); begin += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(instances.size(), begin + static_cast<size_t>(batch_size));
    Tensor logits = model.forward(instances.subspan(begin, end - begin), nullptr);
    const int64_t classes = logits.dim(1);
    for (int64_t b = 0; b < logits.dim(0); ++b) {
      int best = 0;
      double best_v = logits.values()[static_cast<size_t>(b * classes)];
      for (int64_t c = 1; c < classes; ++c) {
        const double v = logits.values()[static_cast<size_t>(b * classes + c)];
        if (v > best_v) {  // strict: ties keep the lowest relation index
          best_v = v;
          best = static_cast<int>(c);
        }
      }
      out.push_back(best);
    }
  }
  return out;
}

double accuracy(Classifier& model, std::span<const StoryInstance> instances, int batch_size) {
  if (instances.empty()) throw std::invalid_argument("accuracy: empty instance list");
  std::vector<int> preds = predict(model, instances, batch_size);
  int correct = 0;
  for (size_t i = 0; i < instances.size(); ++i)
    if (preds[i] == static_cast<int>(instances[i].target)) ++correct;
  return static_cast<double>(correct) / static_cast<double>(instances.size());
}

double mean_loss(Classifier& model, std::span<const StoryInstance> instances, int batch_size) {
  if (instances.empty()) throw std::invalid_argument("mean_loss: empty instance list");
  double total = 0.0;
  for (size_t begin = 0; begin < instances.size(); begin += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(instances.size(), begin + static_cast<size_t>(batch_size));
    auto chunk = instances.subspan(begin, end - begin);
    Tensor loss = cross_entropy(model.forward(chunk, nullptr), targets_of(chunk), nullptr);
    total += loss.scalar_value() * static_cast<double>(chunk.size());
  }
  return total / static_cast<double>(instances.size());
}

TrainResult fit(Classifier& model, const TrainConfig& config, const DatasetSplit& data) {
  if (data.train.empty() || data.valid.empty())
    throw std::invalid_argument("fit: train and valid splits must be non-empty");

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result;
  model.set_augment(config.slot_shuffle);
  auto& params = model.params();

  std::unique_ptr<Sgd> sgd;
  std::unique_ptr<Adam> adam;
  if (config.optimizer == "sgd") sgd = std::make_unique<Sgd>(config.lr);
  else adam = std::make_unique<Adam>(config.lr);

  Rng shuffle_rng(Rng::mix(config.seed, 0xBA7C4u));
  std::vector<size_t> order(data.train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  // best-epoch parameter snapshot
  std::vector<std::vector<double>> best_values;
  auto snapshot = [&] {
    best_values.clear();
    for (Parameter& p : params)
      best_values.emplace_back(p.value.values().begin(), p.value.values().end());
  };
  auto restore = [&] {
    for (size_t i = 0; i < params.size(); ++i)
      std::copy(best_values[i].begin(), best_values[i].end(), params[i].value.values().begin());
  };

  const bool select_acc = config.selection == "max_val_acc";
  Tape tape;
  std::vector<StoryInstance> batch_buf;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    int batch_index = 0;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(config.batch_size)) {
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(config.batch_size));
      batch_buf.clear();
      for (size_t i = begin; i < end; ++i) batch_buf.push_back(data.train[order[i]]);

      tape.reset();
      zero_grads(params);
      Tensor logits = model.forward(batch_buf, &tape);
      Tensor loss = cross_entropy(logits, targets_of(batch_buf), &tape);
      const double loss_v = loss.scalar_value();
      if (!std::isfinite(loss_v)) {
        std::ostringstream msg;
        msg << "fit: non-finite loss at epoch " << epoch << ", batch " << batch_index
            << "; parameter norm " << param_norm(params);
        throw std::runtime_error(msg.str());
      }
      epoch_loss += loss_v * static_cast<double>(batch_buf.size());
      tape.backward(loss);
      for (Parameter& p : params) ensure_grad(p.value.impl());
      if (sgd) sgd->step(params);
      else adam->step(params);
      ++batch_index;
    }
    tape.reset();
    epoch_loss /= static_cast<double>(data.train.size());

    const double val_loss = mean_loss(model, data.valid, config.batch_size);
    const double val_acc = accuracy(model, data.valid, config.batch_size);
    if (!std::isfinite(val_loss))
      throw std::runtime_error("fit: non-finite validation loss at epoch " +
                               std::to_string(epoch));
    result.log.push_back({epoch, epoch_loss, val_loss, val_acc});

    const bool improved =
        result.best_epoch < 0 ||
        (select_acc ? val_acc > result.best_val_acc : val_loss < result.best_val_loss);
    if (improved) {
      result.best_epoch = epoch;
      result.best_val_acc = val_acc;
      result.best_val_loss = val_loss;
      snapshot();
    }
    if (epoch - result.best_epoch >= config.patience) break;
  }

  restore();
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

TrainResult train(const TrainConfig& config, const std::filesystem::path& out_dir) {
  if (config.data.empty()) throw std::runtime_error("train: config has no dataset path");
  DatasetSplit data = load_dataset(config.data);
  auto model = make_classifier(config);
  TrainResult result = fit(*model, config, data);

  std::filesystem::create_directories(out_dir);
  save_checkpoint(out_dir / "checkpoint.bin", model->params(), config.canonical_text());
  std::ofstream log(out_dir / "train_log.tsv");
  log << "epoch\ttrain_loss\tval_loss\tval_acc\n";
  for (const EpochLog& e : result.log)
    log << e.epoch << '\t' << e.train_loss << '\t' << e.val_loss << '\t' << e.val_acc << '\n';
  return result;
}

}  // namespace relchain
