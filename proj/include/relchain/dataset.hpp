#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "relchain/config.hpp"
#include "relchain/story_gen.hpp"

namespace relchain {

struct DataConfig {
  std::vector<int> train_k{2, 3};
  std::vector<int> test_k{2, 3, 4, 5, 6, 7, 8, 9, 10};
  int n_train = 5000;
  int n_valid = 500;
  int n_test_per_k = 200;
  NoiseRegime noise = NoiseRegime::clean;
  int noise_facts = -1;  // < 0 means ceil(k / 2)
  uint64_t seed = 1;
  GenParams gen;
};

DataConfig load_data_config(const std::filesystem::path& file);
DataConfig data_config_from(const KeyValues& kv);

struct DatasetSplit {
  std::vector<StoryInstance> train;
  std::vector<StoryInstance> valid;
  std::map<int, std::vector<StoryInstance>> test;  // k -> instances
};

// Deterministic in config.seed; every instance derives its own seed from
// (master seed, split, index) so ordering and parallelism cannot change the
// output.
DatasetSplit generate_dataset(const DataConfig& config,
                              const KnowledgeBase& kb = KnowledgeBase::default_kb());

// One instance per line (JSON record), plus a manifest.json sidecar with the
// config and master seed. save followed by load is identity.
void save_dataset(const DatasetSplit& split, const DataConfig& config,
                  const std::filesystem::path& dir);
DatasetSplit load_dataset(const std::filesystem::path& dir);

bool instances_equal(const StoryInstance& a, const StoryInstance& b);
bool splits_equal(const DatasetSplit& a, const DatasetSplit& b);

// Largest entity count over all instances (slot table sizing).
int max_entities_in(const DatasetSplit& split);
int entity_count(const StoryInstance& inst);

}  // namespace relchain
