#include "relchain/dataset.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "relchain/config.hpp"

namespace relchain {

using nlohmann::json;

namespace {

json instance_to_json(const StoryInstance& inst) {
  json facts = json::array();
  for (const Fact& f : inst.facts)
    facts.push_back(json::array({f.src, std::string(relation_name(f.rel)), f.dst}));
  return json{{"facts", std::move(facts)},
              {"query", json::array({inst.query.first, inst.query.second})},
              {"target", std::string(relation_name(inst.target))},
              {"k", inst.k},
              {"noise", noise_name(inst.noise)},
              {"seed", inst.seed}};
}

StoryInstance instance_from_json(const json& j, const std::string& where) {
  auto fail = [&](const std::string& what) -> std::runtime_error {
    return std::runtime_error(where + ": " + what);
  };
  StoryInstance inst;
  if (!j.is_object()) throw fail("record is not an object");
  for (const char* key : {"facts", "query", "target", "k", "noise", "seed"})
    if (!j.contains(key)) throw fail(std::string("missing field `") + key + "`");
  for (const auto& f : j.at("facts")) {
    if (!f.is_array() || f.size() != 3) throw fail("fact is not a [src, relation, dst] triple");
    auto rel = parse_relation(f.at(1).get<std::string>());
    if (!rel) throw fail("unknown relation `" + f.at(1).get<std::string>() + "`");
    inst.facts.push_back({f.at(0).get<int>(), *rel, f.at(2).get<int>()});
  }
  const auto& q = j.at("query");
  if (!q.is_array() || q.size() != 2) throw fail("query is not a [head, tail] pair");
  inst.query = {q.at(0).get<int>(), q.at(1).get<int>()};
  auto target = parse_relation(j.at("target").get<std::string>());
  if (!target) throw fail("unknown target `" + j.at("target").get<std::string>() + "`");
  inst.target = *target;
  inst.k = j.at("k").get<int>();
  auto noise = parse_noise(j.at("noise").get<std::string>());
  if (!noise) throw fail("unknown noise regime `" + j.at("noise").get<std::string>() + "`");
  inst.noise = *noise;
  inst.seed = j.at("seed").get<uint64_t>();
  return inst;
}

void save_jsonl(const std::vector<StoryInstance>& instances, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);  // binary keeps newlines identical everywhere
  if (!out) throw std::runtime_error("dataset: cannot write " + file.string());
  for (const StoryInstance& inst : instances) out << instance_to_json(inst).dump() << '\n';
}

std::vector<StoryInstance> load_jsonl(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("dataset: cannot open " + file.string());
  std::vector<StoryInstance> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = file.filename().string() + " line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
    out.push_back(instance_from_json(j, where));
  }
  return out;
}

int auto_noise_count(const DataConfig& config, int k) {
  return config.noise_facts >= 0 ? config.noise_facts : (k + 1) / 2;
}

enum : uint64_t { kTrainStream = 1, kValidStream = 2, kTestStreamBase = 100 };

}  // namespace

DataConfig load_data_config(const std::filesystem::path& file) {
  return data_config_from(load_key_values(file));
}

DataConfig data_config_from(const KeyValues& kv) {
  DataConfig c;
  if (auto v = kv.get("train_k")) c.train_k = parse_int_list(*v);
  if (auto v = kv.get("test_k")) c.test_k = parse_int_list(*v);
  if (auto v = kv.get("n_train")) c.n_train = std::stoi(*v);
  if (auto v = kv.get("n_valid")) c.n_valid = std::stoi(*v);
  if (auto v = kv.get("n_test_per_k")) c.n_test_per_k = std::stoi(*v);
  if (auto v = kv.get("noise")) {
    auto n = parse_noise(*v);
    if (!n) throw std::runtime_error("data config: unknown noise regime `" + *v + "`");
    c.noise = *n;
  }
  if (auto v = kv.get("noise_facts")) c.noise_facts = *v == "auto" ? -1 : std::stoi(*v);
  if (auto v = kv.get("seed")) c.seed = std::stoull(*v);
  if (auto v = kv.get("max_entities")) c.gen.max_entities = std::stoi(*v);
  if (auto v = kv.get("generations")) c.gen.generations = std::stoi(*v);
  if (auto v = kv.get("min_children")) c.gen.min_children = std::stoi(*v);
  if (auto v = kv.get("max_children")) c.gen.max_children = std::stoi(*v);
  if (auto v = kv.get("founding_couples")) c.gen.founding_couples = std::stoi(*v);
  if (auto v = kv.get("marry_prob")) c.gen.marry_prob = std::stod(*v);
  kv.reject_unknown({"train_k", "test_k", "n_train", "n_valid", "n_test_per_k", "noise",
                     "noise_facts", "seed", "max_entities", "generations", "min_children",
                     "max_children", "founding_couples", "marry_prob"});
  if (c.train_k.empty() || c.test_k.empty())
    throw std::runtime_error("data config: train_k and test_k must be non-empty");
  return c;
}

DatasetSplit generate_dataset(const DataConfig& config, const KnowledgeBase& kb) {
  DatasetSplit split;
  auto gen_split = [&](uint64_t stream, int count, const std::vector<int>& ks,
                       std::vector<StoryInstance>& out) {
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
      const int k = ks[static_cast<size_t>(i) % ks.size()];
      const uint64_t inst_seed = Rng::mix(Rng::mix(config.seed, stream), static_cast<uint64_t>(i));
      out.push_back(generate_instance(k, config.noise, inst_seed, config.gen, kb,
                                      auto_noise_count(config, k)));
    }
  };
  gen_split(kTrainStream, config.n_train, config.train_k, split.train);
  gen_split(kValidStream, config.n_valid, config.train_k, split.valid);
  for (int k : config.test_k) {
    std::vector<int> one{k};
    gen_split(kTestStreamBase + static_cast<uint64_t>(k), config.n_test_per_k, one,
              split.test[k]);
  }
  return split;
}

void save_dataset(const DatasetSplit& split, const DataConfig& config,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_jsonl(split.train, dir / "train.jsonl");
  save_jsonl(split.valid, dir / "valid.jsonl");
  for (const auto& [k, instances] : split.test)
    save_jsonl(instances, dir / ("test_k" + std::to_string(k) + ".jsonl"));

  json manifest{{"format", 1},
                {"seed", config.seed},
                {"noise", noise_name(config.noise)},
                {"noise_facts", config.noise_facts},
                {"train_k", config.train_k},
                {"test_k", config.test_k},
                {"n_train", config.n_train},
                {"n_valid", config.n_valid},
                {"n_test_per_k", config.n_test_per_k},
                {"max_entities", config.gen.max_entities}};
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw std::runtime_error("dataset: cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

DatasetSplit load_dataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw std::runtime_error("dataset: missing manifest.json in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(mf);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("dataset: manifest.json: " + std::string(e.what()));
  }
  DatasetSplit split;
  split.train = load_jsonl(dir / "train.jsonl");
  split.valid = load_jsonl(dir / "valid.jsonl");
  for (int k : manifest.at("test_k").get<std::vector<int>>())
    split.test[k] = load_jsonl(dir / ("test_k" + std::to_string(k) + ".jsonl"));
  return split;
}

bool instances_equal(const StoryInstance& a, const StoryInstance& b) {
  return a.facts == b.facts && a.query == b.query && a.target == b.target && a.k == b.k &&
         a.noise == b.noise && a.seed == b.seed;
}

bool splits_equal(const DatasetSplit& a, const DatasetSplit& b) {
  auto all_equal = [](const std::vector<StoryInstance>& x, const std::vector<StoryInstance>& y) {
    if (x.size() != y.size()) return false;
    for (size_t i = 0; i < x.size(); ++i)
      if (!instances_equal(x[i], y[i])) return false;
    return true;
  };
  if (!all_equal(a.train, b.train) || !all_equal(a.valid, b.valid)) return false;
  if (a.test.size() != b.test.size()) return false;
  for (const auto& [k, instances] : a.test) {
    auto it = b.test.find(k);
    if (it == b.test.end() || !all_equal(instances, it->second)) return false;
  }
  return true;
}

int entity_count(const StoryInstance& inst) {
  int n = 0;
  for (const Fact& f : inst.facts) n = std::max({n, f.src + 1, f.dst + 1});
  return n;
}

int max_entities_in(const DatasetSplit& split) {
  int n = 0;
  for (const StoryInstance& i : split.train) n = std::max(n, entity_count(i));
  for (const StoryInstance& i : split.valid) n = std::max(n, entity_count(i));
  for (const auto& [k, instances] : split.test)
    for (const StoryInstance& i : instances) n = std::max(n, entity_count(i));
  return n;
}

}  // namespace relchain
