#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>
#include <unordered_set>

#include "relchain/dataset.hpp"
#include "relchain/story_gen.hpp"

using namespace relchain;

namespace {

bool graphs_equal(const FamilyGraph& a, const FamilyGraph& b) {
  if (a.size() != b.size() || a.edges.size() != b.edges.size()) return false;
  for (int i = 0; i < a.size(); ++i)
    if (a.tree.gender(i) != b.tree.gender(i)) return false;
  for (size_t i = 0; i < a.edges.size(); ++i)
    if (!(a.edges[i] == b.edges[i])) return false;
  return true;
}

void check_instance_wellformed(const StoryInstance& inst, const KnowledgeBase& kb) {
  // canonical ids 0..n-1 by first appearance
  int next = 0;
  std::unordered_set<int> seen;
  for (const Fact& f : inst.facts) {
    for (int id : {f.src, f.dst}) {
      if (!seen.count(id)) {
        CHECK(id == next);
        seen.insert(id);
        ++next;
      }
    }
  }
  // path facts form a simple path from head to tail; each fact may be
  // stated in either orientation (base label or its inv- dual)
  REQUIRE(static_cast<int>(inst.facts.size()) >= inst.k);
  std::vector<Rel> chain;
  std::set<int> path_nodes;
  int prev = inst.query.first;
  path_nodes.insert(prev);
  for (int i = 0; i < inst.k; ++i) {
    const Fact& f = inst.facts[static_cast<size_t>(i)];
    int next;
    Rel oriented;
    if (f.src == prev) {
      next = f.dst;
      oriented = f.rel;
    } else {
      REQUIRE(f.dst == prev);
      next = f.src;
      oriented = invert(f.rel);
    }
    CHECK(is_base(oriented));
    CHECK(!path_nodes.count(next));
    path_nodes.insert(next);
    chain.push_back(oriented);
    prev = next;
  }
  CHECK(prev == inst.query.second);
  auto resolved = kb.resolve_chain(chain);
  REQUIRE(resolved.has_value());
  CHECK(*resolved == inst.target);
}

}  // namespace

TEST_CASE("family graph sampling is deterministic and bounded") {
  GenParams params;
  FamilyGraph a = sample_family_graph(7, params);
  FamilyGraph b = sample_family_graph(7, params);
  CHECK(graphs_equal(a, b));
  CHECK(a.size() <= params.max_entities);

  GenParams small;
  small.max_entities = 12;
  for (uint64_t seed = 0; seed < 8; ++seed)
    CHECK(sample_family_graph(seed, small).size() <= 12);
}

TEST_CASE("sampled graphs are oracle-consistent") {
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    FamilyGraph g = sample_family_graph(seed);
    auto issue = g.tree.check_consistent();
    CHECK_MESSAGE(!issue, issue.value_or(""));
    for (const Fact& e : g.edges) {
      CHECK(g.tree.derive(e.src, e.dst) == e.rel);
      CHECK(relation_gender(e.rel) == g.tree.gender(e.dst));
    }
  }
}

TEST_CASE("graphs admit long resolvable paths") {
  GenParams params;
  params.require_path_k = 10;
  int ok = 0;
  auto t0 = std::chrono::steady_clock::now();
  for (uint64_t seed = 100; seed < 120; ++seed) {
    FamilyGraph g = sample_family_graph(seed, params);
    if (has_resolvable_path(g, 10, KnowledgeBase::default_kb())) ++ok;
  }
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count();
  MESSAGE("20 graphs with k=10 paths sampled in ", ms, " ms");
  CHECK(ok == 20);
}

TEST_CASE("sample_chain produces well-formed instances") {
  const KnowledgeBase& kb = KnowledgeBase::default_kb();
  GenParams params;
  params.require_path_k = 10;
  FamilyGraph g = sample_family_graph(42, params);

  SUBCASE("k=2: 2 facts, 3 entities, non-empty target") {
    StoryInstance inst = sample_chain(g, 2, 9, kb);
    CHECK(inst.facts.size() == 2);
    CHECK(entity_count(inst) == 3);
    check_instance_wellformed(inst, kb);
  }

  SUBCASE("k=10: 10 facts, 11 entities on the path") {
    StoryInstance inst = sample_chain(g, 10, 9, kb);
    CHECK(inst.facts.size() == 10);
    CHECK(entity_count(inst) == 11);
    check_instance_wellformed(inst, kb);
  }

  SUBCASE("determinism in seed") {
    StoryInstance a = sample_chain(g, 5, 3, kb);
    StoryInstance b = sample_chain(g, 5, 3, kb);
    CHECK(instances_equal(a, b));
  }

  SUBCASE("k out of range") {
    CHECK_THROWS_AS((void)sample_chain(g, 1, 0, kb), std::invalid_argument);
    CHECK_THROWS_AS((void)sample_chain(g, 11, 0, kb), std::invalid_argument);
  }
}

TEST_CASE("a father-father chain resolves to grandfather") {
  // hunt for one across instances; facts may be stated in either
  // orientation, so walk the path to read the oriented chain
  const KnowledgeBase& kb = KnowledgeBase::default_kb();
  bool found = false;
  for (uint64_t seed = 0; seed < 600 && !found; ++seed) {
    StoryInstance inst = generate_instance(2, NoiseRegime::clean, seed);
    int prev = inst.query.first;
    std::vector<Rel> chain;
    for (int i = 0; i < 2; ++i) {
      const Fact& f = inst.facts[static_cast<size_t>(i)];
      chain.push_back(f.src == prev ? f.rel : invert(f.rel));
      prev = f.src == prev ? f.dst : f.src;
    }
    if (chain[0] == Rel::father && chain[1] == Rel::father) {
      CHECK(inst.target == Rel::grandfather);
      found = true;
    }
  }
  CHECK(found);
  CHECK(kb.compose(Rel::father, Rel::father) == Rel::grandfather);
}

TEST_CASE("noise regimes satisfy their structural contracts") {
  const KnowledgeBase& kb = KnowledgeBase::default_kb();
  GenParams params;
  params.require_path_k = 4;

  for (uint64_t seed = 50; seed < 70; ++seed) {
    FamilyGraph g = sample_family_graph(seed, params);
    StoryInstance clean = sample_chain(g, 4, seed, kb);
    std::set<int> path_ids;
    for (int i = 0; i <= clean.k; ++i) path_ids.insert(i);

    SUBCASE("") {}  // keep doctest quiet about empty case

    StoryInstance sup = add_noise(clean, NoiseRegime::supporting, seed * 3 + 1, g);
    CHECK(sup.noise == NoiseRegime::supporting);
    check_instance_wellformed(sup, kb);
    for (size_t i = static_cast<size_t>(sup.k); i < sup.facts.size(); ++i) {
      CHECK(path_ids.count(sup.facts[i].src));
      CHECK(path_ids.count(sup.facts[i].dst));
    }

    StoryInstance irr = add_noise(clean, NoiseRegime::irrelevant, seed * 3 + 2, g);
    check_instance_wellformed(irr, kb);
    for (size_t i = static_cast<size_t>(irr.k); i < irr.facts.size(); ++i) {
      const bool src_on = path_ids.count(irr.facts[i].src) > 0;
      const bool dst_on = path_ids.count(irr.facts[i].dst) > 0;
      CHECK(src_on != dst_on);
    }

    StoryInstance dis = add_noise(clean, NoiseRegime::disconnected, seed * 3 + 3, g);
    check_instance_wellformed(dis, kb);
    CHECK(dis.facts.size() > static_cast<size_t>(dis.k));
    for (size_t i = static_cast<size_t>(dis.k); i < dis.facts.size(); ++i) {
      CHECK(!path_ids.count(dis.facts[i].src));
      CHECK(!path_ids.count(dis.facts[i].dst));
    }

    // path and target preserved in every regime
    for (const StoryInstance* noisy : {&sup, &irr, &dis}) {
      CHECK(noisy->target == clean.target);
      CHECK(noisy->query == clean.query);
      for (int i = 0; i < clean.k; ++i) CHECK(noisy->facts[static_cast<size_t>(i)] ==
                                              clean.facts[static_cast<size_t>(i)]);
    }
  }
}

TEST_CASE("add_noise rejects bad input") {
  FamilyGraph g = sample_family_graph(1);
  StoryInstance inst = sample_chain(g, 3, 5);
  CHECK_THROWS_AS((void)add_noise(inst, NoiseRegime::clean, 0, g), std::invalid_argument);
  StoryInstance noisy = add_noise(inst, NoiseRegime::supporting, 0, g);
  CHECK_THROWS_AS((void)add_noise(noisy, NoiseRegime::irrelevant, 0, g), std::invalid_argument);
}

TEST_CASE("dataset generation, round trip, determinism") {
  DataConfig config;
  config.train_k = {2, 3, 4};
  config.n_train = 30;
  config.n_valid = 10;
  config.n_test_per_k = 4;
  config.test_k = {2, 3, 4, 5, 6, 7, 8, 9, 10};
  config.seed = 77;

  auto t0 = std::chrono::steady_clock::now();
  DatasetSplit split = generate_dataset(config);
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count();
  MESSAGE("76 instances generated in ", ms, " ms");

  CHECK(split.train.size() == 30);
  CHECK(split.valid.size() == 10);
  CHECK(split.test.size() == 9);
  for (int k = 2; k <= 10; ++k) {
    REQUIRE(split.test.count(k));
    for (const StoryInstance& inst : split.test.at(k)) CHECK(inst.k == k);
  }
  // train k values cycle through the configured set
  std::set<int> seen_k;
  for (const StoryInstance& inst : split.train) seen_k.insert(inst.k);
  CHECK(seen_k == std::set<int>{2, 3, 4});

  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "relchain_ds_test";
  fs::remove_all(dir);
  save_dataset(split, config, dir);
  DatasetSplit loaded = load_dataset(dir);
  CHECK(splits_equal(split, loaded));

  // byte-identical regeneration
  fs::path dir2 = fs::temp_directory_path() / "relchain_ds_test2";
  fs::remove_all(dir2);
  DatasetSplit again = generate_dataset(config);
  save_dataset(again, config, dir2);
  for (const char* name : {"train.jsonl", "valid.jsonl", "test_k2.jsonl", "test_k10.jsonl",
                           "manifest.json"}) {
    std::ifstream f1(dir / name, std::ios::binary);
    std::ifstream f2(dir2 / name, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    CHECK(!s1.empty());
  }

  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("malformed dataset records report the line number") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "relchain_ds_bad";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "manifest.json");
    out << R"({"format":1,"test_k":[2]})" << "\n";
    std::ofstream train(dir / "train.jsonl");
    train << R"({"facts":[[0,"father",1]],"query":[0,1],"target":"father","k":1,"noise":"clean","seed":1})"
          << "\n";
    train << "{broken\n";
    std::ofstream valid(dir / "valid.jsonl");
    std::ofstream test(dir / "test_k2.jsonl");
  }
  CHECK_THROWS_WITH_AS((void)load_dataset(dir), doctest::Contains("line 2"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("clean k=2 targets cover every rule rhs") {
  const KnowledgeBase& kb = KnowledgeBase::default_kb();
  std::set<Rel> want;
  for (const Rule& r : kb.rules()) want.insert(r.rhs);

  std::set<Rel> seen;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    uint64_t seed = Rng::mix(Rng::mix(4242, 1), static_cast<uint64_t>(i));
    StoryInstance inst = generate_instance(2, NoiseRegime::clean, seed);
    seen.insert(inst.target);
  }
  for (Rel r : want)
    CHECK_MESSAGE(seen.count(r) == 1, "rhs never sampled: ", relation_name(r));
}
