#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "relchain/family_tree.hpp"
#include "relchain/kb.hpp"
#include "relchain/rng.hpp"

namespace relchain {

struct Fact {
  int src;
  Rel rel;
  int dst;
  bool operator==(const Fact&) const = default;
};

// A sampled family: the underlying tree plus the full closure of base-label
// edges between its members. Chains and noise facts are drawn from the
// closure.
struct FamilyGraph {
  FamilyTree tree;
  std::vector<Fact> edges;
  int size() const { return tree.size(); }
};

struct GenParams {
  int max_entities = 30;
  int generations = 4;
  int min_children = 2;
  int max_children = 5;
  int founding_couples = 2;
  double marry_prob = 0.8;
  double outsider_spouse_prob = 0.4;
  // when > 0, sampled graphs are rejected until a resolvable simple path of
  // this length exists
  int require_path_k = 0;
};

// Deterministic in seed. Throws when params make the requirement
// unsatisfiable after bounded retries.
FamilyGraph sample_family_graph(uint64_t seed, const GenParams& params = {},
                                const KnowledgeBase& kb = KnowledgeBase::default_kb());

enum class NoiseRegime { clean, supporting, irrelevant, disconnected };

const char* noise_name(NoiseRegime n);
std::optional<NoiseRegime> parse_noise(std::string_view name);

struct StoryInstance {
  std::vector<Fact> facts;        // path facts first, then noise facts
  std::pair<int, int> query;      // (head, tail) canonical ids
  Rel target;
  int k = 0;                      // chain edge count; noise facts not included
  NoiseRegime noise = NoiseRegime::clean;
  uint64_t seed = 0;

  // canonical id -> node id in the source graph; carried only while the
  // instance is still attached to its graph (not serialized)
  std::vector<int> graph_ids;
};

// Clean k-chain: a simple path whose relation chain resolves under the KB.
// Rejection-resamples unresolvable paths; throws when none exists within
// the attempt budget.
StoryInstance sample_chain(const FamilyGraph& graph, int k, uint64_t seed,
                           const KnowledgeBase& kb = KnowledgeBase::default_kb());

// Adds noise facts per regime and re-canonicalizes entity ids. The original
// path, query and target are preserved. count < 0 means ceil(k / 2).
StoryInstance add_noise(const StoryInstance& instance, NoiseRegime regime, uint64_t seed,
                        const FamilyGraph& graph, int count = -1);

// graph sampling + chain + optional noise, all derived from one seed
StoryInstance generate_instance(int k, NoiseRegime regime, uint64_t seed,
                                const GenParams& params = {},
                                const KnowledgeBase& kb = KnowledgeBase::default_kb(),
                                int noise_count = -1);

// true when a resolvable simple path of length k exists (used by the graph
// sampler's postcondition and tests)
bool has_resolvable_path(const FamilyGraph& graph, int k, const KnowledgeBase& kb);

}  // namespace relchain
