#include "relchain/story_gen.hpp"

#include <algorithm>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>

namespace relchain {

namespace {

std::vector<Fact> closure_edges(const FamilyTree& tree) {
  std::vector<Fact> edges;
  for (int a = 0; a < tree.size(); ++a)
    for (int b = 0; b < tree.size(); ++b)
      if (auto r = tree.derive(a, b)) edges.push_back({a, *r, b});
  return edges;
}

struct AdjEntry {
  int dst;
  Rel rel;
};

std::vector<std::vector<AdjEntry>> adjacency(const FamilyGraph& g) {
  std::vector<std::vector<AdjEntry>> adj(static_cast<size_t>(g.size()));
  for (const Fact& f : g.edges) adj[static_cast<size_t>(f.src)].push_back({f.dst, f.rel});
  return adj;
}

// Left-fold state algebra over the rule table: which relations can a chain
// suffix still reach. can_reach[s][m] is the bitmask of fold results
// reachable from state s in exactly m more steps.
struct FoldReach {
  explicit FoldReach(const KnowledgeBase& kb, int max_k) : max_steps(max_k) {
    table.assign(static_cast<size_t>(kBaseRelationCount) * static_cast<size_t>(max_k + 1), 0);
    for (int s = 0; s < kBaseRelationCount; ++s)
      at(s, 0) = 1u << s;
    for (int m = 1; m <= max_k; ++m)
      for (int s = 0; s < kBaseRelationCount; ++s) {
        uint32_t mask = 0;
        for (int r = 0; r < kBaseRelationCount; ++r) {
          auto next = kb.compose(static_cast<Rel>(s), static_cast<Rel>(r));
          if (next) mask |= at(static_cast<int>(*next), m - 1);
        }
        at(s, m) = mask;
      }
  }
  uint32_t& at(int state, int steps) {
    return table[static_cast<size_t>(state) * static_cast<size_t>(max_steps + 1) +
                 static_cast<size_t>(steps)];
  }
  uint32_t at(int state, int steps) const {
    return table[static_cast<size_t>(state) * static_cast<size_t>(max_steps + 1) +
                 static_cast<size_t>(steps)];
  }
  // fold results reachable by any chain of exactly k steps
  uint32_t reachable(int k) const {
    uint32_t mask = 0;
    for (int s = 0; s < kBaseRelationCount; ++s) mask |= at(s, k - 1);
    return mask;
  }
  int max_steps;
  std::vector<uint32_t> table;
};

const FoldReach& fold_reach(const KnowledgeBase& kb) {
  // the default KB dominates; other KBs get a fresh table per call site
  static const FoldReach default_table(KnowledgeBase::default_kb(), 10);
  if (&kb == &KnowledgeBase::default_kb()) return default_table;
  thread_local std::unique_ptr<FoldReach> scratch;
  thread_local const KnowledgeBase* scratch_kb = nullptr;
  if (scratch_kb != &kb) {
    scratch = std::make_unique<FoldReach>(kb, 10);
    scratch_kb = &kb;
  }
  return *scratch;
}

// Randomized DFS for a simple path of exactly k edges whose left fold ends
// at `target` (any defined fold when target is empty). Prunes branches whose
// fold state can no longer reach the target; gives up after a bounded number
// of expansions.
struct PathSearch {
  const KnowledgeBase& kb;
  const FoldReach& reach;
  const std::vector<std::vector<AdjEntry>>& adj;
  Rng& rng;
  long budget;
  std::optional<Rel> target;
  std::vector<int> nodes;
  std::vector<Rel> rels;
  std::vector<bool> visited;

  bool admissible(Rel state, int remaining) const {
    const uint32_t mask = reach.at(static_cast<int>(state), remaining);
    if (!target) return mask != 0;
    return (mask & (1u << static_cast<int>(*target))) != 0;
  }

  bool dfs(int cur, std::optional<Rel> state, int remaining) {
    if (remaining == 0) return true;  // admissibility made the fold land on target
    if (--budget <= 0) return false;
    std::vector<int> order(adj[static_cast<size_t>(cur)].size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);
    for (int oi : order) {
      const AdjEntry& e = adj[static_cast<size_t>(cur)][static_cast<size_t>(oi)];
      if (visited[static_cast<size_t>(e.dst)]) continue;
      std::optional<Rel> next_state =
          state.has_value() ? kb.compose(*state, e.rel) : std::optional<Rel>(e.rel);
      if (!next_state || !admissible(*next_state, remaining - 1)) continue;
      visited[static_cast<size_t>(e.dst)] = true;
      nodes.push_back(e.dst);
      rels.push_back(e.rel);
      if (dfs(e.dst, next_state, remaining - 1)) return true;
      nodes.pop_back();
      rels.pop_back();
      visited[static_cast<size_t>(e.dst)] = false;
    }
    return false;
  }
};

bool find_path(const FamilyGraph& graph, int k, Rng& rng, const KnowledgeBase& kb,
               std::vector<int>& nodes_out, std::vector<Rel>& rels_out, long budget,
               std::optional<Rel> target = std::nullopt) {
  auto adj = adjacency(graph);
  std::vector<int> starts(static_cast<size_t>(graph.size()));
  for (int i = 0; i < graph.size(); ++i) starts[static_cast<size_t>(i)] = i;
  rng.shuffle(starts);
  PathSearch search{kb,     fold_reach(kb), adj, rng, budget, target, {}, {},
                    std::vector<bool>(static_cast<size_t>(graph.size()), false)};
  for (int s : starts) {
    search.nodes.assign(1, s);
    search.rels.clear();
    std::fill(search.visited.begin(), search.visited.end(), false);
    search.visited[static_cast<size_t>(s)] = true;
    if (search.dfs(s, std::nullopt, k)) {
      nodes_out = search.nodes;
      rels_out = search.rels;
      return true;
    }
    if (search.budget <= 0) break;
  }
  return false;
}

// Relabels entities 0..n-1 by first appearance in the fact list.
void canonicalize(StoryInstance& inst) {
  std::unordered_map<int, int> remap;
  std::vector<int> graph_ids;
  auto id_of = [&](int original) {
    auto it = remap.find(original);
    if (it != remap.end()) return it->second;
    int fresh = static_cast<int>(remap.size());
    remap.emplace(original, fresh);
    graph_ids.push_back(original);
    return fresh;
  };
  for (Fact& f : inst.facts) {
    f.src = id_of(f.src);
    f.dst = id_of(f.dst);
  }
  inst.query.first = id_of(inst.query.first);
  inst.query.second = id_of(inst.query.second);
  // compose with any previous canonicalization
  if (!inst.graph_ids.empty()) {
    for (int& g : graph_ids) g = inst.graph_ids[static_cast<size_t>(g)];
  }
  inst.graph_ids = std::move(graph_ids);
}

}  // namespace

const char* noise_name(NoiseRegime n) {
  switch (n) {
    case NoiseRegime::clean: return "clean";
    case NoiseRegime::supporting: return "supporting";
    case NoiseRegime::irrelevant: return "irrelevant";
    default: return "disconnected";
  }
}

std::optional<NoiseRegime> parse_noise(std::string_view name) {
  if (name == "clean") return NoiseRegime::clean;
  if (name == "supporting") return NoiseRegime::supporting;
  if (name == "irrelevant") return NoiseRegime::irrelevant;
  if (name == "disconnected") return NoiseRegime::disconnected;
  return std::nullopt;
}

bool has_resolvable_path(const FamilyGraph& graph, int k, const KnowledgeBase& kb) {
  Rng rng(0x9e3779b9);
  std::vector<int> nodes;
  std::vector<Rel> rels;
  return find_path(graph, k, rng, kb, nodes, rels, 500000);
}

FamilyGraph sample_family_graph(uint64_t seed, const GenParams& params, const KnowledgeBase& kb) {
  if (params.max_entities < 2 * params.founding_couples + 1)
    throw std::invalid_argument("sample_family_graph: max_entities too small for founders");

  constexpr int kGraphAttempts = 32;
  for (int attempt = 0; attempt < kGraphAttempts; ++attempt) {
    Rng rng(Rng::mix(seed, static_cast<uint64_t>(attempt)));
    FamilyTree tree;

    struct Couple {
      int husband;
      int wife;
      int generation;
    };
    std::vector<Couple> fertile;
    // lineage labels prevent incestuous marriages cheaply; refined by the
    // common-ancestor check below
    for (int c = 0; c < params.founding_couples; ++c) {
      int m = tree.add_person(Gender::male);
      int f = tree.add_person(Gender::female);
      tree.marry(m, f);
      fertile.push_back({m, f, 0});
    }

    auto budget_left = [&] { return params.max_entities - tree.size(); };

    for (int gen = 1; gen < params.generations; ++gen) {
      std::vector<int> generation_members;
      std::vector<Couple> parents;
      std::swap(parents, fertile);
      for (const Couple& c : parents) {
        if (c.generation != gen - 1) {
          fertile.push_back(c);
          continue;
        }
        int n_children =
            static_cast<int>(rng.uniform_int(params.min_children, params.max_children));
        for (int i = 0; i < n_children && budget_left() > 0; ++i) {
          Gender g = rng.bernoulli(0.5) ? Gender::male : Gender::female;
          generation_members.push_back(tree.add_child(c.husband, c.wife, g));
        }
      }
      if (gen == params.generations - 1) break;  // youngest generation stays unmarried

      // marry within the generation when the pair shares no ancestor,
      // otherwise optionally bring in an outside spouse
      std::vector<int> singles = generation_members;
      rng.shuffle(singles);
      for (size_t i = 0; i < singles.size(); ++i) {
        int a = singles[i];
        if (tree.spouse(a) != -1) continue;
        if (!rng.bernoulli(params.marry_prob)) continue;
        int partner = -1;
        for (size_t j = i + 1; j < singles.size(); ++j) {
          int b = singles[j];
          if (tree.spouse(b) != -1 || tree.gender(b) == tree.gender(a)) continue;
          bool related = false;
          for (int anc = 0; anc < tree.size() && !related; ++anc)
            if (tree.is_ancestor(anc, a) && tree.is_ancestor(anc, b)) related = true;
          if (!related) {
            partner = b;
            break;
          }
        }
        if (partner == -1 && budget_left() > 0 && rng.bernoulli(params.outsider_spouse_prob)) {
          partner = tree.add_person(tree.gender(a) == Gender::male ? Gender::female : Gender::male);
        }
        if (partner != -1) {
          tree.marry(a, partner);
          Couple c = tree.gender(a) == Gender::male ? Couple{a, partner, gen}
                                                    : Couple{partner, a, gen};
          fertile.push_back(c);
        }
      }
    }

    FamilyGraph graph{std::move(tree), {}};
    graph.edges = closure_edges(graph.tree);

    if (params.require_path_k > 0 && !has_resolvable_path(graph, params.require_path_k, kb))
      continue;
    return graph;
  }
  throw std::runtime_error("sample_family_graph: no graph with a resolvable path of length " +
                           std::to_string(params.require_path_k) + " after bounded attempts");
}

StoryInstance sample_chain(const FamilyGraph& graph, int k, uint64_t seed,
                           const KnowledgeBase& kb) {
  if (k < 2 || k > 10) throw std::invalid_argument("sample_chain: k must be in 2..10");
  Rng rng(seed);

  // mixed sampling policy: half the time the fold result is drawn uniformly
  // from the labels reachable at this length and the search is steered to
  // it (flattens the answer prior and guarantees rule coverage); otherwise
  // the chain is free-sampled, keeping the natural target distribution
  std::vector<int> nodes;
  std::vector<Rel> rels;
  bool found = false;
  if (rng.bernoulli(0.5)) {
    std::vector<Rel> candidates;
    const uint32_t reachable = fold_reach(kb).reachable(k);
    for (int r = 0; r < kBaseRelationCount; ++r)
      if (reachable & (1u << r)) candidates.push_back(static_cast<Rel>(r));
    rng.shuffle(candidates);
    for (Rel target : candidates) {
      if (find_path(graph, k, rng, kb, nodes, rels, 200000, target)) {
        found = true;
        break;
      }
    }
  }
  if (!found) found = find_path(graph, k, rng, kb, nodes, rels, 2000000);
  if (!found)
    throw std::runtime_error("sample_chain: no resolvable simple path of length " +
                             std::to_string(k));
  auto target = kb.resolve_chain(rels);

  StoryInstance inst;
  for (int i = 0; i < k; ++i) {
    const int src = nodes[static_cast<size_t>(i)];
    const int dst = nodes[static_cast<size_t>(i + 1)];
    const Rel rel = rels[static_cast<size_t>(i)];
    // facts state the step in either reading: "src's rel is dst" or the
    // inv- dual "dst is the rel of src"; both orientations carry the same
    // information and models must reorient by matching entities
    if (rng.bernoulli(0.5)) inst.facts.push_back({src, rel, dst});
    else inst.facts.push_back({dst, invert(rel), src});
  }
  inst.query = {nodes.front(), nodes.back()};
  inst.target = *target;
  inst.k = k;
  inst.noise = NoiseRegime::clean;
  inst.seed = seed;
  canonicalize(inst);
  return inst;
}

StoryInstance add_noise(const StoryInstance& instance, NoiseRegime regime, uint64_t seed,
                        const FamilyGraph& graph, int count) {
  if (regime == NoiseRegime::clean)
    throw std::invalid_argument("add_noise: regime must be a noise regime");
  if (instance.noise != NoiseRegime::clean)
    throw std::invalid_argument("add_noise: instance already noisy");
  if (instance.graph_ids.empty())
    throw std::invalid_argument("add_noise: instance is detached from its source graph");

  if (count < 0) count = (instance.k + 1) / 2;
  Rng rng(seed);
  StoryInstance out = instance;
  out.noise = regime;

  // translate canonical ids back to graph nodes
  std::vector<Fact> path_graph_facts;
  for (const Fact& f : instance.facts)
    path_graph_facts.push_back({instance.graph_ids[static_cast<size_t>(f.src)], f.rel,
                                instance.graph_ids[static_cast<size_t>(f.dst)]});
  std::unordered_set<int> on_path(instance.graph_ids.begin(), instance.graph_ids.end());

  std::vector<Fact> noise_facts;
  if (regime == NoiseRegime::supporting) {
    std::vector<Fact> candidates;
    for (const Fact& e : graph.edges) {
      if (!on_path.count(e.src) || !on_path.count(e.dst)) continue;
      bool duplicate = false;
      for (const Fact& f : path_graph_facts)
        if (f.src == e.src && f.dst == e.dst) duplicate = true;
      if (!duplicate) candidates.push_back(e);
    }
    rng.shuffle(candidates);
    for (int i = 0; i < count && i < static_cast<int>(candidates.size()); ++i)
      noise_facts.push_back(candidates[static_cast<size_t>(i)]);
  } else if (regime == NoiseRegime::irrelevant) {
    std::vector<Fact> candidates;
    for (const Fact& e : graph.edges) {
      const bool src_on = on_path.count(e.src) > 0;
      const bool dst_on = on_path.count(e.dst) > 0;
      if (src_on != dst_on) candidates.push_back(e);
    }
    rng.shuffle(candidates);
    for (int i = 0; i < count && i < static_cast<int>(candidates.size()); ++i)
      noise_facts.push_back(candidates[static_cast<size_t>(i)]);
  } else {
    // disconnected: a chain over a fresh auxiliary family, ids offset past
    // every id in the source graph
    GenParams aux_params;
    aux_params.max_entities = std::max(8, count + 2);
    aux_params.generations = 3;
    aux_params.min_children = 2;
    aux_params.max_children = 3;
    aux_params.founding_couples = 1;
    FamilyGraph aux = sample_family_graph(Rng::mix(seed, 0xD15C0ull), aux_params);
    Rng aux_rng(Rng::mix(seed, 1));
    std::vector<int> nodes;
    std::vector<Rel> rels;
    // noise facts need no resolvable fold; fall back to single edges when no
    // path of the requested length exists
    const KnowledgeBase& kb = KnowledgeBase::default_kb();
    int want = count;
    if (find_path(aux, std::min(want, 4), aux_rng, kb, nodes, rels, 100000)) {
      for (size_t i = 0; i + 1 < nodes.size(); ++i)
        noise_facts.push_back({nodes[i], rels[i], nodes[i + 1]});
    }
    while (static_cast<int>(noise_facts.size()) < want && !aux.edges.empty()) {
      const Fact& e = aux.edges[static_cast<size_t>(
          aux_rng.uniform_int(0, static_cast<int64_t>(aux.edges.size()) - 1))];
      bool dup = false;
      for (const Fact& f : noise_facts)
        if (f.src == e.src && f.dst == e.dst) dup = true;
      if (!dup) noise_facts.push_back(e);
    }
    const int offset = graph.size();
    for (Fact& f : noise_facts) {
      f.src += offset;
      f.dst += offset;
    }
  }

  for (Fact& f : noise_facts) {
    if (rng.bernoulli(0.5)) f = Fact{f.dst, invert(f.rel), f.src};
  }
  out.facts = path_graph_facts;
  out.facts.insert(out.facts.end(), noise_facts.begin(), noise_facts.end());
  // rebuild canonical ids from graph ids: path facts first keeps 0..k stable
  out.graph_ids.clear();
  out.query = {instance.graph_ids[static_cast<size_t>(instance.query.first)],
               instance.graph_ids[static_cast<size_t>(instance.query.second)]};
  canonicalize(out);
  return out;
}

StoryInstance generate_instance(int k, NoiseRegime regime, uint64_t seed, const GenParams& params,
                                const KnowledgeBase& kb, int noise_count) {
  constexpr int kAttempts = 64;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    FamilyGraph graph = sample_family_graph(Rng::mix(seed, 0x6772u + static_cast<uint64_t>(attempt)),
                                            params, kb);
    try {
      StoryInstance inst = sample_chain(graph, k, Rng::mix(seed, 0xC4A1u), kb);
      inst.seed = seed;
      if (regime != NoiseRegime::clean)
        inst = add_noise(inst, regime, Rng::mix(seed, 0x4015Eu), graph, noise_count);
      inst.seed = seed;
      return inst;
    } catch (const std::runtime_error&) {
      continue;  // graph admits no k-path; resample
    }
  }
  throw std::runtime_error("generate_instance: could not generate a k=" + std::to_string(k) +
                           " instance after bounded attempts");
}

}  // namespace relchain
