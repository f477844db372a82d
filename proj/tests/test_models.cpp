#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>

#include "relchain/egnn.hpp"
#include "relchain/gradcheck.hpp"
#include "relchain/lgraph.hpp"

using namespace relchain;

namespace {

std::vector<StoryInstance> tiny_instances(int count, int k, uint64_t seed,
                                          NoiseRegime regime = NoiseRegime::clean) {
  std::vector<StoryInstance> out;
  for (int i = 0; i < count; ++i)
    out.push_back(generate_instance(k, regime, Rng::mix(seed, static_cast<uint64_t>(i))));
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double worst = 0.0;
  for (int64_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.values()[static_cast<size_t>(i)] -
                                     b.values()[static_cast<size_t>(i)]));
  return worst;
}

// Hand-made two-fact instance: A -father-> B, B -father-> C, query (A, C).
StoryInstance father_father() {
  StoryInstance inst;
  inst.facts = {{0, Rel::father, 1}, {1, Rel::father, 2}};
  inst.query = {0, 2};
  inst.target = Rel::grandfather;
  inst.k = 2;
  return inst;
}

}  // namespace

TEST_CASE("message is (theta x_j) || e_ij") {
  Tensor theta = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  Tensor xj = Tensor::from_values({1, 2}, {1, 0});
  Tensor e = Tensor::from_values({1, 3}, {0, 1, 0});
  Tensor msg = egnn_message(xj, e, theta, nullptr);
  REQUIRE(msg.shape() == Shape{1, 5});
  const double expect[5] = {1, 0, 0, 1, 0};
  for (int i = 0; i < 5; ++i) CHECK(msg.values()[static_cast<size_t>(i)] == expect[i]);

  // width arithmetic: emb 4 + rel 3 -> 7
  Tensor theta4 = Tensor({4, 4});
  CHECK(egnn_message(Tensor({5, 4}), Tensor({5, 3}), theta4, nullptr).shape() == Shape{5, 7});

  // zero edge attribute: suffix zero, prefix theta x_j
  Tensor msg0 = egnn_message(xj, Tensor({1, 3}), theta, nullptr);
  CHECK(msg0.values()[0] == 1.0);
  CHECK(msg0.values()[2] == 0.0);
  CHECK(msg0.values()[4] == 0.0);
}

TEST_CASE("aggregate modes: permutation invariance, arithmetic, empty neighborhood") {
  Tensor msgs = Tensor::from_values({4, 2}, {2, 0, 0, 2, 1, 1, 5, -1});
  std::vector<int64_t> dst{0, 0, 2, 2};

  for (AggMode mode : {AggMode::sum, AggMode::mean, AggMode::max}) {
    Tensor fwd = egnn_aggregate(msgs, dst, 3, mode, nullptr);
    // permute the message list (and segment ids accordingly)
    Tensor perm = Tensor::from_values({4, 2}, {5, -1, 1, 1, 0, 2, 2, 0});
    std::vector<int64_t> pdst{2, 2, 0, 0};
    Tensor bwd = egnn_aggregate(perm, pdst, 3, mode, nullptr);
    CHECK(max_abs_diff(fwd, bwd) <= 1e-12);
    // empty neighborhood (segment 1) is the zero vector
    CHECK(fwd.values()[2] == 0.0);
    CHECK(fwd.values()[3] == 0.0);
  }

  Tensor mean = egnn_aggregate(msgs, dst, 3, AggMode::mean, nullptr);
  CHECK(mean.values()[0] == doctest::Approx(1.0));
  CHECK(mean.values()[1] == doctest::Approx(1.0));
}

TEST_CASE("update projects back to emb_dim") {
  const int64_t d = 4, r = 3;
  Rng rng(2);
  Tensor x = Tensor::uniform({6, d}, -1, 1, rng);
  Tensor agg = Tensor::uniform({6, d + r}, -1, 1, rng);
  Tensor w_self = Tensor::uniform({d, d}, -1, 1, rng);
  Tensor u = Tensor::uniform({d + r, d}, -1, 1, rng);
  Tensor b = Tensor({d});
  CHECK(egnn_update(x, agg, w_self, u, b, false, nullptr).shape() == Shape{6, d});

  // zero aggregate, zero bias, identity-like projection reduces to the self term
  Tensor eye({d, d});
  for (int64_t i = 0; i < d; ++i) eye.values()[static_cast<size_t>(i * d + i)] = 1.0;
  Tensor out = egnn_update(x, Tensor({6, d + r}), eye, u, b, true, nullptr);
  CHECK(max_abs_diff(out, x) <= 1e-12);

  // gradient of update wrt the edge-update matrix matches finite differences
  Tensor xg = Tensor::uniform({3, d}, -1, 1, rng);
  Tensor aggg = Tensor::uniform({3, d + r}, -1, 1, rng);
  Tensor ug = Tensor::uniform({d + r, d}, -1, 1, rng).set_requires_grad(true);
  Tensor wg = Tensor::uniform({d, d}, -1, 1, rng);
  Tensor weights = Tensor::uniform({3, d}, -1, 1, rng);
  double err = check_gradients(
      [&](Tape* t) {
        Tensor up = egnn_update(xg, aggg, wg, ug, Tensor({d}), false, t);
        return reduce_sum(reshape(mul(up, weights, t), {1, 3 * d}, t), 1, t);
      },
      {ug});
  CHECK(err <= 1e-4);
}

TEST_CASE("1-layer star graph: locality of message passing") {
  // star: center 0, leaves 1..3; edges leaf -> center and back
  StoryInstance star;
  star.facts = {{1, Rel::father, 0}, {2, Rel::mother, 0}, {3, Rel::brother, 0}};
  star.query = {1, 0};
  star.target = Rel::father;
  star.k = 1;  // structural test only; not a sampled instance
  std::vector<StoryInstance> instances{star};

  EgnnConfig cfg;
  cfg.variant = EgnnVariant::gcn;
  cfg.emb_dim = 8;
  cfg.layers = 1;
  cfg.max_entities = 8;
  EgnnModel model(cfg, 5);
  GraphBatch batch = build_graph_batch(instances, 8);
  Tensor base = model.encode_graph(batch, nullptr);

  // perturb leaf 3's slot embedding: after one layer the center must move,
  // leaves 1 and 2 must not (their neighborhood excludes leaf 3)
  auto slots = model.params()[0].value;
  slots.values()[static_cast<size_t>(3 * cfg.emb_dim)] += 0.5;
  Tensor bumped = model.encode_graph(batch, nullptr);

  // node indices follow first appearance in the fact list
  auto node_of = [&](int entity) {
    const int order[4] = {1, 0, 2, 3};  // entity -> node for this fact list
    return order[entity];
  };
  auto row_diff = [&](int entity) {
    const int node = node_of(entity);
    double worst = 0.0;
    for (int j = 0; j < cfg.emb_dim; ++j)
      worst = std::max(worst, std::abs(
          base.values()[static_cast<size_t>(node * cfg.emb_dim + j)] -
          bumped.values()[static_cast<size_t>(node * cfg.emb_dim + j)]));
    return worst;
  };
  CHECK(row_diff(0) > 1e-9);   // center sees all leaves
  CHECK(row_diff(3) > 1e-9);   // its own slot changed
  CHECK(row_diff(1) <= 1e-12); // leaf 1 depends only on center and self
  CHECK(row_diff(2) <= 1e-12);
}

TEST_CASE("edge reordering leaves logits unchanged (sum aggregation)") {
  auto instances = tiny_instances(6, 4, 91);
  for (EgnnVariant v : {EgnnVariant::gcn, EgnnVariant::rgcn, EgnnVariant::sgcn}) {
    EgnnConfig cfg;
    cfg.variant = v;
    cfg.emb_dim = 12;
    cfg.layers = 2;
    EgnnModel model(cfg, 7);
    GraphBatch batch = build_graph_batch(instances, cfg.max_entities);
    Tensor out = model.forward(batch, nullptr);

    GraphBatch shuffled = batch;
    // reverse the edge list
    std::reverse(shuffled.edge_src.begin(), shuffled.edge_src.end());
    std::reverse(shuffled.edge_dst.begin(), shuffled.edge_dst.end());
    std::reverse(shuffled.edge_rel.begin(), shuffled.edge_rel.end());
    Tensor out2 = model.forward(shuffled, nullptr);
    CHECK(max_abs_diff(out, out2) <= 1e-9);
  }
}

TEST_CASE("padding nodes never influence logits") {
  auto small = tiny_instances(3, 2, 17);  // 3 entities
  auto mixed = small;
  mixed.push_back(tiny_instances(1, 6, 18)[0]);  // forces padding on the first three

  EgnnConfig cfg;
  cfg.emb_dim = 10;
  for (EgnnVariant v : {EgnnVariant::gcn, EgnnVariant::gat, EgnnVariant::sgcn, EgnnVariant::agnn,
                        EgnnVariant::rgcn}) {
    cfg.variant = v;
    EgnnModel model(cfg, 23);
    Tensor alone = model.forward(build_graph_batch(small, cfg.max_entities), nullptr);
    Tensor padded = model.forward(build_graph_batch(mixed, cfg.max_entities), nullptr);
    double worst = 0.0;
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < cfg.num_classes; ++c)
        worst = std::max(worst, std::abs(
            alone.values()[static_cast<size_t>(b * cfg.num_classes + c)] -
            padded.values()[static_cast<size_t>(b * cfg.num_classes + c)]));
    CHECK_MESSAGE(worst <= 1e-9, egnn_variant_name(v), " padding leak ", worst);
  }
}

TEST_CASE("node relabeling with consistent slots permutes embeddings, keeps logits") {
  StoryInstance inst = father_father();
  std::vector<StoryInstance> instances{inst};

  // relabel 0->2, 1->0, 2->1
  StoryInstance relabeled = inst;
  auto perm = [](int id) { return std::array<int, 3>{2, 0, 1}[static_cast<size_t>(id)]; };
  for (Fact& f : relabeled.facts) {
    f.src = perm(f.src);
    f.dst = perm(f.dst);
  }
  relabeled.query = {perm(inst.query.first), perm(inst.query.second)};
  std::vector<StoryInstance> relabeled_instances{relabeled};

  EgnnConfig cfg;
  cfg.emb_dim = 6;
  cfg.layers = 2;
  cfg.max_entities = 3;
  for (EgnnVariant v : {EgnnVariant::gcn, EgnnVariant::gat, EgnnVariant::agnn, EgnnVariant::rgcn}) {
    cfg.variant = v;
    EgnnModel model(cfg, 31);
    Tensor logits = model.forward(build_graph_batch(instances, 3), nullptr);

    // permute the slot table rows to match the relabeling
    EgnnModel permuted(cfg, 31);
    auto& src_slots = model.params()[0].value;
    auto& dst_slots = permuted.params()[0].value;
    for (int id = 0; id < 3; ++id)
      for (int j = 0; j < cfg.emb_dim; ++j)
        dst_slots.values()[static_cast<size_t>(perm(id) * cfg.emb_dim + j)] =
            src_slots.values()[static_cast<size_t>(id * cfg.emb_dim + j)];
    Tensor logits2 = permuted.forward(build_graph_batch(relabeled_instances, 3), nullptr);
    CHECK_MESSAGE(max_abs_diff(logits, logits2) <= 1e-9, egnn_variant_name(v));
  }
}

TEST_CASE("rgcn with tied relation weights equals a plain-loop edge-agnostic GCN") {
  StoryInstance inst = father_father();
  std::vector<StoryInstance> instances{inst};
  EgnnConfig cfg;
  cfg.variant = EgnnVariant::rgcn;
  cfg.emb_dim = 5;
  cfg.layers = 2;
  cfg.max_entities = 3;
  EgnnModel model(cfg, 13);

  // tie every relation weight to one matrix
  Tensor shared;
  for (Parameter& p : model.params()) {
    if (p.name.find("rel") != std::string::npos) {
      if (!shared.defined()) shared = p.value;
      else
        std::copy(shared.values().begin(), shared.values().end(), p.value.values().begin());
    }
  }

  GraphBatch batch = build_graph_batch(instances, 3);
  Tensor got = model.forward(batch, nullptr);

  // reference: hand-rolled x' = relu(W_self x + sum_j Theta x_j + b), then readout
  const int d = cfg.emb_dim;
  auto value_of = [&](const std::string& name) -> Tensor {
    for (Parameter& p : model.params())
      if (p.name == name) return p.value;
    FAIL("missing param ", name);
    return Tensor({1});
  };
  std::vector<std::vector<double>> x(3, std::vector<double>(static_cast<size_t>(d)));
  Tensor slots = value_of("slots");
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < d; ++j)
      x[static_cast<size_t>(i)][static_cast<size_t>(j)] =
          slots.values()[static_cast<size_t>(i * d + j)];

  for (int layer = 0; layer < cfg.layers; ++layer) {
    Tensor w_self = value_of("layer" + std::to_string(layer) + ".w_self");
    Tensor bias = value_of("layer" + std::to_string(layer) + ".bias");
    Tensor theta = value_of("layer" + std::to_string(layer) + ".rel0.theta");
    std::vector<std::vector<double>> next(3, std::vector<double>(static_cast<size_t>(d), 0.0));
    for (int i = 0; i < 3; ++i) {
      std::vector<double> acc(static_cast<size_t>(d), 0.0);
      for (size_t e = 0; e < batch.edge_src.size(); ++e) {
        if (batch.edge_dst[e] != i) continue;
        const auto& xj = x[static_cast<size_t>(batch.edge_src[e])];
        for (int c = 0; c < d; ++c)
          for (int rr = 0; rr < d; ++rr)
            acc[static_cast<size_t>(c)] += xj[static_cast<size_t>(rr)] *
                                           theta.values()[static_cast<size_t>(rr * d + c)];
      }
      for (int c = 0; c < d; ++c) {
        double v = bias.values()[static_cast<size_t>(c)] + acc[static_cast<size_t>(c)];
        for (int rr = 0; rr < d; ++rr)
          v += x[static_cast<size_t>(i)][static_cast<size_t>(rr)] *
               value_of("layer" + std::to_string(layer) + ".w_self")
                   .values()[static_cast<size_t>(rr * d + c)];
        next[static_cast<size_t>(i)][static_cast<size_t>(c)] = std::max(0.0, v);
      }
    }
    x = next;
  }
  // readout: [mean || head || tail] @ W
  std::vector<double> feat;
  for (int c = 0; c < d; ++c)
    feat.push_back((x[0][static_cast<size_t>(c)] + x[1][static_cast<size_t>(c)] +
                    x[2][static_cast<size_t>(c)]) / 3.0);
  for (int c = 0; c < d; ++c) feat.push_back(x[0][static_cast<size_t>(c)]);
  for (int c = 0; c < d; ++c) feat.push_back(x[2][static_cast<size_t>(c)]);
  Tensor w = value_of("readout.w");
  for (int cls = 0; cls < cfg.num_classes; ++cls) {
    double v = 0.0;
    for (int j = 0; j < 3 * d; ++j)
      v += feat[static_cast<size_t>(j)] *
           w.values()[static_cast<size_t>(j * cfg.num_classes + cls)];
    CHECK(std::abs(v - got.values()[static_cast<size_t>(cls)]) <= 1e-9);
  }
}

TEST_CASE("readout shapes and zero-weight uniformity") {
  auto instances = tiny_instances(4, 3, 3);
  EgnnConfig cfg;
  cfg.emb_dim = 100;
  EgnnModel model(cfg, 3);
  GraphBatch batch = build_graph_batch(instances, cfg.max_entities);
  Tensor embs = model.encode_graph(batch, nullptr);
  CHECK(embs.shape() == Shape{4 * batch.max_nodes, 100});

  // gather picks exactly the query rows
  Tensor head = gather_rows(embs, batch.head_index, nullptr);
  for (int b = 0; b < 4; ++b)
    for (int j = 0; j < 100; ++j)
      CHECK(head.values()[static_cast<size_t>(b * 100 + j)] ==
            embs.values()[static_cast<size_t>(batch.head_index[static_cast<size_t>(b)] * 100 + j)]);

  // readout weight zero -> uniform distribution after softmax
  std::fill(model.params().back().value.values().begin(),
            model.params().back().value.values().end(), 0.0);
  Tensor logits = model.forward(batch, nullptr);
  Tensor probs = softmax(logits, nullptr);
  for (int64_t i = 0; i < probs.size(); ++i)
    CHECK(probs.values()[static_cast<size_t>(i)] ==
          doctest::Approx(1.0 / cfg.num_classes).epsilon(1e-9));
}

TEST_CASE("linearize emits SPO triples in path order with SO query") {
  StoryInstance inst = father_father();
  auto [tokens, query] = linearize(inst, 30);
  const int64_t father_tok = relation_token(Rel::father, 30);
  std::vector<int64_t> expect{entity_token(0), father_tok, entity_token(1),
                              entity_token(1), father_tok, entity_token(2)};
  CHECK(tokens == expect);
  CHECK(query.first == entity_token(0));
  CHECK(query.second == entity_token(2));

  // entity slot beyond the vocabulary
  StoryInstance big = inst;
  big.facts[1].dst = 40;
  big.query.second = 40;
  CHECK_THROWS_AS((void)linearize(big, 30), std::invalid_argument);

  // canonicalization invariance: permuted raw entity names produce the same
  // tokens after canonical relabeling, which sampled instances always carry
  auto a = generate_instance(3, NoiseRegime::clean, 5);
  auto [ta, qa] = linearize(a, 30);
  CHECK(ta.size() == 9);  // 3k tokens

  auto k10 = generate_instance(10, NoiseRegime::clean, 6);
  CHECK(linearize(k10, 30).first.size() == 30);
}

TEST_CASE("shape algebra across all sequence variants and hidden sizes") {
  auto instances = tiny_instances(3, 3, 29);
  for (int hidden : {16, 50, 100}) {
    for (SeqVariant v : {SeqVariant::rnn, SeqVariant::lstm, SeqVariant::gru, SeqVariant::bi_rnn,
                         SeqVariant::bi_lstm, SeqVariant::bi_gru, SeqVariant::cnn,
                         SeqVariant::cnnh, SeqVariant::mha, SeqVariant::boe}) {
      SeqConfig cfg;
      cfg.variant = v;
      cfg.emb_dim = hidden;
      cfg.heads = 2;
      SeqModel model(cfg, 11);
      TokenBatch batch = build_token_batch(instances, cfg.max_entities);
      Tensor fact_emb = model.encode_seq(batch.fact_tokens, batch.fact_lengths, batch.batch,
                                         batch.fact_len, nullptr);
      const int64_t width = is_bidirectional(v) ? 2 * hidden : hidden;
      CHECK_MESSAGE((fact_emb.shape() == Shape{3, width}), seq_variant_name(v), " hidden ",
                    hidden);

      std::vector<int64_t> qlen(3, 2);
      Tensor query_emb = model.encode_seq(batch.query_tokens, qlen, 3, 2, nullptr);
      Tensor logits = model.classify(fact_emb, query_emb, nullptr);
      CHECK(logits.shape() == Shape{3, cfg.num_classes});
      // concat width: lstm 100 -> 200, bi-lstm 100 -> 400
      CHECK(model.params().back().value.dim(0) == 2 * width);
    }
  }
}

TEST_CASE("boe is order-invariant; recurrent masking ignores trailing padding") {
  auto instances = tiny_instances(4, 4, 37);

  SeqConfig cfg;
  cfg.variant = SeqVariant::boe;
  cfg.emb_dim = 12;
  SeqModel boe(cfg, 41);
  TokenBatch batch = build_token_batch(instances, cfg.max_entities);
  Tensor base = boe.forward(batch, nullptr);

  // permute fact triples of every instance (reverse triple order)
  auto permuted = instances;
  for (StoryInstance& inst : permuted) std::reverse(inst.facts.begin(), inst.facts.end());
  Tensor perm = boe.forward(build_token_batch(permuted, cfg.max_entities), nullptr);
  CHECK(max_abs_diff(base, perm) <= 1e-9);

  // rnn embedding unchanged by trailing padding
  cfg.variant = SeqVariant::rnn;
  SeqModel rnn(cfg, 43);
  auto one = tiny_instances(1, 3, 53);
  TokenBatch tight = build_token_batch(one, cfg.max_entities);
  Tensor tight_emb = rnn.encode_seq(tight.fact_tokens, tight.fact_lengths, 1, tight.fact_len,
                                    nullptr);
  TokenBatch padded = tight;
  padded.fact_len += 5;
  padded.fact_tokens.assign(static_cast<size_t>(padded.fact_len), pad_token());
  for (int t = 0; t < tight.fact_len; ++t)
    padded.fact_tokens[static_cast<size_t>(t)] = tight.fact_tokens[static_cast<size_t>(t)];
  Tensor padded_emb = rnn.encode_seq(padded.fact_tokens, padded.fact_lengths, 1, padded.fact_len,
                                     nullptr);
  CHECK(max_abs_diff(tight_emb, padded_emb) <= 1e-12);
}

TEST_CASE("classifier with zero weights is uniform after softmax") {
  auto instances = tiny_instances(2, 2, 61);
  SeqConfig cfg;
  cfg.variant = SeqVariant::gru;
  cfg.emb_dim = 8;
  SeqModel model(cfg, 67);
  std::fill(model.params().back().value.values().begin(),
            model.params().back().value.values().end(), 0.0);
  Tensor probs = softmax(model.forward(build_token_batch(instances, cfg.max_entities), nullptr),
                         nullptr);
  for (int64_t i = 0; i < probs.size(); ++i)
    CHECK(probs.values()[static_cast<size_t>(i)] ==
          doctest::Approx(1.0 / cfg.num_classes).epsilon(1e-9));
}

TEST_CASE("every model variant passes the end-to-end gradient check") {
  auto t0 = std::chrono::steady_clock::now();
  auto results = gradcheck_models(20240817);
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count();
  MESSAGE("model gradcheck: ", results.size(), " variants in ", ms, " ms");
  CHECK(results.size() == 15);
  for (const auto& r : results) CHECK_MESSAGE(r.ok(1e-4), r.name, " max rel err ", r.max_rel_err);
}
