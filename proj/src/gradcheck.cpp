#include "relchain/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "relchain/egnn.hpp"
#include "relchain/lgraph.hpp"
#include "relchain/ops.hpp"
#include "relchain/rng.hpp"
#include "relchain/story_gen.hpp"

namespace relchain {

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Random tensor with entries kept away from zero (relu/max kinks) when
// `away_from_zero` is set.
Tensor rand_tensor(Shape shape, Rng& rng, bool away_from_zero = false, double lo = -2.0,
                   double hi = 2.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) {
    v = rng.uniform(lo, hi);
    if (away_from_zero && std::abs(v) < 0.15) v = v < 0 ? v - 0.2 : v + 0.2;
  }
  return t;
}

// Reduces an arbitrary tensor to a scalar with fixed random weights so that
// every output entry influences the loss.
Tensor weighted_sum(const Tensor& t, const Tensor& w, Tape* tape) {
  Tensor flat = reshape(t, {1, t.size()}, tape);
  Tensor wf = reshape(w, {1, w.size()}, tape);
  Tensor prod = mul(flat, wf, tape);
  return reduce_sum(prod, 1, tape);
}

}  // namespace

double check_gradients(const std::function<Tensor(Tape*)>& forward, std::vector<Tensor> leaves,
                       int max_entries, double step) {
  Tape tape;
  Tensor loss = forward(&tape);
  tape.backward(loss);

  double worst = 0.0;
  Rng pick(0x5eed);
  for (Tensor& leaf : leaves) {
    const int64_t n = leaf.size();
    std::vector<int64_t> entries;
    if (max_entries < 0 || n <= max_entries) {
      entries.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) entries[static_cast<size_t>(i)] = i;
    } else {
      for (int i = 0; i < max_entries; ++i) entries.push_back(pick.uniform_int(0, n - 1));
    }
    Tensor analytic = leaf.grad();
    for (int64_t e : entries) {
      double* slot = leaf.values().data() + e;
      const double saved = *slot;
      *slot = saved + step;
      const double up = forward(nullptr).scalar_value();
      *slot = saved - step;
      const double down = forward(nullptr).scalar_value();
      *slot = saved;
      const double fd = (up - down) / (2.0 * step);
      worst = std::max(worst, rel_err(analytic.values()[static_cast<size_t>(e)], fd));
    }
  }
  for (Tensor& leaf : leaves) leaf.zero_grad();
  return worst;
}

std::vector<GradCheckResult> gradcheck_ops(int reps, uint64_t seed) {
  std::vector<GradCheckResult> results;
  Rng rng(seed);

  auto run = [&](const std::string& name,
                 const std::function<double(Rng&)>& one_check) {
    double worst = 0.0;
    for (int r = 0; r < reps; ++r) worst = std::max(worst, one_check(rng));
    results.push_back({name, worst});
  };

  auto dims = [&](Rng& r) { return r.uniform_int(1, 5); };

  run("matmul", [&](Rng& r) {
    int64_t m = dims(r), k = dims(r), n = dims(r);
    Tensor a = rand_tensor({m, k}, r).set_requires_grad(true);
    Tensor b = rand_tensor({k, n}, r).set_requires_grad(true);
    Tensor w = rand_tensor({m, n}, r);
    return check_gradients(
        [&](Tape* t) { return weighted_sum(matmul(a, b, t), w, t); }, {a, b});
  });

  run("batched_matmul", [&](Rng& r) {
    int64_t g = dims(r), m = dims(r), k = dims(r), n = dims(r);
    Tensor a = rand_tensor({g, m, k}, r).set_requires_grad(true);
    Tensor b = rand_tensor({g, k, n}, r).set_requires_grad(true);
    Tensor w = rand_tensor({g, m, n}, r);
    return check_gradients(
        [&](Tape* t) { return weighted_sum(batched_matmul(a, b, t), w, t); }, {a, b});
  });

  run("batched_transpose", [&](Rng& r) {
    int64_t g = dims(r), m = dims(r), n = dims(r);
    Tensor x = rand_tensor({g, m, n}, r).set_requires_grad(true);
    Tensor w = rand_tensor({g, n, m}, r);
    return check_gradients(
        [&](Tape* t) { return weighted_sum(batched_transpose(x, t), w, t); }, {x});
  });

  run("add", [&](Rng& r) {
    int64_t m = dims(r), n = dims(r);
    Tensor a = rand_tensor({m, n}, r).set_requires_grad(true);
    Tensor b = rand_tensor({m, n}, r).set_requires_grad(true);
    Tensor w = rand_tensor({m, n}, r);
    return check_gradients([&](Tape* t) { return weighted_sum(add(a, b, t), w, t); }, {a, b});
  });

  run("add_bias", [&](Rng& r) {
    int64_t m = dims(r), n = dims(r);
    Tensor a = rand_tensor({m, n}, r).set_requires_grad(true);
    Tensor b = rand_tensor({n}, r).set_requires_grad(true);
    Tensor w = rand_tensor({m, n}, r);
    return check_gradients([&](Tape* t) { return weighted_sum(add(a, b, t), w, t); }, {a, b});
  });

  run("mul", [&](Rng& r) {
    int64_t m = dims(r), n = dims(r);
    Tensor a = rand_tensor({m, n}, r).set_requires_grad(true);
    Tensor b = rand_tensor({m, n}, r).set_requires_grad(true);
    Tensor w = rand_tensor({m, n}, r);
    return check_gradients([&](Tape* t) { return weighted_sum(mul(a, b, t), w, t); }, {a, b});
  });

  run("scale_rows", [&](Rng& r) {
    int64_t m = dims(r), n = dims(r);
    Tensor x = rand_tensor({m, n}, r).set_requires_grad(true);
    Tensor s = rand_tensor({m}, r).set_requires_grad(true);
    Tensor w = rand_tensor({m, n}, r);
    return check_gradients([&](Tape* t) { return weighted_sum(scale_rows(x, s, t), w, t); },
                           {x, s});
  });

  run("affine", [&](Rng& r) {
    int64_t m = dims(r), n = dims(r);
    double ca = r.uniform(-2, 2), cb = r.uniform(-2, 2);
    Tensor x = rand_tensor({m, n}, r).set_requires_grad(true);
    Tensor w = rand_tensor({m, n}, r);
    return check_gradients([&](Tape* t) { return weighted_sum(affine(x, ca, cb, t), w, t); },
                           {x});
  });

  run("concat_axis0", [&](Rng& r) {
    int64_t m1 = dims(r), m2 = dims(r), n = dims(r);
    Tensor a = rand_tensor({m1, n}, r).set_requires_grad(true);
    Tensor b = rand_tensor({m2, n}, r).set_requires_grad(true);
    Tensor w = rand_tensor({m1 + m2, n}, r);
    return check_gradients([&](Tape* t) { return weighted_sum(concat(a, b, 0, t), w, t); },
                           {a, b});
  });

  run("concat_axis1", [&](Rng& r) {
    int64_t m = dims(r), n1 = dims(r), n2 = dims(r);
    Tensor a = rand_tensor({m, n1}, r).set_requires_grad(true);
    Tensor b = rand_tensor({m, n2}, r).set_requires_grad(true);
    Tensor w = rand_tensor({m, n1 + n2}, r);
    return check_gradients([&](Tape* t) { return weighted_sum(concat(a, b, 1, t), w, t); },
                           {a, b});
  });

  run("gather_rows", [&](Rng& r) {
    int64_t m = dims(r) + 1, n = dims(r), k = dims(r) + 2;
    Tensor x = rand_tensor({m, n}, r).set_requires_grad(true);
    std::vector<int64_t> idx;
    for (int64_t i = 0; i < k; ++i) idx.push_back(r.uniform_int(0, m - 1));
    Tensor w = rand_tensor({k, n}, r);
    return check_gradients(
        [&](Tape* t) { return weighted_sum(gather_rows(x, idx, t), w, t); }, {x});
  });

  run("scatter_add_rows", [&](Rng& r) {
    int64_t k = dims(r) + 2, n = dims(r), m = dims(r) + 1;
    Tensor x = rand_tensor({k, n}, r).set_requires_grad(true);
    std::vector<int64_t> idx;
    for (int64_t i = 0; i < k; ++i) idx.push_back(r.uniform_int(0, m - 1));
    Tensor w = rand_tensor({m, n}, r);
    return check_gradients(
        [&](Tape* t) { return weighted_sum(scatter_add_rows(x, idx, m, t), w, t); }, {x});
  });

  run("segment_max", [&](Rng& r) {
    int64_t k = dims(r) + 2, n = dims(r), segs = dims(r) + 1;
    Tensor x = rand_tensor({k, n}, r, /*away_from_zero=*/true);
    // spread values so ties cannot straddle the FD step
    for (int64_t i = 0; i < x.size(); ++i) x.values()[static_cast<size_t>(i)] += 0.001 * static_cast<double>(i);
    x.set_requires_grad(true);
    std::vector<int64_t> seg;
    for (int64_t i = 0; i < k; ++i) seg.push_back(r.uniform_int(0, segs - 1));
    Tensor w = rand_tensor({segs, n}, r);
    return check_gradients(
        [&](Tape* t) { return weighted_sum(segment_max(x, seg, segs, t), w, t); }, {x});
  });

  run("segment_softmax", [&](Rng& r) {
    int64_t k = dims(r) + 2, segs = dims(r) + 1;
    Tensor x = rand_tensor({k}, r).set_requires_grad(true);
    std::vector<int64_t> seg;
    for (int64_t i = 0; i < k; ++i) seg.push_back(r.uniform_int(0, segs - 1));
    Tensor w = rand_tensor({k}, r);
    return check_gradients(
        [&](Tape* t) { return weighted_sum(segment_softmax(x, seg, segs, t), w, t); }, {x});
  });

  for (int axis : {0, 1}) {
    run("reduce_sum_axis" + std::to_string(axis), [&, axis](Rng& r) {
      Tensor x = rand_tensor({dims(r), dims(r)}, r).set_requires_grad(true);
      Tensor w = rand_tensor({axis == 0 ? x.dim(1) : x.dim(0)}, r);
      return check_gradients(
          [&](Tape* t) { return weighted_sum(reduce_sum(x, axis, t), w, t); }, {x});
    });
    run("reduce_mean_axis" + std::to_string(axis), [&, axis](Rng& r) {
      Tensor x = rand_tensor({dims(r), dims(r)}, r).set_requires_grad(true);
      Tensor w = rand_tensor({axis == 0 ? x.dim(1) : x.dim(0)}, r);
      return check_gradients(
          [&](Tape* t) { return weighted_sum(reduce_mean(x, axis, t), w, t); }, {x});
    });
    run("reduce_max_axis" + std::to_string(axis), [&, axis](Rng& r) {
      Tensor x = rand_tensor({dims(r) + 1, dims(r) + 1}, r);
      for (int64_t i = 0; i < x.size(); ++i) x.values()[static_cast<size_t>(i)] += 0.001 * static_cast<double>(i);
      x.set_requires_grad(true);
      Tensor w = rand_tensor({axis == 0 ? x.dim(1) : x.dim(0)}, r);
      return check_gradients(
          [&](Tape* t) { return weighted_sum(reduce_max(x, axis, t), w, t); }, {x});
    });
  }

  run("relu", [&](Rng& r) {
    Tensor x = rand_tensor({dims(r), dims(r)}, r, /*away_from_zero=*/true).set_requires_grad(true);
    Tensor w = rand_tensor(x.shape(), r);
    return check_gradients([&](Tape* t) { return weighted_sum(relu(x, t), w, t); }, {x});
  });

  run("tanh", [&](Rng& r) {
    Tensor x = rand_tensor({dims(r), dims(r)}, r).set_requires_grad(true);
    Tensor w = rand_tensor(x.shape(), r);
    return check_gradients([&](Tape* t) { return weighted_sum(tanh(x, t), w, t); }, {x});
  });

  run("sigmoid", [&](Rng& r) {
    Tensor x = rand_tensor({dims(r), dims(r)}, r).set_requires_grad(true);
    Tensor w = rand_tensor(x.shape(), r);
    return check_gradients([&](Tape* t) { return weighted_sum(sigmoid(x, t), w, t); }, {x});
  });

  run("vsqrt", [&](Rng& r) {
    Tensor x = rand_tensor({dims(r), dims(r)}, r, false, 0.3, 3.0).set_requires_grad(true);
    Tensor w = rand_tensor(x.shape(), r);
    return check_gradients([&](Tape* t) { return weighted_sum(vsqrt(x, t), w, t); }, {x});
  });

  run("vdiv", [&](Rng& r) {
    int64_t m = dims(r), n = dims(r);
    Tensor a = rand_tensor({m, n}, r).set_requires_grad(true);
    Tensor b = rand_tensor({m, n}, r, /*away_from_zero=*/true).set_requires_grad(true);
    Tensor w = rand_tensor({m, n}, r);
    return check_gradients([&](Tape* t) { return weighted_sum(vdiv(a, b, t), w, t); }, {a, b});
  });

  run("softmax", [&](Rng& r) {
    Tensor x = rand_tensor({dims(r), dims(r) + 1}, r).set_requires_grad(true);
    Tensor w = rand_tensor(x.shape(), r);
    return check_gradients([&](Tape* t) { return weighted_sum(softmax(x, t), w, t); }, {x});
  });

  run("cross_entropy", [&](Rng& r) {
    int64_t m = dims(r), n = dims(r) + 1;
    Tensor x = rand_tensor({m, n}, r).set_requires_grad(true);
    std::vector<int> labels;
    for (int64_t i = 0; i < m; ++i) labels.push_back(static_cast<int>(r.uniform_int(0, n - 1)));
    return check_gradients([&](Tape* t) { return cross_entropy(x, labels, t); }, {x});
  });

  run("reshape", [&](Rng& r) {
    int64_t m = dims(r), n = dims(r);
    Tensor x = rand_tensor({m, n}, r).set_requires_grad(true);
    Tensor w = rand_tensor({m * n}, r);
    return check_gradients(
        [&](Tape* t) { return weighted_sum(reshape(x, {m * n}, t), w, t); }, {x});
  });

  return results;
}

std::vector<GradCheckResult> gradcheck_models(uint64_t seed) {
  std::vector<GradCheckResult> results;

  // two tiny instances, one with disconnected noise for isolated nodes
  std::vector<StoryInstance> instances;
  instances.push_back(generate_instance(3, NoiseRegime::clean, Rng::mix(seed, 1)));
  instances.push_back(generate_instance(2, NoiseRegime::disconnected, Rng::mix(seed, 2)));
  std::vector<int> targets;
  for (const auto& inst : instances) targets.push_back(static_cast<int>(inst.target));

  const int emb_dim = 6;
  const int slots = 12;

  for (EgnnVariant variant : {EgnnVariant::gcn, EgnnVariant::gat, EgnnVariant::sgcn,
                              EgnnVariant::agnn, EgnnVariant::rgcn}) {
    EgnnConfig cfg;
    cfg.variant = variant;
    cfg.emb_dim = emb_dim;
    cfg.layers = 2;
    cfg.max_entities = slots;
    EgnnModel model(cfg, Rng::mix(seed, 77));
    GraphBatch batch = build_graph_batch(instances, slots);
    std::vector<Tensor> leaves;
    for (Parameter& p : model.params()) leaves.push_back(p.value);
    double err = check_gradients(
        [&](Tape* t) { return cross_entropy(model.forward(batch, t), targets, t); }, leaves,
        /*max_entries=*/8);
    results.push_back({std::string("egnn_") + egnn_variant_name(variant), err});
  }

  for (SeqVariant variant :
       {SeqVariant::rnn, SeqVariant::lstm, SeqVariant::gru, SeqVariant::bi_rnn,
        SeqVariant::bi_lstm, SeqVariant::bi_gru, SeqVariant::cnn, SeqVariant::cnnh,
        SeqVariant::mha, SeqVariant::boe}) {
    SeqConfig cfg;
    cfg.variant = variant;
    cfg.emb_dim = emb_dim;
    cfg.heads = 2;
    cfg.max_entities = slots;
    SeqModel model(cfg, Rng::mix(seed, 99));
    TokenBatch batch = build_token_batch(instances, slots);
    std::vector<Tensor> leaves;
    for (Parameter& p : model.params()) leaves.push_back(p.value);
    double err = check_gradients(
        [&](Tape* t) { return cross_entropy(model.forward(batch, t), targets, t); }, leaves,
        /*max_entries=*/8);
    results.push_back({std::string("lgraph_") + seq_variant_name(variant), err});
  }

  return results;
}

}  // namespace relchain
