#include "relchain/egnn.hpp"

#include <cmath>
#include <stdexcept>

#include <unordered_map>

#include "relchain/dataset.hpp"

namespace relchain {

namespace {

Tensor init_weight(int64_t fan_in, int64_t fan_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::uniform({fan_in, fan_out}, -bound, bound, rng);
}

Tensor leaky_relu(const Tensor& x, double slope, Tape* tape) {
  // slope * x + (1 - slope) * relu(x)
  return add(affine(x, slope, 0.0, tape), affine(relu(x, tape), 1.0 - slope, 0.0, tape), tape);
}

}  // namespace

const char* egnn_variant_name(EgnnVariant v) {
  switch (v) {
    case EgnnVariant::gcn: return "gcn";
    case EgnnVariant::gat: return "gat";
    case EgnnVariant::sgcn: return "sgcn";
    case EgnnVariant::agnn: return "agnn";
    default: return "rgcn";
  }
}

std::optional<EgnnVariant> parse_egnn_variant(std::string_view name) {
  if (name == "gcn") return EgnnVariant::gcn;
  if (name == "gat") return EgnnVariant::gat;
  if (name == "sgcn") return EgnnVariant::sgcn;
  if (name == "agnn") return EgnnVariant::agnn;
  if (name == "rgcn") return EgnnVariant::rgcn;
  return std::nullopt;
}

GraphBatch build_graph_batch(std::span<const StoryInstance> instances, int max_entities) {
  GraphBatch batch;
  batch.batch = static_cast<int>(instances.size());

  // node index != slot id: slot ids address the embedding table, node blocks
  // stay as small as the instance's distinct entity count
  std::vector<std::unordered_map<int, int>> node_of(instances.size());
  for (size_t b = 0; b < instances.size(); ++b) {
    const StoryInstance& inst = instances[b];
    auto& map = node_of[b];
    auto touch = [&](int entity) {
      if (entity >= max_entities)
        throw std::invalid_argument("build_graph_batch: entity slot " + std::to_string(entity) +
                                    " exceeds the slot table (" + std::to_string(max_entities) +
                                    ")");
      map.emplace(entity, static_cast<int>(map.size()));
    };
    for (const Fact& f : inst.facts) {
      touch(f.src);
      touch(f.dst);
    }
    touch(inst.query.first);
    touch(inst.query.second);
    batch.max_nodes = std::max(batch.max_nodes, static_cast<int>(map.size()));
  }

  const int64_t N = batch.max_nodes;
  batch.node_slot.assign(static_cast<size_t>(batch.batch) * static_cast<size_t>(N), 0);
  batch.node_mask.assign(static_cast<size_t>(batch.batch) * static_cast<size_t>(N), 0.0);
  for (int b = 0; b < batch.batch; ++b) {
    const StoryInstance& inst = instances[static_cast<size_t>(b)];
    const int64_t base = static_cast<int64_t>(b) * N;
    for (const auto& [entity, node] : node_of[static_cast<size_t>(b)]) {
      batch.node_slot[static_cast<size_t>(base + node)] = entity;
      batch.node_mask[static_cast<size_t>(base + node)] = 1.0;
    }
    const auto& map = node_of[static_cast<size_t>(b)];
    for (const Fact& f : inst.facts) {
      const int64_t src = base + map.at(f.src);
      const int64_t dst = base + map.at(f.dst);
      batch.edge_src.push_back(src);
      batch.edge_dst.push_back(dst);
      batch.edge_rel.push_back(static_cast<int64_t>(f.rel));
      // reverse edge with the inv- dual
      batch.edge_src.push_back(dst);
      batch.edge_dst.push_back(src);
      batch.edge_rel.push_back(static_cast<int64_t>(invert(f.rel)));
    }
    batch.head_index.push_back(base + map.at(inst.query.first));
    batch.tail_index.push_back(base + map.at(inst.query.second));
  }
  return batch;
}

Tensor egnn_message(const Tensor& x_j, const Tensor& e_ij, const Tensor& theta, Tape* tape) {
  return concat(matmul(x_j, theta, tape), e_ij, 1, tape);
}

Tensor egnn_aggregate(const Tensor& messages, const std::vector<int64_t>& dst, int64_t num_nodes,
                      AggMode mode, Tape* tape) {
  switch (mode) {
    case AggMode::sum:
      return scatter_add_rows(messages, dst, num_nodes, tape);
    case AggMode::mean: {
      Tensor summed = scatter_add_rows(messages, dst, num_nodes, tape);
      Tensor inv_count({num_nodes});
      std::vector<int64_t> counts(static_cast<size_t>(num_nodes), 0);
      for (int64_t d : dst) ++counts[static_cast<size_t>(d)];
      for (int64_t i = 0; i < num_nodes; ++i)
        inv_count.values()[static_cast<size_t>(i)] =
            counts[static_cast<size_t>(i)] > 0 ? 1.0 / static_cast<double>(counts[static_cast<size_t>(i)]) : 0.0;
      return scale_rows(summed, inv_count, tape);
    }
    default:
      return segment_max(messages, dst, num_nodes, tape);
  }
}

Tensor egnn_update(const Tensor& x_i, const Tensor& aggregated, const Tensor& w_self,
                   const Tensor& edge_update, const Tensor& bias, bool linear, Tape* tape) {
  Tensor pre = add(matmul(x_i, w_self, tape), matmul(aggregated, edge_update, tape), tape);
  if (linear) return pre;
  return relu(add(pre, bias, tape), tape);
}

EgnnModel::EgnnModel(const EgnnConfig& config, uint64_t seed) : config_(config) {
  Rng rng(seed);
  const int64_t d = config.emb_dim;
  const int64_t r = config.relation_types;

  // slot rows feed d-wide states; scale by the state width
  const double slot_bound = 1.0 / std::sqrt(static_cast<double>(d));
  slot_table_ = Tensor::uniform({config.max_entities, d}, -slot_bound, slot_bound, rng);
  slot_table_.set_requires_grad(true);
  params_.push_back({"slots", slot_table_});

  const int shared_layers = config.variant == EgnnVariant::sgcn ? 1 : config.layers;
  for (int l = 0; l < shared_layers; ++l) {
    Layer layer;
    const std::string prefix = "layer" + std::to_string(l) + ".";
    auto reg = [&](const std::string& name, Tensor t) {
      t.set_requires_grad(true);
      params_.push_back({prefix + name, t});
      return t;
    };
    if (config.variant != EgnnVariant::agnn) layer.w_self = reg("w_self", init_weight(d, d, rng));
    if (config.variant != EgnnVariant::sgcn && config.variant != EgnnVariant::agnn)
      layer.bias = reg("bias", Tensor({d}));
    switch (config.variant) {
      case EgnnVariant::gat: {
        for (int h = 0; h < config.heads; ++h) {
          layer.theta_heads.push_back(
              reg("head" + std::to_string(h) + ".theta", init_weight(d, d, rng)));
          layer.attn.push_back(
              reg("head" + std::to_string(h) + ".attn", init_weight(2 * d + r, 1, rng)));
        }
        layer.edge_update =
            reg("edge_update", init_weight(static_cast<int64_t>(config.heads) * (d + r), d, rng));
        break;
      }
      case EgnnVariant::rgcn: {
        for (int rel = 0; rel < config.relation_types; ++rel)
          layer.rel_theta.push_back(
              reg("rel" + std::to_string(rel) + ".theta", init_weight(d, d, rng)));
        break;
      }
      case EgnnVariant::agnn: {
        Tensor beta = Tensor::from_values({1}, {0.0});
        layer.beta = reg("beta", beta);
        layer.theta = reg("theta", init_weight(d, d, rng));
        layer.edge_update = reg("edge_update", init_weight(d + r, d, rng));
        break;
      }
      default: {  // gcn, sgcn
        layer.theta = reg("theta", init_weight(d, d, rng));
        layer.edge_update = reg("edge_update", init_weight(d + r, d, rng));
        break;
      }
    }
    layers_.push_back(std::move(layer));
  }

  readout_w_ = init_weight(3 * d, config.num_classes, rng);
  readout_w_.set_requires_grad(true);
  params_.push_back({"readout.w", readout_w_});
}

Tensor EgnnModel::layer_forward(const Layer& layer, const Tensor& x, const GraphBatch& batch,
                                const Tensor& edge_onehot, Tape* tape) {
  const int64_t total_nodes = static_cast<int64_t>(batch.node_slot.size());
  const int64_t num_edges = static_cast<int64_t>(batch.edge_src.size());
  const bool linear = config_.variant == EgnnVariant::sgcn;

  // degree-normalized coefficients for the convolutional variants
  auto degree_norm = [&]() {
    std::vector<int64_t> deg(static_cast<size_t>(total_nodes), 0);
    for (int64_t d : batch.edge_dst) ++deg[static_cast<size_t>(d)];
    Tensor coeff({num_edges});
    for (int64_t e = 0; e < num_edges; ++e) {
      const double di = static_cast<double>(deg[static_cast<size_t>(batch.edge_dst[static_cast<size_t>(e)])]) + 1.0;
      const double dj = static_cast<double>(deg[static_cast<size_t>(batch.edge_src[static_cast<size_t>(e)])]) + 1.0;
      coeff.values()[static_cast<size_t>(e)] = 1.0 / std::sqrt(di * dj);
    }
    return coeff;
  };

  Tensor x_src = gather_rows(x, batch.edge_src, tape);
  Tensor aggregated;

  switch (config_.variant) {
    case EgnnVariant::gcn:
    case EgnnVariant::sgcn: {
      Tensor msg = egnn_message(x_src, edge_onehot, layer.theta, tape);
      msg = scale_rows(msg, degree_norm(), tape);
      aggregated = egnn_aggregate(msg, batch.edge_dst, total_nodes, AggMode::sum, tape);
      break;
    }
    case EgnnVariant::gat: {
      Tensor x_dst = gather_rows(x, batch.edge_dst, tape);
      std::vector<Tensor> head_aggs;
      for (int h = 0; h < config_.heads; ++h) {
        const Tensor& theta = layer.theta_heads[static_cast<size_t>(h)];
        Tensor ti = matmul(x_dst, theta, tape);
        Tensor tj = matmul(x_src, theta, tape);
        Tensor cat = concat(concat(ti, tj, 1, tape), edge_onehot, 1, tape);
        Tensor logits = leaky_relu(matmul(cat, layer.attn[static_cast<size_t>(h)], tape), 0.2, tape);
        Tensor alpha = segment_softmax(reshape(logits, {num_edges}, tape), batch.edge_dst,
                                       total_nodes, tape);
        Tensor msg = scale_rows(concat(tj, edge_onehot, 1, tape), alpha, tape);
        head_aggs.push_back(egnn_aggregate(msg, batch.edge_dst, total_nodes, AggMode::sum, tape));
      }
      aggregated = head_aggs[0];
      for (size_t h = 1; h < head_aggs.size(); ++h)
        aggregated = concat(aggregated, head_aggs[h], 1, tape);
      break;
    }
    case EgnnVariant::agnn: {
      // attention-only propagation: the self-loop competes with the
      // neighbours inside one softmax, update is the plain edge projection
      std::vector<int64_t> src_ext = batch.edge_src;
      std::vector<int64_t> dst_ext = batch.edge_dst;
      std::vector<int64_t> self_nodes;
      for (int64_t i = 0; i < total_nodes; ++i) {
        if (batch.node_mask[static_cast<size_t>(i)] == 0.0) continue;
        src_ext.push_back(i);
        dst_ext.push_back(i);
        self_nodes.push_back(i);
      }
      const int64_t ext_edges = static_cast<int64_t>(src_ext.size());
      Tensor attrs_ext = concat(
          edge_onehot, Tensor({static_cast<int64_t>(self_nodes.size()),
                               static_cast<int64_t>(config_.relation_types)}), 0, tape);
      Tensor xs = gather_rows(x, src_ext, tape);
      Tensor xd = gather_rows(x, dst_ext, tape);
      Tensor eps = Tensor({ext_edges});
      for (double& v : eps.values()) v = 1e-8;
      Tensor dot = reduce_sum(mul(xd, xs, tape), 1, tape);
      Tensor ni = vsqrt(add(reduce_sum(mul(xd, xd, tape), 1, tape), eps, tape), tape);
      Tensor nj = vsqrt(add(reduce_sum(mul(xs, xs, tape), 1, tape), eps, tape), tape);
      Tensor cosine = vdiv(dot, add(mul(ni, nj, tape), eps, tape), tape);
      // cosine scaled by the learned propagation temperature
      Tensor scaled = reshape(
          scale_rows(reshape(cosine, {1, ext_edges}, tape), layer.beta, tape), {ext_edges}, tape);
      Tensor alpha = segment_softmax(scaled, dst_ext, total_nodes, tape);
      Tensor msg = scale_rows(egnn_message(xs, attrs_ext, layer.theta, tape), alpha, tape);
      Tensor agg = egnn_aggregate(msg, dst_ext, total_nodes, AggMode::sum, tape);
      Tensor out = matmul(agg, layer.edge_update, tape);
      Tensor mask({total_nodes});
      std::copy(batch.node_mask.begin(), batch.node_mask.end(), mask.values().begin());
      return scale_rows(out, mask, tape);
    }
    default: {  // rgcn: per-relation transforms replace edge concatenation
      std::vector<std::vector<int64_t>> edges_by_rel(static_cast<size_t>(config_.relation_types));
      for (int64_t e = 0; e < num_edges; ++e)
        edges_by_rel[static_cast<size_t>(batch.edge_rel[static_cast<size_t>(e)])].push_back(e);
      for (size_t rel = 0; rel < edges_by_rel.size(); ++rel) {
        const auto& edges = edges_by_rel[rel];
        if (edges.empty()) continue;
        std::vector<int64_t> src, dst;
        for (int64_t e : edges) {
          src.push_back(batch.edge_src[static_cast<size_t>(e)]);
          dst.push_back(batch.edge_dst[static_cast<size_t>(e)]);
        }
        Tensor xr = gather_rows(x, src, tape);
        Tensor mr = matmul(xr, layer.rel_theta[rel], tape);
        Tensor agg_r = scatter_add_rows(mr, dst, total_nodes, tape);
        aggregated = aggregated.defined() ? add(aggregated, agg_r, tape) : agg_r;
      }
      if (!aggregated.defined()) aggregated = Tensor({total_nodes, static_cast<int64_t>(config_.emb_dim)});
      // rgcn aggregates in state width; reuse the self-loop path for update
      Tensor pre = add(matmul(x, layer.w_self, tape), aggregated, tape);
      Tensor out = relu(add(pre, layer.bias, tape), tape);
      Tensor mask({total_nodes});
      std::copy(batch.node_mask.begin(), batch.node_mask.end(), mask.values().begin());
      return scale_rows(out, mask, tape);
    }
  }

  Tensor out = egnn_update(x, aggregated, layer.w_self, layer.edge_update, layer.bias, linear, tape);
  Tensor mask({total_nodes});
  std::copy(batch.node_mask.begin(), batch.node_mask.end(), mask.values().begin());
  return scale_rows(out, mask, tape);
}

Tensor EgnnModel::encode_graph(const GraphBatch& batch, Tape* tape) {
  const int64_t total_nodes = static_cast<int64_t>(batch.node_slot.size());
  const int64_t num_edges = static_cast<int64_t>(batch.edge_src.size());

  Tensor edge_onehot({num_edges, static_cast<int64_t>(config_.relation_types)});
  for (int64_t e = 0; e < num_edges; ++e)
    edge_onehot.values()[static_cast<size_t>(e * config_.relation_types +
                                             batch.edge_rel[static_cast<size_t>(e)])] = 1.0;

  Tensor mask({total_nodes});
  std::copy(batch.node_mask.begin(), batch.node_mask.end(), mask.values().begin());

  Tensor x = scale_rows(gather_rows(slot_table_, batch.node_slot, tape), mask, tape);
  for (int l = 0; l < config_.layers; ++l) {
    const Layer& layer = layers_[static_cast<size_t>(
        config_.variant == EgnnVariant::sgcn ? 0 : l)];
    x = layer_forward(layer, x, batch, edge_onehot, tape);
  }
  return x;
}

Tensor EgnnModel::readout(const Tensor& node_embs, const GraphBatch& batch, Tape* tape) {
  const int64_t N = batch.max_nodes;
  const int64_t B = batch.batch;
  for (int64_t q : batch.head_index)
    if (batch.node_mask[static_cast<size_t>(q)] == 0.0)
      throw std::invalid_argument("readout: query head indexes a masked node");
  for (int64_t q : batch.tail_index)
    if (batch.node_mask[static_cast<size_t>(q)] == 0.0)
      throw std::invalid_argument("readout: query tail indexes a masked node");

  // mask-aware mean over nodes: one constant pooling row per graph
  Tensor pool({B, B * N});
  for (int64_t b = 0; b < B; ++b) {
    double count = 0.0;
    for (int64_t i = 0; i < N; ++i) count += batch.node_mask[static_cast<size_t>(b * N + i)];
    for (int64_t i = 0; i < N; ++i)
      pool.values()[static_cast<size_t>(b * (B * N) + b * N + i)] =
          batch.node_mask[static_cast<size_t>(b * N + i)] / count;
  }
  Tensor graph_emb = matmul(pool, node_embs, tape);                  // [B x d]
  Tensor head = gather_rows(node_embs, batch.head_index, tape);     // [B x d]
  Tensor tail = gather_rows(node_embs, batch.tail_index, tape);     // [B x d]
  Tensor query_emb = concat(head, tail, 1, tape);                   // [B x 2d]
  Tensor cat = concat(graph_emb, query_emb, 1, tape);               // [B x 3d]
  return matmul(cat, readout_w_, tape);
}

Tensor EgnnModel::forward(const GraphBatch& batch, Tape* tape) {
  return readout(encode_graph(batch, tape), batch, tape);
}

}  // namespace relchain
