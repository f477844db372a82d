#include "relchain/lgraph.hpp"

#include <cmath>
#include <stdexcept>

namespace relchain {

namespace {

Tensor init_weight(int64_t fan_in, int64_t fan_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::uniform({fan_in, fan_out}, -bound, bound, rng);
}

enum GateCount { kRnnGates = 1, kGruGates = 3, kLstmGates = 4 };

int gate_count(SeqVariant v) {
  switch (v) {
    case SeqVariant::rnn:
    case SeqVariant::bi_rnn: return kRnnGates;
    case SeqVariant::gru:
    case SeqVariant::bi_gru: return kGruGates;
    case SeqVariant::lstm:
    case SeqVariant::bi_lstm: return kLstmGates;
    default: return 0;
  }
}

bool is_recurrent(SeqVariant v) { return gate_count(v) > 0; }

}  // namespace

const char* seq_variant_name(SeqVariant v) {
  switch (v) {
    case SeqVariant::rnn: return "rnn";
    case SeqVariant::lstm: return "lstm";
    case SeqVariant::gru: return "gru";
    case SeqVariant::bi_rnn: return "bi-rnn";
    case SeqVariant::bi_lstm: return "bi-lstm";
    case SeqVariant::bi_gru: return "bi-gru";
    case SeqVariant::cnn: return "cnn";
    case SeqVariant::cnnh: return "cnnh";
    case SeqVariant::mha: return "mha";
    default: return "boe";
  }
}

std::optional<SeqVariant> parse_seq_variant(std::string_view name) {
  for (SeqVariant v : {SeqVariant::rnn, SeqVariant::lstm, SeqVariant::gru, SeqVariant::bi_rnn,
                       SeqVariant::bi_lstm, SeqVariant::bi_gru, SeqVariant::cnn, SeqVariant::cnnh,
                       SeqVariant::mha, SeqVariant::boe})
    if (name == seq_variant_name(v)) return v;
  // accept underscore spelling for the bidirectional variants
  if (name == "bi_rnn") return SeqVariant::bi_rnn;
  if (name == "bi_lstm") return SeqVariant::bi_lstm;
  if (name == "bi_gru") return SeqVariant::bi_gru;
  return std::nullopt;
}

bool is_bidirectional(SeqVariant v) {
  return v == SeqVariant::bi_rnn || v == SeqVariant::bi_lstm || v == SeqVariant::bi_gru;
}

int64_t pad_token() { return 0; }
int64_t entity_token(int slot) { return 1 + slot; }
int64_t relation_token(Rel r, int max_entities) {
  return 1 + max_entities + static_cast<int64_t>(r);
}
int64_t vocab_size(int max_entities) { return 1 + max_entities + kRelationCount; }

std::pair<std::vector<int64_t>, std::pair<int64_t, int64_t>> linearize(
    const StoryInstance& instance, int max_entities) {
  std::vector<int64_t> tokens;
  tokens.reserve(instance.facts.size() * 3);
  for (const Fact& f : instance.facts) {
    if (f.src >= max_entities || f.dst >= max_entities)
      throw std::invalid_argument("linearize: entity slot " +
                                  std::to_string(std::max(f.src, f.dst)) +
                                  " exceeds the slot vocabulary (" +
                                  std::to_string(max_entities) + ")");
    tokens.push_back(entity_token(f.src));
    tokens.push_back(relation_token(f.rel, max_entities));
    tokens.push_back(entity_token(f.dst));
  }
  return {std::move(tokens),
          {entity_token(instance.query.first), entity_token(instance.query.second)}};
}

TokenBatch build_token_batch(std::span<const StoryInstance> instances, int max_entities) {
  TokenBatch batch;
  batch.batch = static_cast<int>(instances.size());
  std::vector<std::vector<int64_t>> rows;
  for (const StoryInstance& inst : instances) {
    auto [tokens, query] = linearize(inst, max_entities);
    batch.fact_len = std::max(batch.fact_len, static_cast<int>(tokens.size()));
    batch.fact_lengths.push_back(static_cast<int64_t>(tokens.size()));
    batch.query_tokens.push_back(query.first);
    batch.query_tokens.push_back(query.second);
    rows.push_back(std::move(tokens));
  }
  batch.fact_tokens.assign(static_cast<size_t>(batch.batch) * static_cast<size_t>(batch.fact_len),
                           pad_token());
  for (int b = 0; b < batch.batch; ++b)
    for (size_t t = 0; t < rows[static_cast<size_t>(b)].size(); ++t)
      batch.fact_tokens[static_cast<size_t>(b) * static_cast<size_t>(batch.fact_len) + t] =
          rows[static_cast<size_t>(b)][t];
  return batch;
}

SeqModel::SeqModel(const SeqConfig& config, uint64_t seed) : config_(config) {
  Rng rng(seed);
  const int64_t d = config.emb_dim;
  auto reg = [&](const std::string& name, Tensor t) {
    t.set_requires_grad(true);
    params_.push_back({name, t});
    return t;
  };

  vocab_table_ = reg("vocab", init_weight(vocab_size(config.max_entities), d, rng));

  if (is_recurrent(config.variant)) {
    const int gates = gate_count(config.variant);
    const int directions = is_bidirectional(config.variant) ? 2 : 1;
    for (int dir = 0; dir < directions; ++dir) {
      const std::string prefix = directions == 2 ? "dir" + std::to_string(dir) + "." : "";
      for (int g = 0; g < gates; ++g) {
        cells_[dir].w_x.push_back(
            reg(prefix + "gate" + std::to_string(g) + ".w_x", init_weight(d, d, rng)));
        cells_[dir].w_h.push_back(
            reg(prefix + "gate" + std::to_string(g) + ".w_h", init_weight(d, d, rng)));
        cells_[dir].b.push_back(reg(prefix + "gate" + std::to_string(g) + ".b", Tensor({d})));
      }
    }
  } else if (config.variant == SeqVariant::cnn || config.variant == SeqVariant::cnnh) {
    const int64_t f2 = (d + 1) / 2;
    const int64_t f3 = d / 2;
    conv_w2_ = reg("conv2.w", init_weight(2 * d, f2, rng));
    conv_b2_ = reg("conv2.b", Tensor({f2}));
    conv_w3_ = reg("conv3.w", init_weight(3 * d, f3, rng));
    conv_b3_ = reg("conv3.b", Tensor({f3}));
    if (config.variant == SeqVariant::cnnh) {
      highway_wt_ = reg("highway.wt", init_weight(d, d, rng));
      highway_bt_ = reg("highway.bt", Tensor({d}));
      highway_wh_ = reg("highway.wh", init_weight(d, d, rng));
      highway_bh_ = reg("highway.bh", Tensor({d}));
    }
  } else if (config.variant == SeqVariant::mha) {
    if (d % config.heads != 0)
      throw std::invalid_argument("mha: emb_dim must be divisible by heads");
    pos_table_ = reg("positions", init_weight(config.max_len, d, rng));
    const int64_t dh = d / config.heads;
    for (int h = 0; h < config.heads; ++h) {
      const std::string prefix = "head" + std::to_string(h) + ".";
      mha_wq_.push_back(reg(prefix + "wq", init_weight(d, dh, rng)));
      mha_wk_.push_back(reg(prefix + "wk", init_weight(d, dh, rng)));
      mha_wv_.push_back(reg(prefix + "wv", init_weight(d, dh, rng)));
    }
    mha_wo_ = reg("wo", init_weight(d, d, rng));
  }

  classifier_w_ = reg("classifier.w",
                      init_weight(2 * config.encoder_width(), config.num_classes, rng));
}

Tensor SeqModel::embed(const std::vector<int64_t>& tokens, const std::vector<int64_t>& lengths,
                       int batch, int len, Tape* tape) const {
  Tensor emb = gather_rows(vocab_table_, tokens, tape);
  Tensor mask({static_cast<int64_t>(tokens.size())});
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t < len; ++t)
      mask.values()[static_cast<size_t>(b * len + t)] =
          t < lengths[static_cast<size_t>(b)] ? 1.0 : 0.0;
  return scale_rows(emb, mask, tape);
}

Tensor SeqModel::recurrent_final(const Tensor& emb, const std::vector<int64_t>& lengths,
                                 int batch, int len, bool reversed, Tape* tape) {
  const int64_t d = config_.emb_dim;
  const Cell& cell = cells_[reversed ? 1 : 0];
  const SeqVariant v = config_.variant;

  Tensor x = emb;
  if (reversed) {
    // per-row index reversal over the valid prefix; padding stays at the tail
    std::vector<int64_t> rev(static_cast<size_t>(batch) * static_cast<size_t>(len));
    for (int b = 0; b < batch; ++b) {
      const int64_t n = lengths[static_cast<size_t>(b)];
      for (int t = 0; t < len; ++t)
        rev[static_cast<size_t>(b * len + t)] =
            t < n ? static_cast<int64_t>(b) * len + (n - 1 - t) : static_cast<int64_t>(b) * len + t;
    }
    x = gather_rows(emb, rev, tape);
  }

  Tensor h({batch, d});
  Tensor c({batch, d});  // lstm cell state
  Tensor final_h({batch, d});

  for (int t = 0; t < len; ++t) {
    std::vector<int64_t> idx(static_cast<size_t>(batch));
    for (int b = 0; b < batch; ++b) idx[static_cast<size_t>(b)] = static_cast<int64_t>(b) * len + t;
    Tensor xt = gather_rows(x, idx, tape);

    auto gate = [&](int g, const Tensor& hprev) {
      return add(add(matmul(xt, cell.w_x[static_cast<size_t>(g)], tape),
                     matmul(hprev, cell.w_h[static_cast<size_t>(g)], tape), tape),
                 cell.b[static_cast<size_t>(g)], tape);
    };

    Tensor h_new;
    if (v == SeqVariant::rnn || v == SeqVariant::bi_rnn) {
      h_new = tanh(gate(0, h), tape);
    } else if (v == SeqVariant::gru || v == SeqVariant::bi_gru) {
      Tensor z = sigmoid(gate(0, h), tape);
      Tensor r = sigmoid(gate(1, h), tape);
      Tensor n = tanh(add(add(matmul(xt, cell.w_x[2], tape),
                              matmul(mul(r, h, tape), cell.w_h[2], tape), tape),
                          cell.b[2], tape),
                      tape);
      // h' = (1 - z) * n + z * h
      h_new = add(mul(affine(z, -1.0, 1.0, tape), n, tape), mul(z, h, tape), tape);
    } else {  // lstm
      Tensor i = sigmoid(gate(0, h), tape);
      Tensor f = sigmoid(gate(1, h), tape);
      Tensor o = sigmoid(gate(2, h), tape);
      Tensor g = tanh(gate(3, h), tape);
      c = add(mul(f, c, tape), mul(i, g, tape), tape);
      h_new = mul(o, tanh(c, tape), tape);
    }
    h = h_new;

    Tensor is_last({batch});
    for (int b = 0; b < batch; ++b)
      is_last.values()[static_cast<size_t>(b)] =
          lengths[static_cast<size_t>(b)] - 1 == t ? 1.0 : 0.0;
    final_h = add(final_h, scale_rows(h, is_last, tape), tape);
  }
  return final_h;
}

Tensor SeqModel::conv_pool(const Tensor& emb, const std::vector<int64_t>& lengths, int batch,
                           int len, Tape* tape) {
  const int64_t d = config_.emb_dim;
  const int64_t rows = static_cast<int64_t>(batch) * len;
  // window gathers index one zero row past the end for positions outside the row
  Tensor embz = concat(emb, Tensor({1, d}), 0, tape);

  auto window_features = [&](int width, const Tensor& w, const Tensor& b) {
    Tensor windows;
    for (int o = 0; o < width; ++o) {
      std::vector<int64_t> idx(static_cast<size_t>(rows));
      for (int bi = 0; bi < batch; ++bi)
        for (int t = 0; t < len; ++t)
          idx[static_cast<size_t>(bi * len + t)] =
              t + o < len ? static_cast<int64_t>(bi) * len + t + o : rows;  // zero row
      Tensor shifted = gather_rows(embz, idx, tape);
      windows = o == 0 ? shifted : concat(windows, shifted, 1, tape);
    }
    return relu(add(matmul(windows, w, tape), b, tape), tape);
  };

  auto masked_max = [&](const Tensor& feats) {
    // max over valid positions only
    std::vector<int64_t> valid_rows, valid_seg;
    for (int bi = 0; bi < batch; ++bi)
      for (int t = 0; t < len; ++t)
        if (t < lengths[static_cast<size_t>(bi)]) {
          valid_rows.push_back(static_cast<int64_t>(bi) * len + t);
          valid_seg.push_back(bi);
        }
    Tensor valid = gather_rows(feats, valid_rows, tape);
    return segment_max(valid, valid_seg, batch, tape);
  };

  Tensor p2 = masked_max(window_features(2, conv_w2_, conv_b2_));
  Tensor p3 = masked_max(window_features(3, conv_w3_, conv_b3_));
  Tensor pooled = concat(p2, p3, 1, tape);

  if (config_.variant == SeqVariant::cnnh) {
    Tensor t_gate = sigmoid(add(matmul(pooled, highway_wt_, tape), highway_bt_, tape), tape);
    Tensor h = relu(add(matmul(pooled, highway_wh_, tape), highway_bh_, tape), tape);
    pooled = add(mul(t_gate, h, tape), mul(affine(t_gate, -1.0, 1.0, tape), pooled, tape), tape);
  }
  return pooled;
}

Tensor SeqModel::attention_pool(const Tensor& emb, const std::vector<int64_t>& lengths, int batch,
                                int len, Tape* tape) {
  const int64_t d = config_.emb_dim;
  const int64_t dh = d / config_.heads;
  const int64_t rows = static_cast<int64_t>(batch) * len;
  if (len > static_cast<int>(pos_table_.dim(0)))
    throw std::invalid_argument("mha: sequence length " + std::to_string(len) +
                                " exceeds the position table (" +
                                std::to_string(pos_table_.dim(0)) + ")");

  std::vector<int64_t> pos_idx(static_cast<size_t>(rows));
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t < len; ++t) pos_idx[static_cast<size_t>(b * len + t)] = t;
  Tensor mask({rows});
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t < len; ++t)
      mask.values()[static_cast<size_t>(b * len + t)] =
          t < lengths[static_cast<size_t>(b)] ? 1.0 : 0.0;
  Tensor x = scale_rows(add(emb, gather_rows(pos_table_, pos_idx, tape), tape), mask, tape);

  // keys outside the valid prefix are pushed to -inf before the softmax
  Tensor key_mask({static_cast<int64_t>(batch), static_cast<int64_t>(len), static_cast<int64_t>(len)});
  for (int b = 0; b < batch; ++b)
    for (int i = 0; i < len; ++i)
      for (int j = 0; j < len; ++j)
        key_mask.values()[static_cast<size_t>((static_cast<int64_t>(b) * len + i) * len + j)] =
            j < lengths[static_cast<size_t>(b)] ? 0.0 : -1e30;

  Tensor heads_out;
  for (int h = 0; h < config_.heads; ++h) {
    Tensor q = reshape(matmul(x, mha_wq_[static_cast<size_t>(h)], tape),
                       {batch, len, dh}, tape);
    Tensor k = reshape(matmul(x, mha_wk_[static_cast<size_t>(h)], tape),
                       {batch, len, dh}, tape);
    Tensor v = reshape(matmul(x, mha_wv_[static_cast<size_t>(h)], tape),
                       {batch, len, dh}, tape);
    Tensor scores = batched_matmul(q, batched_transpose(k, tape), tape);
    scores = affine(scores, 1.0 / std::sqrt(static_cast<double>(dh)), 0.0, tape);
    scores = add(scores, key_mask, tape);
    Tensor attn = softmax(reshape(scores, {rows, static_cast<int64_t>(len)}, tape), tape);
    Tensor ctx = batched_matmul(reshape(attn, {batch, len, len}, tape), v, tape);
    Tensor flat = reshape(ctx, {rows, dh}, tape);
    heads_out = h == 0 ? flat : concat(heads_out, flat, 1, tape);
  }
  Tensor projected = matmul(heads_out, mha_wo_, tape);
  Tensor out = scale_rows(add(x, projected, tape), mask, tape);
  return mean_pool(out, lengths, batch, len, tape);
}

Tensor SeqModel::mean_pool(const Tensor& emb, const std::vector<int64_t>& lengths, int batch,
                           int len, Tape* tape) const {
  Tensor pool({static_cast<int64_t>(batch), static_cast<int64_t>(batch) * len});
  for (int b = 0; b < batch; ++b) {
    const double inv = 1.0 / static_cast<double>(lengths[static_cast<size_t>(b)]);
    for (int t = 0; t < len; ++t)
      if (t < lengths[static_cast<size_t>(b)])
        pool.values()[static_cast<size_t>(
            static_cast<int64_t>(b) * (static_cast<int64_t>(batch) * len) +
            static_cast<int64_t>(b) * len + t)] = inv;
  }
  return matmul(pool, emb, tape);
}

Tensor SeqModel::encode_seq(const std::vector<int64_t>& tokens,
                            const std::vector<int64_t>& lengths, int batch, int len, Tape* tape) {
  for (int64_t tok : tokens)
    if (tok < 0 || tok >= vocab_table_.dim(0))
      throw std::invalid_argument("encode_seq: token " + std::to_string(tok) +
                                  " outside the vocabulary");
  Tensor emb = embed(tokens, lengths, batch, len, tape);
  switch (config_.variant) {
    case SeqVariant::rnn:
    case SeqVariant::lstm:
    case SeqVariant::gru:
      return recurrent_final(emb, lengths, batch, len, /*reversed=*/false, tape);
    case SeqVariant::bi_rnn:
    case SeqVariant::bi_lstm:
    case SeqVariant::bi_gru: {
      Tensor fwd = recurrent_final(emb, lengths, batch, len, /*reversed=*/false, tape);
      Tensor bwd = recurrent_final(emb, lengths, batch, len, /*reversed=*/true, tape);
      return concat(fwd, bwd, 1, tape);
    }
    case SeqVariant::cnn:
    case SeqVariant::cnnh:
      return conv_pool(emb, lengths, batch, len, tape);
    case SeqVariant::mha:
      return attention_pool(emb, lengths, batch, len, tape);
    default:
      return mean_pool(emb, lengths, batch, len, tape);
  }
}

Tensor SeqModel::classify(const Tensor& fact_emb, const Tensor& query_emb, Tape* tape) {
  return matmul(concat(fact_emb, query_emb, 1, tape), classifier_w_, tape);
}

Tensor SeqModel::forward(const TokenBatch& batch, Tape* tape) {
  Tensor fact_emb = encode_seq(batch.fact_tokens, batch.fact_lengths, batch.batch, batch.fact_len,
                               tape);
  std::vector<int64_t> query_lengths(static_cast<size_t>(batch.batch), 2);
  Tensor query_emb = encode_seq(batch.query_tokens, query_lengths, batch.batch, 2, tape);
  return classify(fact_emb, query_emb, tape);
}

}  // namespace relchain
