#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "relchain/ops.hpp"
#include "relchain/optim.hpp"
#include "relchain/story_gen.hpp"

namespace relchain {

enum class SeqVariant { rnn, lstm, gru, bi_rnn, bi_lstm, bi_gru, cnn, cnnh, mha, boe };

const char* seq_variant_name(SeqVariant v);
std::optional<SeqVariant> parse_seq_variant(std::string_view name);
bool is_bidirectional(SeqVariant v);

struct SeqConfig {
  SeqVariant variant = SeqVariant::gru;
  int emb_dim = 100;  // token embedding width and hidden size
  int heads = 2;      // mha only
  int max_entities = 30;
  int relation_types = kRelationCount;
  int num_classes = kBaseRelationCount;
  int max_len = 64;  // position table size for mha

  // encoder output width per input (emb_dim*)
  int encoder_width() const {
    return is_bidirectional(variant) ? 2 * emb_dim : emb_dim;
  }
};

// Token vocabulary: 0 = padding, 1..max_entities = entity slots, then the
// relation labels.
int64_t pad_token();
int64_t entity_token(int slot);
int64_t relation_token(Rel r, int max_entities);
int64_t vocab_size(int max_entities);

// SPO linearization: path facts in path order head->tail, noise facts after,
// each fact as (subject slot, relation, object slot); the query becomes its
// SO pair.
std::pair<std::vector<int64_t>, std::pair<int64_t, int64_t>> linearize(
    const StoryInstance& instance, int max_entities);

struct TokenBatch {
  int batch = 0;
  int fact_len = 0;                   // padded length
  std::vector<int64_t> fact_tokens;   // B * fact_len
  std::vector<int64_t> fact_lengths;  // B
  std::vector<int64_t> query_tokens;  // B * 2
};

TokenBatch build_token_batch(std::span<const StoryInstance> instances, int max_entities);

class SeqModel {
 public:
  SeqModel(const SeqConfig& config, uint64_t seed);

  // [B x encoder_width()]; fact and query encodings share every parameter.
  Tensor encode_seq(const std::vector<int64_t>& tokens, const std::vector<int64_t>& lengths,
                    int batch, int len, Tape* tape);

  // logits of W [emb(F) || emb(Q)]
  Tensor classify(const Tensor& fact_emb, const Tensor& query_emb, Tape* tape);

  Tensor forward(const TokenBatch& batch, Tape* tape);

  std::vector<Parameter>& params() { return params_; }
  const SeqConfig& config() const { return config_; }

 private:
  Tensor embed(const std::vector<int64_t>& tokens, const std::vector<int64_t>& lengths, int batch,
               int len, Tape* tape) const;
  Tensor recurrent_final(const Tensor& emb, const std::vector<int64_t>& lengths, int batch,
                         int len, bool reversed, Tape* tape);
  Tensor conv_pool(const Tensor& emb, const std::vector<int64_t>& lengths, int batch, int len,
                   Tape* tape);
  Tensor attention_pool(const Tensor& emb, const std::vector<int64_t>& lengths, int batch,
                        int len, Tape* tape);
  Tensor mean_pool(const Tensor& emb, const std::vector<int64_t>& lengths, int batch, int len,
                   Tape* tape) const;

  SeqConfig config_;
  Tensor vocab_table_;
  Tensor pos_table_;  // mha
  // recurrent cell weights; unidirectional variants use only index 0
  struct Cell {
    std::vector<Tensor> w_x, w_h, b;  // per gate
  };
  Cell cells_[2];
  // cnn
  Tensor conv_w2_, conv_b2_, conv_w3_, conv_b3_;
  Tensor highway_wt_, highway_bt_, highway_wh_, highway_bh_;
  // mha
  std::vector<Tensor> mha_wq_, mha_wk_, mha_wv_;
  Tensor mha_wo_;
  Tensor classifier_w_;
  std::vector<Parameter> params_;
};

}  // namespace relchain
