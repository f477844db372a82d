#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "relchain/ops.hpp"
#include "relchain/optim.hpp"
#include "relchain/story_gen.hpp"

namespace relchain {

enum class EgnnVariant { gcn, gat, sgcn, agnn, rgcn };

const char* egnn_variant_name(EgnnVariant v);
std::optional<EgnnVariant> parse_egnn_variant(std::string_view name);

enum class AggMode { sum, mean, max };

struct EgnnConfig {
  EgnnVariant variant = EgnnVariant::gcn;
  int emb_dim = 100;
  int layers = 3;
  int heads = 1;  // gat only
  int max_entities = 30;
  int relation_types = kRelationCount;
  int num_classes = kBaseRelationCount;
};

// Instances encoded as one padded node block per graph. Every fact
// contributes a forward edge and a reverse edge carrying the inv- dual, so
// chains are traversable both ways.
struct GraphBatch {
  int batch = 0;
  int max_nodes = 0;
  std::vector<int64_t> node_slot;   // B*N canonical slot per node, 0 for pads
  std::vector<double> node_mask;    // B*N
  std::vector<int64_t> edge_src;    // flat indices b*N + i
  std::vector<int64_t> edge_dst;
  std::vector<int64_t> edge_rel;
  std::vector<int64_t> head_index;  // B query heads (flat)
  std::vector<int64_t> tail_index;  // B query tails (flat)
};

GraphBatch build_graph_batch(std::span<const StoryInstance> instances, int max_entities);

// Message stage: (theta @ x_j) || e_ij -> [E x (emb_dim + r)]
Tensor egnn_message(const Tensor& x_j, const Tensor& e_ij, const Tensor& theta, Tape* tape);

// Permutation-invariant combine per destination node; empty neighborhoods
// yield the zero vector.
Tensor egnn_aggregate(const Tensor& messages, const std::vector<int64_t>& dst, int64_t num_nodes,
                      AggMode mode, Tape* tape);

// Update stage: act(w_self @ x_i + edge_update @ aggregated + bias),
// projecting back to emb_dim. `linear` drops bias and activation (sgcn).
Tensor egnn_update(const Tensor& x_i, const Tensor& aggregated, const Tensor& w_self,
                   const Tensor& edge_update, const Tensor& bias, bool linear, Tape* tape);

class EgnnModel {
 public:
  EgnnModel(const EgnnConfig& config, uint64_t seed);

  // Node embeddings after `layers` rounds of message passing, [B*N x emb_dim]
  // with masked rows kept at zero.
  Tensor encode_graph(const GraphBatch& batch, Tape* tape);

  // softmax-ready logits of W [emb(F) || emb(Q|F)] per the readout contract.
  Tensor readout(const Tensor& node_embs, const GraphBatch& batch, Tape* tape);

  Tensor forward(const GraphBatch& batch, Tape* tape);

  std::vector<Parameter>& params() { return params_; }
  const EgnnConfig& config() const { return config_; }

 private:
  struct Layer {
    Tensor theta;                    // shared, or per head for gat
    std::vector<Tensor> theta_heads;
    std::vector<Tensor> attn;        // gat attention vectors per head
    Tensor beta;                     // agnn scalar
    std::vector<Tensor> rel_theta;   // rgcn per-relation weights
    Tensor w_self;
    Tensor edge_update;
    Tensor bias;
  };
  Tensor layer_forward(const Layer& layer, const Tensor& x, const GraphBatch& batch,
                       const Tensor& edge_onehot, Tape* tape);

  EgnnConfig config_;
  std::vector<Layer> layers_;
  Tensor slot_table_;
  Tensor readout_w_;
  std::vector<Parameter> params_;
};

}  // namespace relchain
