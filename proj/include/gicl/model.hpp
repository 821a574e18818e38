#pragma once

#include <cstdint>
#include <string>

#include "gicl/params.hpp"
#include "gicl/rng.hpp"
#include "gicl/tensor.hpp"

namespace gicl {

// How the edge-reweighting MLP sees an edge: concatenated endpoint features
// (node classification graphs) or the edge's relation embedding (knowledge
// graphs, where every edge carries its own relation id).
enum class ReweightInput { ConcatNodes, RelationEmbedding };

struct ModelConfig {
  std::size_t feature_dim = 16;
  std::size_t embedding_dim = 64;
  std::size_t gnn_depth = 2;         // data-graph encoder layers
  std::size_t task_gnn_rounds = 2;   // task-graph attention rounds
  double softmax_temperature = 1.0;
  std::size_t num_relations = 1;
  ReweightInput reweight_input = ReweightInput::ConcatNodes;
};

// Task-graph edge attributes: the prompt's true class edge, the remaining
// prompt-label edges, and query-label edges.
enum class EdgeAttr : std::size_t { TrueLabel = 0, FalseLabel = 1, Query = 2 };

// Parameter set for the whole pipeline:
//   mlp_phi.*      edge reweighting (scalar logit head)
//   mlp_theta.*    prompt importance (scalar logit head)
//   gnn_d.<i>.*    data-graph encoder layers (w_self, w_neigh)
//   gnn_t.<i>.*    task-graph attention rounds (w_self, w_q, w_k, w_v)
//   edge_type.emb  [3 x h] embeddings for T/F/Q edge attributes
//   relations.emb  [R x d] relation embeddings (RelationEmbedding mode only)
// Weight matrices start uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)); biases
// start at zero. Embedding tables are treated like weight matrices.
ModelParams init_model_params(const ModelConfig& cfg, RngState& rng);

// Two-layer MLP with ReLU hidden activation: w2 * relu(w1 * x + b1) + b2.
Tensor mlp2_forward(Tape* tape, const ModelParams& params,
                    const std::string& prefix, const Tensor& x);

std::size_t reweight_input_dim(const ModelConfig& cfg);

// Recovers the architecture from a saved checkpoint (depths and dims come
// from parameter names and shapes; temperature stays at its default).
ModelConfig model_config_from_checkpoint(const Checkpoint& ck);

}  // namespace gicl
