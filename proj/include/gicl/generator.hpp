#pragma once

#include <cstdint>
#include <vector>

#include "gicl/graph.hpp"
#include "gicl/model.hpp"
#include "gicl/rng.hpp"
#include "gicl/tensor.hpp"

namespace gicl {

struct GeneratorConfig {
  int hops = 1;
  std::size_t max_subgraph_nodes = 20;
};

// Sampled context subgraph around one input point. Node features are copied
// in as constant tensors; edge weights are attached by the reconstruction
// pass and the pooled embedding by the encoder.
struct DataGraph {
  InputPoint input;
  std::vector<std::int64_t> node_ids;  // sorted ascending, centers included
  std::vector<Tensor> node_feats;      // parallel to node_ids
  struct LocalEdge {
    std::size_t u = 0;  // indices into node_ids
    std::size_t v = 0;
    int rel = 0;
  };
  std::vector<LocalEdge> edges;
  std::vector<Tensor> weights;  // parallel to edges; empty until set
  Tensor embedding;

  std::size_t index_of(std::int64_t id) const;
  bool has_weights() const {
    return weights.size() == edges.size() && (edges.empty() || weights[0].defined());
  }
};

// Random-walk neighborhood expansion: add the current node's neighbors
// (deduplicated, in id order, stopping at the node cap), hop to a uniformly
// random neighbor, repeat `hops` times. Edge-task inputs walk from both
// endpoints under a shared cap. Induced edges connect sampled nodes; for
// edge tasks the direct head-tail edges are left out so the pair's context,
// not the labeled edge itself, drives the embedding.
DataGraph sample_data_graph(const Graph& g, const InputPoint& input,
                            const GeneratorConfig& cfg, RngState& rng);

// Per-edge weight w = sigmoid(mlp_phi(input)), where the MLP input is the
// concatenated endpoint features or the edge's relation embedding.
void reconstruct_edge_weights(Tape* tape, DataGraph& dg,
                              const ModelParams& params,
                              const ModelConfig& cfg);

// Reweighting bypass: constant weight 1 on every edge.
void set_unit_edge_weights(DataGraph& dg);

// Weighted-mean message passing, depth cfg.gnn_depth:
//   h'_u = relu(w_self h_u + w_neigh * (sum_v w_uv h_v / sum_v w_uv))
// Isolated nodes (or vanishing weight mass) keep only the self term.
// Readout: center embedding (node task) or mean of head/tail (edge task).
Tensor encode_data_graph(Tape* tape, DataGraph& dg, const ModelParams& params,
                         const ModelConfig& cfg);

// Full stage-1 pass for one input point: sample, reweight (or bypass with
// unit weights), encode.
Tensor embed_input_point(Tape* tape, const Graph& g, const InputPoint& input,
                         const ModelParams& params, const ModelConfig& model,
                         const GeneratorConfig& cfg, RngState& rng,
                         bool unit_weights = false);

}  // namespace gicl
