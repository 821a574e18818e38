#pragma once

#include <cstddef>
#include <vector>

#include "gicl/augmenter.hpp"
#include "gicl/model.hpp"
#include "gicl/tensor.hpp"

namespace gicl {

struct TaskGraphEdge {
  std::size_t data_index = 0;   // prompt index, or num_prompts + query index
  std::size_t label_index = 0;  // in [0, ways)
  EdgeAttr attr = EdgeAttr::Query;
};

// Bipartite prompt/query-label graph. Every data node connects to every
// label node; prompts carry exactly one TrueLabel edge, queries only Query
// edges. Label nodes start at the mean of their true-prompt embeddings.
struct TaskGraph {
  std::vector<PromptNode> prompts;
  std::vector<Tensor> queries;
  int ways = 0;
  std::vector<TaskGraphEdge> edges;
  std::vector<Tensor> label_init;
};

TaskGraph build_task_graph(std::vector<PromptNode> prompts,
                           std::vector<Tensor> queries, int ways, Tape* tape);

struct PropagatedEmbeddings {
  std::vector<Tensor> prompts;
  std::vector<Tensor> queries;
  std::vector<Tensor> labels;
};

// Attention message passing, cfg.task_gnn_rounds rounds. Each round runs in
// two phases: label nodes aggregate prompt messages (never query messages,
// so no information crosses between queries), then query nodes aggregate
// the updated label embeddings. Messages add the T/F/Q edge-type embedding
// to the sender; attention is single-head scaled dot product.
PropagatedEmbeddings propagate(Tape* tape, const TaskGraph& tg,
                               const ModelParams& params,
                               const ModelConfig& cfg);

// Per-query logits: cos(h_q, h_y) / temperature, as one rank-1 tensor per
// query (differentiable path for the training loss).
std::vector<Tensor> query_label_logits(Tape* tape,
                                       const PropagatedEmbeddings& h,
                                       double temperature);

struct TaskPrediction {
  std::vector<double> similarities;   // cos(h_q, h_y) per label
  std::vector<double> probabilities;  // softmax(similarities / temperature)
  int predicted = 0;                  // argmax similarity, ties -> lower index
  double confidence = 0.0;            // max probability
};

std::vector<TaskPrediction> predict(const PropagatedEmbeddings& h,
                                    double temperature);

}  // namespace gicl
