#include "gicl/task_graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gicl {

TaskGraph build_task_graph(std::vector<PromptNode> prompts,
                           std::vector<Tensor> queries, int ways, Tape* tape) {
  if (ways < 1) throw std::invalid_argument("task graph: ways must be >= 1");
  std::vector<std::vector<Tensor>> per_class(ways);
  for (const auto& p : prompts) {
    if (p.class_index < 0 || p.class_index >= ways)
      throw std::invalid_argument("task graph: prompt class " +
                                  std::to_string(p.class_index) +
                                  " outside [0, " + std::to_string(ways) + ")");
    per_class[p.class_index].push_back(p.embedding);
  }
  for (int c = 0; c < ways; ++c)
    if (per_class[c].empty())
      throw std::invalid_argument("task graph: class " + std::to_string(c) +
                                  " has no prompts");

  TaskGraph tg;
  tg.ways = ways;
  tg.prompts = std::move(prompts);
  tg.queries = std::move(queries);
  for (std::size_t p = 0; p < tg.prompts.size(); ++p)
    for (int y = 0; y < ways; ++y)
      tg.edges.push_back({p, static_cast<std::size_t>(y),
                          tg.prompts[p].class_index == y
                              ? EdgeAttr::TrueLabel
                              : EdgeAttr::FalseLabel});
  for (std::size_t q = 0; q < tg.queries.size(); ++q)
    for (int y = 0; y < ways; ++y)
      tg.edges.push_back({tg.prompts.size() + q, static_cast<std::size_t>(y),
                          EdgeAttr::Query});
  for (int c = 0; c < ways; ++c)
    tg.label_init.push_back(mean(tape, per_class[c]));
  return tg;
}

namespace {

// Single-head scaled dot-product attention update:
//   h' = relu(w_self h + sum_j softmax_j(<w_q h, w_k m_j> / sqrt(d)) w_v m_j)
Tensor attention_update(Tape* tape, const Tensor& h,
                        const std::vector<Tensor>& messages,
                        const Tensor& w_self, const Tensor& w_q,
                        const Tensor& w_k, const Tensor& w_v) {
  Tensor self_term = matmul(tape, w_self, h);
  if (messages.empty()) return relu(tape, self_term);

  Tensor query_vec = matmul(tape, w_q, h);
  Tensor inv_sqrt_d =
      Tensor::scalar(1.0 / std::sqrt(static_cast<double>(h.size())));
  std::vector<Tensor> logits;
  std::vector<Tensor> values;
  logits.reserve(messages.size());
  values.reserve(messages.size());
  for (const auto& m : messages) {
    Tensor key = matmul(tape, w_k, m);
    logits.push_back(
        scalar_scale(tape, dot(tape, query_vec, key), inv_sqrt_d));
    values.push_back(matmul(tape, w_v, m));
  }
  Tensor attn = softmax(tape, concat_n(tape, logits));
  std::vector<Tensor> weighted;
  weighted.reserve(values.size());
  for (std::size_t j = 0; j < values.size(); ++j)
    weighted.push_back(
        scalar_scale(tape, values[j], element(tape, attn, j)));
  return relu(tape, add(tape, self_term, add_n(tape, weighted)));
}

}  // namespace

PropagatedEmbeddings propagate(Tape* tape, const TaskGraph& tg,
                               const ModelParams& params,
                               const ModelConfig& cfg) {
  PropagatedEmbeddings h;
  for (const auto& p : tg.prompts) h.prompts.push_back(p.embedding);
  h.queries = tg.queries;
  h.labels = tg.label_init;

  const Tensor& type_emb = params.get("edge_type.emb");

  // label_index -> incoming prompt edges; query index -> label edges
  std::vector<std::vector<const TaskGraphEdge*>> label_in(tg.ways);
  std::vector<std::vector<const TaskGraphEdge*>> query_in(tg.queries.size());
  for (const auto& e : tg.edges) {
    if (e.attr == EdgeAttr::Query)
      query_in[e.data_index - tg.prompts.size()].push_back(&e);
    else
      label_in[e.label_index].push_back(&e);
  }

  for (std::size_t round = 0; round < cfg.task_gnn_rounds; ++round) {
    const std::string prefix = "gnn_t." + std::to_string(round);
    const Tensor& w_self = params.get(prefix + ".w_self");
    const Tensor& w_q = params.get(prefix + ".w_q");
    const Tensor& w_k = params.get(prefix + ".w_k");
    const Tensor& w_v = params.get(prefix + ".w_v");

    // phase 1: labels aggregate prompt messages only
    std::vector<Tensor> new_labels(tg.ways);
    for (int y = 0; y < tg.ways; ++y) {
      std::vector<Tensor> messages;
      for (const auto* e : label_in[y]) {
        Tensor type_vec =
            row(tape, type_emb, static_cast<std::size_t>(e->attr));
        messages.push_back(add(tape, h.prompts[e->data_index], type_vec));
      }
      new_labels[y] = attention_update(tape, h.labels[y], messages, w_self,
                                       w_q, w_k, w_v);
    }
    h.labels = std::move(new_labels);

    // phase 2: queries aggregate the updated labels
    std::vector<Tensor> new_queries(tg.queries.size());
    for (std::size_t q = 0; q < tg.queries.size(); ++q) {
      std::vector<Tensor> messages;
      for (const auto* e : query_in[q]) {
        Tensor type_vec =
            row(tape, type_emb, static_cast<std::size_t>(e->attr));
        messages.push_back(add(tape, h.labels[e->label_index], type_vec));
      }
      new_queries[q] = attention_update(tape, h.queries[q], messages, w_self,
                                        w_q, w_k, w_v);
    }
    h.queries = std::move(new_queries);
  }
  return h;
}

std::vector<Tensor> query_label_logits(Tape* tape,
                                       const PropagatedEmbeddings& h,
                                       double temperature) {
  if (temperature <= 0.0)
    throw std::invalid_argument("predict: temperature must be positive");
  Tensor inv_temp = Tensor::scalar(1.0 / temperature);
  std::vector<Tensor> out;
  out.reserve(h.queries.size());
  for (const auto& hq : h.queries) {
    std::vector<Tensor> sims;
    sims.reserve(h.labels.size());
    for (const auto& hy : h.labels)
      sims.push_back(cosine_similarity(tape, hq, hy));
    out.push_back(scalar_scale(tape, concat_n(tape, sims), inv_temp));
  }
  return out;
}

std::vector<TaskPrediction> predict(const PropagatedEmbeddings& h,
                                    double temperature) {
  if (temperature <= 0.0)
    throw std::invalid_argument("predict: temperature must be positive");
  std::vector<TaskPrediction> out;
  for (const auto& hq : h.queries) {
    TaskPrediction pred;
    for (const auto& hy : h.labels)
      pred.similarities.push_back(
          cosine_similarity(nullptr, hq, hy).item());

    double mx = *std::max_element(pred.similarities.begin(),
                                  pred.similarities.end());
    double denom = 0.0;
    pred.probabilities.resize(pred.similarities.size());
    for (std::size_t y = 0; y < pred.similarities.size(); ++y) {
      pred.probabilities[y] =
          std::exp((pred.similarities[y] - mx) / temperature);
      denom += pred.probabilities[y];
    }
    for (double& p : pred.probabilities) p /= denom;

    pred.predicted = 0;
    for (std::size_t y = 1; y < pred.similarities.size(); ++y)
      if (pred.similarities[y] > pred.similarities[pred.predicted])
        pred.predicted = static_cast<int>(y);
    pred.confidence = pred.probabilities[pred.predicted];
    out.push_back(std::move(pred));
  }
  return out;
}

}  // namespace gicl
