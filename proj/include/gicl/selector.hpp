#pragma once

#include <cstddef>
#include <vector>

#include "gicl/model.hpp"
#include "gicl/rng.hpp"
#include "gicl/tensor.hpp"

namespace gicl {

// Learned usefulness of a candidate prompt: I = sigmoid(mlp_theta(G)),
// plus the importance-weighted embedding I * G that feeds the task graph.
struct ImportanceResult {
  Tensor importance;  // scalar in (0, 1)
  Tensor weighted;
};
ImportanceResult compute_importance(Tape* tape, const Tensor& embedding,
                                    const ModelParams& params,
                                    const ModelConfig& cfg);

enum class SimilarityMetric { Cosine, Euclidean, Manhattan };

// Pairwise similarity between candidate and query embeddings. Cosine is the
// default; Euclidean/Manhattan report negated distance so that higher is
// always more similar. Zero vectors get cosine 0.
std::vector<std::vector<double>> knn_similarity(
    const std::vector<Tensor>& candidates, const std::vector<Tensor>& queries,
    SimilarityMetric metric = SimilarityMetric::Cosine);

// score(p, q) = sim(p, q) + I_p * I_q
double combine_score(double sim, double importance_p, double importance_q);

struct SelectionResult {
  std::vector<std::vector<std::size_t>> chosen_per_class;  // global indices
  std::vector<std::size_t> chosen;  // flattened in class order
  std::vector<std::vector<double>> scores;  // [candidate][query]
  std::vector<double> votes;                // per candidate
};

// Query voting: each query votes for its top-k candidates across the whole
// pool, adding its score(p, q) to each. The k candidates per class with the
// highest signed vote totals win. Ties break toward the lower candidate
// index everywhere.
SelectionResult vote_select(const std::vector<std::vector<double>>& scores,
                            const std::vector<int>& candidate_class, int ways,
                            int shots);

// Uniform without-replacement baseline, k per class.
SelectionResult random_select(const std::vector<int>& candidate_class,
                              int ways, int shots, RngState& rng);

}  // namespace gicl
