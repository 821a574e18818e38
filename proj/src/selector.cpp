#include "gicl/selector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gicl {

ImportanceResult compute_importance(Tape* tape, const Tensor& embedding,
                                    const ModelParams& params,
                                    const ModelConfig& cfg) {
  if (embedding.rank() != 1 || embedding.size() != cfg.embedding_dim)
    throw std::invalid_argument("importance: embedding shape " +
                                shape_str(embedding.shape()) +
                                " does not match embedding_dim " +
                                std::to_string(cfg.embedding_dim));
  Tensor logit = mlp2_forward(tape, params, "mlp_theta", embedding);
  Tensor importance = sigmoid(tape, logit);
  Tensor weighted = scalar_scale(tape, embedding, importance);
  return {importance, weighted};
}

namespace {

double pair_similarity(std::span<const double> a, std::span<const double> b,
                       SimilarityMetric metric) {
  switch (metric) {
    case SimilarityMetric::Cosine: {
      double duv = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        duv += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
      }
      na = std::sqrt(na);
      nb = std::sqrt(nb);
      if (na < 1e-12 || nb < 1e-12) return 0.0;
      return duv / (na * nb);
    }
    case SimilarityMetric::Euclidean: {
      double acc = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i)
        acc += (a[i] - b[i]) * (a[i] - b[i]);
      return -std::sqrt(acc);
    }
    case SimilarityMetric::Manhattan: {
      double acc = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
      return -acc;
    }
  }
  throw std::invalid_argument("similarity: unknown metric");
}

}  // namespace

std::vector<std::vector<double>> knn_similarity(
    const std::vector<Tensor>& candidates, const std::vector<Tensor>& queries,
    SimilarityMetric metric) {
  std::vector<std::vector<double>> sim(candidates.size(),
                                       std::vector<double>(queries.size()));
  for (std::size_t p = 0; p < candidates.size(); ++p)
    for (std::size_t q = 0; q < queries.size(); ++q) {
      if (candidates[p].size() != queries[q].size())
        throw std::invalid_argument("similarity: dimension mismatch");
      sim[p][q] = pair_similarity(candidates[p].values(), queries[q].values(),
                                  metric);
    }
  return sim;
}

double combine_score(double sim, double importance_p, double importance_q) {
  return sim + importance_p * importance_q;
}

SelectionResult vote_select(const std::vector<std::vector<double>>& scores,
                            const std::vector<int>& candidate_class, int ways,
                            int shots) {
  if (scores.size() != candidate_class.size())
    throw std::invalid_argument("select: scores/class size mismatch");
  const std::size_t num_candidates = scores.size();

  std::vector<std::vector<std::size_t>> by_class(ways);
  for (std::size_t p = 0; p < num_candidates; ++p) {
    int c = candidate_class[p];
    if (c < 0 || c >= ways)
      throw std::invalid_argument("select: candidate class " +
                                  std::to_string(c) + " outside [0, " +
                                  std::to_string(ways) + ")");
    by_class[c].push_back(p);
  }

  SelectionResult result;
  result.scores = scores;
  result.votes.assign(num_candidates, 0.0);
  const std::size_t num_queries =
      num_candidates == 0 ? 0 : scores[0].size();

  for (int c = 0; c < ways; ++c)
    if (by_class[c].size() < static_cast<std::size_t>(shots))
      throw std::invalid_argument("select: class " + std::to_string(c) +
                                  " has " + std::to_string(by_class[c].size()) +
                                  " candidates, need " + std::to_string(shots));

  // each query votes for its top-k candidates over the whole pool, so a
  // class's votes come from the queries that actually gravitate to it
  for (std::size_t q = 0; q < num_queries; ++q) {
    std::vector<std::size_t> order(num_candidates);
    for (std::size_t i = 0; i < num_candidates; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (scores[a][q] != scores[b][q]) return scores[a][q] > scores[b][q];
      return a < b;
    });
    for (int t = 0; t < shots && t < static_cast<int>(order.size()); ++t)
      result.votes[order[t]] += scores[order[t]][q];
  }

  for (int c = 0; c < ways; ++c) {
    std::vector<std::size_t> ranked = by_class[c];
    std::sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
      if (result.votes[a] != result.votes[b])
        return result.votes[a] > result.votes[b];
      return a < b;
    });
    ranked.resize(shots);
    result.chosen_per_class.push_back(ranked);
    result.chosen.insert(result.chosen.end(), ranked.begin(), ranked.end());
  }
  return result;
}

SelectionResult random_select(const std::vector<int>& candidate_class,
                              int ways, int shots, RngState& rng) {
  std::vector<std::vector<std::size_t>> by_class(ways);
  for (std::size_t p = 0; p < candidate_class.size(); ++p) {
    int c = candidate_class[p];
    if (c < 0 || c >= ways)
      throw std::invalid_argument("select: candidate class " +
                                  std::to_string(c) + " outside [0, " +
                                  std::to_string(ways) + ")");
    by_class[c].push_back(p);
  }

  SelectionResult result;
  result.votes.assign(candidate_class.size(), 0.0);
  for (int c = 0; c < ways; ++c) {
    const auto& members = by_class[c];
    if (members.size() < static_cast<std::size_t>(shots))
      throw std::invalid_argument("select: class " + std::to_string(c) +
                                  " has " + std::to_string(members.size()) +
                                  " candidates, need " + std::to_string(shots));
    auto idx = rng.sample_indices(members.size(), shots);
    std::vector<std::size_t> chosen;
    for (auto i : idx) chosen.push_back(members[i]);
    std::sort(chosen.begin(), chosen.end());
    result.chosen_per_class.push_back(chosen);
    result.chosen.insert(result.chosen.end(), chosen.begin(), chosen.end());
  }
  return result;
}

}  // namespace gicl
