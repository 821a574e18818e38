#include "gicl/augmenter.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace gicl {

void PromptCache::admit(std::vector<double> embedding, int pseudo_label,
                        double confidence) {
  if (capacity_ == 0) return;
  if (confidence < 0.0 || confidence > 1.0)
    throw std::invalid_argument("cache: confidence must be in [0, 1]");
  if (entries_.size() >= capacity_) {
    std::size_t victim = 0;
    for (std::size_t i = 1; i < entries_.size(); ++i) {
      const auto& e = entries_[i];
      const auto& v = entries_[victim];
      if (std::tie(e.frequency, e.last_tick) <
          std::tie(v.frequency, v.last_tick))
        victim = i;
    }
    entries_.erase(entries_.begin() + victim);
  }
  CacheEntry entry;
  entry.embedding = std::move(embedding);
  entry.pseudo_label = pseudo_label;
  entry.confidence = confidence;
  entry.frequency = 1;
  entry.last_tick = ++tick_;
  entries_.push_back(std::move(entry));
}

void PromptCache::admit_batch(std::vector<AdmitCandidate> candidates,
                              double floor) {
  std::map<int, std::size_t> best;  // predicted class -> candidate index
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].confidence < floor) continue;
    auto it = best.find(candidates[i].pseudo_label);
    if (it == best.end() ||
        candidates[i].confidence > candidates[it->second].confidence)
      best[candidates[i].pseudo_label] = i;
  }
  for (const auto& [cls, idx] : best)
    admit(std::move(candidates[idx].embedding), cls,
          candidates[idx].confidence);
}

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double duv = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
    duv += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return duv / (na * nb);
}

}  // namespace

void PromptCache::touch(const std::vector<std::vector<double>>& queries,
                        int k) {
  if (k < 1) throw std::invalid_argument("cache: touch k must be >= 1");
  if (entries_.empty()) return;
  for (const auto& q : queries) {
    std::vector<std::size_t> order(entries_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<double> sim(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i)
      sim[i] = cosine(entries_[i].embedding, q);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (sim[a] != sim[b]) return sim[a] > sim[b];
      return a < b;
    });
    std::size_t hits = std::min<std::size_t>(k, order.size());
    // hit entries advance in index order so ticks stay deterministic
    std::vector<std::size_t> hit(order.begin(), order.begin() + hits);
    std::sort(hit.begin(), hit.end());
    for (std::size_t i : hit) {
      entries_[i].frequency += 1;
      entries_[i].last_tick = ++tick_;
    }
  }
}

std::vector<PromptNode> augment_prompt_set(
    const std::vector<PromptNode>& selected, const PromptCache& cache,
    const std::vector<int>& episode_class_ids) {
  std::vector<PromptNode> out = selected;
  for (const auto& entry : cache.entries()) {
    auto it = std::find(episode_class_ids.begin(), episode_class_ids.end(),
                        entry.pseudo_label);
    if (it == episode_class_ids.end()) continue;
    PromptNode node;
    node.embedding = Tensor::from_values({entry.embedding.size()},
                                         entry.embedding, false);
    node.class_index =
        static_cast<int>(it - episode_class_ids.begin());
    node.point_id = -static_cast<std::int64_t>(entry.last_tick);
    node.from_cache = true;
    out.push_back(std::move(node));
  }
  return out;
}

}  // namespace gicl
