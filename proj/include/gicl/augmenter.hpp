#pragma once

#include <cstdint>
#include <vector>

#include "gicl/tensor.hpp"

namespace gicl {

struct CacheEntry {
  std::vector<double> embedding;
  int pseudo_label = -1;  // global class id
  double confidence = 0.0;
  std::uint64_t frequency = 1;
  std::uint64_t last_tick = 0;
};

struct CacheConfig {
  std::size_t capacity = 3;  // 0 disables augmentation
  double admit_confidence_floor = 0.5;
  int touch_k = 1;
};

// Fixed-capacity LFU store of pseudo-labeled query embeddings. Eviction
// removes the minimum-frequency entry, breaking ties toward the oldest
// last-touch tick. Not thread-safe: single writer only.
class PromptCache {
 public:
  explicit PromptCache(std::size_t capacity) : capacity_(capacity) {}

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<CacheEntry>& entries() const { return entries_; }
  std::uint64_t tick() const { return tick_; }

  // Insert one entry with frequency 1, evicting if full. No-op when
  // capacity is 0.
  void admit(std::vector<double> embedding, int pseudo_label,
             double confidence);

  // Batch admission: keeps at most one candidate per predicted class (the
  // most confident), drops anything below the confidence floor.
  struct AdmitCandidate {
    std::vector<double> embedding;
    int pseudo_label = -1;
    double confidence = 0.0;
  };
  void admit_batch(std::vector<AdmitCandidate> candidates, double floor);

  // For each query, the top-k entries by cosine similarity are hits: their
  // frequency increments and their last-touch tick advances.
  void touch(const std::vector<std::vector<double>>& queries, int k);

 private:
  std::size_t capacity_;
  std::vector<CacheEntry> entries_;
  std::uint64_t tick_ = 0;
};

// Prompt node fed to the task graph; cache entries arrive with
// from_cache = true and point_id = -(last-touch tick).
struct PromptNode {
  Tensor embedding;
  int class_index = 0;  // episode class index in [0, ways)
  std::int64_t point_id = 0;
  bool from_cache = false;
};

// S' = S ∪ {cache entries whose pseudo-label is an episode class}; the
// selected prompts always come first, so S ⊆ S'.
std::vector<PromptNode> augment_prompt_set(
    const std::vector<PromptNode>& selected, const PromptCache& cache,
    const std::vector<int>& episode_class_ids);

}  // namespace gicl
