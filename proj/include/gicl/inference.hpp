#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "gicl/augmenter.hpp"
#include "gicl/generator.hpp"
#include "gicl/graph.hpp"
#include "gicl/model.hpp"
#include "gicl/selector.hpp"

namespace gicl {

enum class SelectorMode { Adaptive, Random };

struct AblationFlags {
  bool no_reweight = false;        // unit edge weights, skips mlp_phi
  bool no_knn = false;             // score = I_p * I_q only
  bool no_selection_layer = false; // score = sim only, unweighted embeddings
};

struct InferenceConfig {
  EpisodeSpec episode;
  std::size_t episodes = 5;
  SelectorMode selector = SelectorMode::Adaptive;
  SimilarityMetric metric = SimilarityMetric::Cosine;
  CacheConfig cache;  // capacity 0 disables augmentation
  AblationFlags ablate;
  GeneratorConfig generator;
  double pretrain_class_fraction = 0.0;  // downstream pool = held-out classes
  std::uint64_t seed = 0;
};

struct QueryRecord {
  std::size_t episode = 0;
  std::int64_t query_id = 0;
  int y_true = -1;
  int y_pred = -1;  // global class ids
  double confidence = 0.0;
  std::vector<std::int64_t> prompt_ids;  // selected prompts (cache extras not included)
  std::size_t cache_size = 0;            // cache size used for augmentation
};

struct InferenceRun {
  std::vector<QueryRecord> records;
};

// One episode of the inference stage, stages in order: encode candidates and
// queries, importance, kNN scores, voting (or random selection), cache
// augmentation, task-graph prediction, cache touch, cache admission.
// Parameters are never mutated.
std::vector<QueryRecord> run_episode(const ModelParams& params,
                                     const ModelConfig& model,
                                     const Graph& g, const EpisodePool& pool,
                                     const EpisodeSpec& spec,
                                     const InferenceConfig& cfg,
                                     PromptCache& cache, RngState& rng,
                                     std::size_t episode_index);

// Streams cfg.episodes episodes drawn from the downstream class pool; the
// cache persists across episodes within the run. Episode e uses an rng
// stream derived from (seed, e) so paired configurations see identical
// episode draws.
InferenceRun run_inference(const ModelParams& params, const ModelConfig& model,
                           const Graph& g, const InferenceConfig& cfg);

struct MetricsReport {
  double accuracy = 0.0;
  std::map<int, double> per_class;  // accuracy per true class
  double mean_confidence = 0.0;
  std::size_t n = 0;
};

MetricsReport evaluate(const InferenceRun& run);

// Paired comparison across seeds (e.g. adaptive vs random selection):
// per-seed accuracy deltas a[i] - b[i] and their mean.
struct PairedReport {
  std::vector<double> deltas;
  double mean_delta = 0.0;
};
PairedReport compare_paired(const std::vector<MetricsReport>& a,
                            const std::vector<MetricsReport>& b);

void write_records_jsonl(const std::filesystem::path& path,
                         const InferenceRun& run);
InferenceRun read_records_jsonl(const std::filesystem::path& path);
void write_metrics_json(const std::filesystem::path& path,
                        const MetricsReport& report);

}  // namespace gicl
