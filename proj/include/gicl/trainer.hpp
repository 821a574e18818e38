#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "gicl/generator.hpp"
#include "gicl/graph.hpp"
#include "gicl/model.hpp"
#include "gicl/params.hpp"
#include "gicl/rng.hpp"

namespace gicl {

enum class PretrainTask { NeighborMatch, MultiTask };

// One pretraining episode: prompt and query points with episode-local class
// indices in [0, ways). Prompts cover every episode class.
struct Episode {
  PretrainTask task = PretrainTask::MultiTask;
  EpisodeSpec spec;
  std::vector<std::int64_t> nm_anchors;              // NeighborMatch only
  std::vector<std::pair<InputPoint, int>> prompts;   // (point, class index)
  std::vector<std::pair<InputPoint, int>> queries;
};

// Self-supervised neighbor matching: sample `ways` anchor nodes, treat each
// anchor's l-hop ball as one class, draw prompts and queries from the balls
// (disjoint, anchors excluded). Anchors need degree >= shots + 1; infeasible
// draws retry up to 50 times. When allowed_labels is non-empty, anchors and
// members are restricted to nodes with those labels.
Episode sample_nm_episode(const Graph& g, const EpisodeSpec& spec,
                          const std::vector<int>& allowed_labels,
                          RngState& rng);

// Supervised few-shot episodes over the pretraining class pool; prompts are
// the full k-per-class draw (no candidate over-provisioning in training).
Episode sample_mt_episode(const Graph& g, const EpisodeSpec& spec,
                          const std::vector<int>& class_pool, RngState& rng);

struct TrainerConfig {
  EpisodeSpec episode;  // candidates_per_class is ignored (N = shots)
  std::size_t steps = 1000;
  std::size_t batch_nm = 4;
  std::size_t batch_mt = 4;
  AdamWConfig optimizer;
  GeneratorConfig generator;
  ModelConfig model;  // feature_dim/num_relations/reweight mode from graph
  double pretrain_class_fraction = 1.0;
  std::uint64_t seed = 0;
  std::size_t checkpoint_interval = 200;
  std::filesystem::path checkpoint_path;  // empty: keep in memory only
  std::filesystem::path metrics_path;     // empty: no CSV
};

struct TrainState {
  ModelParams params;
  AdamWState opt;
  std::uint64_t step = 0;
  RngState rng;
};

struct StepMetrics {
  double loss_total = 0.0;
  double loss_nm = 0.0;
  double loss_mt = 0.0;
  double acc_nm = 0.0;
  double acc_mt = 0.0;
};

// One joint optimization step over a paired batch (>= 1 episode of each
// task). Loss = mean CE over NM queries + mean CE over MT queries.
StepMetrics train_step(TrainState& state, const Graph& g,
                       const std::vector<Episode>& batch,
                       const TrainerConfig& cfg);

// Fills graph-derived model fields (feature_dim, num_relations, reweight
// mode) and leaves everything else as configured.
ModelConfig resolve_model_config(const ModelConfig& base, const Graph& g);

// Full pretraining loop: init (or resume), step loop with metrics CSV
// (step,loss_total,loss_nm,loss_mt,acc_nm,acc_mt,wall_ms), periodic + final
// checkpoints. Returns the final checkpoint.
Checkpoint pretrain(const Graph& g, const TrainerConfig& cfg,
                    const std::optional<Checkpoint>& resume_from = {});

}  // namespace gicl
