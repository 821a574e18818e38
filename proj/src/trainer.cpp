#include "gicl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "gicl/selector.hpp"
#include "gicl/task_graph.hpp"

namespace gicl {

namespace {

// l-hop ball around anchor (anchor excluded), sorted node ids
std::vector<std::int64_t> hop_ball(const Graph& g, std::int64_t anchor,
                                   int hops) {
  std::set<std::int64_t> seen{anchor};
  std::vector<std::int64_t> frontier{anchor};
  std::vector<std::int64_t> ball;
  for (int h = 0; h < hops && !frontier.empty(); ++h) {
    std::vector<std::int64_t> next;
    for (std::int64_t v : frontier)
      for (std::int64_t nb : g.neighbor_nodes(v))
        if (seen.insert(nb).second) {
          next.push_back(nb);
          ball.push_back(nb);
        }
    frontier = std::move(next);
  }
  std::sort(ball.begin(), ball.end());
  return ball;
}

InputPoint node_point(std::int64_t id, int cls) {
  return {TaskKind::NodeTask, id, id, cls, id};
}

}  // namespace

Episode sample_nm_episode(const Graph& g, const EpisodeSpec& spec,
                          const std::vector<int>& allowed_labels,
                          RngState& rng) {
  validate_episode_spec(spec);
  std::set<int> allowed(allowed_labels.begin(), allowed_labels.end());
  auto label_ok = [&](std::int64_t id) {
    if (allowed.empty()) return true;
    const auto& lbl = g.node(id).label;
    return lbl && allowed.count(*lbl) != 0;
  };

  std::vector<std::int64_t> eligible;
  for (const auto& n : g.nodes())
    if (g.degree(n.id) >= static_cast<std::size_t>(spec.shots) + 1 &&
        label_ok(n.id))
      eligible.push_back(n.id);
  if (eligible.size() < static_cast<std::size_t>(spec.ways))
    throw std::runtime_error("nm episode: only " +
                             std::to_string(eligible.size()) +
                             " eligible anchors, need " +
                             std::to_string(spec.ways));

  for (int attempt = 0; attempt < 50; ++attempt) {
    auto anchor_idx = rng.sample_indices(eligible.size(), spec.ways);
    std::vector<std::int64_t> anchors;
    for (auto i : anchor_idx) anchors.push_back(eligible[i]);
    std::set<std::int64_t> anchor_set(anchors.begin(), anchors.end());

    Episode ep;
    ep.task = PretrainTask::NeighborMatch;
    ep.spec = spec;
    ep.nm_anchors = anchors;
    std::set<std::int64_t> used;
    std::vector<std::vector<std::int64_t>> remaining(spec.ways);
    bool feasible = true;

    for (int c = 0; c < spec.ways && feasible; ++c) {
      std::vector<std::int64_t> ball;
      for (std::int64_t v : hop_ball(g, anchors[c], spec.hops))
        if (!anchor_set.count(v) && !used.count(v) && label_ok(v))
          ball.push_back(v);
      if (ball.size() < static_cast<std::size_t>(spec.shots) + 1) {
        feasible = false;
        break;
      }
      auto idx = rng.sample_indices(ball.size(), spec.shots);
      std::set<std::size_t> taken(idx.begin(), idx.end());
      for (auto i : idx) {
        ep.prompts.push_back({node_point(ball[i], c), c});
        used.insert(ball[i]);
      }
      for (std::size_t i = 0; i < ball.size(); ++i)
        if (!taken.count(i)) remaining[c].push_back(ball[i]);
    }
    if (!feasible) continue;

    for (int q = 0; q < spec.queries && feasible; ++q) {
      int c = static_cast<int>(rng.randint(spec.ways));
      // drop members claimed by other classes since collection
      auto& pool = remaining[c];
      pool.erase(std::remove_if(pool.begin(), pool.end(),
                                [&](std::int64_t v) { return used.count(v); }),
                 pool.end());
      if (pool.empty()) {
        feasible = false;
        break;
      }
      std::size_t i = rng.randint(pool.size());
      ep.queries.push_back({node_point(pool[i], c), c});
      used.insert(pool[i]);
      pool.erase(pool.begin() + i);
    }
    if (feasible) return ep;
  }
  throw std::runtime_error(
      "nm episode: no feasible draw after 50 attempts (ways " +
      std::to_string(spec.ways) + ", shots " + std::to_string(spec.shots) +
      ")");
}

Episode sample_mt_episode(const Graph& g, const EpisodeSpec& spec,
                          const std::vector<int>& class_pool, RngState& rng) {
  EpisodeSpec draw = spec;
  draw.candidates_per_class = spec.shots;  // training uses the full pool
  EpisodePool pool = split_episode_pool(g, draw, class_pool, rng);

  Episode ep;
  ep.task = PretrainTask::MultiTask;
  ep.spec = draw;
  for (int c = 0; c < draw.ways; ++c)
    for (const auto& p : pool.candidates[c]) ep.prompts.push_back({p, c});
  for (const auto& q : pool.queries) {
    auto it = std::find(draw.class_ids.begin(), draw.class_ids.end(), q.label);
    ep.queries.push_back(
        {q, static_cast<int>(it - draw.class_ids.begin())});
  }
  return ep;
}

namespace {

struct EpisodeLosses {
  std::vector<Tensor> query_ce;
  int correct = 0;
};

EpisodeLosses episode_forward(Tape* tape, TrainState& state, const Graph& g,
                              const Episode& ep, const TrainerConfig& cfg) {
  std::vector<PromptNode> prompt_nodes;
  for (const auto& [point, cls] : ep.prompts) {
    Tensor emb = embed_input_point(tape, g, point, state.params, cfg.model,
                                   cfg.generator, state.rng);
    auto imp = compute_importance(tape, emb, state.params, cfg.model);
    prompt_nodes.push_back({imp.weighted, cls, point.point_id, false});
  }
  std::vector<Tensor> query_embs;
  for (const auto& [point, cls] : ep.queries)
    query_embs.push_back(embed_input_point(tape, g, point, state.params,
                                           cfg.model, cfg.generator,
                                           state.rng));

  TaskGraph tg = build_task_graph(std::move(prompt_nodes),
                                  std::move(query_embs), ep.spec.ways, tape);
  PropagatedEmbeddings h = propagate(tape, tg, state.params, cfg.model);
  auto logits =
      query_label_logits(tape, h, cfg.model.softmax_temperature);

  EpisodeLosses out;
  for (std::size_t q = 0; q < logits.size(); ++q) {
    int target = ep.queries[q].second;
    out.query_ce.push_back(softmax_cross_entropy(
        tape, logits[q], static_cast<std::size_t>(target)));
    auto v = logits[q].values();
    int arg = 0;
    for (std::size_t y = 1; y < v.size(); ++y)
      if (v[y] > v[arg]) arg = static_cast<int>(y);
    if (arg == target) out.correct += 1;
  }
  return out;
}

std::string episode_ids(const std::vector<Episode>& batch) {
  std::ostringstream os;
  for (const auto& ep : batch) {
    os << (ep.task == PretrainTask::NeighborMatch ? " nm[" : " mt[");
    for (const auto& [p, cls] : ep.queries) os << p.point_id << ",";
    os << "]";
  }
  return os.str();
}

}  // namespace

StepMetrics train_step(TrainState& state, const Graph& g,
                       const std::vector<Episode>& batch,
                       const TrainerConfig& cfg) {
  bool has_nm = false, has_mt = false;
  for (const auto& ep : batch) {
    has_nm |= ep.task == PretrainTask::NeighborMatch;
    has_mt |= ep.task == PretrainTask::MultiTask;
  }
  if (!has_nm || !has_mt)
    throw std::invalid_argument(
        "train step: batch must pair neighbor-matching and multi-task "
        "episodes");

  Tape tape;
  std::vector<Tensor> nm_ce, mt_ce;
  int nm_correct = 0, mt_correct = 0;
  std::size_t nm_total = 0, mt_total = 0;
  for (const auto& ep : batch) {
    EpisodeLosses losses = episode_forward(&tape, state, g, ep, cfg);
    if (ep.task == PretrainTask::NeighborMatch) {
      nm_ce.insert(nm_ce.end(), losses.query_ce.begin(),
                   losses.query_ce.end());
      nm_correct += losses.correct;
      nm_total += ep.queries.size();
    } else {
      mt_ce.insert(mt_ce.end(), losses.query_ce.begin(),
                   losses.query_ce.end());
      mt_correct += losses.correct;
      mt_total += ep.queries.size();
    }
  }

  Tensor loss_nm = mean(&tape, nm_ce);
  Tensor loss_mt = mean(&tape, mt_ce);
  Tensor loss = add(&tape, loss_nm, loss_mt);
  if (!std::isfinite(loss.item()))
    throw std::runtime_error("train step: non-finite loss at step " +
                             std::to_string(state.step + 1) + "; episodes:" +
                             episode_ids(batch));

  GradientMap gm = tape.backward(loss);
  NamedGrads grads = collect_grads(state.params, gm);
  adamw_step(state.params, grads, state.opt, cfg.optimizer);
  state.step += 1;

  StepMetrics m;
  m.loss_nm = loss_nm.item();
  m.loss_mt = loss_mt.item();
  m.loss_total = loss.item();
  m.acc_nm = nm_total ? static_cast<double>(nm_correct) / nm_total : 0.0;
  m.acc_mt = mt_total ? static_cast<double>(mt_correct) / mt_total : 0.0;
  return m;
}

ModelConfig resolve_model_config(const ModelConfig& base, const Graph& g) {
  ModelConfig cfg = base;
  cfg.feature_dim = g.feature_dim();
  cfg.reweight_input = g.task_kind() == TaskKind::EdgeTask
                           ? ReweightInput::RelationEmbedding
                           : ReweightInput::ConcatNodes;
  std::size_t max_rel = 0;
  for (const auto& [id, name] : g.relations())
    max_rel = std::max(max_rel, static_cast<std::size_t>(id));
  cfg.num_relations = g.relations().empty() ? 1 : max_rel + 1;
  return cfg;
}

Checkpoint pretrain(const Graph& g, const TrainerConfig& cfg,
                    const std::optional<Checkpoint>& resume_from) {
  TrainerConfig resolved = cfg;
  resolved.model = resolve_model_config(cfg.model, g);
  resolved.generator.hops = resolved.episode.hops;

  TrainState state;
  if (resume_from) {
    const Checkpoint& ck = *resume_from;
    if (!ck.extras)
      throw std::invalid_argument(
          "pretrain: checkpoint has no training state to resume from");
    state.params = ck.params;
    state.opt = ck.extras->opt;
    state.step = ck.extras->step;
    state.rng = RngState::deserialize(ck.extras->rng_state);
  } else {
    state.rng = RngState(cfg.seed);
    state.params = init_model_params(resolved.model, state.rng);
  }

  ClassSplit split =
      make_class_split(g, g.task_kind(), cfg.pretrain_class_fraction);
  if (split.pretrain_classes.empty())
    throw std::invalid_argument("pretrain: no pretraining classes");
  std::vector<int> nm_allowed;
  if (g.task_kind() == TaskKind::NodeTask &&
      !split.downstream_classes.empty())
    nm_allowed = split.pretrain_classes;

  std::ofstream metrics;
  if (!cfg.metrics_path.empty()) {
    bool append = resume_from.has_value() &&
                  std::filesystem::exists(cfg.metrics_path);
    metrics.open(cfg.metrics_path,
                 append ? std::ios::app : std::ios::trunc);
    if (!metrics)
      throw std::runtime_error("pretrain: cannot open metrics file: " +
                               cfg.metrics_path.string());
    if (!append)
      metrics << "step,loss_total,loss_nm,loss_mt,acc_nm,acc_mt,wall_ms\n";
  }

  auto write_checkpoint = [&](const TrainState& s) {
    Checkpoint ck;
    ck.header.embedding_dim =
        static_cast<std::uint32_t>(resolved.model.embedding_dim);
    ck.header.num_relations =
        static_cast<std::uint32_t>(resolved.model.num_relations);
    ck.header.rng_seed = cfg.seed;
    ck.params = s.params;
    ck.extras = TrainExtras{s.step, s.opt, s.rng.serialize()};
    if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, ck);
    return ck;
  };

  while (state.step < cfg.steps) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<Episode> batch;
    for (std::size_t i = 0; i < cfg.batch_nm; ++i)
      batch.push_back(
          sample_nm_episode(g, resolved.episode, nm_allowed, state.rng));
    for (std::size_t i = 0; i < cfg.batch_mt; ++i)
      batch.push_back(sample_mt_episode(g, resolved.episode,
                                        split.pretrain_classes, state.rng));
    StepMetrics m = train_step(state, g, batch, resolved);
    auto wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
    if (metrics.is_open()) {
      metrics << state.step << "," << m.loss_total << "," << m.loss_nm << ","
              << m.loss_mt << "," << m.acc_nm << "," << m.acc_mt << ","
              << wall_ms << "\n";
      metrics.flush();
    }
    if (cfg.checkpoint_interval > 0 &&
        state.step % cfg.checkpoint_interval == 0 && state.step < cfg.steps)
      write_checkpoint(state);
  }
  return write_checkpoint(state);
}

}  // namespace gicl
