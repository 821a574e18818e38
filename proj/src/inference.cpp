#include "gicl/inference.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "gicl/task_graph.hpp"

namespace gicl {

using nlohmann::json;

std::vector<QueryRecord> run_episode(const ModelParams& params,
                                     const ModelConfig& model,
                                     const Graph& g, const EpisodePool& pool,
                                     const EpisodeSpec& spec,
                                     const InferenceConfig& cfg,
                                     PromptCache& cache, RngState& rng,
                                     std::size_t episode_index) {
  const bool use_importance = cfg.selector == SelectorMode::Adaptive &&
                              !cfg.ablate.no_selection_layer;

  // stage 1: data graphs, sampled once per episode and shared by all queries
  std::vector<InputPoint> cand_points;
  std::vector<int> cand_class;
  for (int c = 0; c < spec.ways; ++c)
    for (const auto& p : pool.candidates[c]) {
      cand_points.push_back(p);
      cand_class.push_back(c);
    }
  std::vector<Tensor> cand_emb, query_emb;
  for (const auto& p : cand_points)
    cand_emb.push_back(embed_input_point(nullptr, g, p, params, model,
                                         cfg.generator, rng,
                                         cfg.ablate.no_reweight));
  for (const auto& q : pool.queries)
    query_emb.push_back(embed_input_point(nullptr, g, q, params, model,
                                          cfg.generator, rng,
                                          cfg.ablate.no_reweight));

  // stage 2: importance and selection
  std::vector<Tensor> cand_in = cand_emb, query_in = query_emb;
  std::vector<double> cand_imp(cand_emb.size(), 1.0);
  std::vector<double> query_imp(query_emb.size(), 1.0);
  if (use_importance) {
    for (std::size_t i = 0; i < cand_emb.size(); ++i) {
      auto r = compute_importance(nullptr, cand_emb[i], params, model);
      cand_imp[i] = r.importance.item();
      cand_in[i] = r.weighted;
    }
    for (std::size_t i = 0; i < query_emb.size(); ++i) {
      auto r = compute_importance(nullptr, query_emb[i], params, model);
      query_imp[i] = r.importance.item();
      query_in[i] = r.weighted;
    }
  }

  SelectionResult selection;
  if (cfg.selector == SelectorMode::Random) {
    selection = random_select(cand_class, spec.ways, spec.shots, rng);
  } else {
    std::vector<std::vector<double>> scores(
        cand_emb.size(), std::vector<double>(query_emb.size(), 0.0));
    std::vector<std::vector<double>> sim;
    if (!cfg.ablate.no_knn) sim = knn_similarity(cand_in, query_in, cfg.metric);
    for (std::size_t p = 0; p < cand_emb.size(); ++p)
      for (std::size_t q = 0; q < query_emb.size(); ++q) {
        double s = cfg.ablate.no_knn ? 0.0 : sim[p][q];
        double imp = use_importance ? cand_imp[p] * query_imp[q] : 0.0;
        scores[p][q] = s + imp;
      }
    selection = vote_select(scores, cand_class, spec.ways, spec.shots);
  }

  std::vector<PromptNode> selected;
  for (std::size_t idx : selection.chosen)
    selected.push_back({cand_in[idx], cand_class[idx],
                        cand_points[idx].point_id, false});

  // stage 3: cache augmentation
  std::size_t cache_size_used = cache.size();
  std::vector<PromptNode> prompt_nodes =
      cfg.cache.capacity > 0
          ? augment_prompt_set(selected, cache, spec.class_ids)
          : selected;

  // task-graph prediction
  TaskGraph tg =
      build_task_graph(prompt_nodes, query_in, spec.ways, nullptr);
  PropagatedEmbeddings h = propagate(nullptr, tg, params, model);
  auto preds = predict(h, model.softmax_temperature);

  std::vector<QueryRecord> records;
  std::vector<std::int64_t> prompt_ids;
  for (const auto& node : selected) prompt_ids.push_back(node.point_id);
  for (std::size_t q = 0; q < pool.queries.size(); ++q) {
    QueryRecord r;
    r.episode = episode_index;
    r.query_id = pool.queries[q].point_id;
    r.y_true = pool.queries[q].label;
    r.y_pred = spec.class_ids[preds[q].predicted];
    r.confidence = preds[q].confidence;
    r.prompt_ids = prompt_ids;
    r.cache_size = cache_size_used;
    records.push_back(std::move(r));
  }

  // cache maintenance: touch with this episode's queries, then admit the
  // most confident prediction per predicted class
  if (cfg.cache.capacity > 0) {
    std::vector<std::vector<double>> qvecs;
    for (const auto& t : query_in)
      qvecs.emplace_back(t.values().begin(), t.values().end());
    cache.touch(qvecs, cfg.cache.touch_k);

    std::vector<PromptCache::AdmitCandidate> admits;
    for (std::size_t q = 0; q < pool.queries.size(); ++q)
      admits.push_back({qvecs[q], records[q].y_pred, records[q].confidence});
    cache.admit_batch(std::move(admits), cfg.cache.admit_confidence_floor);
  }
  return records;
}

InferenceRun run_inference(const ModelParams& params, const ModelConfig& model,
                           const Graph& g, const InferenceConfig& cfg) {
  InferenceConfig rc = cfg;
  rc.generator.hops = rc.episode.hops;
  ClassSplit split =
      make_class_split(g, g.task_kind(), rc.pretrain_class_fraction);
  if (split.downstream_classes.empty())
    throw std::invalid_argument("inference: downstream class pool is empty");

  InferenceRun run;
  PromptCache cache(rc.cache.capacity);
  for (std::size_t e = 0; e < rc.episodes; ++e) {
    RngState rng(splitmix64(rc.seed) ^ splitmix64(e + 1));
    EpisodeSpec spec = rc.episode;
    EpisodePool pool =
        split_episode_pool(g, spec, split.downstream_classes, rng);
    auto records =
        run_episode(params, model, g, pool, spec, rc, cache, rng, e);
    run.records.insert(run.records.end(), records.begin(), records.end());
  }
  return run;
}

MetricsReport evaluate(const InferenceRun& run) {
  if (run.records.empty())
    throw std::invalid_argument("evaluate: run has no records");
  MetricsReport report;
  report.n = run.records.size();
  std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // correct, total
  double conf = 0.0;
  std::size_t correct = 0;
  for (const auto& r : run.records) {
    bool ok = r.y_pred == r.y_true;
    correct += ok;
    conf += r.confidence;
    auto& [c, t] = per_class[r.y_true];
    c += ok;
    t += 1;
  }
  report.accuracy = static_cast<double>(correct) / report.n;
  report.mean_confidence = conf / report.n;
  for (const auto& [cls, ct] : per_class)
    report.per_class[cls] = static_cast<double>(ct.first) / ct.second;
  return report;
}

PairedReport compare_paired(const std::vector<MetricsReport>& a,
                            const std::vector<MetricsReport>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("paired report: runs must align and be non-empty");
  PairedReport report;
  for (std::size_t i = 0; i < a.size(); ++i) {
    report.deltas.push_back(a[i].accuracy - b[i].accuracy);
    report.mean_delta += report.deltas.back();
  }
  report.mean_delta /= static_cast<double>(a.size());
  return report;
}

void write_records_jsonl(const std::filesystem::path& path,
                         const InferenceRun& run) {
  std::ofstream os(path, std::ios::trunc);
  if (!os)
    throw std::runtime_error("records: cannot open for write: " +
                             path.string());
  for (const auto& r : run.records) {
    json j{{"episode", r.episode},     {"query_id", r.query_id},
           {"y_true", r.y_true},       {"y_pred", r.y_pred},
           {"confidence", r.confidence}, {"prompt_ids", r.prompt_ids},
           {"cache_size", r.cache_size}};
    os << j.dump() << "\n";
  }
}

InferenceRun read_records_jsonl(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("records: cannot open: " + path.string());
  InferenceRun run;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("records: " + path.string() + ":" +
                               std::to_string(lineno) + ": " + e.what());
    }
    QueryRecord r;
    r.episode = j.at("episode").get<std::size_t>();
    r.query_id = j.at("query_id").get<std::int64_t>();
    r.y_true = j.at("y_true").get<int>();
    r.y_pred = j.at("y_pred").get<int>();
    r.confidence = j.at("confidence").get<double>();
    r.prompt_ids = j.at("prompt_ids").get<std::vector<std::int64_t>>();
    r.cache_size = j.at("cache_size").get<std::size_t>();
    run.records.push_back(std::move(r));
  }
  return run;
}

void write_metrics_json(const std::filesystem::path& path,
                        const MetricsReport& report) {
  json per_class = json::object();
  for (const auto& [cls, acc] : report.per_class)
    per_class[std::to_string(cls)] = acc;
  json j{{"accuracy", report.accuracy},
         {"per_class", per_class},
         {"mean_confidence", report.mean_confidence},
         {"n", report.n}};
  std::ofstream os(path, std::ios::trunc);
  if (!os)
    throw std::runtime_error("metrics: cannot open for write: " +
                             path.string());
  os << j.dump(1) << "\n";
}

}  // namespace gicl
