#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "gicl/trainer.hpp"

using namespace gicl;
namespace fs = std::filesystem;

namespace {

Graph two_cliques() {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  for (int i = 0; i < 10; ++i)
    nodes.push_back({i, {i < 5 ? 1.0 : -1.0, 0.5}, i < 5 ? 0 : 1});
  for (int block = 0; block < 2; ++block)
    for (int i = 0; i < 5; ++i)
      for (int j = i + 1; j < 5; ++j)
        edges.push_back({block * 5 + i, 0, block * 5 + j, {}});
  return Graph(2, std::move(nodes), std::move(edges), {{0, "r"}});
}

int clique_of(std::int64_t id) { return id < 5 ? 0 : 1; }

TrainerConfig small_config() {
  TrainerConfig cfg;
  cfg.episode.ways = 2;
  cfg.episode.shots = 2;
  cfg.episode.candidates_per_class = 2;
  cfg.episode.queries = 2;
  cfg.episode.hops = 1;
  cfg.batch_nm = 1;
  cfg.batch_mt = 1;
  cfg.model.embedding_dim = 8;
  cfg.generator.max_subgraph_nodes = 10;
  return cfg;
}

}  // namespace

TEST_CASE("nm episode: disjoint cliques partition prompts and queries") {
  Graph g = two_cliques();
  EpisodeSpec spec;
  spec.ways = 2;
  spec.shots = 2;
  spec.candidates_per_class = 2;
  spec.queries = 2;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RngState rng(seed);
    Episode ep = sample_nm_episode(g, spec, {}, rng);
    REQUIRE(ep.nm_anchors.size() == 2);
    REQUIRE(ep.prompts.size() == 4);
    REQUIRE(ep.queries.size() == 2);

    std::set<std::int64_t> seen;
    for (const auto& [p, cls] : ep.prompts) {
      CHECK(clique_of(p.head) == clique_of(ep.nm_anchors[cls]));
      CHECK(seen.insert(p.head).second);  // disjoint
      CHECK(p.head != ep.nm_anchors[cls]);
    }
    for (const auto& [q, cls] : ep.queries) {
      CHECK(clique_of(q.head) == clique_of(ep.nm_anchors[cls]));
      CHECK(seen.insert(q.head).second);
      CHECK(cls >= 0);
      CHECK(cls < 2);
    }
  }
}

TEST_CASE("nm episode: low-degree anchors are never selected") {
  // pendant node 10 attached to clique A with degree 1
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  for (int i = 0; i < 10; ++i)
    nodes.push_back({i, {1.0, 0.0}, std::nullopt});
  nodes.push_back({10, {0.0, 0.0}, std::nullopt});
  for (int block = 0; block < 2; ++block)
    for (int i = 0; i < 5; ++i)
      for (int j = i + 1; j < 5; ++j)
        edges.push_back({block * 5 + i, 0, block * 5 + j, {}});
  edges.push_back({0, 0, 10, {}});
  Graph g(2, nodes, edges, {{0, "r"}});

  EpisodeSpec spec;
  spec.ways = 2;
  spec.shots = 2;
  spec.candidates_per_class = 2;
  spec.queries = 1;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    RngState rng(seed);
    Episode ep = sample_nm_episode(g, spec, {}, rng);
    for (auto anchor : ep.nm_anchors) CHECK(anchor != 10);
  }
}

TEST_CASE("nm episode: queries stay in their anchor's block on a sparse sbm") {
  SbmParams sp;
  sp.blocks = 4;
  sp.nodes_per_block = 100;
  sp.p_in = 0.2;
  sp.p_out = 0.001;
  sp.feature_dim = 4;
  Graph g = generate_sbm(sp, 3);

  EpisodeSpec spec;
  spec.ways = 2;
  spec.shots = 2;
  spec.candidates_per_class = 2;
  spec.queries = 4;
  std::size_t matched = 0, total = 0;
  for (int draw = 0; draw < 500; ++draw) {
    RngState rng(9000 + draw);
    Episode ep = sample_nm_episode(g, spec, {}, rng);
    for (const auto& [q, cls] : ep.queries) {
      matched += *g.node(q.head).label == *g.node(ep.nm_anchors[cls]).label;
      ++total;
    }
  }
  CHECK(static_cast<double>(matched) / total > 0.9);
}

TEST_CASE("mt episode: full class pool and determinism") {
  SbmParams sp;
  sp.blocks = 3;
  sp.nodes_per_block = 60;
  sp.p_in = 0.2;
  sp.p_out = 0.01;
  Graph g = generate_sbm(sp, 8);

  EpisodeSpec spec;
  spec.ways = 3;
  spec.shots = 2;
  spec.queries = 3;
  RngState rng(4);
  Episode ep = sample_mt_episode(g, spec, {0, 1, 2}, rng);
  std::set<int> classes(ep.spec.class_ids.begin(), ep.spec.class_ids.end());
  CHECK(classes == std::set<int>{0, 1, 2});
  CHECK(ep.prompts.size() == 6);  // training pool is exactly k per class
  for (const auto& [q, cls] : ep.queries)
    CHECK(q.label == ep.spec.class_ids[cls]);

  RngState r1(6), r2(6);
  Episode a = sample_mt_episode(g, spec, {0, 1, 2}, r1);
  Episode b = sample_mt_episode(g, spec, {0, 1, 2}, r2);
  REQUIRE(a.prompts.size() == b.prompts.size());
  for (std::size_t i = 0; i < a.prompts.size(); ++i)
    CHECK(a.prompts[i].first == b.prompts[i].first);
}

TEST_CASE("mt episode: classes come only from the given pool") {
  SbmParams sp;
  sp.blocks = 6;
  sp.nodes_per_block = 40;
  sp.p_in = 0.2;
  sp.p_out = 0.01;
  Graph g = generate_sbm(sp, 2);
  auto split = make_class_split(g, TaskKind::NodeTask, 0.5);
  EpisodeSpec spec;
  spec.ways = 2;
  spec.shots = 2;
  spec.queries = 2;
  for (int draw = 0; draw < 50; ++draw) {
    RngState rng(100 + draw);
    Episode ep = sample_mt_episode(g, spec, split.pretrain_classes, rng);
    for (int cls : ep.spec.class_ids) {
      CHECK(std::find(split.pretrain_classes.begin(),
                      split.pretrain_classes.end(),
                      cls) != split.pretrain_classes.end());
    }
  }
}

TEST_CASE("train step: pairing precondition and loss decomposition") {
  Graph g = two_cliques();
  TrainerConfig cfg = small_config();
  cfg.model = resolve_model_config(cfg.model, g);

  TrainState state;
  state.rng = RngState(0);
  state.params = init_model_params(cfg.model, state.rng);

  RngState erng(1);
  Episode nm = sample_nm_episode(g, cfg.episode, {}, erng);
  Episode mt = sample_mt_episode(g, cfg.episode, {0, 1}, erng);

  CHECK_THROWS_AS(train_step(state, g, {nm}, cfg), std::invalid_argument);
  CHECK_THROWS_AS(train_step(state, g, {mt}, cfg), std::invalid_argument);

  StepMetrics m = train_step(state, g, {nm, mt}, cfg);
  CHECK(m.loss_total == m.loss_nm + m.loss_mt);
  CHECK(std::isfinite(m.loss_total));
  CHECK(state.step == 1);
}

TEST_CASE("train step: lr = 0 keeps params and losses frozen") {
  Graph g = two_cliques();
  TrainerConfig cfg = small_config();
  cfg.model = resolve_model_config(cfg.model, g);
  cfg.optimizer.lr = 0.0;

  TrainState state;
  state.rng = RngState(7);
  state.params = init_model_params(cfg.model, state.rng);
  auto hash_before = state.params.content_hash();

  RngState erng(2);
  Episode nm = sample_nm_episode(g, cfg.episode, {}, erng);
  Episode mt = sample_mt_episode(g, cfg.episode, {0, 1}, erng);

  std::string rng_snapshot = state.rng.serialize();
  StepMetrics m1 = train_step(state, g, {nm, mt}, cfg);
  CHECK(state.params.content_hash() == hash_before);

  state.rng = RngState::deserialize(rng_snapshot);
  StepMetrics m2 = train_step(state, g, {nm, mt}, cfg);
  CHECK(m1.loss_total == m2.loss_total);
  CHECK(state.params.content_hash() == hash_before);
}

TEST_CASE("train step: degenerate 1-way episode is rejected upstream") {
  Graph g = two_cliques();
  EpisodeSpec spec;
  spec.ways = 1;
  spec.shots = 1;
  spec.candidates_per_class = 1;
  spec.queries = 1;
  RngState rng(0);
  CHECK_THROWS_AS(sample_nm_episode(g, spec, {}, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_mt_episode(g, spec, {0}, rng), std::invalid_argument);
}

TEST_CASE("pretrain: steps=0 writes the initialization checkpoint") {
  Graph g = two_cliques();
  fs::path dir = fs::temp_directory_path() / "gicl_trainer_test";
  fs::create_directories(dir);
  TrainerConfig cfg = small_config();
  cfg.steps = 0;
  cfg.seed = 5;
  cfg.checkpoint_path = dir / "init.ckpt";
  cfg.metrics_path = dir / "init.csv";
  Checkpoint ck = pretrain(g, cfg);
  REQUIRE(ck.extras.has_value());
  CHECK(ck.extras->step == 0);

  RngState rng(5);
  ModelConfig mc = resolve_model_config(cfg.model, g);
  ModelParams expect = init_model_params(mc, rng);
  CHECK(ck.params.content_hash() == expect.content_hash());

  std::ifstream csv(cfg.metrics_path);
  std::string header;
  std::getline(csv, header);
  CHECK(header == "step,loss_total,loss_nm,loss_mt,acc_nm,acc_mt,wall_ms");
  std::string extra;
  CHECK_FALSE(std::getline(csv, extra));
  fs::remove_all(dir);
}

TEST_CASE("pretrain: metrics rows equal steps and checkpoints resume exactly") {
  Graph g = two_cliques();
  fs::path dir = fs::temp_directory_path() / "gicl_trainer_resume";
  fs::create_directories(dir);
  TrainerConfig cfg = small_config();
  cfg.seed = 11;
  cfg.steps = 6;
  cfg.checkpoint_interval = 100;

  cfg.checkpoint_path = dir / "full.ckpt";
  cfg.metrics_path = dir / "full.csv";
  Checkpoint full = pretrain(g, cfg);
  CHECK(full.extras->step == 6);

  std::ifstream csv(cfg.metrics_path);
  std::string line;
  int rows = -1;  // discount header
  while (std::getline(csv, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 6);

  // stop at 3, resume to 6
  TrainerConfig half = cfg;
  half.steps = 3;
  half.checkpoint_path = dir / "half.ckpt";
  half.metrics_path = dir / "half.csv";
  Checkpoint ck3 = pretrain(g, half);
  CHECK(ck3.extras->step == 3);

  TrainerConfig rest = cfg;
  rest.steps = 6;
  rest.checkpoint_path = dir / "resumed.ckpt";
  rest.metrics_path = dir / "resumed.csv";
  Checkpoint resumed = pretrain(g, rest, ck3);
  CHECK(resumed.extras->step == 6);
  CHECK(resumed.params.content_hash() == full.params.content_hash());

  // seed reproducibility of the full run
  TrainerConfig again = cfg;
  again.checkpoint_path = dir / "again.ckpt";
  again.metrics_path.clear();
  Checkpoint repeat = pretrain(g, again);
  CHECK(repeat.params.content_hash() == full.params.content_hash());

  TrainerConfig other = cfg;
  other.seed = 12;
  other.checkpoint_path = dir / "other.ckpt";
  other.metrics_path.clear();
  Checkpoint different = pretrain(g, other);
  CHECK(different.params.content_hash() != full.params.content_hash());
  fs::remove_all(dir);
}

TEST_CASE("pretrain: edge-task graphs train through relation embeddings") {
  KgParams kp;
  kp.num_entities = 60;
  kp.num_relations = 6;
  kp.triples_per_relation = 40;
  kp.num_clusters = 4;
  Graph g = generate_synthetic_kg(kp, 21);

  TrainerConfig cfg;
  cfg.episode.ways = 2;
  cfg.episode.shots = 2;
  cfg.episode.queries = 2;
  cfg.batch_nm = 1;
  cfg.batch_mt = 1;
  cfg.steps = 3;
  cfg.model.embedding_dim = 8;
  cfg.seed = 2;
  Checkpoint ck = pretrain(g, cfg);
  CHECK(ck.params.contains("relations.emb"));
  CHECK(ck.extras->step == 3);

  // relation table must have moved from its initialization
  RngState rng(2);
  ModelConfig mc = resolve_model_config(cfg.model, g);
  ModelParams fresh = init_model_params(mc, rng);
  auto before = fresh.get("relations.emb").values();
  auto after = ck.params.get("relations.emb").values();
  bool moved = false;
  for (std::size_t i = 0; i < before.size(); ++i)
    moved |= before[i] != after[i];
  CHECK(moved);
}

TEST_CASE("pretrain: 300 steps on a 2-block sbm converges") {
  SbmParams sp;
  sp.blocks = 2;
  sp.nodes_per_block = 40;
  sp.p_in = 0.2;
  sp.p_out = 0.01;
  sp.feature_dim = 8;
  Graph g = generate_sbm(sp, 42);

  fs::path dir = fs::temp_directory_path() / "gicl_trainer_conv";
  fs::create_directories(dir);
  TrainerConfig cfg;
  cfg.episode.ways = 2;
  cfg.episode.shots = 3;
  cfg.episode.candidates_per_class = 3;
  cfg.episode.queries = 4;
  cfg.batch_nm = 2;
  cfg.batch_mt = 2;
  cfg.steps = 300;
  cfg.model.embedding_dim = 16;
  cfg.seed = 0;
  cfg.metrics_path = dir / "metrics.csv";
  cfg.checkpoint_interval = 0;
  pretrain(g, cfg);

  std::ifstream csv(cfg.metrics_path);
  std::string line;
  std::getline(csv, line);  // header
  std::vector<double> loss, acc_mt;
  while (std::getline(csv, line)) {
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    loss.push_back(std::stod(fields[1]));
    acc_mt.push_back(std::stod(fields[5]));
  }
  REQUIRE(loss.size() == 300);

  auto window_mean = [&](const std::vector<double>& v, std::size_t lo,
                         std::size_t hi) {
    double s = 0;
    for (std::size_t i = lo; i < hi; ++i) s += v[i];
    return s / (hi - lo);
  };
  double early = window_mean(loss, 0, 20);
  double late = window_mean(loss, 280, 300);
  CHECK(late < early);
  CHECK(window_mean(acc_mt, 280, 300) > 0.8);
  fs::remove_all(dir);
}
