#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "gicl/generator.hpp"
#include "gicl/graph.hpp"
#include "gicl/model.hpp"
#include "test_util.hpp"

using namespace gicl;

namespace {

Graph path_graph(int n) {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  for (int i = 0; i < n; ++i) nodes.push_back({i, {double(i), 1.0}, {}});
  for (int i = 0; i + 1 < n; ++i) edges.push_back({i, 0, i + 1, {}});
  return Graph(2, std::move(nodes), std::move(edges), {{0, "r"}});
}

Graph star_graph(int leaves) {
  std::vector<GraphNode> nodes{{0, {0.0, 0.0}, {}}};
  std::vector<GraphEdge> edges;
  for (int i = 1; i <= leaves; ++i) {
    nodes.push_back({i, {double(i), 0.5}, {}});
    edges.push_back({0, 0, i, {}});
  }
  return Graph(2, std::move(nodes), std::move(edges), {{0, "r"}});
}

InputPoint node_point(std::int64_t id) {
  return {TaskKind::NodeTask, id, id, 0, id};
}

// standalone two-layer MLP + sigmoid, plain loops
double mlp_sigmoid_oracle(const ModelParams& p, const std::string& prefix,
                          const std::vector<double>& x) {
  auto w1 = p.get(prefix + ".w1"), b1 = p.get(prefix + ".b1");
  auto w2 = p.get(prefix + ".w2"), b2 = p.get(prefix + ".b2");
  std::size_t hidden = w1.shape()[0], in = w1.shape()[1];
  std::vector<double> h(hidden);
  for (std::size_t i = 0; i < hidden; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < in; ++j) acc += w1.values()[i * in + j] * x[j];
    acc += b1.values()[i];
    h[i] = acc > 0 ? acc : 0.0;
  }
  double z = b2.values()[0];
  for (std::size_t j = 0; j < hidden; ++j) z += w2.values()[j] * h[j];
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// dense-matrix oracle: per layer H' = relu(H Wself^T + D^-1 (W有A) H Wneigh^T)
std::vector<std::vector<double>> dense_encode_oracle(const DataGraph& dg,
                                                     const ModelParams& p,
                                                     std::size_t depth) {
  std::size_t n = dg.node_ids.size();
  std::vector<std::vector<double>> W(n, std::vector<double>(n, 0.0));
  for (std::size_t e = 0; e < dg.edges.size(); ++e) {
    double w = dg.weights[e].item();
    auto u = dg.edges[e].u, v = dg.edges[e].v;
    W[u][v] += w;
    if (u != v) W[v][u] += w;
  }
  std::vector<std::vector<double>> H(n);
  for (std::size_t i = 0; i < n; ++i)
    H[i].assign(dg.node_feats[i].values().begin(),
                dg.node_feats[i].values().end());

  for (std::size_t layer = 0; layer < depth; ++layer) {
    auto ws = p.get("gnn_d." + std::to_string(layer) + ".w_self");
    auto wn = p.get("gnn_d." + std::to_string(layer) + ".w_neigh");
    std::size_t out_dim = ws.shape()[0], in_dim = ws.shape()[1];
    std::vector<std::vector<double>> next(n, std::vector<double>(out_dim));
    for (std::size_t u = 0; u < n; ++u) {
      double mass = 0.0;
      for (std::size_t v = 0; v < n; ++v) mass += W[u][v];
      std::vector<double> agg(in_dim, 0.0);
      if (mass >= 1e-12)
        for (std::size_t v = 0; v < n; ++v)
          for (std::size_t j = 0; j < in_dim; ++j)
            agg[j] += W[u][v] * H[v][j] / mass;
      for (std::size_t i = 0; i < out_dim; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < in_dim; ++j)
          acc += ws.values()[i * in_dim + j] * H[u][j];
        if (mass >= 1e-12)
          for (std::size_t j = 0; j < in_dim; ++j)
            acc += wn.values()[i * in_dim + j] * agg[j];
        next[u][i] = acc > 0 ? acc : 0.0;
      }
    }
    H = std::move(next);
  }
  return H;
}

}  // namespace

TEST_CASE("walk: isolated center yields just the center") {
  std::vector<GraphNode> nodes{{5, {1.0, 2.0}, {}}, {6, {0.0, 0.0}, {}}};
  Graph g(2, nodes, {}, {{0, "r"}});
  GeneratorConfig cfg;
  cfg.hops = 3;
  RngState rng(0);
  DataGraph dg = sample_data_graph(g, node_point(5), cfg, rng);
  CHECK(dg.node_ids == std::vector<std::int64_t>{5});
  CHECK(dg.edges.empty());
}

TEST_CASE("walk: star center collects every leaf in one hop") {
  Graph g = star_graph(6);
  GeneratorConfig cfg;
  cfg.hops = 1;
  cfg.max_subgraph_nodes = 10;
  RngState rng(0);
  DataGraph dg = sample_data_graph(g, node_point(0), cfg, rng);
  CHECK(dg.node_ids.size() == 7);
  CHECK(dg.edges.size() == 6);
}

TEST_CASE("walk: node cap truncates the path walk") {
  Graph g = path_graph(5);
  GeneratorConfig cfg;
  cfg.hops = 3;
  cfg.max_subgraph_nodes = 3;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RngState rng(seed);
    DataGraph dg = sample_data_graph(g, node_point(0), cfg, rng);
    // from node 0 the only move is to 1, then neighbors {0,2}; cap stops at 3
    CHECK(dg.node_ids == std::vector<std::int64_t>{0, 1, 2});
  }
}

TEST_CASE("walk: cap reached while adding neighbors keeps lowest ids") {
  Graph g = star_graph(10);
  GeneratorConfig cfg;
  cfg.hops = 1;
  cfg.max_subgraph_nodes = 5;
  RngState rng(1);
  DataGraph dg = sample_data_graph(g, node_point(0), cfg, rng);
  CHECK(dg.node_ids == std::vector<std::int64_t>{0, 1, 2, 3, 4});
}

TEST_CASE("walk: edge-task input excludes the labeled pair edge") {
  std::vector<GraphNode> nodes;
  for (int i = 0; i < 4; ++i) nodes.push_back({i, {double(i)}, {}});
  std::vector<GraphEdge> edges{{0, 0, 1, 0}, {1, 0, 2, 1}, {2, 0, 3, 0},
                               {0, 1, 3, 1}};
  Graph g(1, nodes, edges, {{0, "a"}, {1, "b"}});
  InputPoint pair{TaskKind::EdgeTask, 0, 1, 0, 0};
  GeneratorConfig cfg;
  cfg.hops = 2;
  cfg.max_subgraph_nodes = 10;
  RngState rng(2);
  DataGraph dg = sample_data_graph(g, pair, cfg, rng);
  for (const auto& e : dg.edges) {
    std::int64_t u = dg.node_ids[e.u], v = dg.node_ids[e.v];
    bool is_pair = (u == 0 && v == 1) || (u == 1 && v == 0);
    CHECK_FALSE(is_pair);
  }
  // both centers present
  CHECK(std::count(dg.node_ids.begin(), dg.node_ids.end(), 0) == 1);
  CHECK(std::count(dg.node_ids.begin(), dg.node_ids.end(), 1) == 1);
}

TEST_CASE("walk: seed determinism") {
  SbmParams sp;
  sp.blocks = 3;
  sp.nodes_per_block = 30;
  sp.p_in = 0.3;
  sp.p_out = 0.05;
  Graph g = generate_sbm(sp, 21);
  GeneratorConfig cfg;
  cfg.hops = 2;
  RngState r1(4), r2(4), r3(5);
  auto a = sample_data_graph(g, node_point(10), cfg, r1);
  auto b = sample_data_graph(g, node_point(10), cfg, r2);
  auto c = sample_data_graph(g, node_point(10), cfg, r3);
  CHECK(a.node_ids == b.node_ids);
  CHECK((a.node_ids != c.node_ids || a.edges.size() == c.edges.size()));
}

TEST_CASE("reconstruct: zero parameters give w = 0.5 everywhere") {
  Graph g = star_graph(4);
  ModelConfig cfg;
  cfg.feature_dim = 2;
  cfg.embedding_dim = 8;
  ModelParams params;
  params.add("mlp_phi.w1", Tensor::zeros({8, 4}, true));
  params.add("mlp_phi.b1", Tensor::zeros({8}, true));
  params.add("mlp_phi.w2", Tensor::zeros({1, 8}, true));
  params.add("mlp_phi.b2", Tensor::zeros({1}, true));

  GeneratorConfig gc;
  RngState rng(0);
  DataGraph dg = sample_data_graph(g, node_point(0), gc, rng);
  reconstruct_edge_weights(nullptr, dg, params, cfg);
  REQUIRE(dg.weights.size() == dg.edges.size());
  for (const auto& w : dg.weights) CHECK(w.item() == 0.5);
}

TEST_CASE("reconstruct: edgeless data graph stays empty") {
  std::vector<GraphNode> nodes{{0, {1.0, 1.0}, {}}};
  Graph g(2, nodes, {}, {{0, "r"}});
  ModelConfig cfg;
  cfg.feature_dim = 2;
  cfg.embedding_dim = 4;
  RngState rng(1);
  ModelParams params = init_model_params(cfg, rng);
  GeneratorConfig gc;
  RngState wrng(0);
  DataGraph dg = sample_data_graph(g, node_point(0), gc, wrng);
  reconstruct_edge_weights(nullptr, dg, params, cfg);
  CHECK(dg.weights.empty());
}

TEST_CASE("reconstruct: matches the standalone mlp+sigmoid oracle") {
  SbmParams sp;
  sp.blocks = 2;
  sp.nodes_per_block = 20;
  sp.p_in = 0.4;
  sp.p_out = 0.1;
  sp.feature_dim = 3;
  Graph g = generate_sbm(sp, 8);
  ModelConfig cfg;
  cfg.feature_dim = 3;
  cfg.embedding_dim = 6;
  RngState rng(12);
  ModelParams params = init_model_params(cfg, rng);

  GeneratorConfig gc;
  gc.hops = 2;
  RngState wrng(3);
  DataGraph dg = sample_data_graph(g, node_point(1), gc, wrng);
  REQUIRE(dg.edges.size() >= 5);
  reconstruct_edge_weights(nullptr, dg, params, cfg);

  for (std::size_t e = 0; e < dg.edges.size(); ++e) {
    std::vector<double> in;
    auto fu = dg.node_feats[dg.edges[e].u].values();
    auto fv = dg.node_feats[dg.edges[e].v].values();
    in.insert(in.end(), fu.begin(), fu.end());
    in.insert(in.end(), fv.begin(), fv.end());
    CHECK(dg.weights[e].item() == mlp_sigmoid_oracle(params, "mlp_phi", in));
    CHECK(dg.weights[e].item() > 0.0);
    CHECK(dg.weights[e].item() < 1.0);
  }
}

TEST_CASE("reconstruct: relation mode uses the embedding table") {
  KgParams kp;
  kp.num_entities = 30;
  kp.num_relations = 4;
  kp.triples_per_relation = 20;
  kp.num_clusters = 3;
  Graph g = generate_synthetic_kg(kp, 6);
  ModelConfig cfg;
  cfg.feature_dim = 16;
  cfg.embedding_dim = 8;
  cfg.reweight_input = ReweightInput::RelationEmbedding;
  cfg.num_relations = 4;
  RngState rng(2);
  ModelParams params = init_model_params(cfg, rng);

  GeneratorConfig gc;
  RngState wrng(9);
  InputPoint pt = g.labeled_points(TaskKind::EdgeTask)[0];
  DataGraph dg = sample_data_graph(g, pt, gc, wrng);
  reconstruct_edge_weights(nullptr, dg, params, cfg);
  auto table = params.get("relations.emb");
  for (std::size_t e = 0; e < dg.edges.size(); ++e) {
    auto r = table.values();
    std::vector<double> in(r.begin() + dg.edges[e].rel * 16,
                           r.begin() + (dg.edges[e].rel + 1) * 16);
    CHECK(dg.weights[e].item() == mlp_sigmoid_oracle(params, "mlp_phi", in));
  }

  // unknown relation id is rejected
  cfg.num_relations = 1;
  DataGraph dg2 = sample_data_graph(g, pt, gc, wrng);
  bool has_offrange = false;
  for (const auto& e : dg2.edges) has_offrange |= e.rel >= 1;
  if (has_offrange)
    CHECK_THROWS_WITH_AS(reconstruct_edge_weights(nullptr, dg2, params, cfg),
                         doctest::Contains("relation"), std::invalid_argument);
}

TEST_CASE("encode: isolated center is relu(w_self * feat)") {
  std::vector<GraphNode> nodes{{0, {1.0, -2.0}, {}}};
  Graph g(2, nodes, {}, {{0, "r"}});
  ModelConfig cfg;
  cfg.feature_dim = 2;
  cfg.embedding_dim = 3;
  cfg.gnn_depth = 1;
  RngState rng(5);
  ModelParams params = init_model_params(cfg, rng);
  GeneratorConfig gc;
  RngState wrng(0);
  DataGraph dg = sample_data_graph(g, node_point(0), gc, wrng);
  reconstruct_edge_weights(nullptr, dg, params, cfg);
  Tensor emb = encode_data_graph(nullptr, dg, params, cfg);

  auto ws = params.get("gnn_d.0.w_self").values();
  for (std::size_t i = 0; i < 3; ++i) {
    double acc = ws[i * 2 + 0] * 1.0 + ws[i * 2 + 1] * -2.0;
    CHECK(emb.values()[i] == (acc > 0 ? acc : 0.0));
  }
}

TEST_CASE("encode: requires weights") {
  Graph g = star_graph(2);
  ModelConfig cfg;
  cfg.feature_dim = 2;
  cfg.embedding_dim = 3;
  RngState rng(5);
  ModelParams params = init_model_params(cfg, rng);
  GeneratorConfig gc;
  RngState wrng(0);
  DataGraph dg = sample_data_graph(g, node_point(0), gc, wrng);
  CHECK_THROWS_AS(encode_data_graph(nullptr, dg, params, cfg),
                  std::invalid_argument);
}

TEST_CASE("encode: matches the dense-matrix oracle") {
  SbmParams sp;
  sp.blocks = 2;
  sp.nodes_per_block = 10;
  sp.p_in = 0.6;
  sp.p_out = 0.2;
  sp.feature_dim = 4;
  Graph g = generate_sbm(sp, 14);
  ModelConfig cfg;
  cfg.feature_dim = 4;
  cfg.embedding_dim = 5;
  cfg.gnn_depth = 2;
  RngState rng(6);
  ModelParams params = init_model_params(cfg, rng);
  GeneratorConfig gc;
  gc.hops = 2;
  gc.max_subgraph_nodes = 8;

  for (std::uint64_t s = 0; s < 10; ++s) {
    RngState wrng(100 + s);
    DataGraph dg =
        sample_data_graph(g, node_point(static_cast<int>(s)), gc, wrng);
    reconstruct_edge_weights(nullptr, dg, params, cfg);
    Tensor emb = encode_data_graph(nullptr, dg, params, cfg);
    auto H = dense_encode_oracle(dg, params, cfg.gnn_depth);
    auto center = dg.index_of(dg.input.head);
    for (std::size_t i = 0; i < 5; ++i)
      CHECK(emb.values()[i] == doctest::Approx(H[center][i]).epsilon(1e-12));
  }
}

TEST_CASE("encode: edge-task readout is the mean of head and tail") {
  KgParams kp;
  kp.num_entities = 30;
  kp.num_relations = 3;
  kp.triples_per_relation = 25;
  kp.num_clusters = 3;
  Graph g = generate_synthetic_kg(kp, 1);
  ModelConfig cfg;
  cfg.feature_dim = 16;
  cfg.embedding_dim = 4;
  cfg.reweight_input = ReweightInput::RelationEmbedding;
  cfg.num_relations = 3;
  RngState rng(3);
  ModelParams params = init_model_params(cfg, rng);
  GeneratorConfig gc;
  RngState wrng(7);
  InputPoint pt = g.labeled_points(TaskKind::EdgeTask)[5];
  DataGraph dg = sample_data_graph(g, pt, gc, wrng);
  reconstruct_edge_weights(nullptr, dg, params, cfg);
  Tensor emb = encode_data_graph(nullptr, dg, params, cfg);
  auto H = dense_encode_oracle(dg, params, cfg.gnn_depth);
  auto hi = dg.index_of(pt.head), ti = dg.index_of(pt.tail);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(emb.values()[i] ==
          doctest::Approx((H[hi][i] + H[ti][i]) / 2.0).epsilon(1e-12));
}

TEST_CASE("encode: permutation invariance under node relabeling") {
  ModelConfig cfg;
  cfg.feature_dim = 2;
  cfg.embedding_dim = 4;
  RngState rng(9);
  ModelParams params = init_model_params(cfg, rng);

  auto build = [&](std::vector<std::int64_t> ids) {
    // triangle over ids[0..2] plus pendant ids[3]; same features per role
    DataGraph dg;
    dg.input = {TaskKind::NodeTask, ids[0], ids[0], 0, ids[0]};
    std::vector<std::pair<std::int64_t, std::vector<double>>> labeled{
        {ids[0], {1.0, 0.0}},
        {ids[1], {0.0, 1.0}},
        {ids[2], {0.5, 0.5}},
        {ids[3], {-1.0, 2.0}}};
    std::sort(labeled.begin(), labeled.end());
    std::vector<std::size_t> role(4);
    for (std::size_t i = 0; i < 4; ++i) {
      dg.node_ids.push_back(labeled[i].first);
      dg.node_feats.push_back(
          Tensor::from_values({2}, labeled[i].second, false));
    }
    auto local = [&](std::int64_t id) { return dg.index_of(id); };
    dg.edges = {{local(ids[0]), local(ids[1]), 0},
                {local(ids[1]), local(ids[2]), 0},
                {local(ids[2]), local(ids[0]), 0},
                {local(ids[2]), local(ids[3]), 0}};
    dg.weights = {Tensor::scalar(0.9), Tensor::scalar(0.3),
                  Tensor::scalar(0.6), Tensor::scalar(0.2)};
    return dg;
  };

  DataGraph a = build({0, 1, 2, 3});
  DataGraph b = build({300, 100, 200, 50});
  Tensor ea = encode_data_graph(nullptr, a, params, cfg);
  Tensor eb = encode_data_graph(nullptr, b, params, cfg);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(std::abs(ea.values()[i] - eb.values()[i]) <= 1e-10);
}

TEST_CASE("encode: zero-weight limit reduces to the neighbor-free encoder") {
  Graph g = star_graph(5);
  ModelConfig cfg;
  cfg.feature_dim = 2;
  cfg.embedding_dim = 4;
  RngState rng(15);
  ModelParams params = init_model_params(cfg, rng);
  GeneratorConfig gc;
  RngState wrng(1);
  DataGraph dg = sample_data_graph(g, node_point(0), gc, wrng);
  dg.weights.clear();
  for (std::size_t e = 0; e < dg.edges.size(); ++e)
    dg.weights.push_back(Tensor::scalar(0.0));
  Tensor limit = encode_data_graph(nullptr, dg, params, cfg);

  DataGraph lone;
  lone.input = dg.input;
  lone.node_ids = {0};
  lone.node_feats = {Tensor::from_values({2}, g.node(0).feat, false)};
  Tensor solo = encode_data_graph(nullptr, lone, params, cfg);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(limit.values()[i] == solo.values()[i]);
}

TEST_CASE("generator gradients pass finite differences") {
  SbmParams sp;
  sp.blocks = 2;
  sp.nodes_per_block = 8;
  sp.p_in = 0.5;
  sp.p_out = 0.2;
  sp.feature_dim = 3;
  Graph g = generate_sbm(sp, 4);
  ModelConfig cfg;
  cfg.feature_dim = 3;
  cfg.embedding_dim = 4;
  RngState rng(7);
  ModelParams params = init_model_params(cfg, rng);
  GeneratorConfig gc;
  gc.max_subgraph_nodes = 6;

  std::vector<double> probe(4);
  for (auto& x : probe) x = rng.normal();
  Tensor probe_t = Tensor::from_values({4}, probe, false);

  auto forward = [&](Tape* tape) {
    RngState wrng(42);
    DataGraph dg = sample_data_graph(g, node_point(0), gc, wrng);
    reconstruct_edge_weights(tape, dg, params, cfg);
    Tensor emb = encode_data_graph(tape, dg, params, cfg);
    return sigmoid(tape, dot(tape, emb, probe_t));
  };
  Tape tape;
  auto gm = tape.backward(forward(&tape));
  auto report = test::finite_difference_check(
      [&]() { return forward(nullptr).item(); }, test::all_params(params), gm);
  CHECK_MESSAGE(report.ok, "max_err ", report.max_err);
}

TEST_CASE("encode: twin nodes with symmetric weights embed identically") {
  ModelConfig cfg;
  cfg.feature_dim = 2;
  cfg.embedding_dim = 4;
  RngState rng(21);
  ModelParams params = init_model_params(cfg, rng);

  // hub 0 with twin leaves 1 and 2: same features, same edge weight; the
  // encoding read out at either twin must coincide
  auto build = [&](std::int64_t center) {
    DataGraph dg;
    dg.input = {TaskKind::NodeTask, center, center, 0, center};
    dg.node_ids = {0, 1, 2};
    dg.node_feats = {Tensor::from_values({2}, {1.0, -0.5}, false),
                     Tensor::from_values({2}, {0.3, 0.8}, false),
                     Tensor::from_values({2}, {0.3, 0.8}, false)};
    dg.edges = {{0, 1, 0}, {0, 2, 0}};
    dg.weights = {Tensor::scalar(0.7), Tensor::scalar(0.7)};
    return dg;
  };
  DataGraph at1 = build(1), at2 = build(2);
  Tensor e1 = encode_data_graph(nullptr, at1, params, cfg);
  Tensor e2 = encode_data_graph(nullptr, at2, params, cfg);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(e1.values()[i] == e2.values()[i]);
}
