#include "gicl/generator.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace gicl {

std::size_t DataGraph::index_of(std::int64_t id) const {
  auto it = std::lower_bound(node_ids.begin(), node_ids.end(), id);
  if (it == node_ids.end() || *it != id)
    throw std::invalid_argument("data graph: node " + std::to_string(id) +
                                " not sampled");
  return static_cast<std::size_t>(it - node_ids.begin());
}

DataGraph sample_data_graph(const Graph& g, const InputPoint& input,
                            const GeneratorConfig& cfg, RngState& rng) {
  if (cfg.hops < 1)
    throw std::invalid_argument("data graph: hops must be >= 1");
  std::vector<std::int64_t> centers{input.head};
  if (input.kind == TaskKind::EdgeTask && input.tail != input.head)
    centers.push_back(input.tail);
  if (cfg.max_subgraph_nodes < centers.size() + 1)
    throw std::invalid_argument("data graph: max_subgraph_nodes too small");

  std::set<std::int64_t> sampled(centers.begin(), centers.end());
  for (std::int64_t c : centers) (void)g.node_index(c);  // validate

  for (std::int64_t start : centers) {
    std::int64_t current = start;
    for (int step = 0; step < cfg.hops; ++step) {
      if (sampled.size() >= cfg.max_subgraph_nodes) break;
      auto nbrs = g.neighbor_nodes(current);
      if (nbrs.empty()) break;
      for (std::int64_t nb : nbrs) {
        if (sampled.size() >= cfg.max_subgraph_nodes) break;
        sampled.insert(nb);
      }
      if (sampled.size() >= cfg.max_subgraph_nodes) break;
      current = nbrs[rng.randint(nbrs.size())];
    }
  }

  DataGraph dg;
  dg.input = input;
  dg.node_ids.assign(sampled.begin(), sampled.end());
  dg.node_feats.reserve(dg.node_ids.size());
  for (std::int64_t id : dg.node_ids)
    dg.node_feats.push_back(Tensor::from_values(
        {g.feature_dim()}, g.node(id).feat, /*requires_grad=*/false));

  const bool drop_center_pair = input.kind == TaskKind::EdgeTask;
  std::vector<std::size_t> induced;
  for (std::int64_t id : dg.node_ids)
    for (const auto& ie : g.incident(id)) {
      if (!ie.outgoing || !sampled.count(ie.other)) continue;
      const auto& edge = g.edges()[ie.edge_index];
      if (drop_center_pair &&
          ((edge.src == input.head && edge.dst == input.tail) ||
           (edge.src == input.tail && edge.dst == input.head)))
        continue;
      induced.push_back(ie.edge_index);
    }
  std::sort(induced.begin(), induced.end());
  for (std::size_t e : induced) {
    const auto& edge = g.edges()[e];
    dg.edges.push_back(
        {dg.index_of(edge.src), dg.index_of(edge.dst), edge.rel});
  }
  return dg;
}

void reconstruct_edge_weights(Tape* tape, DataGraph& dg,
                              const ModelParams& params,
                              const ModelConfig& cfg) {
  dg.weights.clear();
  dg.weights.reserve(dg.edges.size());
  for (const auto& e : dg.edges) {
    Tensor in;
    if (cfg.reweight_input == ReweightInput::ConcatNodes) {
      in = concat(tape, dg.node_feats[e.u], dg.node_feats[e.v]);
    } else {
      if (e.rel < 0 || static_cast<std::size_t>(e.rel) >= cfg.num_relations)
        throw std::invalid_argument(
            "reconstruct: no relation embedding for relation " +
            std::to_string(e.rel));
      in = row(tape, params.get("relations.emb"),
               static_cast<std::size_t>(e.rel));
    }
    Tensor z = mlp2_forward(tape, params, "mlp_phi", in);
    dg.weights.push_back(sigmoid(tape, z));
  }
}

void set_unit_edge_weights(DataGraph& dg) {
  dg.weights.clear();
  dg.weights.reserve(dg.edges.size());
  for (std::size_t i = 0; i < dg.edges.size(); ++i)
    dg.weights.push_back(Tensor::scalar(1.0));
}

Tensor encode_data_graph(Tape* tape, DataGraph& dg, const ModelParams& params,
                         const ModelConfig& cfg) {
  if (dg.weights.size() != dg.edges.size())
    throw std::invalid_argument(
        "encode: edge weights not set on data graph");

  const std::size_t n = dg.node_ids.size();
  std::vector<std::vector<std::size_t>> incident(n);
  for (std::size_t e = 0; e < dg.edges.size(); ++e) {
    incident[dg.edges[e].u].push_back(e);
    if (dg.edges[e].v != dg.edges[e].u) incident[dg.edges[e].v].push_back(e);
  }

  std::vector<Tensor> h = dg.node_feats;
  for (std::size_t layer = 0; layer < cfg.gnn_depth; ++layer) {
    const std::string prefix = "gnn_d." + std::to_string(layer);
    const Tensor& w_self = params.get(prefix + ".w_self");
    const Tensor& w_neigh = params.get(prefix + ".w_neigh");
    std::vector<Tensor> next(n);
    for (std::size_t u = 0; u < n; ++u) {
      Tensor self_term = matmul(tape, w_self, h[u]);
      if (incident[u].empty()) {
        next[u] = relu(tape, self_term);
        continue;
      }
      std::vector<Tensor> weighted, ws;
      double mass = 0.0;
      for (std::size_t e : incident[u]) {
        std::size_t other = dg.edges[e].u == u ? dg.edges[e].v : dg.edges[e].u;
        weighted.push_back(scalar_scale(tape, h[other], dg.weights[e]));
        ws.push_back(dg.weights[e]);
        mass += dg.weights[e].item();
      }
      if (mass < 1e-12) {  // all-zero weight limit: self term only
        next[u] = relu(tape, self_term);
        continue;
      }
      Tensor agg = div_scalar(tape, add_n(tape, weighted), add_n(tape, ws));
      next[u] = relu(tape, add(tape, self_term, matmul(tape, w_neigh, agg)));
    }
    h = std::move(next);
  }

  Tensor out;
  if (dg.input.kind == TaskKind::NodeTask || dg.input.tail == dg.input.head) {
    out = h[dg.index_of(dg.input.head)];
  } else {
    out = mean(tape,
               {h[dg.index_of(dg.input.head)], h[dg.index_of(dg.input.tail)]});
  }
  dg.embedding = out;
  return out;
}

Tensor embed_input_point(Tape* tape, const Graph& g, const InputPoint& input,
                         const ModelParams& params, const ModelConfig& model,
                         const GeneratorConfig& cfg, RngState& rng,
                         bool unit_weights) {
  DataGraph dg = sample_data_graph(g, input, cfg, rng);
  if (unit_weights)
    set_unit_edge_weights(dg);
  else
    reconstruct_edge_weights(tape, dg, params, model);
  return encode_data_graph(tape, dg, params, model);
}

}  // namespace gicl
