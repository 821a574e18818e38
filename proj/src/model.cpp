#include "gicl/model.hpp"

#include <cmath>
#include <stdexcept>

namespace gicl {

namespace {

Tensor uniform_init(Shape shape, std::size_t fan_in, RngState& rng) {
  double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from_values(std::move(shape), std::move(v),
                             /*requires_grad=*/true);
}

void add_mlp2(ModelParams& p, const std::string& prefix, std::size_t in_dim,
              std::size_t hidden, std::size_t out_dim, RngState& rng) {
  p.add(prefix + ".w1", uniform_init({hidden, in_dim}, in_dim, rng));
  p.add(prefix + ".b1", Tensor::zeros({hidden}, true));
  p.add(prefix + ".w2", uniform_init({out_dim, hidden}, hidden, rng));
  p.add(prefix + ".b2", Tensor::zeros({out_dim}, true));
}

}  // namespace

std::size_t reweight_input_dim(const ModelConfig& cfg) {
  return cfg.reweight_input == ReweightInput::ConcatNodes
             ? 2 * cfg.feature_dim
             : cfg.feature_dim;
}

ModelParams init_model_params(const ModelConfig& cfg, RngState& rng) {
  if (cfg.embedding_dim == 0 || cfg.feature_dim == 0)
    throw std::invalid_argument("model: dimensions must be positive");
  if (cfg.gnn_depth == 0)
    throw std::invalid_argument("model: gnn_depth must be >= 1");

  ModelParams p;
  const std::size_t h = cfg.embedding_dim;
  const std::size_t d = cfg.feature_dim;

  add_mlp2(p, "mlp_phi", reweight_input_dim(cfg), h, 1, rng);
  add_mlp2(p, "mlp_theta", h, h, 1, rng);

  for (std::size_t i = 0; i < cfg.gnn_depth; ++i) {
    std::size_t in = i == 0 ? d : h;
    std::string prefix = "gnn_d." + std::to_string(i);
    p.add(prefix + ".w_self", uniform_init({h, in}, in, rng));
    p.add(prefix + ".w_neigh", uniform_init({h, in}, in, rng));
  }

  for (std::size_t i = 0; i < cfg.task_gnn_rounds; ++i) {
    std::string prefix = "gnn_t." + std::to_string(i);
    p.add(prefix + ".w_self", uniform_init({h, h}, h, rng));
    p.add(prefix + ".w_q", uniform_init({h, h}, h, rng));
    p.add(prefix + ".w_k", uniform_init({h, h}, h, rng));
    p.add(prefix + ".w_v", uniform_init({h, h}, h, rng));
  }

  p.add("edge_type.emb", uniform_init({3, h}, h, rng));

  if (cfg.reweight_input == ReweightInput::RelationEmbedding) {
    if (cfg.num_relations == 0)
      throw std::invalid_argument(
          "model: relation-embedding mode needs num_relations >= 1");
    p.add("relations.emb", uniform_init({cfg.num_relations, d}, d, rng));
  }
  return p;
}

Tensor mlp2_forward(Tape* tape, const ModelParams& params,
                    const std::string& prefix, const Tensor& x) {
  Tensor h1 = relu(tape, add(tape, matmul(tape, params.get(prefix + ".w1"), x),
                             params.get(prefix + ".b1")));
  return add(tape, matmul(tape, params.get(prefix + ".w2"), h1),
             params.get(prefix + ".b2"));
}

ModelConfig model_config_from_checkpoint(const Checkpoint& ck) {
  ModelConfig cfg;
  cfg.embedding_dim = ck.header.embedding_dim;
  cfg.num_relations = ck.header.num_relations;
  cfg.reweight_input = ck.params.contains("relations.emb")
                           ? ReweightInput::RelationEmbedding
                           : ReweightInput::ConcatNodes;
  cfg.feature_dim = ck.params.get("gnn_d.0.w_self").shape()[1];
  cfg.gnn_depth = 0;
  while (ck.params.contains("gnn_d." + std::to_string(cfg.gnn_depth) +
                            ".w_self"))
    cfg.gnn_depth += 1;
  cfg.task_gnn_rounds = 0;
  while (ck.params.contains("gnn_t." + std::to_string(cfg.task_gnn_rounds) +
                            ".w_self"))
    cfg.task_gnn_rounds += 1;
  return cfg;
}

}  // namespace gicl
