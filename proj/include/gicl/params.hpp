#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gicl/tensor.hpp"

namespace gicl {

// Named parameter tensors. Names are unique and shapes are frozen once
// added; iteration follows creation order so every traversal (init,
// optimizer, checkpoint) is deterministic.
class ModelParams {
 public:
  Tensor& add(const std::string& name, Tensor t);
  const Tensor& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  const std::vector<std::string>& names() const { return order_; }
  std::size_t count() const { return order_.size(); }

  std::uint64_t content_hash() const;  // FNV-1a over names, shapes, values

 private:
  std::vector<std::string> order_;
  std::map<std::string, Tensor, std::less<>> params_;
};

using NamedGrads = std::map<std::string, std::vector<double>>;

// Gradients for every parameter, zero-filled where the tape never touched
// the tensor (e.g. ablated branches).
NamedGrads collect_grads(const ModelParams& params, const GradientMap& gm);

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-3;
};

struct AdamWState {
  std::uint64_t step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

// Decoupled weight decay update. Grads must cover exactly the parameter set.
void adamw_step(ModelParams& params, const NamedGrads& grads, AdamWState& state,
                const AdamWConfig& cfg);

struct CheckpointHeader {
  std::uint32_t format_version = 1;
  std::uint32_t embedding_dim = 0;
  std::uint32_t num_relations = 0;
  std::uint64_t rng_seed = 0;
};

// Optional training continuation state (optimizer moments + RNG stream).
struct TrainExtras {
  std::uint64_t step = 0;
  AdamWState opt;
  std::string rng_state;
};

struct Checkpoint {
  CheckpointHeader header;
  ModelParams params;
  std::optional<TrainExtras> extras;
};

// Binary container, little-endian, layout documented in the README.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gicl
