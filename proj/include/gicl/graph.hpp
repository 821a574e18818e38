#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gicl/rng.hpp"

namespace gicl {

struct GraphNode {
  std::int64_t id = 0;
  std::vector<double> feat;
  std::optional<int> label;
};

struct GraphEdge {
  std::int64_t src = 0;
  int rel = 0;
  std::int64_t dst = 0;
  std::optional<int> label;
};

enum class TaskKind { NodeTask, EdgeTask };

// One classification input: a single node, or a (head, tail) pair whose
// connecting edge's label is the target. point_id is the node id for node
// tasks and the edge index for edge tasks.
struct InputPoint {
  TaskKind kind = TaskKind::NodeTask;
  std::int64_t head = 0;
  std::int64_t tail = 0;
  int label = -1;
  std::int64_t point_id = 0;
};

bool operator==(const InputPoint& a, const InputPoint& b);

struct Neighbor {
  std::int64_t node = 0;
  int rel = 0;
  bool outgoing = false;
};

// Immutable multi-relational graph. Edges keep their (src, rel, dst)
// orientation; adjacency indexes both directions for undirected traversal.
class Graph {
 public:
  Graph(std::size_t feature_dim, std::vector<GraphNode> nodes,
        std::vector<GraphEdge> edges, std::map<int, std::string> relations);

  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<GraphNode>& nodes() const { return nodes_; }
  const std::vector<GraphEdge>& edges() const { return edges_; }
  const std::map<int, std::string>& relations() const { return relations_; }

  bool has_node(std::int64_t id) const;
  const GraphNode& node(std::int64_t id) const;
  std::size_t node_index(std::int64_t id) const;

  struct IncidentEdge {
    std::size_t edge_index = 0;
    std::int64_t other = 0;
    bool outgoing = false;
  };
  // Incident edges of v (both directions), sorted by (other, edge_index).
  const std::vector<IncidentEdge>& incident(std::int64_t v) const;

  // Distinct (neighbor, rel, direction) triples, sorted.
  std::vector<Neighbor> neighbors(std::int64_t v) const;
  // Distinct adjacent node ids, sorted.
  std::vector<std::int64_t> neighbor_nodes(std::int64_t v) const;
  std::size_t degree(std::int64_t v) const;  // distinct adjacent nodes

  bool has_edge_labels() const { return has_edge_labels_; }
  bool has_node_labels() const { return has_node_labels_; }
  TaskKind task_kind() const {
    return has_edge_labels_ ? TaskKind::EdgeTask : TaskKind::NodeTask;
  }

  // Labeled classification points of the given kind, ordered by point_id.
  std::vector<InputPoint> labeled_points(TaskKind kind) const;
  std::vector<int> class_ids(TaskKind kind) const;  // sorted, unique

  // Rebuilds the adjacency index from the edge list and compares.
  bool adjacency_consistent() const;

 private:
  std::size_t feature_dim_ = 0;
  std::vector<GraphNode> nodes_;
  std::vector<GraphEdge> edges_;
  std::map<int, std::string> relations_;
  std::map<std::int64_t, std::size_t> index_;
  std::vector<std::vector<IncidentEdge>> incident_;
  bool has_edge_labels_ = false;
  bool has_node_labels_ = false;

  std::vector<std::vector<IncidentEdge>> build_incident() const;
};

// JSON file format (format_version 1), documented in the README:
//   {format_version, feature_dim, nodes:[{id, feat:[...], label?}],
//    edges:[{src, rel, dst, label?}], relations:{"<id>": "<name>"}}
Graph load_graph(const std::filesystem::path& path);
void save_graph(const Graph& g, const std::filesystem::path& path);

struct SbmParams {
  int blocks = 2;
  int nodes_per_block = 50;
  double p_in = 0.1;
  double p_out = 0.01;
  std::size_t feature_dim = 16;
  double noise_sigma = 0.2;
};
// Stochastic block model: node labels are block ids, features are the block
// mean plus Gaussian noise. Requires 0 <= p_out < p_in <= 1.
Graph generate_sbm(const SbmParams& params, std::uint64_t seed);

struct KgParams {
  int num_entities = 200;
  int num_relations = 10;
  int triples_per_relation = 50;
  int num_clusters = 0;  // 0 = ceil(sqrt(num_relations)) + 1
  std::size_t feature_dim = 16;
  double noise_sigma = 0.2;
};
// Synthetic knowledge graph: entities belong to clusters (round-robin),
// every relation links one ordered (source, target) cluster pair, edge
// labels are relation ids. Features are cluster means plus Gaussian noise.
Graph generate_synthetic_kg(const KgParams& params, std::uint64_t seed);

struct EpisodeSpec {
  int ways = 5;                  // m
  int shots = 3;                 // k
  int candidates_per_class = 10; // N
  int queries = 4;               // n
  int hops = 1;                  // l
  std::vector<int> class_ids;    // drawn for this episode
};
void validate_episode_spec(const EpisodeSpec& spec);

// Stable node/edge-level split: candidates come from Train points, queries
// from Test points, so the two can never overlap.
enum class PartitionSide { Train, Test };
PartitionSide point_partition(const InputPoint& p);

// Class-level split for the transfer protocol: pretraining episodes draw
// classes from the first ceil(fraction * C) class ids (sorted), downstream
// episodes from the held-out remainder.
struct ClassSplit {
  std::vector<int> pretrain_classes;
  std::vector<int> downstream_classes;
};
ClassSplit make_class_split(const Graph& g, TaskKind kind,
                            double pretrain_fraction);

struct EpisodePool {
  std::vector<std::vector<InputPoint>> candidates;  // [way][N]
  std::vector<InputPoint> queries;                  // n points
};

// Draws spec.ways episode classes from class_pool (filled into
// spec.class_ids), N candidates per class from the Train partition and
// spec.queries query points from the Test partition of the episode classes.
EpisodePool split_episode_pool(const Graph& g, EpisodeSpec& spec,
                               const std::vector<int>& class_pool,
                               RngState& rng);

}  // namespace gicl
