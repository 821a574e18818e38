#include "gicl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace gicl {

using nlohmann::json;

bool operator==(const InputPoint& a, const InputPoint& b) {
  return a.kind == b.kind && a.head == b.head && a.tail == b.tail &&
         a.label == b.label && a.point_id == b.point_id;
}

Graph::Graph(std::size_t feature_dim, std::vector<GraphNode> nodes,
             std::vector<GraphEdge> edges, std::map<int, std::string> relations)
    : feature_dim_(feature_dim),
      nodes_(std::move(nodes)),
      edges_(std::move(edges)),
      relations_(std::move(relations)) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (index_.count(n.id))
      throw std::invalid_argument("graph: duplicate node id " +
                                  std::to_string(n.id));
    if (n.feat.size() != feature_dim_)
      throw std::invalid_argument(
          "graph: node " + std::to_string(n.id) + " has feature dim " +
          std::to_string(n.feat.size()) + ", expected " +
          std::to_string(feature_dim_));
    if (n.label) has_node_labels_ = true;
    index_[n.id] = i;
  }
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const auto& edge = edges_[e];
    for (std::int64_t endpoint : {edge.src, edge.dst}) {
      if (!index_.count(endpoint))
        throw std::invalid_argument("graph: edge " + std::to_string(e) +
                                    " references missing node " +
                                    std::to_string(endpoint));
    }
    if (!relations_.count(edge.rel))
      throw std::invalid_argument("graph: edge " + std::to_string(e) +
                                  " references unknown relation " +
                                  std::to_string(edge.rel));
    if (edge.label) has_edge_labels_ = true;
  }
  incident_ = build_incident();
}

std::vector<std::vector<Graph::IncidentEdge>> Graph::build_incident() const {
  std::vector<std::vector<IncidentEdge>> incident(nodes_.size());
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const auto& edge = edges_[e];
    incident[index_.at(edge.src)].push_back({e, edge.dst, true});
    if (edge.dst != edge.src)
      incident[index_.at(edge.dst)].push_back({e, edge.src, false});
  }
  for (auto& list : incident)
    std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
      return std::tie(a.other, a.edge_index) < std::tie(b.other, b.edge_index);
    });
  return incident;
}

bool Graph::has_node(std::int64_t id) const { return index_.count(id) != 0; }

const GraphNode& Graph::node(std::int64_t id) const {
  return nodes_[node_index(id)];
}

std::size_t Graph::node_index(std::int64_t id) const {
  auto it = index_.find(id);
  if (it == index_.end())
    throw std::invalid_argument("graph: unknown node id " + std::to_string(id));
  return it->second;
}

const std::vector<Graph::IncidentEdge>& Graph::incident(std::int64_t v) const {
  return incident_[node_index(v)];
}

std::vector<Neighbor> Graph::neighbors(std::int64_t v) const {
  std::set<std::tuple<std::int64_t, int, bool>> seen;
  for (const auto& ie : incident(v))
    seen.insert({ie.other, edges_[ie.edge_index].rel, ie.outgoing});
  std::vector<Neighbor> out;
  out.reserve(seen.size());
  for (const auto& [node, rel, outgoing] : seen)
    out.push_back({node, rel, outgoing});
  return out;
}

std::vector<std::int64_t> Graph::neighbor_nodes(std::int64_t v) const {
  std::vector<std::int64_t> out;
  for (const auto& ie : incident(v))
    if (out.empty() || out.back() != ie.other) out.push_back(ie.other);
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t Graph::degree(std::int64_t v) const {
  return neighbor_nodes(v).size();
}

std::vector<InputPoint> Graph::labeled_points(TaskKind kind) const {
  std::vector<InputPoint> out;
  if (kind == TaskKind::NodeTask) {
    for (const auto& n : nodes_)
      if (n.label)
        out.push_back({TaskKind::NodeTask, n.id, n.id, *n.label, n.id});
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      return a.point_id < b.point_id;
    });
  } else {
    for (std::size_t e = 0; e < edges_.size(); ++e)
      if (edges_[e].label)
        out.push_back({TaskKind::EdgeTask, edges_[e].src, edges_[e].dst,
                       *edges_[e].label, static_cast<std::int64_t>(e)});
  }
  return out;
}

std::vector<int> Graph::class_ids(TaskKind kind) const {
  std::set<int> classes;
  for (const auto& p : labeled_points(kind)) classes.insert(p.label);
  return {classes.begin(), classes.end()};
}

bool Graph::adjacency_consistent() const {
  auto rebuilt = build_incident();
  if (rebuilt.size() != incident_.size()) return false;
  for (std::size_t i = 0; i < rebuilt.size(); ++i) {
    if (rebuilt[i].size() != incident_[i].size()) return false;
    for (std::size_t j = 0; j < rebuilt[i].size(); ++j) {
      const auto& a = rebuilt[i][j];
      const auto& b = incident_[i][j];
      if (a.edge_index != b.edge_index || a.other != b.other ||
          a.outgoing != b.outgoing)
        return false;
    }
  }
  return true;
}

namespace {

std::size_t line_of_offset(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

}  // namespace

Graph load_graph(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is)
    throw std::runtime_error("graph: cannot open " + path.string());
  std::stringstream buf;
  buf << is.rdbuf();
  std::string text = buf.str();

  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("graph: " + path.string() + ": malformed JSON at line " +
                             std::to_string(line_of_offset(text, e.byte)) +
                             ": " + e.what());
  }

  try {
    if (j.at("format_version").get<int>() != 1)
      throw std::runtime_error("unsupported format_version");
    std::size_t d = j.at("feature_dim").get<std::size_t>();

    std::vector<GraphNode> nodes;
    for (const auto& jn : j.at("nodes")) {
      GraphNode n;
      n.id = jn.at("id").get<std::int64_t>();
      n.feat = jn.at("feat").get<std::vector<double>>();
      if (jn.contains("label")) n.label = jn.at("label").get<int>();
      nodes.push_back(std::move(n));
    }

    std::vector<GraphEdge> edges;
    for (const auto& je : j.at("edges")) {
      GraphEdge e;
      e.src = je.at("src").get<std::int64_t>();
      e.rel = je.at("rel").get<int>();
      e.dst = je.at("dst").get<std::int64_t>();
      if (je.contains("label")) e.label = je.at("label").get<int>();
      edges.push_back(e);
    }

    std::map<int, std::string> relations;
    for (const auto& [key, name] : j.at("relations").items())
      relations[std::stoi(key)] = name.get<std::string>();

    return Graph(d, std::move(nodes), std::move(edges), std::move(relations));
  } catch (const json::exception& e) {
    throw std::runtime_error("graph: " + path.string() +
                             ": invalid record: " + e.what());
  }
}

void save_graph(const Graph& g, const std::filesystem::path& path) {
  json j;
  j["format_version"] = 1;
  j["feature_dim"] = g.feature_dim();
  j["nodes"] = json::array();
  for (const auto& n : g.nodes()) {
    json jn{{"id", n.id}, {"feat", n.feat}};
    if (n.label) jn["label"] = *n.label;
    j["nodes"].push_back(std::move(jn));
  }
  j["edges"] = json::array();
  for (const auto& e : g.edges()) {
    json je{{"src", e.src}, {"rel", e.rel}, {"dst", e.dst}};
    if (e.label) je["label"] = *e.label;
    j["edges"].push_back(std::move(je));
  }
  j["relations"] = json::object();
  for (const auto& [id, name] : g.relations())
    j["relations"][std::to_string(id)] = name;

  std::ofstream os(path, std::ios::trunc);
  if (!os)
    throw std::runtime_error("graph: cannot open for write: " + path.string());
  os << j.dump(1) << "\n";
  if (!os)
    throw std::runtime_error("graph: write failed: " + path.string());
}

Graph generate_sbm(const SbmParams& params, std::uint64_t seed) {
  if (params.blocks < 1 || params.nodes_per_block < 1)
    throw std::invalid_argument("sbm: blocks and nodes_per_block must be >= 1");
  if (!(params.p_out >= 0.0 && params.p_out < params.p_in && params.p_in <= 1.0))
    throw std::invalid_argument(
        "sbm: probabilities must satisfy 0 <= p_out < p_in <= 1");
  if (params.feature_dim == 0)
    throw std::invalid_argument("sbm: feature_dim must be >= 1");

  RngState rng(seed);
  const std::size_t d = params.feature_dim;
  std::vector<std::vector<double>> means(params.blocks,
                                         std::vector<double>(d, 0.0));
  for (auto& m : means)
    for (double& x : m) x = rng.normal();

  std::vector<GraphNode> nodes;
  const std::int64_t n_total =
      static_cast<std::int64_t>(params.blocks) * params.nodes_per_block;
  nodes.reserve(n_total);
  for (std::int64_t v = 0; v < n_total; ++v) {
    int block = static_cast<int>(v / params.nodes_per_block);
    GraphNode node;
    node.id = v;
    node.label = block;
    node.feat.resize(d);
    for (std::size_t i = 0; i < d; ++i)
      node.feat[i] = means[block][i] + params.noise_sigma * rng.normal();
    nodes.push_back(std::move(node));
  }

  std::vector<GraphEdge> edges;
  for (std::int64_t u = 0; u < n_total; ++u) {
    int bu = static_cast<int>(u / params.nodes_per_block);
    for (std::int64_t v = u + 1; v < n_total; ++v) {
      int bv = static_cast<int>(v / params.nodes_per_block);
      double p = bu == bv ? params.p_in : params.p_out;
      if (rng.bernoulli(p)) edges.push_back({u, 0, v, std::nullopt});
    }
  }

  return Graph(d, std::move(nodes), std::move(edges), {{0, "link"}});
}

Graph generate_synthetic_kg(const KgParams& params, std::uint64_t seed) {
  if (params.num_entities < 1 || params.num_relations < 1 ||
      params.triples_per_relation < 1)
    throw std::invalid_argument("kg: counts must be >= 1");
  if (params.feature_dim == 0)
    throw std::invalid_argument("kg: feature_dim must be >= 1");

  int clusters = params.num_clusters;
  if (clusters == 0)
    clusters = static_cast<int>(
                   std::ceil(std::sqrt(static_cast<double>(params.num_relations)))) +
               1;
  if (clusters < 1 || clusters > params.num_entities)
    throw std::invalid_argument("kg: num_clusters must be in [1, num_entities]");

  RngState rng(seed);
  const std::size_t d = params.feature_dim;

  std::vector<std::vector<double>> means(clusters, std::vector<double>(d, 0.0));
  for (auto& m : means)
    for (double& x : m) x = rng.normal();

  // entity e lives in cluster e % clusters
  std::vector<GraphNode> nodes;
  nodes.reserve(params.num_entities);
  for (std::int64_t e = 0; e < params.num_entities; ++e) {
    GraphNode node;
    node.id = e;
    node.feat.resize(d);
    int c = static_cast<int>(e % clusters);
    for (std::size_t i = 0; i < d; ++i)
      node.feat[i] = means[c][i] + params.noise_sigma * rng.normal();
    nodes.push_back(std::move(node));
  }

  // ordered cluster pairs, shuffled; relations take pairs round-robin so
  // signatures stay unique whenever clusters^2 >= num_relations
  std::vector<std::pair<int, int>> pairs;
  for (int s = 0; s < clusters; ++s)
    for (int t = 0; t < clusters; ++t) pairs.push_back({s, t});
  rng.shuffle(pairs);

  std::vector<std::vector<std::int64_t>> members(clusters);
  for (std::int64_t e = 0; e < params.num_entities; ++e)
    members[e % clusters].push_back(e);

  std::vector<GraphEdge> edges;
  std::map<int, std::string> relations;
  for (int r = 0; r < params.num_relations; ++r) {
    relations[r] = "rel_" + std::to_string(r);
    auto [cs, ct] = pairs[r % pairs.size()];
    for (int j = 0; j < params.triples_per_relation; ++j) {
      std::int64_t head = members[cs][rng.randint(members[cs].size())];
      std::int64_t tail = members[ct][rng.randint(members[ct].size())];
      for (int tries = 0; tail == head && tries < 100; ++tries)
        tail = members[ct][rng.randint(members[ct].size())];
      edges.push_back({head, r, tail, r});
    }
  }

  return Graph(d, std::move(nodes), std::move(edges), std::move(relations));
}

void validate_episode_spec(const EpisodeSpec& spec) {
  if (spec.ways < 2)
    throw std::invalid_argument("episode: ways must be >= 2");
  if (spec.shots < 1 || spec.shots > spec.candidates_per_class)
    throw std::invalid_argument(
        "episode: shots must be in [1, candidates_per_class]");
  if (spec.queries < 1)
    throw std::invalid_argument("episode: queries must be >= 1");
  if (spec.hops < 1)
    throw std::invalid_argument("episode: hops must be >= 1");
}

PartitionSide point_partition(const InputPoint& p) {
  // Edge points split by tail entity: every edge ending at a given entity
  // lands on one side, so test queries involve tail entities that never
  // appear among the labeled candidates (and recur across the test stream).
  std::uint64_t key = p.kind == TaskKind::EdgeTask
                          ? static_cast<std::uint64_t>(p.tail) * 2 + 1
                          : static_cast<std::uint64_t>(p.point_id) * 2;
  return (splitmix64(key) & 1) == 0 ? PartitionSide::Train
                                    : PartitionSide::Test;
}

ClassSplit make_class_split(const Graph& g, TaskKind kind,
                            double pretrain_fraction) {
  if (pretrain_fraction < 0.0 || pretrain_fraction > 1.0)
    throw std::invalid_argument("class split: fraction must be in [0, 1]");
  auto classes = g.class_ids(kind);
  std::size_t n_pre = static_cast<std::size_t>(
      std::ceil(pretrain_fraction * static_cast<double>(classes.size())));
  ClassSplit split;
  split.pretrain_classes.assign(classes.begin(), classes.begin() + n_pre);
  split.downstream_classes.assign(classes.begin() + n_pre, classes.end());
  return split;
}

EpisodePool split_episode_pool(const Graph& g, EpisodeSpec& spec,
                               const std::vector<int>& class_pool,
                               RngState& rng) {
  validate_episode_spec(spec);
  if (class_pool.size() < static_cast<std::size_t>(spec.ways))
    throw std::invalid_argument("episode: class pool has " +
                                std::to_string(class_pool.size()) +
                                " classes, need " + std::to_string(spec.ways));

  auto picks = rng.sample_indices(class_pool.size(), spec.ways);
  spec.class_ids.clear();
  for (auto i : picks) spec.class_ids.push_back(class_pool[i]);

  TaskKind kind = g.task_kind();
  auto all_points = g.labeled_points(kind);
  std::map<int, std::vector<InputPoint>> train_by_class, test_by_class;
  for (const auto& p : all_points) {
    if (point_partition(p) == PartitionSide::Train)
      train_by_class[p.label].push_back(p);
    else
      test_by_class[p.label].push_back(p);
  }

  EpisodePool pool;
  std::vector<InputPoint> query_universe;
  for (int cls : spec.class_ids) {
    const auto& train = train_by_class[cls];
    if (train.size() < static_cast<std::size_t>(spec.candidates_per_class))
      throw std::invalid_argument(
          "episode: class " + std::to_string(cls) + " has " +
          std::to_string(train.size()) + " train points, need " +
          std::to_string(spec.candidates_per_class));
    const auto& test = test_by_class[cls];
    if (test.empty())
      throw std::invalid_argument("episode: class " + std::to_string(cls) +
                                  " has no test points");
    auto idx = rng.sample_indices(train.size(), spec.candidates_per_class);
    std::vector<InputPoint> chosen;
    for (auto i : idx) chosen.push_back(train[i]);
    pool.candidates.push_back(std::move(chosen));
    query_universe.insert(query_universe.end(), test.begin(), test.end());
  }

  if (query_universe.size() < static_cast<std::size_t>(spec.queries))
    throw std::invalid_argument("episode: only " +
                                std::to_string(query_universe.size()) +
                                " test points across episode classes, need " +
                                std::to_string(spec.queries));
  auto qidx = rng.sample_indices(query_universe.size(), spec.queries);
  for (auto i : qidx) pool.queries.push_back(query_universe[i]);
  return pool;
}

}  // namespace gicl
