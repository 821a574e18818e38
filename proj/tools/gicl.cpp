// gicl: generate synthetic graphs, pretrain the prompt-optimization model,
// run few-shot inference/ablations, and sweep hyperparameters into
// plot-ready CSVs. Exit codes: 0 success, 2 usage error, 1 runtime error.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gicl/graph.hpp"
#include "gicl/inference.hpp"
#include "gicl/model.hpp"
#include "gicl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonEpisodeFlags {
  int ways = 5;
  int shots = 3;
  int candidates = 10;
  int queries = 4;
  int hops = 1;
  std::size_t max_subgraph_nodes = 20;
};

void add_episode_flags(CLI::App* cmd, CommonEpisodeFlags& f) {
  cmd->add_option("--ways", f.ways, "episode classes (m)");
  cmd->add_option("--shots", f.shots, "prompts per class (k)");
  cmd->add_option("--candidates", f.candidates, "candidate pool per class (N)");
  cmd->add_option("--queries", f.queries, "queries per episode (n)");
  cmd->add_option("--hops", f.hops, "subgraph hop radius (l)");
  cmd->add_option("--max-subgraph-nodes", f.max_subgraph_nodes,
                  "data-graph node cap");
}

gicl::EpisodeSpec make_spec(const CommonEpisodeFlags& f) {
  gicl::EpisodeSpec spec;
  spec.ways = f.ways;
  spec.shots = f.shots;
  spec.candidates_per_class = f.candidates;
  spec.queries = f.queries;
  spec.hops = f.hops;
  return spec;
}

void write_config_sidecar(const fs::path& next_to, const json& cfg) {
  fs::path p = next_to;
  p += ".config.json";
  std::ofstream os(p, std::ios::trunc);
  os << cfg.dump(1) << "\n";
}

bool handle_print_config(bool print, const json& cfg) {
  if (print) std::cout << cfg.dump(1) << "\n";
  return print;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "few-shot graph in-context learning with adaptive prompt optimization"};
  app.require_subcommand(1);

  std::function<int()> action;

  // ----- generate ---------------------------------------------------------
  auto* gen = app.add_subcommand("generate", "write a synthetic graph file");
  struct {
    std::string kind;
    std::string out;
    std::uint64_t seed = 0;
    int blocks = 10;
    int nodes_per_block = 200;
    double p_in = 0.05;
    double p_out = 0.005;
    int entities = 300;
    int relations = 15;
    int triples = 60;
    int clusters = 0;
    std::size_t feature_dim = 16;
    double noise_sigma = 0.2;
    bool print_config = false;
  } g;
  gen->add_option("--kind", g.kind, "sbm | kg")
      ->required()
      ->check(CLI::IsMember({"sbm", "kg"}));
  gen->add_option("--out", g.out, "output graph path")->required();
  gen->add_option("--seed", g.seed, "rng seed");
  gen->add_option("--blocks", g.blocks, "sbm: block count");
  gen->add_option("--nodes-per-block", g.nodes_per_block, "sbm: nodes per block");
  gen->add_option("--p-in", g.p_in, "sbm: within-block edge probability");
  gen->add_option("--p-out", g.p_out, "sbm: cross-block edge probability");
  gen->add_option("--entities", g.entities, "kg: entity count");
  gen->add_option("--relations", g.relations, "kg: relation count");
  gen->add_option("--triples-per-relation", g.triples, "kg: triples per relation");
  gen->add_option("--clusters", g.clusters, "kg: entity clusters (0 = auto)");
  gen->add_option("--feature-dim", g.feature_dim, "node feature dimension");
  gen->add_option("--noise-sigma", g.noise_sigma, "feature noise sigma");
  gen->add_flag("--print-config", g.print_config, "dump resolved config and exit");
  gen->callback([&]() {
    action = [&]() -> int {
      json cfg{{"command", "generate"}, {"kind", g.kind},
               {"out", g.out},          {"seed", g.seed},
               {"feature_dim", g.feature_dim}, {"noise_sigma", g.noise_sigma}};
      if (g.kind == "sbm") {
        cfg["blocks"] = g.blocks;
        cfg["nodes_per_block"] = g.nodes_per_block;
        cfg["p_in"] = g.p_in;
        cfg["p_out"] = g.p_out;
      } else {
        cfg["entities"] = g.entities;
        cfg["relations"] = g.relations;
        cfg["triples_per_relation"] = g.triples;
        cfg["clusters"] = g.clusters;
      }
      if (handle_print_config(g.print_config, cfg)) return 0;
      gicl::Graph graph =
          g.kind == "sbm"
              ? gicl::generate_sbm({g.blocks, g.nodes_per_block, g.p_in,
                                    g.p_out, g.feature_dim, g.noise_sigma},
                                   g.seed)
              : gicl::generate_synthetic_kg(
                    {g.entities, g.relations, g.triples, g.clusters,
                     g.feature_dim, g.noise_sigma},
                    g.seed);
      gicl::save_graph(graph, g.out);
      write_config_sidecar(g.out, cfg);
      std::cout << "wrote " << g.out << " (" << graph.num_nodes() << " nodes, "
                << graph.num_edges() << " edges)\n";
      return 0;
    };
  });

  // ----- pretrain ---------------------------------------------------------
  auto* pre = app.add_subcommand("pretrain", "joint pretraining loop");
  struct {
    std::string graph;
    std::string out;
    std::string metrics;
    std::string resume;
    std::size_t steps = 1000;
    std::uint64_t seed = 0;
    std::size_t checkpoint_interval = 200;
    std::size_t batch_nm = 4;
    std::size_t batch_mt = 4;
    std::size_t embedding_dim = 64;
    std::size_t gnn_depth = 2;
    std::size_t task_rounds = 2;
    double temperature = 1.0;
    double lr = 1e-3;
    double weight_decay = 1e-3;
    double class_fraction = 1.0;
    CommonEpisodeFlags ep;
    bool print_config = false;
  } p;
  pre->add_option("--graph", p.graph, "pretraining graph file")->required();
  pre->add_option("--out", p.out, "checkpoint output path")->required();
  pre->add_option("--metrics", p.metrics, "metrics CSV path");
  pre->add_option("--resume", p.resume, "resume from checkpoint");
  pre->add_option("--steps", p.steps, "total optimization steps");
  pre->add_option("--seed", p.seed, "rng seed");
  pre->add_option("--checkpoint-interval", p.checkpoint_interval,
                  "steps between periodic checkpoints");
  pre->add_option("--batch-nm", p.batch_nm, "neighbor-matching episodes per step");
  pre->add_option("--batch-mt", p.batch_mt, "multi-task episodes per step");
  pre->add_option("--embedding-dim", p.embedding_dim, "embedding width (h)");
  pre->add_option("--gnn-depth", p.gnn_depth, "data encoder layers");
  pre->add_option("--task-rounds", p.task_rounds, "task-graph attention rounds");
  pre->add_option("--temperature", p.temperature, "prediction softmax temperature");
  pre->add_option("--lr", p.lr, "learning rate");
  pre->add_option("--weight-decay", p.weight_decay, "decoupled weight decay");
  pre->add_option("--class-fraction", p.class_fraction,
                  "fraction of classes reserved for pretraining");
  add_episode_flags(pre, p.ep);
  pre->add_flag("--print-config", p.print_config, "dump resolved config and exit");
  pre->callback([&]() {
    action = [&]() -> int {
      json cfg{{"command", "pretrain"},
               {"graph", p.graph},
               {"out", p.out},
               {"metrics", p.metrics},
               {"resume", p.resume},
               {"steps", p.steps},
               {"seed", p.seed},
               {"checkpoint_interval", p.checkpoint_interval},
               {"batch_nm", p.batch_nm},
               {"batch_mt", p.batch_mt},
               {"embedding_dim", p.embedding_dim},
               {"gnn_depth", p.gnn_depth},
               {"task_rounds", p.task_rounds},
               {"temperature", p.temperature},
               {"lr", p.lr},
               {"weight_decay", p.weight_decay},
               {"class_fraction", p.class_fraction},
               {"ways", p.ep.ways},
               {"shots", p.ep.shots},
               {"queries", p.ep.queries},
               {"hops", p.ep.hops},
               {"max_subgraph_nodes", p.ep.max_subgraph_nodes}};
      if (handle_print_config(p.print_config, cfg)) return 0;

      gicl::Graph graph = gicl::load_graph(p.graph);
      gicl::TrainerConfig tc;
      tc.episode = make_spec(p.ep);
      tc.steps = p.steps;
      tc.batch_nm = p.batch_nm;
      tc.batch_mt = p.batch_mt;
      tc.optimizer.lr = p.lr;
      tc.optimizer.weight_decay = p.weight_decay;
      tc.generator.max_subgraph_nodes = p.ep.max_subgraph_nodes;
      tc.model.embedding_dim = p.embedding_dim;
      tc.model.gnn_depth = p.gnn_depth;
      tc.model.task_gnn_rounds = p.task_rounds;
      tc.model.softmax_temperature = p.temperature;
      tc.pretrain_class_fraction = p.class_fraction;
      tc.seed = p.seed;
      tc.checkpoint_interval = p.checkpoint_interval;
      tc.checkpoint_path = p.out;
      tc.metrics_path = p.metrics;

      std::optional<gicl::Checkpoint> resume;
      if (!p.resume.empty()) resume = gicl::load_checkpoint(p.resume);
      gicl::Checkpoint ck = gicl::pretrain(graph, tc, resume);
      write_config_sidecar(p.out, cfg);
      std::cout << "wrote " << p.out << " at step "
                << (ck.extras ? ck.extras->step : 0) << "\n";
      return 0;
    };
  });

  // ----- infer ------------------------------------------------------------
  auto* inf = app.add_subcommand("infer", "run downstream episodes");
  struct InferFlags {
    std::string graph;
    std::string checkpoint;
    std::string records;
    std::string metrics;
    std::size_t episodes = 5;
    std::uint64_t seed = 0;
    std::string selector = "adaptive";
    std::string metric = "cosine";
    std::size_t cache_size = 3;
    int touch_k = 1;
    double confidence_floor = 0.5;
    double temperature = 1.0;
    double class_fraction = 0.0;
    std::vector<std::string> ablate;
    CommonEpisodeFlags ep;
    bool print_config = false;
  } i;
  inf->add_option("--graph", i.graph, "downstream graph file")->required();
  inf->add_option("--checkpoint", i.checkpoint, "pretrained checkpoint")->required();
  inf->add_option("--records", i.records, "per-query JSONL output");
  inf->add_option("--metrics", i.metrics, "metrics JSON output");
  inf->add_option("--episodes", i.episodes, "episodes to run");
  inf->add_option("--seed", i.seed, "rng seed");
  inf->add_option("--selector", i.selector, "adaptive | random")
      ->check(CLI::IsMember({"adaptive", "random"}));
  inf->add_option("--metric", i.metric, "cosine | euclidean | manhattan")
      ->check(CLI::IsMember({"cosine", "euclidean", "manhattan"}));
  inf->add_option("--cache-size", i.cache_size, "augmenter capacity (0 = off)");
  inf->add_option("--touch-k", i.touch_k, "cache hits per query");
  inf->add_option("--confidence-floor", i.confidence_floor,
                  "minimum confidence for cache admission");
  inf->add_option("--temperature", i.temperature, "prediction softmax temperature");
  inf->add_option("--class-fraction", i.class_fraction,
                  "classes reserved for pretraining (downstream = rest)");
  inf->add_option("--ablate", i.ablate,
                  "no-reweight | no-knn | no-selection-layer")
      ->check(CLI::IsMember({"no-reweight", "no-knn", "no-selection-layer"}));
  add_episode_flags(inf, i.ep);
  inf->add_flag("--print-config", i.print_config, "dump resolved config and exit");

  auto build_infer_config = [](const InferFlags& f) {
    gicl::InferenceConfig ic;
    ic.episode = make_spec(f.ep);
    ic.episodes = f.episodes;
    ic.selector = f.selector == "random" ? gicl::SelectorMode::Random
                                         : gicl::SelectorMode::Adaptive;
    ic.metric = f.metric == "euclidean"
                    ? gicl::SimilarityMetric::Euclidean
                    : (f.metric == "manhattan"
                           ? gicl::SimilarityMetric::Manhattan
                           : gicl::SimilarityMetric::Cosine);
    ic.cache.capacity = f.cache_size;
    ic.cache.touch_k = f.touch_k;
    ic.cache.admit_confidence_floor = f.confidence_floor;
    for (const auto& a : f.ablate) {
      if (a == "no-reweight") ic.ablate.no_reweight = true;
      if (a == "no-knn") ic.ablate.no_knn = true;
      if (a == "no-selection-layer") ic.ablate.no_selection_layer = true;
    }
    ic.generator.max_subgraph_nodes = f.ep.max_subgraph_nodes;
    ic.pretrain_class_fraction = f.class_fraction;
    ic.seed = f.seed;
    return ic;
  };

  inf->callback([&]() {
    action = [&]() -> int {
      json cfg{{"command", "infer"},
               {"graph", i.graph},
               {"checkpoint", i.checkpoint},
               {"records", i.records},
               {"metrics", i.metrics},
               {"episodes", i.episodes},
               {"seed", i.seed},
               {"selector", i.selector},
               {"metric", i.metric},
               {"cache_size", i.cache_size},
               {"touch_k", i.touch_k},
               {"confidence_floor", i.confidence_floor},
               {"temperature", i.temperature},
               {"class_fraction", i.class_fraction},
               {"ablate", i.ablate},
               {"ways", i.ep.ways},
               {"shots", i.ep.shots},
               {"candidates", i.ep.candidates},
               {"queries", i.ep.queries},
               {"hops", i.ep.hops},
               {"max_subgraph_nodes", i.ep.max_subgraph_nodes}};
      if (handle_print_config(i.print_config, cfg)) return 0;

      gicl::Graph graph = gicl::load_graph(i.graph);
      gicl::Checkpoint ck = gicl::load_checkpoint(i.checkpoint);
      gicl::ModelConfig model = gicl::model_config_from_checkpoint(ck);
      model.softmax_temperature = i.temperature;
      gicl::InferenceConfig ic = build_infer_config(i);

      gicl::InferenceRun run =
          gicl::run_inference(ck.params, model, graph, ic);
      gicl::MetricsReport report = gicl::evaluate(run);
      if (!i.records.empty()) {
        gicl::write_records_jsonl(i.records, run);
        write_config_sidecar(i.records, cfg);
      }
      if (!i.metrics.empty()) {
        gicl::write_metrics_json(i.metrics, report);
        if (i.records.empty()) write_config_sidecar(i.metrics, cfg);
      }
      std::cout << "accuracy " << report.accuracy << " over " << report.n
                << " queries\n";
      return 0;
    };
  });

  // ----- sweep ------------------------------------------------------------
  auto* sw = app.add_subcommand("sweep", "aggregate runs over a hyperparameter");
  struct {
    std::string kind;
    std::string graph;
    std::string checkpoint;
    std::string out_dir;
    std::vector<int> values;
    std::size_t seeds = 5;
    InferFlags base;
    bool print_config = false;
  } s;
  sw->add_option("--kind", s.kind, "cache | shots | ways | hops")
      ->required()
      ->check(CLI::IsMember({"cache", "shots", "ways", "hops"}));
  sw->add_option("--graph", s.graph, "downstream graph file")->required();
  sw->add_option("--checkpoint", s.checkpoint, "pretrained checkpoint")->required();
  sw->add_option("--out", s.out_dir, "output directory")->required();
  sw->add_option("--values", s.values, "swept values")->required();
  sw->add_option("--seeds", s.seeds, "seeds per value");
  sw->add_option("--episodes", s.base.episodes, "episodes per run");
  sw->add_option("--selector", s.base.selector, "adaptive | random")
      ->check(CLI::IsMember({"adaptive", "random"}));
  sw->add_option("--cache-size", s.base.cache_size, "augmenter capacity");
  sw->add_option("--touch-k", s.base.touch_k, "cache hits per query");
  sw->add_option("--confidence-floor", s.base.confidence_floor,
                 "minimum confidence for cache admission");
  sw->add_option("--temperature", s.base.temperature, "softmax temperature");
  sw->add_option("--class-fraction", s.base.class_fraction,
                 "classes reserved for pretraining");
  add_episode_flags(sw, s.base.ep);
  sw->add_flag("--print-config", s.print_config, "dump resolved config and exit");
  sw->callback([&]() {
    action = [&]() -> int {
      json cfg{{"command", "sweep"},   {"kind", s.kind},
               {"graph", s.graph},     {"checkpoint", s.checkpoint},
               {"out", s.out_dir},     {"values", s.values},
               {"seeds", s.seeds},     {"episodes", s.base.episodes},
               {"selector", s.base.selector}, {"cache_size", s.base.cache_size},
               {"ways", s.base.ep.ways}, {"shots", s.base.ep.shots},
               {"candidates", s.base.ep.candidates},
               {"queries", s.base.ep.queries}, {"hops", s.base.ep.hops}};
      if (handle_print_config(s.print_config, cfg)) return 0;

      gicl::Graph graph = gicl::load_graph(s.graph);
      gicl::Checkpoint ck = gicl::load_checkpoint(s.checkpoint);
      gicl::ModelConfig model = gicl::model_config_from_checkpoint(ck);
      model.softmax_temperature = s.base.temperature;

      fs::create_directories(s.out_dir);
      std::ofstream raw(fs::path(s.out_dir) / "raw.csv", std::ios::trunc);
      raw << "kind,value,method,seed,accuracy,n\n";

      std::vector<std::string> methods = {s.base.selector};
      if (s.kind == "shots") methods = {"adaptive", "random"};

      std::ofstream summary(fs::path(s.out_dir) / "summary.csv",
                            std::ios::trunc);
      summary << "kind,value,method,mean_accuracy,std_accuracy,runs\n";

      for (int value : s.values) {
        for (const auto& method : methods) {
          std::vector<double> accs;
          for (std::size_t seed = 0; seed < s.seeds; ++seed) {
            InferFlags f = s.base;
            f.selector = method;
            f.seed = seed;
            if (s.kind == "cache") {
              f.cache_size = static_cast<std::size_t>(value);
            } else if (s.kind == "shots") {
              f.ep.shots = value;
              f.ep.candidates = std::max(f.ep.candidates, value);
            } else if (s.kind == "ways") {
              f.ep.ways = value;
            } else {
              f.ep.hops = value;
            }
            gicl::InferenceConfig ic = build_infer_config(f);
            gicl::InferenceRun run =
                gicl::run_inference(ck.params, model, graph, ic);
            gicl::MetricsReport r = gicl::evaluate(run);
            accs.push_back(r.accuracy);
            raw << s.kind << "," << value << "," << method << "," << seed
                << "," << r.accuracy << "," << r.n << "\n";
          }
          summary << s.kind << "," << value << "," << method << ","
                  << mean_of(accs) << "," << std_of(accs) << "," << accs.size()
                  << "\n";
        }
      }
      write_config_sidecar(fs::path(s.out_dir) / "sweep", cfg);
      std::cout << "wrote " << s.out_dir << "/raw.csv and summary.csv\n";
      return 0;
    };
  });

  // ----- inspect-checkpoint -----------------------------------------------
  auto* insp = app.add_subcommand("inspect-checkpoint", "print checkpoint info");
  struct {
    std::string checkpoint;
  } ins;
  insp->add_option("--checkpoint", ins.checkpoint, "checkpoint path")->required();
  insp->callback([&]() {
    action = [&]() -> int {
      gicl::Checkpoint ck = gicl::load_checkpoint(ins.checkpoint);
      std::cout << "format_version " << ck.header.format_version << "\n"
                << "embedding_dim " << ck.header.embedding_dim << "\n"
                << "num_relations " << ck.header.num_relations << "\n"
                << "rng_seed " << ck.header.rng_seed << "\n"
                << "train_state "
                << (ck.extras ? "present (step " +
                                    std::to_string(ck.extras->step) + ")"
                              : "absent")
                << "\n"
                << "parameters " << ck.params.count() << "\n";
      for (const auto& name : ck.params.names())
        std::cout << "  " << name << " "
                  << gicl::shape_str(ck.params.get(name).shape()) << "\n";
      return 0;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    return action();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
