#include "negmix/graph.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <string>

#include "negmix/io.hpp"
#include "negmix/rng.hpp"

namespace negmix {

namespace {

int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

}  // namespace

void Graph::finalize() {
  check(num_nodes >= 0, "graph: negative node count");
  check(features.rows() == num_nodes, "graph: feature row count mismatch");
  if (!labels.empty()) {
    check(static_cast<int>(labels.size()) == num_nodes,
          "graph: label count mismatch");
    for (int y : labels)
      check(0 <= y && y < num_classes, "graph: label out of range");
  }
  for (auto& [a, b] : edges) {
    check(0 <= a && a < num_nodes && 0 <= b && b < num_nodes,
          "graph: node id out of range in edge list");
    check(a != b, "graph: self-loop in edge list");
    if (a > b) std::swap(a, b);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  neighbors.assign(static_cast<size_t>(num_nodes), {});
  for (const auto& [a, b] : edges) {
    neighbors[static_cast<size_t>(a)].push_back(b);
    neighbors[static_cast<size_t>(b)].push_back(a);
  }
  for (auto& list : neighbors) std::sort(list.begin(), list.end());
}

Graph load_graph(const std::filesystem::path& dir) {
  Graph g;
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error("manifest.json: " + std::string(e.what()));
  }
  for (const char* key : {"num_nodes", "num_features", "num_classes"})
    check(manifest.contains(key),
          std::string("manifest.json: missing key ") + key);
  g.num_nodes = manifest["num_nodes"].get<int>();
  int num_features = manifest["num_features"].get<int>();
  g.num_classes = manifest["num_classes"].get<int>();
  check(g.num_nodes >= 0 && num_features >= 0 && g.num_classes >= 0,
        "manifest.json: negative dimension");

  const std::string edges_name = (dir / "edges.tsv").string();
  for (const std::string& line : split_lines(read_text_file(dir / "edges.tsv"))) {
    if (line.empty()) continue;
    auto fields = split_on(line, '\t');
    check(fields.size() == 2, "edges.tsv: expected two tab-separated ids, got '" + line + "'");
    int a = static_cast<int>(parse_long(fields[0], edges_name));
    int b = static_cast<int>(parse_long(fields[1], edges_name));
    g.edges.emplace_back(a, b);
  }

  const std::string feat_name = (dir / "features.csv").string();
  auto feat_lines = split_lines(read_text_file(dir / "features.csv"));
  check(static_cast<int>(feat_lines.size()) == g.num_nodes,
        "features.csv: expected " + std::to_string(g.num_nodes) + " rows, got " +
            std::to_string(feat_lines.size()));
  g.features.resize(g.num_nodes, num_features);
  for (int r = 0; r < g.num_nodes; ++r) {
    auto fields = split_on(feat_lines[static_cast<size_t>(r)], ',');
    check(static_cast<int>(fields.size()) == num_features,
          "features.csv row " + std::to_string(r) + ": expected " +
              std::to_string(num_features) + " fields, got " +
              std::to_string(fields.size()));
    for (int c = 0; c < num_features; ++c)
      g.features(r, c) = parse_double(fields[static_cast<size_t>(c)], feat_name);
  }

  if (std::filesystem::exists(dir / "labels.csv")) {
    const std::string lab_name = (dir / "labels.csv").string();
    auto lines = split_lines(read_text_file(dir / "labels.csv"));
    check(static_cast<int>(lines.size()) == g.num_nodes,
          "labels.csv: expected " + std::to_string(g.num_nodes) + " rows, got " +
              std::to_string(lines.size()));
    g.labels.reserve(lines.size());
    for (const std::string& line : lines)
      g.labels.push_back(static_cast<int>(parse_long(line, lab_name)));
  }

  g.finalize();
  return g;
}

void save_graph(const Graph& g, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["num_nodes"] = g.num_nodes;
  manifest["num_features"] = g.num_features();
  manifest["num_classes"] = g.num_classes;
  write_text_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");

  std::string edges;
  for (const auto& [a, b] : g.edges)
    edges += std::to_string(a) + "\t" + std::to_string(b) + "\n";
  write_text_file_atomic(dir / "edges.tsv", edges);

  std::string feats;
  for (int r = 0; r < g.num_nodes; ++r) {
    for (int c = 0; c < g.num_features(); ++c) {
      if (c) feats += ',';
      feats += fmt_double(g.features(r, c));
    }
    feats += '\n';
  }
  write_text_file_atomic(dir / "features.csv", feats);

  if (g.has_labels()) {
    std::string labels;
    for (int y : g.labels) labels += std::to_string(y) + "\n";
    write_text_file_atomic(dir / "labels.csv", labels);
  }
}

Graph synth_sbm(int classes, int nodes_per_class, double p_in, double p_out,
                int feat_dim, double feat_shift, std::uint64_t seed) {
  check(classes >= 2, "synth_sbm: need at least 2 classes");
  check(nodes_per_class >= 1, "synth_sbm: need at least 1 node per class");
  check(0.0 <= p_out && p_out <= p_in && p_in <= 1.0,
        "synth_sbm: require 0 <= p_out <= p_in <= 1");
  check(feat_dim >= classes, "synth_sbm: feat_dim must be >= classes");

  Graph g;
  g.num_nodes = classes * nodes_per_class;
  g.num_classes = classes;
  g.labels.resize(static_cast<size_t>(g.num_nodes));
  for (int i = 0; i < g.num_nodes; ++i)
    g.labels[static_cast<size_t>(i)] = i / nodes_per_class;

  Pcg32 edge_rng(derive_seed(seed, "sbm-edges"));
  for (int i = 0; i < g.num_nodes; ++i) {
    for (int j = i + 1; j < g.num_nodes; ++j) {
      double p = (g.labels[static_cast<size_t>(i)] ==
                  g.labels[static_cast<size_t>(j)])
                     ? p_in
                     : p_out;
      if (edge_rng.next_double() < p) g.edges.emplace_back(i, j);
    }
  }

  Pcg32 feat_rng(derive_seed(seed, "sbm-features"));
  g.features.resize(g.num_nodes, feat_dim);
  for (int i = 0; i < g.num_nodes; ++i) {
    for (int c = 0; c < feat_dim; ++c) g.features(i, c) = feat_rng.normal();
    g.features(i, g.labels[static_cast<size_t>(i)]) += feat_shift;
  }

  g.finalize();
  return g;
}

OpenSetSplit make_openset_split(const Graph& g, int id_class_count,
                                std::uint64_t seed, double train_percent,
                                double val_percent) {
  check(g.has_labels(), "make_openset_split: graph has no labels");
  check(1 <= id_class_count && id_class_count < g.num_classes,
        "make_openset_split: id_class_count must be in [1, num_classes)");
  check(train_percent > 0.0 && val_percent >= 0.0 &&
            train_percent + val_percent <= 100.0,
        "make_openset_split: invalid split percentages");

  OpenSetSplit s;
  s.known_classes = id_class_count;
  for (int c = 0; c < id_class_count; ++c) s.id_classes.push_back(c);

  s.labels.resize(static_cast<size_t>(g.num_nodes));
  std::vector<int> id_nodes;
  for (int i = 0; i < g.num_nodes; ++i) {
    int y = g.labels[static_cast<size_t>(i)];
    if (y < id_class_count) {
      s.labels[static_cast<size_t>(i)] = y;
      id_nodes.push_back(i);
    } else {
      s.labels[static_cast<size_t>(i)] = id_class_count;  // unknown
    }
  }
  check(!id_nodes.empty(), "make_openset_split: no nodes in ID classes");

  Pcg32 rng(derive_seed(seed, "openset-split"));
  rng.shuffle(id_nodes);

  int n_id = static_cast<int>(id_nodes.size());
  int n_train = std::min(round_half_up(train_percent / 100.0 * n_id), n_id);
  int n_val = std::min(round_half_up(val_percent / 100.0 * n_id), n_id - n_train);

  s.train_mask.assign(static_cast<size_t>(g.num_nodes), 0);
  s.val_mask.assign(static_cast<size_t>(g.num_nodes), 0);
  s.test_mask.assign(static_cast<size_t>(g.num_nodes), 0);
  for (int k = 0; k < n_id; ++k) {
    size_t node = static_cast<size_t>(id_nodes[static_cast<size_t>(k)]);
    if (k < n_train)
      s.train_mask[node] = 1;
    else if (k < n_train + n_val)
      s.val_mask[node] = 1;
    else
      s.test_mask[node] = 1;
  }
  for (int i = 0; i < g.num_nodes; ++i)
    if (g.labels[static_cast<size_t>(i)] >= id_class_count)
      s.test_mask[static_cast<size_t>(i)] = 1;

  s.train_nodes = mask_to_indices(s.train_mask);
  s.val_nodes = mask_to_indices(s.val_mask);
  s.test_nodes = mask_to_indices(s.test_mask);
  return s;
}

std::vector<int> mask_to_indices(const std::vector<std::uint8_t>& mask) {
  std::vector<int> idx;
  for (size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) idx.push_back(static_cast<int>(i));
  return idx;
}

}  // namespace negmix
