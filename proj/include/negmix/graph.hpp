#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "negmix/common.hpp"

namespace negmix {

// Undirected attributed graph. Edges are stored once with first < second;
// `neighbors` holds the symmetric adjacency with each list sorted.
struct Graph {
  int num_nodes = 0;
  int num_classes = 0;  // label vocabulary size; 0 when unlabeled
  Mat features;         // num_nodes x num_features
  std::vector<std::pair<int, int>> edges;
  std::vector<std::vector<int>> neighbors;
  std::vector<int> labels;  // size num_nodes, or empty

  int num_features() const { return static_cast<int>(features.cols()); }
  bool has_labels() const { return !labels.empty(); }

  // Normalizes/dedupes edges, rebuilds `neighbors`, validates ids and labels.
  void finalize();
};

// Directory layout: manifest.json (num_nodes, num_features, num_classes),
// edges.tsv (two tab-separated 0-based ids per line), features.csv
// (num_nodes rows of comma-separated reals, no header), labels.csv
// (optional, one integer per line).
Graph load_graph(const std::filesystem::path& dir);
void save_graph(const Graph& g, const std::filesystem::path& dir);

// Stochastic block model with Gaussian features: node i belongs to class
// i / nodes_per_class; same-class pairs connect with p_in, others with p_out;
// features ~ N(feat_shift * e_class, I). Requires feat_dim >= classes.
Graph synth_sbm(int classes, int nodes_per_class, double p_in, double p_out,
                int feat_dim, double feat_shift, std::uint64_t seed);

// Open-set protocol: classes [0, id_class_count) are known (ID) and relabeled
// onto 0..C-1; every other class becomes label C (unknown). ID nodes are
// shuffled and split train/val/test by percentage (counts round half up);
// all OOD nodes join the test set.
struct OpenSetSplit {
  int known_classes = 0;        // C
  std::vector<int> id_classes;  // original ids of known classes, ascending
  std::vector<int> labels;      // remapped per-node labels, OOD -> C
  std::vector<std::uint8_t> train_mask, val_mask, test_mask;
  std::vector<int> train_nodes, val_nodes, test_nodes;  // ascending
};

OpenSetSplit make_openset_split(const Graph& g, int id_class_count,
                                std::uint64_t seed, double train_percent = 10.0,
                                double val_percent = 10.0);

std::vector<int> mask_to_indices(const std::vector<std::uint8_t>& mask);

}  // namespace negmix
