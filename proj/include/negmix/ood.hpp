#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "negmix/graph.hpp"
#include "negmix/tape.hpp"

namespace negmix {

// Shannon entropy of the known-class part of a probability row, divided by
// ln(known_classes) so the value lands in [0, 1]. By default the known-class
// mass is renormalized to sum to one first. Zero known mass is defined as
// maximal uncertainty (1.0) and logged at debug level.
double normalized_entropy(const Vec& prob_row, int known_classes,
                          bool renormalize = true);

struct OodScores {
  Var score;                   // N x 1, differentiable through probs
  std::vector<double> values;  // plain copy of the score column
};

// Per-node uncertainty ent_i + p_i,unknown plus the mean of the same
// quantity over the node's neighbors (isolated nodes contribute 0 for the
// neighbor term). Scores stay on the tape: downstream losses differentiate
// through them.
OodScores ood_score(Tape& t, const Graph& g, Var probs, int known_classes,
                    bool renormalize_entropy = true);

// Mean score over labeled nodes minus mean score over the potential-OOD set;
// minimizing pushes labeled scores down and candidate scores up. Empty
// candidate set -> nullopt (the term is skipped). Empty labeled set -> error.
std::optional<Var> ood_regularization_loss(Tape& t, Var score,
                                           const std::vector<int>& labeled_nodes,
                                           const std::vector<int>& potential_ood);

struct Kmeans1dResult {
  std::vector<int> assignment;  // 0 = low-centroid cluster, 1 = high
  double centroid_low = 0.0;
  double centroid_high = 0.0;
  bool degenerate = false;  // all inputs equal; everything sits in cluster 0
};

// Two-means on scalars, solved exactly: the optimal partition is a split of
// the sorted values, found by enumerating split points with prefix sums. The
// result is a nearest-centroid fixpoint with ordered centroids; cost ties
// resolve boundary points into the low cluster. Deterministic; the seed
// parameter is accepted for interface stability and unused.
Kmeans1dResult kmeans_1d(const std::vector<double>& values, std::uint64_t seed);

struct CandidateSets {
  std::vector<int> potential_ood;       // node ids, ranking order
  std::vector<int> potential_id;        // node ids, ranking order
  std::vector<int> potential_id_label;  // pseudo-label per potential_id entry
  int quota = 0;
  double centroid_low = 0.0;
  double centroid_high = 0.0;
  bool degenerate = false;
  bool ood_shortfall = false;  // high cluster smaller than the quota
  bool id_shortfall = false;
};

// Clusters unlabeled scores into low/high groups, then ranks each group by
// closeness to its own centroid (ties toward the lower node id) and keeps the
// top rho% of |unlabeled| (rounded half up) from each: the high group becomes
// potential-OOD (pseudo-label = unknown class), the low group potential-ID
// with argmax-over-known-classes pseudo-labels. Degenerate clustering returns
// empty sets. Selection is a constant for gradient purposes.
CandidateSets clustering_then_ranking(const std::vector<double>& scores,
                                      const Mat& probs,
                                      const std::vector<int>& unlabeled,
                                      double rho_percent, int known_classes,
                                      std::uint64_t seed);

// Ablation variant: skips the clustering stage and ranks all unlabeled nodes
// by score directly, taking the top quota as potential-OOD and the bottom
// quota as potential-ID.
CandidateSets rank_only_selection(const std::vector<double>& scores,
                                  const Mat& probs,
                                  const std::vector<int>& unlabeled,
                                  double rho_percent, int known_classes);

}  // namespace negmix
