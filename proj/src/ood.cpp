#include "negmix/ood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace negmix {

namespace {

int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

int argmax_known(const Mat& probs, int row, int known_classes) {
  int best = 0;
  for (int c = 1; c < known_classes; ++c)
    if (probs(row, c) > probs(row, best)) best = c;
  return best;
}

}  // namespace

double normalized_entropy(const Vec& prob_row, int known_classes,
                          bool renormalize) {
  check(known_classes >= 2, "normalized_entropy: need at least 2 known classes");
  check(prob_row.size() >= known_classes,
        "normalized_entropy: row shorter than known_classes");
  double mass = 0.0;
  for (int k = 0; k < known_classes; ++k) {
    check(prob_row(k) >= 0.0, "normalized_entropy: negative probability");
    mass += prob_row(k);
  }
  if (mass == 0.0) {
    log_debug("normalized_entropy: zero known-class mass, defining entropy=1");
    return 1.0;
  }
  double h = 0.0;
  for (int k = 0; k < known_classes; ++k) {
    double q = renormalize ? prob_row(k) / mass : prob_row(k);
    if (q > 0.0) h -= q * std::log(q);
  }
  h /= std::log(static_cast<double>(known_classes));
  if (!renormalize) h = std::min(std::max(h, 0.0), 1.0);
  return h;
}

OodScores ood_score(Tape& t, const Graph& g, Var probs, int known_classes,
                    bool renormalize_entropy) {
  check(known_classes >= 2, "ood_score: need at least 2 known classes");
  check(probs.value().rows() == g.num_nodes, "ood_score: probs row count mismatch");
  check(probs.value().cols() == known_classes + 1,
        "ood_score: probs must have known_classes+1 columns");

  Var known = t.slice_cols(probs, 0, known_classes);
  Var q = known;
  if (renormalize_entropy) {
    Var mass = t.clamp(t.row_sum(known), 1e-12, 2.0);
    q = t.row_scale(known, t.recip(mass));
  }
  Var plogp = t.mul(q, t.log(t.clamp(q, 1e-12, 2.0)));
  Var ent = t.scale(t.row_sum(plogp),
                    -1.0 / std::log(static_cast<double>(known_classes)));
  if (!renormalize_entropy) ent = t.clamp(ent, 0.0, 1.0);

  Var own = t.add(ent, t.slice_cols(probs, known_classes, known_classes + 1));

  // Neighbor mean as a compacted segment mean over nodes with degree > 0,
  // scattered back so isolated nodes contribute zero.
  std::vector<int> seg, nb, with_nbrs;
  for (int i = 0; i < g.num_nodes; ++i) {
    const auto& nbrs = g.neighbors[static_cast<size_t>(i)];
    if (nbrs.empty()) continue;
    int compact = static_cast<int>(with_nbrs.size());
    with_nbrs.push_back(i);
    for (int j : nbrs) {
      seg.push_back(compact);
      nb.push_back(j);
    }
  }
  Var score = own;
  if (!with_nbrs.empty()) {
    Var nbr_own = t.gather_rows(own, nb);
    Var nbr_mean = t.segment_mean(nbr_own, seg, static_cast<int>(with_nbrs.size()));
    Var spread = t.scatter_rows(nbr_mean, with_nbrs, g.num_nodes);
    score = t.add(own, spread);
  }

  OodScores out;
  out.score = score;
  out.values.resize(static_cast<size_t>(g.num_nodes));
  for (int i = 0; i < g.num_nodes; ++i) out.values[(size_t)i] = score.value()(i, 0);
  return out;
}

std::optional<Var> ood_regularization_loss(Tape& t, Var score,
                                           const std::vector<int>& labeled_nodes,
                                           const std::vector<int>& potential_ood) {
  check(!labeled_nodes.empty(), "ood_regularization_loss: empty labeled set");
  if (potential_ood.empty()) return std::nullopt;
  Var mean_labeled = t.mean_scalar(t.gather_rows(score, labeled_nodes));
  Var mean_po = t.mean_scalar(t.gather_rows(score, potential_ood));
  return t.subtract(mean_labeled, mean_po);
}

Kmeans1dResult kmeans_1d(const std::vector<double>& values, std::uint64_t seed) {
  (void)seed;  // the solver is deterministic; the seed is accepted for API stability
  check(!values.empty(), "kmeans_1d: empty input");
  Kmeans1dResult res;
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) {
    res.degenerate = true;
    res.centroid_low = res.centroid_high = sorted.front();
    res.assignment.assign(values.size(), 0);
    return res;
  }

  // An optimal two-cluster partition in one dimension is a split of the sorted
  // values at a boundary between distinct values; enumerate them all with
  // prefix sums and keep the minimum within-cluster sum of squares. The result
  // is also a nearest-centroid fixpoint. Equal-cost splits resolve toward the
  // larger low cluster, so boundary points fall low.
  size_t n = sorted.size();
  std::vector<double> pref(n + 1, 0.0), pref_sq(n + 1, 0.0);
  for (size_t i = 0; i < n; ++i) {
    pref[i + 1] = pref[i] + sorted[i];
    pref_sq[i + 1] = pref_sq[i] + sorted[i] * sorted[i];
  }
  auto sse = [&](size_t begin, size_t end) {
    double s = pref[end] - pref[begin];
    double q = pref_sq[end] - pref_sq[begin];
    return q - s * s / static_cast<double>(end - begin);
  };
  size_t best_cut = 0;
  double best = std::numeric_limits<double>::infinity();
  for (size_t cut = 1; cut < n; ++cut) {
    if (sorted[cut] == sorted[cut - 1]) continue;  // never split a run of ties
    double cost = sse(0, cut) + sse(cut, n);
    if (cost <= best) {  // <= prefers the later cut on exact ties
      best = cost;
      best_cut = cut;
    }
  }
  double threshold = sorted[best_cut];
  res.centroid_low = (pref[best_cut] - pref[0]) / static_cast<double>(best_cut);
  res.centroid_high = (pref[n] - pref[best_cut]) / static_cast<double>(n - best_cut);
  res.assignment.resize(values.size());
  for (size_t i = 0; i < values.size(); ++i)
    res.assignment[i] = values[i] >= threshold ? 1 : 0;
  return res;
}

namespace {

// Shared tail of both selection strategies: rank candidate pools, cut to the
// quota, attach pseudo-labels.
void fill_sets(CandidateSets& out, const Mat& probs, int known_classes,
               std::vector<std::pair<double, int>> ood_pool,
               std::vector<std::pair<double, int>> id_pool) {
  std::sort(ood_pool.begin(), ood_pool.end());
  std::sort(id_pool.begin(), id_pool.end());
  out.ood_shortfall = static_cast<int>(ood_pool.size()) < out.quota;
  out.id_shortfall = static_cast<int>(id_pool.size()) < out.quota;
  int take_ood = std::min<int>(out.quota, static_cast<int>(ood_pool.size()));
  int take_id = std::min<int>(out.quota, static_cast<int>(id_pool.size()));
  for (int k = 0; k < take_ood; ++k) out.potential_ood.push_back(ood_pool[(size_t)k].second);
  for (int k = 0; k < take_id; ++k) {
    int node = id_pool[(size_t)k].second;
    out.potential_id.push_back(node);
    out.potential_id_label.push_back(argmax_known(probs, node, known_classes));
  }
}

}  // namespace

CandidateSets clustering_then_ranking(const std::vector<double>& scores,
                                      const Mat& probs,
                                      const std::vector<int>& unlabeled,
                                      double rho_percent, int known_classes,
                                      std::uint64_t seed) {
  check(rho_percent >= 0.0 && rho_percent <= 100.0,
        "clustering_then_ranking: rho_percent out of [0,100]");
  check(known_classes >= 1, "clustering_then_ranking: bad known_classes");
  CandidateSets out;
  if (unlabeled.empty()) return out;
  for (int n : unlabeled)
    check(0 <= n && n < static_cast<int>(scores.size()),
          "clustering_then_ranking: node index out of range");

  out.quota =
      round_half_up(rho_percent / 100.0 * static_cast<double>(unlabeled.size()));

  std::vector<double> pool_scores;
  pool_scores.reserve(unlabeled.size());
  for (int n : unlabeled) pool_scores.push_back(scores[(size_t)n]);
  Kmeans1dResult km = kmeans_1d(pool_scores, seed);
  out.centroid_low = km.centroid_low;
  out.centroid_high = km.centroid_high;
  out.degenerate = km.degenerate;
  if (km.degenerate) {
    log_info("clustering_then_ranking: degenerate clustering, no candidates");
    return out;
  }
  if (out.quota == 0) return out;

  std::vector<std::pair<double, int>> ood_pool, id_pool;
  for (size_t k = 0; k < unlabeled.size(); ++k) {
    int node = unlabeled[k];
    double v = pool_scores[k];
    if (km.assignment[k] == 1)
      ood_pool.emplace_back(std::abs(v - km.centroid_high), node);
    else
      id_pool.emplace_back(std::abs(v - km.centroid_low), node);
  }
  fill_sets(out, probs, known_classes, std::move(ood_pool), std::move(id_pool));
  return out;
}

CandidateSets rank_only_selection(const std::vector<double>& scores,
                                  const Mat& probs,
                                  const std::vector<int>& unlabeled,
                                  double rho_percent, int known_classes) {
  check(rho_percent >= 0.0 && rho_percent <= 100.0,
        "rank_only_selection: rho_percent out of [0,100]");
  CandidateSets out;
  if (unlabeled.empty()) return out;
  out.quota =
      round_half_up(rho_percent / 100.0 * static_cast<double>(unlabeled.size()));
  if (out.quota == 0) return out;

  // Highest scores become OOD candidates, lowest become ID candidates; the
  // (negated score, id) key keeps ties on the lower node id in both pools.
  std::vector<std::pair<double, int>> ood_pool, id_pool;
  for (int node : unlabeled) {
    check(0 <= node && node < static_cast<int>(scores.size()),
          "rank_only_selection: node index out of range");
    ood_pool.emplace_back(-scores[(size_t)node], node);
    id_pool.emplace_back(scores[(size_t)node], node);
  }
  double lo = 0.0, hi = 0.0;
  for (size_t k = 0; k < unlabeled.size(); ++k) {
    double v = scores[(size_t)unlabeled[k]];
    lo = (k == 0) ? v : std::min(lo, v);
    hi = (k == 0) ? v : std::max(hi, v);
  }
  out.centroid_low = lo;
  out.centroid_high = hi;
  if (lo == hi) {
    out.degenerate = true;
    log_info("rank_only_selection: all scores equal, no candidates");
    return out;
  }
  fill_sets(out, probs, known_classes, std::move(ood_pool), std::move(id_pool));
  return out;
}

}  // namespace negmix
